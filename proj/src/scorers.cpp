#include "tse/scorers.hpp"

#include <algorithm>
#include <cmath>

#include "tse/worker_protocol.hpp"

namespace tse {

std::string to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::oracle_si_sdri: return "oracle_si_sdri";
    case ScorerKind::quality: return "quality";
    case ScorerKind::spk_sim: return "spk_sim";
    case ScorerKind::joint: return "joint";
    case ScorerKind::external: return "external";
  }
  return "unknown";
}

ConditionedScorer Scorer::condition(const Waveform& enrollment, const MixtureScene* scene) const {
  return [this, enrollment, scene](const Waveform& estimate) {
    return score(estimate, enrollment, scene);
  };
}

double score(const Scorer& scorer, const Waveform& estimate, const Waveform& enrollment,
             const MixtureScene* scene) {
  return scorer.score(estimate, enrollment, scene);
}

double joint_score(double quality, double spksim, double lambda, double alpha) {
  if (!(lambda > 0.0) || !(alpha > 0.0))
    throw ConfigurationError("joint_score: lambda and alpha must be positive");
  const double similarity = std::clamp(spksim, 0.0, 1.0);
  return quality + lambda * (1.0 - std::exp(-alpha * similarity));
}

namespace {

class OracleScorer final : public Scorer {
 public:
  ScorerKind kind() const override { return ScorerKind::oracle_si_sdri; }
  bool needs_scene() const override { return true; }

  double score(const Waveform& estimate, const Waveform&, const MixtureScene* scene) const override {
    return si_sdri(estimate, scene_mixture(scene), *scene->target);
  }

  ConditionedScorer condition(const Waveform&, const MixtureScene* scene) const override {
    const Waveform& mixture = scene_mixture(scene);
    // The mixture term is constant across candidates.
    const double baseline = si_sdr(mixture, *scene->target);
    return [target = *scene->target, baseline](const Waveform& estimate) {
      return si_sdr(estimate, target) - baseline;
    };
  }

 private:
  static const Waveform& scene_mixture(const MixtureScene* scene) {
    if (scene == nullptr || !scene->has_target())
      throw ConfigurationError("oracle SI-SDRi scorer needs a scene with a ground-truth target");
    return scene->mixture;
  }
};

class QualityScorer final : public Scorer {
 public:
  explicit QualityScorer(QualityConfig config) : config_(config) {}
  ScorerKind kind() const override { return ScorerKind::quality; }
  double score(const Waveform& estimate, const Waveform&, const MixtureScene*) const override {
    return quality_proxy(estimate, config_);
  }

 private:
  QualityConfig config_;
};

class SpkSimScorer final : public Scorer {
 public:
  explicit SpkSimScorer(EmbeddingConfig config) : config_(config) {}
  ScorerKind kind() const override { return ScorerKind::spk_sim; }

  double score(const Waveform& estimate, const Waveform& enrollment,
               const MixtureScene*) const override {
    return spk_sim(estimate, enrollment, config_);
  }

  ConditionedScorer condition(const Waveform& enrollment, const MixtureScene*) const override {
    return [config = config_, reference = embed_speaker(enrollment, config_)](
               const Waveform& estimate) { return embed_speaker(estimate, config).cosine(reference); };
  }

 private:
  EmbeddingConfig config_;
};

class JointScorer final : public Scorer {
 public:
  JointScorer(ScorerHandle quality, ScorerHandle similarity, double lambda, double alpha)
      : quality_(std::move(quality)), similarity_(std::move(similarity)), lambda_(lambda), alpha_(alpha) {}

  ScorerKind kind() const override { return ScorerKind::joint; }
  bool concurrent_safe() const override {
    return quality_->concurrent_safe() && similarity_->concurrent_safe();
  }

  double score(const Waveform& estimate, const Waveform& enrollment,
               const MixtureScene* scene) const override {
    return joint_score(quality_->score(estimate, enrollment, scene),
                       similarity_->score(estimate, enrollment, scene), lambda_, alpha_);
  }

  ConditionedScorer condition(const Waveform& enrollment, const MixtureScene* scene) const override {
    return [q = quality_->condition(enrollment, scene), s = similarity_->condition(enrollment, scene),
            lambda = lambda_, alpha = alpha_](const Waveform& estimate) {
      return joint_score(q(estimate), s(estimate), lambda, alpha);
    };
  }

 private:
  ScorerHandle quality_;
  ScorerHandle similarity_;
  double lambda_;
  double alpha_;
};

class ExternalScorer final : public Scorer {
 public:
  explicit ExternalScorer(WorkerOptions options)
      : worker_(std::make_unique<WorkerProcess>(std::move(options))) {
    if (!worker_->supports("score"))
      throw WorkerProtocolError("worker does not declare the \"score\" op");
  }

  ScorerKind kind() const override { return ScorerKind::external; }
  bool concurrent_safe() const override { return false; }

  double score(const Waveform& estimate, const Waveform& enrollment,
               const MixtureScene*) const override {
    if (estimate.sample_rate() != enrollment.sample_rate())
      throw ShapeError("external scorer: estimate and enrollment sample rates differ");
    protocol::Message request;
    request.header = {{"op", "score"}, {"sample_rate", estimate.sample_rate()}};
    request.payloads.push_back({"input", to_float(estimate)});
    request.payloads.push_back({"enrollment", to_float(enrollment)});
    const protocol::Message reply = worker_->request(request);
    if (!reply.header.contains("score") || !reply.header["score"].is_number())
      throw WorkerProtocolError("score response lacks a numeric \"score\"");
    const double value = reply.header["score"].get<double>();
    if (!std::isfinite(value)) throw WorkerProtocolError("score response is not finite");
    return value;
  }

 private:
  static std::vector<float> to_float(const Waveform& w) {
    std::vector<float> v(static_cast<std::size_t>(w.size()));
    for (Eigen::Index n = 0; n < w.size(); ++n) v[static_cast<std::size_t>(n)] = static_cast<float>(w[n]);
    return v;
  }

  std::unique_ptr<WorkerProcess> worker_;
};

}  // namespace

ScorerHandle make_oracle_scorer() { return std::make_shared<OracleScorer>(); }

ScorerHandle make_quality_scorer(QualityConfig config) {
  return std::make_shared<QualityScorer>(config);
}

ScorerHandle make_spk_sim_scorer(EmbeddingConfig config) {
  return std::make_shared<SpkSimScorer>(config);
}

ScorerHandle make_joint_scorer(ScorerHandle quality, ScorerHandle similarity, double lambda,
                               double alpha) {
  if (!(lambda > 0.0) || !(alpha > 0.0))
    throw ConfigurationError("joint scorer: lambda and alpha must be positive");
  if (!quality || !similarity) throw ConfigurationError("joint scorer: missing component scorer");
  return std::make_shared<JointScorer>(std::move(quality), std::move(similarity), lambda, alpha);
}

ScorerHandle make_joint_scorer(double lambda, double alpha) {
  return make_joint_scorer(make_quality_scorer(), make_spk_sim_scorer(), lambda, alpha);
}

ScorerHandle make_external_scorer(std::vector<std::string> command, std::chrono::milliseconds timeout) {
  return std::make_shared<ExternalScorer>(WorkerOptions{std::move(command), timeout});
}

}  // namespace tse
