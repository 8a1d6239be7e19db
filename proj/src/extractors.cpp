#include "tse/extractors.hpp"

#include <algorithm>
#include <cmath>

#include "tse/spectral.hpp"
#include "tse/worker_protocol.hpp"

namespace tse {

std::string to_string(ExtractorKind kind) {
  switch (kind) {
    case ExtractorKind::identity: return "identity";
    case ExtractorKind::leaky_linear: return "leaky_linear";
    case ExtractorKind::spectral_subtraction: return "spectral_subtraction";
    case ExtractorKind::external: return "external";
  }
  return "unknown";
}

ConditionedExtractor Extractor::condition(const Waveform& enrollment) const {
  return [this, enrollment](const Waveform& input) { return extract(input, enrollment); };
}

Waveform extract(const Extractor& extractor, const Waveform& input, const Waveform& enrollment) {
  return extractor.extract(input, enrollment);
}

namespace {

void require_rate(const Waveform& input, const Waveform& enrollment, const char* who) {
  if (input.sample_rate() != enrollment.sample_rate())
    throw ShapeError(std::string(who) + ": input and enrollment sample rates differ");
}

class IdentityExtractor final : public Extractor {
 public:
  ExtractorKind kind() const override { return ExtractorKind::identity; }
  Waveform extract(const Waveform& input, const Waveform& enrollment) const override {
    require_rate(input, enrollment, "identity extractor");
    return input;
  }
};

class LeakyLinearExtractor final : public Extractor {
 public:
  LeakyLinearExtractor(const Waveform& target, const Waveform& interference, double kappa)
      : target_(target.samples()),
        interference_(interference.samples()),
        target_energy_(target_.squaredNorm()),
        interference_energy_(interference_.squaredNorm()),
        sample_rate_(target.sample_rate()),
        kappa_(kappa) {}

  ExtractorKind kind() const override { return ExtractorKind::leaky_linear; }

  Waveform extract(const Waveform& input, const Waveform& enrollment) const override {
    require_rate(input, enrollment, "leaky_linear extractor");
    if (input.size() != target_.size() || input.sample_rate() != sample_rate_)
      throw ShapeError("leaky_linear extractor: input does not match the scene it was built on");
    const double a = input.samples().dot(target_) / target_energy_;
    const double b = input.samples().dot(interference_) / interference_energy_;
    return Waveform(a * target_ + (kappa_ * b) * interference_, sample_rate_);
  }

 private:
  Eigen::VectorXd target_;
  Eigen::VectorXd interference_;
  double target_energy_;
  double interference_energy_;
  int sample_rate_;
  double kappa_;
};

class SpectralSubtractionExtractor final : public Extractor {
 public:
  explicit SpectralSubtractionExtractor(SpectralSubtractionConfig config) : config_(config) {}

  ExtractorKind kind() const override { return ExtractorKind::spectral_subtraction; }

  Waveform extract(const Waveform& input, const Waveform& enrollment) const override {
    return condition(enrollment)(input);
  }

  ConditionedExtractor condition(const Waveform& enrollment) const override {
    const int sr = enrollment.sample_rate();
    Eigen::MatrixXd fb = mel_filterbank(config_.n_mels, config_.window_size, sr);
    const Eigen::MatrixXd enroll_env = envelopes(stft_padded(enrollment, config_.window_size,
                                                             config_.hop),
                                                 fb);
    Eigen::VectorXd reference = enroll_env.rowwise().mean();

    // Bin gain = filter-weighted average of the band gains covering the bin.
    Eigen::MatrixXd spread = fb.transpose();
    for (Eigen::Index b = 0; b < spread.rows(); ++b) {
      const double total = spread.row(b).sum();
      if (total > 0) spread.row(b) /= total;
    }

    return [cfg = config_, sr, fb = std::move(fb), reference = std::move(reference),
            spread = std::move(spread)](const Waveform& input) {
      if (input.sample_rate() != sr)
        throw ShapeError("spectral_subtraction extractor: input and enrollment sample rates differ");
      Spectrogram spec = stft_padded(input, cfg.window_size, cfg.hop);
      const Eigen::MatrixXd env = envelopes(spec, fb);
      const Eigen::Index bands = env.rows();
      Eigen::VectorXd band_gain(bands);
      for (Eigen::Index f = 0; f < spec.num_frames(); ++f) {
        for (Eigen::Index m = 0; m < bands; ++m) {
          const Eigen::Index lo = std::max<Eigen::Index>(0, m - cfg.neighbourhood);
          const Eigen::Index hi = std::min<Eigen::Index>(bands - 1, m + cfg.neighbourhood);
          const auto local = env.col(f).segment(lo, hi - lo + 1);
          const auto ref = reference.segment(lo, hi - lo + 1);
          const double denom = local.norm() * ref.norm();
          const double cosine = denom > 0 ? local.dot(ref) / denom : 0.0;
          band_gain[m] = std::max(cfg.floor, std::max(0.0, cosine));
        }
        Eigen::VectorXd bin_gain = spread * band_gain;
        for (Eigen::Index b = 0; b < bin_gain.size(); ++b)
          if (spread.row(b).sum() == 0.0) bin_gain[b] = cfg.floor;
        spec.frames.col(f).array() *= bin_gain.array();
      }
      return overlap_add(spec);
    };
  }

 private:
  static Eigen::MatrixXd envelopes(const Spectrogram& spec, const Eigen::MatrixXd& fb) {
    return (fb * spec.power()).cwiseSqrt();
  }

  SpectralSubtractionConfig config_;
};

class ExternalExtractor final : public Extractor {
 public:
  explicit ExternalExtractor(WorkerOptions options)
      : worker_(std::make_unique<WorkerProcess>(std::move(options))) {
    if (!worker_->supports("extract"))
      throw WorkerProtocolError("worker does not declare the \"extract\" op");
  }

  ExtractorKind kind() const override { return ExtractorKind::external; }
  bool concurrent_safe() const override { return false; }

  Waveform extract(const Waveform& input, const Waveform& enrollment) const override {
    require_rate(input, enrollment, "external extractor");
    protocol::Message request;
    request.header = {{"op", "extract"}, {"sample_rate", input.sample_rate()}};
    request.payloads.push_back({"input", to_float(input)});
    request.payloads.push_back({"enrollment", to_float(enrollment)});
    const protocol::Message reply = worker_->request(request);

    const auto* estimate = reply.find("estimate");
    if (estimate == nullptr) throw WorkerProtocolError("extract response lacks an \"estimate\" payload");
    if (static_cast<Eigen::Index>(estimate->samples.size()) != input.size())
      throw WorkerProtocolError("extract response has " + std::to_string(estimate->samples.size()) +
                                " samples, expected " + std::to_string(input.size()));
    Eigen::VectorXd out(input.size());
    for (Eigen::Index n = 0; n < input.size(); ++n)
      out[n] = static_cast<double>(estimate->samples[static_cast<std::size_t>(n)]);
    if (!out.allFinite()) throw WorkerProtocolError("extract response contains non-finite samples");
    return Waveform(std::move(out), input.sample_rate());
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

ExtractorHandle make_identity() { return std::make_shared<IdentityExtractor>(); }

ExtractorHandle make_leaky_linear(const MixtureScene& scene, double kappa) {
  if (!scene.has_decomposition())
    throw PreconditionError("leaky_linear: scene needs both target and interference");
  if (!(kappa > 0.0 && kappa <= 1.0))
    throw DomainError("leaky_linear: kappa must lie in (0, 1]");
  const auto& s = scene.target->samples();
  const auto& i = scene.interference->samples();
  const double ns = s.norm();
  const double ni = i.norm();
  if (!(ns > 0.0) || !(ni > 0.0))
    throw PreconditionError("leaky_linear: target and interference must be non-zero");
  const double cosine = std::abs(s.dot(i)) / (ns * ni);
  if (!(cosine < 1e-6))
    throw PreconditionError("leaky_linear: target and interference are not orthogonal (|cos| = " +
                            std::to_string(cosine) + ")");
  return std::make_shared<LeakyLinearExtractor>(*scene.target, *scene.interference, kappa);
}

ExtractorHandle make_spectral_subtraction(double floor) {
  SpectralSubtractionConfig config;
  config.floor = floor;
  return make_spectral_subtraction(config);
}

ExtractorHandle make_spectral_subtraction(const SpectralSubtractionConfig& config) {
  if (!(config.floor >= 0.0 && config.floor < 1.0))
    throw DomainError("spectral_subtraction: floor must lie in [0, 1)");
  if (config.hop <= 0 || config.window_size < config.hop || config.n_mels <= 0 ||
      config.neighbourhood < 0)
    throw ConfigurationError("spectral_subtraction: invalid analysis parameters");
  return std::make_shared<SpectralSubtractionExtractor>(config);
}

ExtractorHandle make_external(std::vector<std::string> command, std::chrono::milliseconds timeout) {
  return std::make_shared<ExternalExtractor>(WorkerOptions{std::move(command), timeout});
}

}  // namespace tse
