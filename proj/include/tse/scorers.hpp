#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tse/metrics.hpp"
#include "tse/scene.hpp"
#include "tse/waveform.hpp"

namespace tse {

enum class ScorerKind { oracle_si_sdri, quality, spk_sim, joint, external };

std::string to_string(ScorerKind kind);

inline constexpr double kDefaultLambda = 2.5;
inline constexpr double kDefaultAlpha = 4.0;

/// Scoring with enrollment (and, for the oracle, the scene) fixed.
using ConditionedScorer = std::function<double(const Waveform& estimate)>;

/// An inference-time scoring function R(estimate; enrollment). Higher is
/// better. Only the oracle reads ground truth.
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual ScorerKind kind() const = 0;
  virtual bool concurrent_safe() const { return true; }
  virtual bool needs_scene() const { return false; }

  /// `scene` is required by the oracle and ignored by every other kind.
  virtual double score(const Waveform& estimate, const Waveform& enrollment,
                       const MixtureScene* scene) const = 0;
  virtual ConditionedScorer condition(const Waveform& enrollment, const MixtureScene* scene) const;
};

using ScorerHandle = std::shared_ptr<const Scorer>;

double score(const Scorer& scorer, const Waveform& estimate, const Waveform& enrollment,
             const MixtureScene* scene = nullptr);

/// quality + lambda * (1 - exp(-alpha * clamp(spksim, 0, 1))).
double joint_score(double quality, double spksim, double lambda = kDefaultLambda,
                   double alpha = kDefaultAlpha);

ScorerHandle make_oracle_scorer();
ScorerHandle make_quality_scorer(QualityConfig config = {});
ScorerHandle make_spk_sim_scorer(EmbeddingConfig config = {});
/// Composes any quality-type scorer with any similarity-type scorer.
ScorerHandle make_joint_scorer(ScorerHandle quality, ScorerHandle similarity,
                               double lambda = kDefaultLambda, double alpha = kDefaultAlpha);
ScorerHandle make_joint_scorer(double lambda = kDefaultLambda, double alpha = kDefaultAlpha);
/// Scorer served by a worker that declares the "score" op.
ScorerHandle make_external_scorer(std::vector<std::string> command,
                                  std::chrono::milliseconds timeout = std::chrono::seconds(60));

}  // namespace tse
