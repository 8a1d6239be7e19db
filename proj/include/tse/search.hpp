#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tse/extractors.hpp"
#include "tse/scorers.hpp"
#include "tse/waveform.hpp"

namespace tse {

inline constexpr int kDefaultSteps = 5;
inline constexpr int kDefaultCandidates = 20;

struct SearchConfig {
  int steps = kDefaultSteps;
  int candidates = kDefaultCandidates;
  bool include_zero_endpoint = true;
  std::uint64_t seed = 0;
  /// Early stop fires when a step improves the selected score by less than
  /// this and re-selects the r = 1 fallback.
  double tolerance = 1e-7;
  bool early_stop = false;
  /// Candidate-level worker threads. Used only when the extractor and the
  /// scorer are both concurrent-safe; results never depend on it.
  int threads = 1;

  /// Throws ConfigurationError when an invariant is violated.
  void validate() const;
};

/// Interpolation coefficients of one step. Index 0 always holds r = 1; the
/// last index holds r = 0 when the zero endpoint is included. Order is the
/// tie-break order.
struct CandidateSchedule {
  int step = 0;
  std::vector<double> coefficients;
};

struct StepRecord {
  CandidateSchedule schedule;
  std::vector<double> candidate_scores;
  std::size_t selected_index = 0;
  double selected_r = 1.0;
  Waveform selected_estimate;
  double selected_score = 0.0;
};

struct Trajectory {
  Waveform initial;
  double initial_score = 0.0;
  std::vector<StepRecord> steps;

  const Waveform& final_estimate() const {
    return steps.empty() ? initial : steps.back().selected_estimate;
  }
  /// Estimate that step `t` (1-based) interpolated against: s_hat_{t-1}.
  const Waveform& previous_of(std::size_t t) const {
    return t <= 1 ? initial : steps.at(t - 2).selected_estimate;
  }
};

/// Raised when an extractor or scorer fails inside the search; the original
/// exception is nested (std::rethrow_if_nested).
class SearchStepError : public Error {
 public:
  SearchStepError(const std::string& what, int step, std::optional<std::size_t> candidate)
      : Error(what), step_(step), candidate_(candidate) {}
  int step() const noexcept { return step_; }
  std::optional<std::size_t> candidate() const noexcept { return candidate_; }

 private:
  int step_;
  std::optional<std::size_t> candidate_;
};

/// s_hat_0 = f(mixture, enrollment).
Waveform one_step(const Extractor& extractor, const Waveform& mixture, const Waveform& enrollment);

/// Deterministic in (config.seed, t); fresh free coefficients every step.
CandidateSchedule make_schedule(const SearchConfig& config, int t);

/// Index of the largest score; ties resolve to the smallest index.
std::size_t greedy_select(const std::vector<double>& scores);

/// One greedy refinement step from `prev`.
StepRecord search_step(const Extractor& extractor, const Scorer& scorer, const Waveform& x0,
                       const Waveform& enrollment, const Waveform& prev,
                       const CandidateSchedule& schedule, const MixtureScene* scene = nullptr,
                       int threads = 1);

/// Full multi-step search from the mixture.
Trajectory run_search(const Extractor& extractor, const Scorer& scorer, const Waveform& mixture,
                      const Waveform& enrollment, const SearchConfig& config,
                      const MixtureScene* scene = nullptr);

Trajectory run_search(const Extractor& extractor, const Scorer& scorer, const MixtureScene& scene,
                      const SearchConfig& config);

}  // namespace tse
