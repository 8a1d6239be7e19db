#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tse/extractors.hpp"
#include "tse/scorers.hpp"
#include "tse/search.hpp"

namespace tse {

/// Local Lipschitz constants of an extractor (lipschitz_f) and a scorer
/// (lipschitz_r) measured on one interpolation segment.
struct LipschitzEstimate {
  double lipschitz_f = 0.0;
  double lipschitz_r = 0.0;
  int probe_count = 0;
  std::string probe_spec;
};

/// Points at which an extractor/scorer pair is probed along the segment
/// r*x0 + (1-r)*prev.
struct ProbeSet {
  std::vector<double> coefficients;
  std::vector<Waveform> inputs;
  std::vector<Waveform> outputs;
  std::vector<double> scores;
  double segment_length = 0.0;
};

/// Uniform grid of `grid_size` points on [0, 1] merged with `extra` (sorted,
/// duplicates removed).
std::vector<double> probe_grid(int grid_size, std::span<const double> extra = {});

ProbeSet probe_segment(const Extractor& extractor, const Scorer& scorer, const Waveform& x0,
                       const Waveform& prev, const Waveform& enrollment,
                       std::span<const double> coefficients, const MixtureScene* scene = nullptr);

/// Maximum finite-difference ratios over every pair of probes:
///   lipschitz_f = max |f(u) - f(v)| / |u - v|,
///   lipschitz_r = max |R(a) - R(b)| / |a - b| over extracted outputs.
/// Pairs with a denominator below 1e-12 are skipped. Adding probes can only
/// raise the estimate. Throws DomainError when every pair is degenerate.
LipschitzEstimate lipschitz_from_probes(const ProbeSet& probes, const std::string& spec = {});

/// Probes on a uniform grid (plus any `extra` coefficients, e.g. a step's
/// candidate schedule so that the grid refines it).
LipschitzEstimate estimate_lipschitz(const Extractor& extractor, const Scorer& scorer,
                                     const Waveform& x0, const Waveform& prev,
                                     const Waveform& enrollment, int grid_size,
                                     const MixtureScene* scene = nullptr,
                                     std::span<const double> extra = {});

struct BoundPair {
  int step = 0;
  double delta_r = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  /// lhs / rhs; 0 when both vanish, +inf when only rhs does.
  double ratio = 0.0;
};

struct BoundCheckReport {
  std::vector<BoundPair> records;
  /// NaN when there are no pairs.
  double max_ratio = 0.0;
  double variance_lhs = 0.0;
  double variance_rhs = 0.0;

  bool has_pairs() const { return !records.empty(); }
};

nlohmann::json to_json(const LipschitzEstimate& estimate);
nlohmann::json to_json(const BoundCheckReport& report);

/// Compares every non-selected candidate of each step with the selected one:
///   lhs = |R(s~) - R(s*)|  (from the recorded scores),
///   rhs = L_R * L_f * |r~ - r*| * |x0 - s_hat_{t-1}|.
/// `per_step` holds one estimate per step, or a single estimate applied to
/// all steps.
BoundCheckReport check_deterministic_bound(const Trajectory& trajectory,
                                           std::span<const LipschitzEstimate> per_step,
                                           const Waveform& x0);

/// Estimates Lipschitz constants per step on a `grid_size` grid refined by
/// that step's schedule, then runs check_deterministic_bound.
BoundCheckReport analyze_deterministic_bound(const Extractor& extractor, const Scorer& scorer,
                                             const Trajectory& trajectory, const Waveform& x0,
                                             const Waveform& enrollment, int grid_size,
                                             const MixtureScene* scene = nullptr);

struct VarianceBoundOptions {
  double epsilon_r = 0.05;
  int trials = 1000;
  /// Step whose state (prev estimate and selected r*) is perturbed.
  int step = 1;
  int grid_size = 101;
  std::uint64_t seed = 0;
};

/// Perturbs the selected coefficient of one step by zero-mean uniform noise
/// with variance epsilon_r^2 (clamped to [0, 1]) and compares the sample
/// variance of R with (L_R * L_f)^2 * |x0 - s_hat_{t-1}|^2 * epsilon_r^2.
BoundCheckReport check_variance_bound(const Extractor& extractor, const Scorer& scorer,
                                      const MixtureScene& scene, const SearchConfig& config,
                                      const VarianceBoundOptions& options);

/// Same, reusing an existing trajectory for the step state.
BoundCheckReport check_variance_bound(const Extractor& extractor, const Scorer& scorer,
                                      const Trajectory& trajectory, const Waveform& x0,
                                      const Waveform& enrollment, const VarianceBoundOptions& options,
                                      const MixtureScene* scene = nullptr);

/// |x0 - s_hat_{t-1}| for t = 1..T.
std::vector<double> segment_length_series(const Trajectory& trajectory, const Waveform& x0);

/// Largest relative violation of |x~ - x*| = |r~ - r*| * |x0 - prev| over all
/// candidate pairs of a stored trajectory.
double input_deviation_residual(const Trajectory& trajectory, const Waveform& x0);

}  // namespace tse
