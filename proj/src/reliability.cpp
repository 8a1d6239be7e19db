#include "tse/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace tse {
namespace {

constexpr double kDegenerateDistance = 1e-12;

double pair_ratio(double lhs, double rhs) {
  if (rhs > 0) return lhs / rhs;
  return lhs == 0 ? 0.0 : std::numeric_limits<double>::infinity();
}

void finish(BoundCheckReport& report) {
  if (report.records.empty()) {
    report.max_ratio = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  report.max_ratio = 0.0;
  for (const auto& r : report.records) report.max_ratio = std::max(report.max_ratio, r.ratio);
}

const LipschitzEstimate& estimate_for(std::span<const LipschitzEstimate> per_step, std::size_t t,
                                      std::size_t steps) {
  if (per_step.size() == 1) return per_step[0];
  if (per_step.size() != steps)
    throw ConfigurationError("need one Lipschitz estimate per step (" + std::to_string(steps) +
                             "), got " + std::to_string(per_step.size()));
  return per_step[t - 1];
}

void require_records(const Trajectory& trajectory) {
  for (const auto& step : trajectory.steps)
    if (step.candidate_scores.size() != step.schedule.coefficients.size() ||
        step.candidate_scores.empty())
      throw ConfigurationError("trajectory step " + std::to_string(step.schedule.step) +
                               " lacks full candidate records");
}

}  // namespace

std::vector<double> probe_grid(int grid_size, std::span<const double> extra) {
  if (grid_size < 3) throw DomainError("probe grid needs at least 3 points");
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(grid_size) + extra.size());
  for (int i = 0; i < grid_size; ++i) grid.push_back(static_cast<double>(i) / (grid_size - 1));
  for (double r : extra) {
    if (!(r >= 0.0 && r <= 1.0)) throw DomainError("probe coefficient outside [0, 1]");
    grid.push_back(r);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

ProbeSet probe_segment(const Extractor& extractor, const Scorer& scorer, const Waveform& x0,
                       const Waveform& prev, const Waveform& enrollment,
                       std::span<const double> coefficients, const MixtureScene* scene) {
  if (scorer.needs_scene() && (scene == nullptr || !scene->has_target()))
    throw ConfigurationError("oracle scorer needs a scene with a ground-truth target");
  const ConditionedExtractor f = extractor.condition(enrollment);
  const ConditionedScorer score = scorer.condition(enrollment, scene);
  ProbeSet probes;
  probes.segment_length = distance(x0, prev);
  for (double r : coefficients) {
    probes.coefficients.push_back(r);
    probes.inputs.push_back(interpolate(x0, prev, r));
    probes.outputs.push_back(f(probes.inputs.back()));
    probes.scores.push_back(score(probes.outputs.back()));
  }
  return probes;
}

LipschitzEstimate lipschitz_from_probes(const ProbeSet& probes, const std::string& spec) {
  LipschitzEstimate est;
  est.probe_count = static_cast<int>(probes.inputs.size());
  est.probe_spec = spec;
  bool any = false;
  const std::size_t n = probes.inputs.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double din = distance(probes.inputs[i], probes.inputs[j]);
      if (din < kDegenerateDistance) continue;
      any = true;
      const double dout = distance(probes.outputs[i], probes.outputs[j]);
      est.lipschitz_f = std::max(est.lipschitz_f, dout / din);
      if (dout < kDegenerateDistance) continue;
      est.lipschitz_r = std::max(est.lipschitz_r, std::abs(probes.scores[i] - probes.scores[j]) / dout);
    }
  }
  if (!any) throw DomainError("Lipschitz estimate: every probe pair is degenerate (x0 == prev?)");
  return est;
}

LipschitzEstimate estimate_lipschitz(const Extractor& extractor, const Scorer& scorer,
                                     const Waveform& x0, const Waveform& prev,
                                     const Waveform& enrollment, int grid_size,
                                     const MixtureScene* scene, std::span<const double> extra) {
  const std::vector<double> grid = probe_grid(grid_size, extra);
  const ProbeSet probes = probe_segment(extractor, scorer, x0, prev, enrollment, grid, scene);
  std::string spec = "uniform r-grid of " + std::to_string(grid_size) + " points on [0,1]";
  if (!extra.empty()) spec += " plus " + std::to_string(extra.size()) + " extra coefficients";
  spec += ", all probe pairs";
  return lipschitz_from_probes(probes, spec);
}

nlohmann::json to_json(const LipschitzEstimate& estimate) {
  return {{"L_f", estimate.lipschitz_f},
          {"L_R", estimate.lipschitz_r},
          {"probe_count", estimate.probe_count},
          {"probe_spec", estimate.probe_spec}};
}

nlohmann::json to_json(const BoundCheckReport& report) {
  nlohmann::json records = nlohmann::json::array();
  // JSON has no infinity; undefined ratios serialise as null.
  auto number = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  for (const auto& r : report.records)
    records.push_back({{"step", r.step},
                       {"delta_r", r.delta_r},
                       {"lhs", r.lhs},
                       {"rhs", r.rhs},
                       {"ratio", number(r.ratio)}});
  return {{"records", std::move(records)},
          {"max_ratio", number(report.max_ratio)},
          {"variance_lhs", report.variance_lhs},
          {"variance_rhs", report.variance_rhs}};
}

BoundCheckReport check_deterministic_bound(const Trajectory& trajectory,
                                           std::span<const LipschitzEstimate> per_step,
                                           const Waveform& x0) {
  require_records(trajectory);
  if (per_step.empty() && !trajectory.steps.empty())
    throw ConfigurationError("deterministic bound needs Lipschitz estimates");
  BoundCheckReport report;
  const std::size_t steps = trajectory.steps.size();
  for (std::size_t t = 1; t <= steps; ++t) {
    const StepRecord& step = trajectory.steps[t - 1];
    const LipschitzEstimate& est = estimate_for(per_step, t, steps);
    const double segment = distance(x0, trajectory.previous_of(t));
    const double gain = est.lipschitz_r * est.lipschitz_f;
    const double best_r = step.schedule.coefficients[step.selected_index];
    const double best_score = step.candidate_scores[step.selected_index];
    for (std::size_t k = 0; k < step.candidate_scores.size(); ++k) {
      if (k == step.selected_index) continue;
      BoundPair pair;
      pair.step = static_cast<int>(t);
      pair.delta_r = step.schedule.coefficients[k] - best_r;
      pair.lhs = std::abs(step.candidate_scores[k] - best_score);
      pair.rhs = gain * std::abs(pair.delta_r) * segment;
      pair.ratio = pair_ratio(pair.lhs, pair.rhs);
      report.records.push_back(pair);
    }
  }
  finish(report);
  return report;
}

BoundCheckReport analyze_deterministic_bound(const Extractor& extractor, const Scorer& scorer,
                                             const Trajectory& trajectory, const Waveform& x0,
                                             const Waveform& enrollment, int grid_size,
                                             const MixtureScene* scene) {
  require_records(trajectory);
  std::vector<LipschitzEstimate> per_step;
  for (std::size_t t = 1; t <= trajectory.steps.size(); ++t) {
    const Waveform& prev = trajectory.previous_of(t);
    const auto& coefficients = trajectory.steps[t - 1].schedule.coefficients;
    if (distance(x0, prev) < kDegenerateDistance) {
      // Converged segment: every pair has lhs = rhs = 0 regardless of L.
      per_step.push_back(LipschitzEstimate{0.0, 0.0, 0, "degenerate segment"});
      continue;
    }
    per_step.push_back(
        estimate_lipschitz(extractor, scorer, x0, prev, enrollment, grid_size, scene, coefficients));
  }
  return check_deterministic_bound(trajectory, per_step, x0);
}

BoundCheckReport check_variance_bound(const Extractor& extractor, const Scorer& scorer,
                                      const Trajectory& trajectory, const Waveform& x0,
                                      const Waveform& enrollment, const VarianceBoundOptions& options,
                                      const MixtureScene* scene) {
  if (!(options.epsilon_r >= 0.0)) throw DomainError("variance bound: epsilon_r must be >= 0");
  if (options.trials < 100) throw DomainError("variance bound: need at least 100 trials");
  if (options.step < 1 || static_cast<std::size_t>(options.step) > trajectory.steps.size())
    throw DomainError("variance bound: step " + std::to_string(options.step) +
                      " not in trajectory");

  const auto t = static_cast<std::size_t>(options.step);
  const Waveform& prev = trajectory.previous_of(t);
  const double best_r = trajectory.steps[t - 1].selected_r;
  const double segment = distance(x0, prev);

  const std::vector<double> extra{best_r};
  const LipschitzEstimate est = segment < kDegenerateDistance
                                    ? LipschitzEstimate{0.0, 0.0, 0, "degenerate segment"}
                                    : estimate_lipschitz(extractor, scorer, x0, prev, enrollment,
                                                         options.grid_size, scene, extra);

  const ConditionedExtractor f = extractor.condition(enrollment);
  const ConditionedScorer score = scorer.condition(enrollment, scene);
  const double best_score = score(f(interpolate(x0, prev, best_r)));

  const double half_width = std::sqrt(3.0) * options.epsilon_r;
  const double gain = est.lipschitz_r * est.lipschitz_f * segment;
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  BoundCheckReport report;
  double mean = 0.0;
  double m2 = 0.0;
  for (int trial = 0; trial < options.trials; ++trial) {
    const double r = std::clamp(best_r + half_width * unit(rng), 0.0, 1.0);
    const double value = score(f(interpolate(x0, prev, r)));
    // Welford: identical samples give exactly zero variance.
    const double delta = value - mean;
    mean += delta / (trial + 1);
    m2 += delta * (value - mean);
    BoundPair pair;
    pair.step = options.step;
    pair.delta_r = r - best_r;
    pair.lhs = std::abs(value - best_score);
    pair.rhs = gain * std::abs(pair.delta_r);
    pair.ratio = pair_ratio(pair.lhs, pair.rhs);
    report.records.push_back(pair);
  }
  report.variance_lhs = m2 / (options.trials - 1);
  report.variance_rhs = gain * gain * (options.epsilon_r * options.epsilon_r);
  finish(report);
  return report;
}

BoundCheckReport check_variance_bound(const Extractor& extractor, const Scorer& scorer,
                                      const MixtureScene& scene, const SearchConfig& config,
                                      const VarianceBoundOptions& options) {
  if (!(options.epsilon_r >= 0.0)) throw DomainError("variance bound: epsilon_r must be >= 0");
  SearchConfig run = config;
  run.steps = std::max(config.steps, options.step);
  run.early_stop = false;
  const Trajectory trajectory = run_search(extractor, scorer, scene, run);
  return check_variance_bound(extractor, scorer, trajectory, scene.mixture, scene.enrollment,
                              options, &scene);
}

std::vector<double> segment_length_series(const Trajectory& trajectory, const Waveform& x0) {
  if (trajectory.steps.empty()) throw DomainError("segment_length_series: empty trajectory");
  std::vector<double> series;
  for (std::size_t t = 1; t <= trajectory.steps.size(); ++t)
    series.push_back(distance(x0, trajectory.previous_of(t)));
  return series;
}

double input_deviation_residual(const Trajectory& trajectory, const Waveform& x0) {
  double worst = 0.0;
  for (std::size_t t = 1; t <= trajectory.steps.size(); ++t) {
    const Waveform& prev = trajectory.previous_of(t);
    const double segment = distance(x0, prev);
    const auto& r = trajectory.steps[t - 1].schedule.coefficients;
    std::vector<Waveform> inputs;
    for (double c : r) inputs.push_back(interpolate(x0, prev, c));
    for (std::size_t i = 0; i < r.size(); ++i)
      for (std::size_t j = i + 1; j < r.size(); ++j) {
        const double lhs = distance(inputs[i], inputs[j]);
        const double rhs = std::abs(r[i] - r[j]) * segment;
        if (rhs == 0.0) {
          if (lhs != 0.0) worst = std::max(worst, std::numeric_limits<double>::infinity());
          continue;
        }
        worst = std::max(worst, std::abs(lhs - rhs) / rhs);
      }
  }
  return worst;
}

}  // namespace tse
