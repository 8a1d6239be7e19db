#include "tse/search.hpp"

#include <atomic>
#include <exception>
#include <random>
#include <thread>

namespace tse {
namespace {

struct Conditioned {
  ConditionedExtractor extract;
  ConditionedScorer score;
  bool parallel_ok;
};

Conditioned condition(const Extractor& extractor, const Scorer& scorer, const Waveform& enrollment,
                      const MixtureScene* scene) {
  if (scorer.needs_scene() && (scene == nullptr || !scene->has_target()))
    throw ConfigurationError(to_string(scorer.kind()) +
                             " scorer needs a scene with a ground-truth target");
  return {extractor.condition(enrollment), scorer.condition(enrollment, scene),
          extractor.concurrent_safe() && scorer.concurrent_safe()};
}

/// Runs body(k) for k in [0, n). Exceptions are collected per index and the
/// lowest-index one is rethrown, so failures are reported identically
/// whatever the thread count.
template <typename Body>
void for_each_index(std::size_t n, int threads, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t k) {
    try {
      body(k);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  const auto lanes = static_cast<std::size_t>(std::max(1, threads));
  if (lanes <= 1 || n <= 1) {
    for (std::size_t k = 0; k < n; ++k) run(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t l = 0; l < std::min(lanes, n); ++l)
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < n; k = next++) run(k);
      });
  }
  for (std::size_t k = 0; k < n; ++k)
    if (errors[k]) {
      try {
        std::rethrow_exception(errors[k]);
      } catch (const std::exception& e) {
        std::throw_with_nested(SearchStepError(
            "candidate " + std::to_string(k) + " failed: " + e.what(), 0, k));
      }
    }
}

StepRecord step_impl(const Conditioned& fns, const Waveform& x0, const Waveform& prev,
                     const CandidateSchedule& schedule, int threads) {
  require_same_shape(x0, prev, "search_step");
  const std::size_t count = schedule.coefficients.size();
  std::vector<std::optional<Waveform>> outputs(count);
  std::vector<double> scores(count, 0.0);
  try {
    for_each_index(count, fns.parallel_ok ? threads : 1, [&](std::size_t k) {
      const Waveform input = interpolate(x0, prev, schedule.coefficients[k]);
      outputs[k] = fns.extract(input);
      if (outputs[k]->size() != input.size())
        throw ShapeError("extractor changed the signal length");
      scores[k] = fns.score(*outputs[k]);
    });
  } catch (const SearchStepError& e) {
    // Re-label with the step index while keeping the original nested.
    std::throw_with_nested(SearchStepError("step " + std::to_string(schedule.step) + ", " + e.what(),
                                           schedule.step, e.candidate()));
  }
  const std::size_t best = greedy_select(scores);
  return StepRecord{schedule, std::move(scores), best, schedule.coefficients[best],
                    std::move(*outputs[best]), 0.0};
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

void SearchConfig::validate() const {
  if (steps < 1) throw ConfigurationError("search: steps must be >= 1");
  const int minimum = include_zero_endpoint ? 2 : 1;
  if (candidates < minimum)
    throw ConfigurationError("search: candidates must be >= " + std::to_string(minimum));
  if (!(tolerance >= 0.0)) throw ConfigurationError("search: tolerance must be non-negative");
  if (threads < 1) throw ConfigurationError("search: threads must be >= 1");
}

Waveform one_step(const Extractor& extractor, const Waveform& mixture, const Waveform& enrollment) {
  return extractor.extract(mixture, enrollment);
}

CandidateSchedule make_schedule(const SearchConfig& config, int t) {
  config.validate();
  if (t < 1 || t > config.steps)
    throw DomainError("make_schedule: step " + std::to_string(t) + " outside 1.." +
                      std::to_string(config.steps));
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                    static_cast<std::uint32_t>(config.seed >> 32), static_cast<std::uint32_t>(t)};
  std::mt19937_64 rng(seq);

  CandidateSchedule schedule{t, {}};
  const auto k = static_cast<std::size_t>(config.candidates);
  schedule.coefficients.reserve(k);
  schedule.coefficients.push_back(1.0);
  const std::size_t free = k - (config.include_zero_endpoint ? 2 : 1);
  for (std::size_t j = 0; j < free; ++j) schedule.coefficients.push_back(uniform01(rng));
  if (config.include_zero_endpoint) schedule.coefficients.push_back(0.0);
  return schedule;
}

std::size_t greedy_select(const std::vector<double>& scores) {
  if (scores.empty()) throw DomainError("greedy_select: no candidates");
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k)
    if (scores[k] > scores[best]) best = k;
  return best;
}

StepRecord search_step(const Extractor& extractor, const Scorer& scorer, const Waveform& x0,
                       const Waveform& enrollment, const Waveform& prev,
                       const CandidateSchedule& schedule, const MixtureScene* scene, int threads) {
  const Conditioned fns = condition(extractor, scorer, enrollment, scene);
  StepRecord record = step_impl(fns, x0, prev, schedule, threads);
  record.selected_score = record.candidate_scores[record.selected_index];
  return record;
}

Trajectory run_search(const Extractor& extractor, const Scorer& scorer, const Waveform& mixture,
                      const Waveform& enrollment, const SearchConfig& config,
                      const MixtureScene* scene) {
  config.validate();
  const Conditioned fns = condition(extractor, scorer, enrollment, scene);

  std::optional<Waveform> initial;
  double initial_score = 0.0;
  try {
    initial = fns.extract(mixture);
    if (initial->size() != mixture.size()) throw ShapeError("extractor changed the signal length");
    initial_score = fns.score(*initial);
  } catch (const std::exception& e) {
    std::throw_with_nested(SearchStepError(std::string("step 0 failed: ") + e.what(), 0, std::nullopt));
  }

  Trajectory trajectory{std::move(*initial), initial_score, {}};
  trajectory.steps.reserve(static_cast<std::size_t>(config.steps));
  double previous_score = initial_score;
  for (int t = 1; t <= config.steps; ++t) {
    const Waveform& prev = trajectory.steps.empty() ? trajectory.initial
                                                    : trajectory.steps.back().selected_estimate;
    StepRecord record = step_impl(fns, mixture, prev, make_schedule(config, t), config.threads);
    record.selected_score = record.candidate_scores[record.selected_index];
    const bool stalled = record.selected_r == 1.0 &&
                         record.selected_score - previous_score < config.tolerance;
    previous_score = record.selected_score;
    trajectory.steps.push_back(std::move(record));
    if (config.early_stop && stalled) break;
  }
  return trajectory;
}

Trajectory run_search(const Extractor& extractor, const Scorer& scorer, const MixtureScene& scene,
                      const SearchConfig& config) {
  return run_search(extractor, scorer, scene.mixture, scene.enrollment, config, &scene);
}

}  // namespace tse
