#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tse/extractors.hpp"
#include "tse/reliability.hpp"
#include "tse/scene.hpp"
#include "tse/scorers.hpp"
#include "tse/search.hpp"

namespace tse::harness {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Manifest

struct ManifestEntry {
  std::string id;
  fs::path mixture_path;
  fs::path enrollment_path;
  std::optional<fs::path> target_path;
  std::optional<fs::path> interference_path;
};

/// JSONL, one entry per line. Relative paths resolve against the manifest's
/// directory.
struct Manifest {
  std::vector<ManifestEntry> entries;
};

/// Parses and validates: unique ids, every referenced file exists.
Manifest load_manifest(const fs::path& path);
void write_manifest(const Manifest& manifest, const fs::path& path);

/// Loads the waveforms of one entry.
MixtureScene load_scene(const ManifestEntry& entry);

// ---------------------------------------------------------------------------
// Configuration

struct WorkerSpec {
  std::vector<std::string> command;
  std::chrono::milliseconds timeout{60000};
};

struct ExtractorSpec {
  ExtractorKind kind = ExtractorKind::identity;
  double kappa = 0.5;
  double floor = 0.1;
  std::optional<WorkerSpec> worker;
};

/// JSON keys: steps, candidates, seed, include_zero_endpoint, lambda, alpha,
/// extractor {kind, params}, scorer_workers {quality, spksim, external},
/// plus the optional early_stop and tolerance. Unknown keys are errors.
struct RunConfig {
  SearchConfig search;
  double lambda = kDefaultLambda;
  double alpha = kDefaultAlpha;
  ExtractorSpec extractor;
  std::optional<WorkerSpec> quality_worker;
  std::optional<WorkerSpec> spksim_worker;
  std::optional<WorkerSpec> external_worker;
};

RunConfig parse_config(const nlohmann::json& json);
RunConfig load_config(const fs::path& path);

enum class Selector { oracle, quality, spksim, joint, external };

Selector parse_selector(const std::string& name);
std::string to_string(Selector selector);

/// Backends for one run. External workers are spawned once here and shared
/// by every entry of the run.
class Backends {
 public:
  Backends(const RunConfig& config, Selector selector);

  /// Extractor for a scene (the leaky-linear oracle is scene-specific).
  ExtractorHandle extractor_for(const MixtureScene& scene) const;
  const ScorerHandle& selector_scorer() const { return selector_; }
  const ScorerHandle& quality_scorer() const { return quality_; }
  const ScorerHandle& similarity_scorer() const { return similarity_; }

 private:
  ExtractorSpec spec_;
  ExtractorHandle shared_extractor_;
  ScorerHandle quality_;
  ScorerHandle similarity_;
  ScorerHandle selector_;
};

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  int num_scenes = 10;
  std::uint64_t seed = 0;
  double duration = 1.0;
  int sample_rate = kDefaultSampleRate;
  double snr_mean_db = 0.0;
  double snr_std_db = 3.6;
  fs::path out_dir;
};

/// Writes target/interference/mixture/enrollment WAVs per scene and
/// `manifest.jsonl` into out_dir; returns the manifest.
Manifest cmd_synth(const SynthOptions& options);

// ---------------------------------------------------------------------------
// run

struct ReportRow {
  std::string id;
  std::string selector;
  int step = 0;
  std::optional<double> selected_r;
  double score = 0.0;
  std::optional<double> si_sdr_db;
  std::optional<double> si_sdri_db;
  double spk_sim = 0.0;
  double quality = 0.0;
};

/// Per-step column means. Missing intrusive metrics are excluded; a column
/// with no values is NaN (null in JSON).
struct StepAggregate {
  int step = 0;
  int count = 0;
  double score = 0.0;
  double si_sdr_db = 0.0;
  double si_sdri_db = 0.0;
  double spk_sim = 0.0;
  double quality = 0.0;
};

struct EntryFailure {
  std::string id;
  std::string message;
};

struct RunReport {
  std::string selector;
  std::string extractor;
  int steps = 0;
  std::vector<ReportRow> rows;
  std::vector<StepAggregate> aggregates;
  std::vector<EntryFailure> failures;
};

inline constexpr const char* kReportHeader =
    "id,selector,step,selected_r,score,si_sdr_db,si_sdri_db,spk_sim,quality";

struct RunOptions {
  fs::path manifest_path;
  fs::path config_path;
  std::string selector;
  fs::path report_path;
  int threads = 1;
};

/// Runs the search for every manifest entry. Configuration problems throw
/// before any entry is processed; per-entry failures are recorded in the
/// report and the batch continues.
RunReport run_manifest(const Manifest& manifest, const RunConfig& config, Selector selector,
                       int threads = 1);

/// run_manifest plus report files: CSV rows at report_path and JSON
/// aggregates at report_path + ".json".
RunReport cmd_run(const RunOptions& options);

std::vector<StepAggregate> aggregate_rows(const std::vector<ReportRow>& rows, int steps);

std::string format_number(double value);
std::string report_csv(const RunReport& report);
nlohmann::json report_json(const RunReport& report);
void write_report(const RunReport& report, const fs::path& csv_path);

/// JSON sidecar of a CSV report path.
fs::path aggregates_path(const fs::path& csv_path);

/// Reads a report written by write_report (either path may be given).
RunReport read_report(const fs::path& path);

// ---------------------------------------------------------------------------
// report

struct ReportSummary {
  std::string text;
  std::string csv;
};

/// Per-selector, per-step mean table. Step 0 is printed once as the shared
/// baseline. Throws MergeError when the reports disagree on the step count
/// or their aggregates do not match their raw rows.
ReportSummary cmd_report(const std::vector<fs::path>& report_paths);
ReportSummary summarize_reports(const std::vector<RunReport>& reports);

// ---------------------------------------------------------------------------
// analyze

enum class AnalyzeMode { lipschitz, det_bound, var_bound };

AnalyzeMode parse_analyze_mode(const std::string& name);

struct AnalyzeOptions {
  fs::path manifest_path;
  fs::path config_path;
  std::string mode;
  fs::path out_path;
  /// Empty picks "oracle" when every entry has a target, else "quality".
  std::string selector;
  int grid_size = 101;
  double epsilon_r = 0.05;
  int trials = 1000;
};

nlohmann::json analyze_manifest(const Manifest& manifest, const RunConfig& config, AnalyzeMode mode,
                                Selector selector, const AnalyzeOptions& options);

nlohmann::json cmd_analyze(const AnalyzeOptions& options);

}  // namespace tse::harness
