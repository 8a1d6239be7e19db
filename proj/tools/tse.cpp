// Command-line entry point: synth, run, report, analyze.
//
// Exit status: 0 on success, 1 when some manifest entries failed, 2 on usage
// or configuration errors.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "tse/error.hpp"
#include "tse/harness.hpp"

namespace h = tse::harness;

namespace {

constexpr int kExitPartial = 1;
constexpr int kExitUsage = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time greedy search for target speaker extraction"};
  app.require_subcommand(1);

  h::SynthOptions synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic two-speaker scenes and a manifest");
  synth_cmd->add_option("--num-scenes", synth.num_scenes)->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--duration", synth.duration, "Scene length in seconds")->capture_default_str();
  synth_cmd->add_option("--sample-rate", synth.sample_rate)->capture_default_str();
  synth_cmd->add_option("--snr-mean", synth.snr_mean_db)->capture_default_str();
  synth_cmd->add_option("--snr-std", synth.snr_std_db)->capture_default_str();
  synth_cmd->add_option("--out", synth_out)->required();

  h::RunOptions run;
  std::string run_manifest, run_config, run_report;
  auto* run_cmd = app.add_subcommand("run", "Run the greedy search over a manifest");
  run_cmd->add_option("--manifest", run_manifest)->required();
  run_cmd->add_option("--config", run_config)->required();
  run_cmd->add_option("--selector", run.selector, "oracle, quality, spksim, joint or external")->required();
  run_cmd->add_option("--report", run_report)->required();
  run_cmd->add_option("--threads", run.threads, "Parallel candidate evaluations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  std::vector<std::string> report_paths;
  std::string report_csv_out;
  auto* report_cmd = app.add_subcommand("report", "Summarise one or more run reports");
  report_cmd->add_option("paths", report_paths)->required();
  report_cmd->add_option("--csv", report_csv_out, "Also write the summary table as CSV");

  h::AnalyzeOptions analyze;
  std::string an_manifest, an_config, an_out;
  auto* analyze_cmd = app.add_subcommand("analyze", "Lipschitz and error-bound analyses");
  analyze_cmd->add_option("--manifest", an_manifest)->required();
  analyze_cmd->add_option("--config", an_config)->required();
  analyze_cmd->add_option("--mode", analyze.mode, "lipschitz, det_bound or var_bound")->required();
  analyze_cmd->add_option("--out", an_out)->required();
  analyze_cmd->add_option("--selector", analyze.selector);
  analyze_cmd->add_option("--grid", analyze.grid_size)->capture_default_str();
  analyze_cmd->add_option("--epsilon", analyze.epsilon_r)->capture_default_str();
  analyze_cmd->add_option("--trials", analyze.trials)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth_cmd) {
      synth.out_dir = synth_out;
      const auto manifest = h::cmd_synth(synth);
      std::cout << "wrote " << manifest.entries.size() << " scenes to " << synth_out << "\n";
    } else if (*run_cmd) {
      run.manifest_path = run_manifest;
      run.config_path = run_config;
      run.report_path = run_report;
      const auto report = h::cmd_run(run);
      for (const auto& f : report.failures) std::cerr << "entry " << f.id << " failed: " << f.message << "\n";
      std::cout << "wrote " << report.rows.size() << " rows to " << run_report << "\n";
      if (!report.failures.empty()) return kExitPartial;
    } else if (*report_cmd) {
      std::vector<h::fs::path> paths(report_paths.begin(), report_paths.end());
      const auto summary = h::cmd_report(paths);
      std::cout << summary.text;
      if (!report_csv_out.empty()) {
        std::ofstream os(report_csv_out, std::ios::binary);
        if (!os || !(os << summary.csv)) throw tse::IoError("cannot write " + report_csv_out);
      }
    } else if (*analyze_cmd) {
      analyze.manifest_path = an_manifest;
      analyze.config_path = an_config;
      analyze.out_path = an_out;
      h::cmd_analyze(analyze);
      std::cout << "wrote " << an_out << "\n";
    }
  } catch (const tse::ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const tse::MergeError& e) {
    std::cerr << "merge error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const tse::BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPartial;
  }
  return 0;
}
