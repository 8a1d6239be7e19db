#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "support/test_util.hpp"
#include "tse/error.hpp"
#include "tse/harness.hpp"
#include "tse/metrics.hpp"
#include "tse/wav_io.hpp"

using namespace tse;
using namespace tse::harness;
using tse::testing::TempDir;

namespace {

constexpr double kTwentyLogTwo = 6.020599913279623904;

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
}

RunConfig config_from(const std::string& text) { return parse_config(nlohmann::json::parse(text)); }

Manifest synth(const fs::path& dir, int n, std::uint64_t seed, double snr_std = 3.6, double duration = 0.5) {
  SynthOptions o;
  o.num_scenes = n;
  o.seed = seed;
  o.duration = duration;
  o.snr_std_db = snr_std;
  o.out_dir = dir;
  return cmd_synth(o);
}

}  // namespace

TEST(Config, DefaultsMatchTheSearchDefaults) {
  const RunConfig c = config_from("{}");
  EXPECT_EQ(c.search.steps, 5);
  EXPECT_EQ(c.search.candidates, 20);
  EXPECT_TRUE(c.search.include_zero_endpoint);
  EXPECT_EQ(c.lambda, 2.5);
  EXPECT_EQ(c.alpha, 4.0);
  EXPECT_EQ(c.extractor.kind, ExtractorKind::identity);
}

TEST(Config, ParsesEveryKey) {
  const RunConfig c = config_from(R"({"steps":3,"candidates":7,"seed":99,"include_zero_endpoint":false,
      "lambda":1.5,"alpha":2.0,"early_stop":true,"tolerance":0.001,
      "extractor":{"kind":"leaky_linear","params":{"kappa":0.25}},
      "scorer_workers":{"quality":["q","--fast"],"spksim":{"command":["s"],"timeout":2.5},"external":["x"]}})");
  EXPECT_EQ(c.search.steps, 3);
  EXPECT_EQ(c.search.candidates, 7);
  EXPECT_EQ(c.search.seed, 99u);
  EXPECT_FALSE(c.search.include_zero_endpoint);
  EXPECT_TRUE(c.search.early_stop);
  EXPECT_EQ(c.search.tolerance, 0.001);
  EXPECT_EQ(c.lambda, 1.5);
  EXPECT_EQ(c.alpha, 2.0);
  EXPECT_EQ(c.extractor.kind, ExtractorKind::leaky_linear);
  EXPECT_EQ(c.extractor.kappa, 0.25);
  EXPECT_EQ(c.quality_worker->command, (std::vector<std::string>{"q", "--fast"}));
  EXPECT_EQ(c.spksim_worker->timeout, std::chrono::milliseconds(2500));
  EXPECT_EQ(c.external_worker->command.front(), "x");
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  for (const char* bad : {
           R"({"step":5})",
           R"({"steps":0})",
           R"({"candidates":1})",
           R"({"lambda":0})",
           R"({"alpha":-2})",
           R"({"steps":"five"})",
           R"({"extractor":{"kind":"dprnn"}})",
           R"({"extractor":{"kind":"identity","params":{"kappa":0.5}}})",
           R"({"extractor":{"kind":"leaky_linear","params":{"kappa":0}}})",
           R"({"extractor":{"kind":"spectral_subtraction","params":{"floor":1.0}}})",
           R"({"extractor":{"kind":"external","params":{"command":[]}}})",
           R"({"extractor":{"kind":"identity","extra":1}})",
           R"({"scorer_workers":{"utmos":["x"]}})",
           R"({"scorer_workers":{"quality":{"command":["x"],"timeout":0}}})",
           R"([1,2])",
       })
    EXPECT_THROW(config_from(bad), ConfigurationError) << bad;
}

TEST(Selector, Names) {
  for (const char* name : {"oracle", "quality", "spksim", "joint", "external"})
    EXPECT_EQ(to_string(parse_selector(name)), name);
  EXPECT_THROW(parse_selector("utmos"), ConfigurationError);
  EXPECT_THROW(Backends(config_from("{}"), Selector::external), ConfigurationError);
}

TEST(Manifest, ResolvesRelativePathsAndValidates) {
  TempDir dir("manifest");
  fs::create_directories(dir / "audio");
  const Waveform w = tse::testing::noise(1000, 1, 0.1);
  save_wav(w, dir / "audio/m.wav");
  save_wav(w, dir / "audio/e.wav");
  spit(dir / "ok.jsonl",
       R"({"id":"a","mixture_path":"audio/m.wav","enrollment_path":"audio/e.wav"})"
       "\n\n"
       R"({"id":"b","mixture_path":"audio/m.wav","enrollment_path":"audio/e.wav","target_path":"audio/m.wav"})"
       "\n");
  const Manifest m = load_manifest(dir / "ok.jsonl");
  ASSERT_EQ(m.entries.size(), 2u);
  EXPECT_EQ(m.entries[0].mixture_path, dir / "audio/m.wav");
  EXPECT_FALSE(m.entries[0].target_path.has_value());
  EXPECT_TRUE(m.entries[1].target_path.has_value());
  EXPECT_EQ(load_scene(m.entries[1]).target.value(), load_wav(dir / "audio/m.wav"));

  auto expect_bad = [&](const std::string& line) {
    spit(dir / "bad.jsonl", line + "\n");
    EXPECT_THROW(load_manifest(dir / "bad.jsonl"), ConfigurationError) << line;
  };
  expect_bad(R"({"id":"a","mixture_path":"audio/nope.wav","enrollment_path":"audio/e.wav"})");
  expect_bad(R"({"id":"a","mixture_path":"audio/m.wav"})");
  expect_bad(R"({"id":"a,b","mixture_path":"audio/m.wav","enrollment_path":"audio/e.wav"})");
  expect_bad(R"({"id":"a","mixture_path":"audio/m.wav","enrollment_path":"audio/e.wav","speaker":"x"})");
  expect_bad("not json");
  expect_bad(R"({"id":"a","mixture_path":"audio/m.wav","enrollment_path":"audio/e.wav"})"
             "\n"
             R"({"id":"a","mixture_path":"audio/m.wav","enrollment_path":"audio/e.wav"})");
  EXPECT_THROW(load_manifest(dir / "absent.jsonl"), IoError);
}

TEST(Synth, DeterministicFilesThatLoad) {
  TempDir a("synth_a"), b("synth_b");
  const Manifest ma = synth(a.path(), 3, 5);
  const Manifest mb = synth(b.path(), 3, 5);
  EXPECT_EQ(slurp(a / "manifest.jsonl"), slurp(b / "manifest.jsonl"));
  ASSERT_EQ(ma.entries.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    for (const auto& [pa, pb] : {std::pair{ma.entries[k].mixture_path, mb.entries[k].mixture_path},
                                 std::pair{*ma.entries[k].target_path, *mb.entries[k].target_path}})
      EXPECT_EQ(slurp(pa), slurp(pb));
  }
  const Manifest loaded = load_manifest(a / "manifest.jsonl");
  ASSERT_EQ(loaded.entries.size(), 3u);
  for (const auto& e : loaded.entries) {
    const MixtureScene scene = load_scene(e);
    EXPECT_TRUE(scene.has_decomposition());
    EXPECT_EQ(scene.mixture.size(), 8000);
  }
}

TEST(Synth, SceneSnrFollowsTheSeededDraw) {
  TempDir dir("synth_snr");
  const Manifest m = synth(dir.path(), 4, 77, 3.6);
  for (std::size_t j = 0; j < m.entries.size(); ++j) {
    const MixtureScene scene = load_scene(m.entries[j]);
    const double snr = 10.0 * std::log10(energy(*scene.target) / energy(*scene.interference));
    EXPECT_NEAR(snr, draw_snr_db(77, j, 0.0, 3.6), 1e-4);
  }
}

TEST(Synth, RejectsNonPositiveDuration) {
  TempDir dir("synth_bad");
  SynthOptions o;
  o.out_dir = dir.path();
  o.duration = 0.0;
  EXPECT_THROW(cmd_synth(o), ConfigurationError);
  o.duration = -1.0;
  EXPECT_THROW(cmd_synth(o), ConfigurationError);
}

TEST(Run, OracleOnLeakyScenesFollowsTheClosedForm) {
  TempDir dir("run_leaky");
  const Manifest m = synth(dir.path(), 3, 1, 0.0);
  const RunConfig c = config_from(R"({"extractor":{"kind":"leaky_linear","params":{"kappa":0.5}}})");
  const RunReport report = run_manifest(m, c, Selector::oracle);
  EXPECT_TRUE(report.failures.empty());
  ASSERT_EQ(report.aggregates.size(), 6u);
  for (int t = 0; t <= 5; ++t) {
    EXPECT_NEAR(report.aggregates[static_cast<std::size_t>(t)].si_sdri_db, kTwentyLogTwo * (t + 1), 0.05);
    const auto k = static_cast<std::size_t>(t);
    if (t > 0) {
      EXPECT_GT(report.aggregates[k].si_sdri_db, report.aggregates[k - 1].si_sdri_db);
    }
  }
  for (const auto& row : report.rows)
    if (row.step > 0) {
      EXPECT_EQ(row.selected_r, 0.0);
    }
}

TEST(Run, RowsAreCompleteSortedAndStepZeroIsShared) {
  TempDir dir("run_rows");
  const Manifest m = synth(dir.path(), 2, 2);
  const RunConfig c = config_from(R"({"steps":2,"candidates":5,"extractor":{"kind":"spectral_subtraction"}})");
  const RunReport q = run_manifest(m, c, Selector::quality);
  const RunReport s = run_manifest(m, c, Selector::spksim);
  ASSERT_EQ(q.rows.size(), 6u);
  for (std::size_t k = 0; k < q.rows.size(); ++k) {
    EXPECT_EQ(q.rows[k].id, m.entries[k / 3].id);
    EXPECT_EQ(q.rows[k].step, static_cast<int>(k % 3));
    EXPECT_EQ(q.rows[k].selected_r.has_value(), q.rows[k].step > 0);
  }
  for (std::size_t k = 0; k < q.rows.size(); k += 3) {
    EXPECT_EQ(q.rows[k].si_sdr_db, s.rows[k].si_sdr_db);
    EXPECT_EQ(q.rows[k].si_sdri_db, s.rows[k].si_sdri_db);
    EXPECT_EQ(q.rows[k].spk_sim, s.rows[k].spk_sim);
    EXPECT_EQ(q.rows[k].quality, s.rows[k].quality);
    EXPECT_EQ(q.rows[k].score, q.rows[k].quality);
    EXPECT_EQ(s.rows[k].score, s.rows[k].spk_sim);
  }
}

TEST(Run, QualitySelectorNeverLowersQuality) {
  TempDir dir("run_quality");
  const Manifest m = synth(dir.path(), 3, 3);
  const RunConfig c = config_from(R"({"steps":3,"candidates":6,"extractor":{"kind":"spectral_subtraction"}})");
  const RunReport r = run_manifest(m, c, Selector::quality);
  for (std::size_t t = 1; t < r.aggregates.size(); ++t)
    EXPECT_GE(r.aggregates[t].quality, r.aggregates[0].quality);
}

TEST(Run, OracleWithoutTargetsAbortsBeforeWriting) {
  TempDir dir("run_abort");
  const Manifest m = synth(dir.path(), 2, 4);
  std::string text = slurp(dir / "manifest.jsonl");
  spit(dir / "no_target.jsonl",
       R"({"id":"x","mixture_path":"scene_00000_mixture.wav","enrollment_path":"scene_00000_enrollment.wav"})"
       "\n" + text);
  spit(dir / "config.json", "{}");
  RunOptions o{dir / "no_target.jsonl", dir / "config.json", "oracle", dir / "report.csv", 1};
  EXPECT_THROW(cmd_run(o), ConfigurationError);
  EXPECT_FALSE(fs::exists(dir / "report.csv"));
  spit(dir / "leaky.json", R"({"extractor":{"kind":"leaky_linear"}})");
  o.config_path = dir / "leaky.json";
  o.selector = "quality";
  EXPECT_THROW(cmd_run(o), ConfigurationError);
  EXPECT_FALSE(fs::exists(dir / "report.csv"));
}

TEST(Run, PerEntryFailuresAreRecordedAndSkipped) {
  TempDir dir("run_partial");
  Manifest m = synth(dir.path(), 3, 5);
  spit(m.entries[1].mixture_path, "RIFF garbage");
  const RunConfig c = config_from(R"({"steps":1,"candidates":3})");
  const RunReport r = run_manifest(m, c, Selector::quality);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].id, m.entries[1].id);
  EXPECT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.aggregates[0].count, 2);
}

TEST(Run, EarlyStopPadsWithTheLastEstimate) {
  TempDir dir("run_early");
  const Manifest m = synth(dir.path(), 1, 6);
  const RunConfig c = config_from(R"({"steps":4,"candidates":4,"early_stop":true})");
  const RunReport r = run_manifest(m, c, Selector::quality);  // identity: every candidate ties
  ASSERT_EQ(r.rows.size(), 5u);
  for (int t = 1; t <= 4; ++t) {
    EXPECT_EQ(r.rows[static_cast<std::size_t>(t)].selected_r, 1.0);
    EXPECT_EQ(r.rows[static_cast<std::size_t>(t)].quality, r.rows[0].quality);
  }
}

TEST(Report, CsvFormatAndRoundTrip) {
  TempDir dir("report_rt");
  const Manifest m = synth(dir.path(), 2, 7);
  const RunConfig c = config_from(R"({"steps":2,"candidates":4,"extractor":{"kind":"spectral_subtraction"}})");
  const RunReport r = run_manifest(m, c, Selector::joint);
  write_report(r, dir / "joint.csv");
  const std::string csv = slurp(dir / "joint.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kReportHeader);
  EXPECT_NE(csv.find(m.entries[0].id + ",joint,0,,"), std::string::npos);
  const RunReport back = read_report(dir / "joint.csv");
  EXPECT_EQ(read_report(aggregates_path(dir / "joint.csv")).rows.size(), back.rows.size());
  ASSERT_EQ(back.rows.size(), r.rows.size());
  for (std::size_t k = 0; k < r.rows.size(); ++k) {
    EXPECT_EQ(back.rows[k].score, r.rows[k].score);  // shortest round-trip formatting
    EXPECT_EQ(back.rows[k].selected_r, r.rows[k].selected_r);
    EXPECT_EQ(back.rows[k].si_sdri_db, r.rows[k].si_sdri_db);
    EXPECT_EQ(back.rows[k].quality, r.rows[k].quality);
  }
  EXPECT_EQ(back.selector, "joint");
  EXPECT_EQ(back.extractor, "spectral_subtraction");
  EXPECT_EQ(back.steps, 2);
}

TEST(Report, MissingIntrusiveMetricsStayEmpty) {
  RunReport r;
  r.selector = "quality";
  r.extractor = "identity";
  r.steps = 1;
  r.rows.push_back({"a", "quality", 0, std::nullopt, 3.0, std::nullopt, std::nullopt, 0.5, 3.0});
  r.rows.push_back({"a", "quality", 1, 1.0, 3.0, std::nullopt, std::nullopt, 0.5, 3.0});
  r.aggregates = aggregate_rows(r.rows, 1);
  EXPECT_NE(report_csv(r).find("a,quality,0,,3,,,0.5,3\n"), std::string::npos);
  EXPECT_TRUE(std::isnan(r.aggregates[0].si_sdri_db));
  EXPECT_TRUE(report_json(r)["aggregates"][0]["si_sdri_db"].is_null());
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(-2.5e-300), "-2.5e-300");
}

TEST(Report, SummaryAndMergeChecks) {
  TempDir dir("report_merge");
  const Manifest m = synth(dir.path(), 2, 8);
  const RunConfig c2 = config_from(R"({"steps":2,"candidates":3,"extractor":{"kind":"spectral_subtraction"}})");
  const RunConfig c3 = config_from(R"({"steps":3,"candidates":3,"extractor":{"kind":"spectral_subtraction"}})");
  write_report(run_manifest(m, c2, Selector::quality), dir / "q.csv");
  write_report(run_manifest(m, c2, Selector::spksim), dir / "s.csv");
  write_report(run_manifest(m, c3, Selector::joint), dir / "j3.csv");

  const ReportSummary single = cmd_report({dir / "q.csv"});
  const RunReport q = read_report(dir / "q.csv");
  std::istringstream lines(single.csv);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "selector,step,si_sdri_db,quality,spk_sim");
  for (const auto& a : q.aggregates) {
    ASSERT_TRUE(std::getline(lines, line));
    const std::string label = a.step == 0 ? "baseline" : "quality";
    EXPECT_EQ(line, label + "," + std::to_string(a.step) + "," + format_number(a.si_sdri_db) + "," +
                        format_number(a.quality) + "," + format_number(a.spk_sim));
  }
  const ReportSummary both = cmd_report({dir / "q.csv", dir / "s.csv"});
  EXPECT_EQ(std::count(both.csv.begin(), both.csv.end(), '\n'), 1 + 1 + 2 + 2);
  EXPECT_NE(both.text.find("baseline"), std::string::npos);
  EXPECT_NE(both.text.find("spksim"), std::string::npos);

  EXPECT_THROW(cmd_report({dir / "q.csv", dir / "j3.csv"}), MergeError);
  EXPECT_THROW(cmd_report({}), MergeError);

  // Recomputed means must match the stored aggregates.
  auto json = nlohmann::json::parse(slurp(aggregates_path(dir / "s.csv")));
  json["aggregates"][1]["quality"] = json["aggregates"][1]["quality"].get<double>() + 1e-6;
  spit(aggregates_path(dir / "s.csv"), json.dump());
  EXPECT_THROW(cmd_report({dir / "s.csv"}), MergeError);
}

TEST(Run, ReportsAreByteIdenticalAcrossRunsAndThreads) {
  TempDir dir("run_determinism");
  synth(dir.path(), 2, 9);
  spit(dir / "config.json", R"({"steps":2,"candidates":6,"seed":3,"extractor":{"kind":"spectral_subtraction"}})");
  RunOptions o{dir / "manifest.jsonl", dir / "config.json", "joint", dir / "a.csv", 1};
  cmd_run(o);
  o.report_path = dir / "b.csv";
  o.threads = 4;
  cmd_run(o);
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  EXPECT_EQ(slurp(dir / "a.csv.json"), slurp(dir / "b.csv.json"));
}

TEST(Analyze, LipschitzOfTheIdentityExtractor) {
  TempDir dir("analyze_lip");
  synth(dir.path(), 2, 10);
  spit(dir / "config.json", R"({"extractor":{"kind":"identity"}})");
  AnalyzeOptions o;
  o.manifest_path = dir / "manifest.jsonl";
  o.config_path = dir / "config.json";
  o.mode = "lipschitz";
  o.out_path = dir / "lip.json";
  o.grid_size = 21;
  cmd_analyze(o);
  const auto j = nlohmann::json::parse(slurp(o.out_path));
  EXPECT_EQ(j["mode"], "lipschitz");
  ASSERT_EQ(j["entries"].size(), 2u);
  for (const auto& e : j["entries"]) EXPECT_NEAR(e["L_f"].get<double>(), 1.0, 1e-9);
}

TEST(Analyze, DeterministicBoundOnOracleRuns) {
  TempDir dir("analyze_det");
  synth(dir.path(), 2, 11, 0.0);
  spit(dir / "config.json", R"({"steps":2,"candidates":8,"extractor":{"kind":"leaky_linear"}})");
  AnalyzeOptions o;
  o.manifest_path = dir / "manifest.jsonl";
  o.config_path = dir / "config.json";
  o.mode = "det_bound";
  o.out_path = dir / "det.json";
  const auto j = cmd_analyze(o);
  EXPECT_EQ(j["selector"], "oracle");
  EXPECT_LE(j["max_ratio"].get<double>(), 1.0 + 1e-6);
  EXPECT_EQ(j["entries"][0]["records"].size(), 2u * 7u);
}

TEST(Analyze, VarianceBoundAndUnknownMode) {
  TempDir dir("analyze_var");
  synth(dir.path(), 1, 12, 0.0);
  spit(dir / "config.json", R"({"steps":1,"candidates":8,"extractor":{"kind":"leaky_linear"}})");
  AnalyzeOptions o;
  o.manifest_path = dir / "manifest.jsonl";
  o.config_path = dir / "config.json";
  o.mode = "var_bound";
  o.out_path = dir / "var.json";
  o.trials = 200;
  const auto j = cmd_analyze(o);
  EXPECT_LE(j["max_variance_ratio"].get<double>(), 1.2);
  EXPECT_GT(j["entries"][0]["variance_rhs"].get<double>(), 0.0);
  o.mode = "spectral_norm";
  EXPECT_THROW(cmd_analyze(o), ConfigurationError);
}
