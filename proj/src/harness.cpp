#include "tse/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "tse/metrics.hpp"
#include "tse/wav_io.hpp"

namespace tse::harness {
namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigurationError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << text;
  os.flush();
  if (!os) throw IoError("write failed for " + path.string());
}

void reject_unknown_keys(const json& object, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!object.is_object()) throw ConfigurationError(where + " must be a JSON object");
  for (const auto& [key, value] : object.items())
    if (!allowed.contains(key)) throw ConfigurationError(where + ": unknown key \"" + key + "\"");
}

template <typename T>
T get_as(const json& object, const std::string& key, const std::string& where) {
  try {
    return object.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigurationError(where + "." + key + ": " + e.what());
  }
}

WorkerSpec parse_worker(const json& value, const std::string& where) {
  WorkerSpec spec;
  if (value.is_array()) {
    spec.command = get_as<std::vector<std::string>>(json{{"command", value}}, "command", where);
  } else {
    reject_unknown_keys(value, {"command", "timeout"}, where);
    spec.command = get_as<std::vector<std::string>>(value, "command", where);
    if (value.contains("timeout"))
      spec.timeout = std::chrono::milliseconds(
          static_cast<long long>(std::llround(1000.0 * get_as<double>(value, "timeout", where))));
  }
  if (spec.command.empty()) throw ConfigurationError(where + ": empty worker command");
  if (spec.timeout.count() <= 0) throw ConfigurationError(where + ": timeout must be positive");
  return spec;
}

ExtractorKind parse_extractor_kind(const std::string& name) {
  if (name == "identity") return ExtractorKind::identity;
  if (name == "leaky_linear") return ExtractorKind::leaky_linear;
  if (name == "spectral_subtraction") return ExtractorKind::spectral_subtraction;
  if (name == "external") return ExtractorKind::external;
  throw ConfigurationError("unknown extractor kind \"" + name + "\"");
}

fs::path resolve(const fs::path& base, const std::string& value) {
  const fs::path p(value);
  return p.is_absolute() ? p : base / p;
}

std::uint64_t scene_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finaliser over (seed, index).
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

json nullable(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double from_nullable(const json& v) { return v.is_null() ? kNaN : v.get<double>(); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& text, const std::string& where) {
  if (text == "nan") return kNaN;
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw MergeError(where + ": bad number \"" + text + "\"");
  return value;
}

std::optional<double> parse_optional(const std::string& text, const std::string& where) {
  if (text.empty()) return std::nullopt;
  return parse_double(text, where);
}

bool close_or_both_nan(double a, double b, double tol) {
  if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
  return std::abs(a - b) <= tol;
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

Manifest load_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  Manifest manifest;
  std::set<std::string> ids;
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(number);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigurationError(where + ": invalid JSON: " + e.what());
    }
    reject_unknown_keys(obj, {"id", "mixture_path", "enrollment_path", "target_path", "interference_path"},
                        where);
    ManifestEntry entry;
    entry.id = get_as<std::string>(obj, "id", where);
    if (entry.id.empty() || entry.id.find_first_of(",\"\n\r") != std::string::npos)
      throw ConfigurationError(where + ": id must be non-empty and free of commas, quotes and newlines");
    if (!ids.insert(entry.id).second) throw ConfigurationError(where + ": duplicate id " + entry.id);
    entry.mixture_path = resolve(base, get_as<std::string>(obj, "mixture_path", where));
    entry.enrollment_path = resolve(base, get_as<std::string>(obj, "enrollment_path", where));
    if (obj.contains("target_path") && !obj["target_path"].is_null())
      entry.target_path = resolve(base, get_as<std::string>(obj, "target_path", where));
    if (obj.contains("interference_path") && !obj["interference_path"].is_null())
      entry.interference_path = resolve(base, get_as<std::string>(obj, "interference_path", where));
    for (const auto* p : {&entry.mixture_path, &entry.enrollment_path})
      if (!fs::exists(*p)) throw ConfigurationError(where + ": missing file " + p->string());
    for (const auto* p : {&entry.target_path, &entry.interference_path})
      if (*p && !fs::exists(**p)) throw ConfigurationError(where + ": missing file " + (*p)->string());
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  const fs::path base = path.parent_path();
  std::string text;
  auto rel = [&](const fs::path& p) { return p.lexically_proximate(base).generic_string(); };
  for (const auto& e : manifest.entries) {
    // Ordered keys keep the bytes stable.
    nlohmann::ordered_json obj;
    obj["id"] = e.id;
    obj["mixture_path"] = rel(e.mixture_path);
    obj["enrollment_path"] = rel(e.enrollment_path);
    if (e.target_path) obj["target_path"] = rel(*e.target_path);
    if (e.interference_path) obj["interference_path"] = rel(*e.interference_path);
    text += obj.dump() + "\n";
  }
  write_text(path, text);
}

MixtureScene load_scene(const ManifestEntry& entry) {
  std::optional<Waveform> target;
  std::optional<Waveform> interference;
  if (entry.target_path) target = load_wav<double>(*entry.target_path);
  if (entry.interference_path) interference = load_wav<double>(*entry.interference_path);
  return MixtureScene::make(load_wav<double>(entry.mixture_path), load_wav<double>(entry.enrollment_path),
                            std::move(target), std::move(interference));
}

// ---------------------------------------------------------------------------
// Configuration

RunConfig parse_config(const json& j) {
  const std::string where = "config";
  reject_unknown_keys(j, {"steps", "candidates", "seed", "include_zero_endpoint", "lambda", "alpha",
                          "extractor", "scorer_workers", "early_stop", "tolerance"},
                      where);
  RunConfig config;
  if (j.contains("steps")) config.search.steps = get_as<int>(j, "steps", where);
  if (j.contains("candidates")) config.search.candidates = get_as<int>(j, "candidates", where);
  if (j.contains("seed")) config.search.seed = get_as<std::uint64_t>(j, "seed", where);
  if (j.contains("include_zero_endpoint"))
    config.search.include_zero_endpoint = get_as<bool>(j, "include_zero_endpoint", where);
  if (j.contains("early_stop")) config.search.early_stop = get_as<bool>(j, "early_stop", where);
  if (j.contains("tolerance")) config.search.tolerance = get_as<double>(j, "tolerance", where);
  if (j.contains("lambda")) config.lambda = get_as<double>(j, "lambda", where);
  if (j.contains("alpha")) config.alpha = get_as<double>(j, "alpha", where);
  config.search.validate();
  if (!(config.lambda > 0) || !(config.alpha > 0))
    throw ConfigurationError("config: lambda and alpha must be positive");

  if (j.contains("extractor")) {
    const json& ex = j["extractor"];
    reject_unknown_keys(ex, {"kind", "params"}, "config.extractor");
    config.extractor.kind = parse_extractor_kind(get_as<std::string>(ex, "kind", "config.extractor"));
    const json params = ex.contains("params") ? ex["params"] : json::object();
    const std::string pw = "config.extractor.params";
    switch (config.extractor.kind) {
      case ExtractorKind::identity:
        reject_unknown_keys(params, {}, pw);
        break;
      case ExtractorKind::leaky_linear:
        reject_unknown_keys(params, {"kappa"}, pw);
        if (params.contains("kappa")) config.extractor.kappa = get_as<double>(params, "kappa", pw);
        if (!(config.extractor.kappa > 0 && config.extractor.kappa <= 1))
          throw ConfigurationError(pw + ".kappa must lie in (0, 1]");
        break;
      case ExtractorKind::spectral_subtraction:
        reject_unknown_keys(params, {"floor"}, pw);
        if (params.contains("floor")) config.extractor.floor = get_as<double>(params, "floor", pw);
        if (!(config.extractor.floor >= 0 && config.extractor.floor < 1))
          throw ConfigurationError(pw + ".floor must lie in [0, 1)");
        break;
      case ExtractorKind::external:
        config.extractor.worker = parse_worker(params, pw);
        break;
    }
  }
  if (j.contains("scorer_workers")) {
    const json& sw = j["scorer_workers"];
    reject_unknown_keys(sw, {"quality", "spksim", "external"}, "config.scorer_workers");
    if (sw.contains("quality")) config.quality_worker = parse_worker(sw["quality"], "config.scorer_workers.quality");
    if (sw.contains("spksim")) config.spksim_worker = parse_worker(sw["spksim"], "config.scorer_workers.spksim");
    if (sw.contains("external"))
      config.external_worker = parse_worker(sw["external"], "config.scorer_workers.external");
  }
  return config;
}

RunConfig load_config(const fs::path& path) { return parse_config(read_json_file(path)); }

Selector parse_selector(const std::string& name) {
  if (name == "oracle") return Selector::oracle;
  if (name == "quality") return Selector::quality;
  if (name == "spksim") return Selector::spksim;
  if (name == "joint") return Selector::joint;
  if (name == "external") return Selector::external;
  throw ConfigurationError("unknown selector \"" + name + "\" (oracle, quality, spksim, joint, external)");
}

std::string to_string(Selector selector) {
  switch (selector) {
    case Selector::oracle: return "oracle";
    case Selector::quality: return "quality";
    case Selector::spksim: return "spksim";
    case Selector::joint: return "joint";
    case Selector::external: return "external";
  }
  return "unknown";
}

Backends::Backends(const RunConfig& config, Selector selector) : spec_(config.extractor) {
  switch (spec_.kind) {
    case ExtractorKind::identity: shared_extractor_ = make_identity(); break;
    case ExtractorKind::spectral_subtraction:
      shared_extractor_ = make_spectral_subtraction(spec_.floor);
      break;
    case ExtractorKind::external:
      shared_extractor_ = make_external(spec_.worker->command, spec_.worker->timeout);
      break;
    case ExtractorKind::leaky_linear: break;  // built per scene
  }
  quality_ = config.quality_worker
                 ? make_external_scorer(config.quality_worker->command, config.quality_worker->timeout)
                 : make_quality_scorer();
  similarity_ = config.spksim_worker
                    ? make_external_scorer(config.spksim_worker->command, config.spksim_worker->timeout)
                    : make_spk_sim_scorer();
  switch (selector) {
    case Selector::oracle: selector_ = make_oracle_scorer(); break;
    case Selector::quality: selector_ = quality_; break;
    case Selector::spksim: selector_ = similarity_; break;
    case Selector::joint: selector_ = make_joint_scorer(quality_, similarity_, config.lambda, config.alpha); break;
    case Selector::external:
      if (!config.external_worker)
        throw ConfigurationError("selector \"external\" needs scorer_workers.external in the config");
      selector_ = make_external_scorer(config.external_worker->command, config.external_worker->timeout);
      break;
  }
}

ExtractorHandle Backends::extractor_for(const MixtureScene& scene) const {
  if (spec_.kind == ExtractorKind::leaky_linear) return make_leaky_linear(scene, spec_.kappa);
  return shared_extractor_;
}

// ---------------------------------------------------------------------------
// synth

Manifest cmd_synth(const SynthOptions& options) {
  if (options.num_scenes < 0) throw ConfigurationError("synth: num_scenes must be non-negative");
  if (!(options.duration > 0)) throw ConfigurationError("synth: duration must be positive");
  if (options.sample_rate <= 0) throw ConfigurationError("synth: sample rate must be positive");
  if (!(options.snr_std_db >= 0)) throw ConfigurationError("synth: snr std must be non-negative");
  std::error_code ec;
  fs::create_directories(options.out_dir, ec);
  if (ec) throw IoError("cannot create " + options.out_dir.string() + ": " + ec.message());

  Manifest manifest;
  for (int j = 0; j < options.num_scenes; ++j) {
    const auto index = static_cast<std::uint64_t>(j);
    const double snr = draw_snr_db(options.seed, index, options.snr_mean_db, options.snr_std_db);
    const MixtureScene scene =
        synthesize_scene(scene_seed(options.seed, index), options.duration, options.sample_rate, snr);
    std::ostringstream name;
    name << "scene_" << std::setw(5) << std::setfill('0') << j;
    ManifestEntry entry;
    entry.id = name.str();
    entry.mixture_path = options.out_dir / (entry.id + "_mixture.wav");
    entry.enrollment_path = options.out_dir / (entry.id + "_enrollment.wav");
    entry.target_path = options.out_dir / (entry.id + "_target.wav");
    entry.interference_path = options.out_dir / (entry.id + "_interference.wav");
    save_wav(scene.mixture, entry.mixture_path);
    save_wav(scene.enrollment, entry.enrollment_path);
    save_wav(*scene.target, *entry.target_path);
    save_wav(*scene.interference, *entry.interference_path);
    manifest.entries.push_back(std::move(entry));
  }
  write_manifest(manifest, options.out_dir / "manifest.jsonl");
  return manifest;
}

// ---------------------------------------------------------------------------
// run

RunReport run_manifest(const Manifest& manifest, const RunConfig& config, Selector selector, int threads) {
  for (const auto& entry : manifest.entries) {
    if (selector == Selector::oracle && !entry.target_path)
      throw ConfigurationError("selector \"oracle\" needs target_path on every entry; " + entry.id +
                               " has none");
    if (config.extractor.kind == ExtractorKind::leaky_linear &&
        (!entry.target_path || !entry.interference_path))
      throw ConfigurationError("extractor \"leaky_linear\" needs target_path and interference_path; " +
                               entry.id + " lacks one");
  }
  SearchConfig search = config.search;
  search.threads = threads;
  search.validate();
  const Backends backends(config, selector);

  RunReport report;
  report.selector = to_string(selector);
  report.extractor = tse::to_string(config.extractor.kind);
  report.steps = search.steps;

  for (const auto& entry : manifest.entries) {
    try {
      const MixtureScene scene = load_scene(entry);
      const ExtractorHandle extractor = backends.extractor_for(scene);
      const Trajectory trajectory =
          run_search(*extractor, *backends.selector_scorer(), scene.mixture, scene.enrollment, search, &scene);

      const ConditionedScorer quality = backends.quality_scorer()->condition(scene.enrollment, &scene);
      const ConditionedScorer similarity = backends.similarity_scorer()->condition(scene.enrollment, &scene);
      std::vector<ReportRow> rows;
      for (int t = 0; t <= search.steps; ++t) {
        ReportRow row;
        row.id = entry.id;
        row.selector = report.selector;
        row.step = t;
        const Waveform* estimate = &trajectory.initial;
        if (t == 0) {
          row.score = trajectory.initial_score;
        } else if (static_cast<std::size_t>(t) <= trajectory.steps.size()) {
          const StepRecord& rec = trajectory.steps[static_cast<std::size_t>(t) - 1];
          row.selected_r = rec.selected_r;
          row.score = rec.selected_score;
          estimate = &rec.selected_estimate;
        } else {
          // Early stop: the estimate stays at the last selection, which is
          // what re-selecting the r = 1 fallback would keep producing.
          const ReportRow& last = rows.back();
          row.selected_r = 1.0;
          row.score = last.score;
          estimate = &trajectory.final_estimate();
        }
        if (scene.target) {
          row.si_sdr_db = si_sdr(*estimate, *scene.target);
          row.si_sdri_db = si_sdri(*estimate, scene.mixture, *scene.target);
        }
        row.spk_sim = similarity(*estimate);
        row.quality = quality(*estimate);
        rows.push_back(std::move(row));
      }
      report.rows.insert(report.rows.end(), rows.begin(), rows.end());
    } catch (const std::exception& e) {
      std::string message = e.what();
      try {
        std::rethrow_if_nested(e);
      } catch (const std::exception& inner) {
        message += " (" + std::string(inner.what()) + ")";
      }
      report.failures.push_back({entry.id, message});
    }
  }
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return std::tie(a.id, a.selector, a.step) < std::tie(b.id, b.selector, b.step);
  });
  report.aggregates = aggregate_rows(report.rows, report.steps);
  return report;
}

RunReport cmd_run(const RunOptions& options) {
  const RunConfig config = load_config(options.config_path);
  const Selector selector = parse_selector(options.selector);
  const Manifest manifest = load_manifest(options.manifest_path);
  RunReport report = run_manifest(manifest, config, selector, options.threads);
  write_report(report, options.report_path);
  return report;
}

std::vector<StepAggregate> aggregate_rows(const std::vector<ReportRow>& rows, int steps) {
  struct Acc {
    int count = 0;
    double score = 0, spk = 0, quality = 0, sdr = 0, sdri = 0;
    int sdr_n = 0, sdri_n = 0;
  };
  std::vector<Acc> acc(static_cast<std::size_t>(steps) + 1);
  for (const auto& row : rows) {
    if (row.step < 0 || row.step > steps) throw MergeError("row step outside 0.." + std::to_string(steps));
    Acc& a = acc[static_cast<std::size_t>(row.step)];
    ++a.count;
    a.score += row.score;
    a.spk += row.spk_sim;
    a.quality += row.quality;
    if (row.si_sdr_db) {
      a.sdr += *row.si_sdr_db;
      ++a.sdr_n;
    }
    if (row.si_sdri_db) {
      a.sdri += *row.si_sdri_db;
      ++a.sdri_n;
    }
  }
  std::vector<StepAggregate> out;
  for (int t = 0; t <= steps; ++t) {
    const Acc& a = acc[static_cast<std::size_t>(t)];
    auto mean = [](double sum, int n) { return n > 0 ? sum / n : kNaN; };
    out.push_back({t, a.count, mean(a.score, a.count), mean(a.sdr, a.sdr_n), mean(a.sdri, a.sdri_n),
                   mean(a.spk, a.count), mean(a.quality, a.count)});
  }
  return out;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::string report_csv(const RunReport& report) {
  std::string out = std::string(kReportHeader) + "\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  for (const auto& r : report.rows) {
    out += r.id + "," + r.selector + "," + std::to_string(r.step) + "," + opt(r.selected_r) + "," +
           format_number(r.score) + "," + opt(r.si_sdr_db) + "," + opt(r.si_sdri_db) + "," +
           format_number(r.spk_sim) + "," + format_number(r.quality) + "\n";
  }
  return out;
}

json report_json(const RunReport& report) {
  nlohmann::ordered_json j;
  j["selector"] = report.selector;
  j["extractor"] = report.extractor;
  j["steps"] = report.steps;
  j["rows"] = report.rows.size();
  j["failures"] = nlohmann::ordered_json::array();
  for (const auto& f : report.failures) j["failures"].push_back({{"id", f.id}, {"message", f.message}});
  j["aggregates"] = nlohmann::ordered_json::array();
  for (const auto& a : report.aggregates) {
    nlohmann::ordered_json row;
    row["step"] = a.step;
    row["count"] = a.count;
    row["score"] = nullable(a.score);
    row["si_sdr_db"] = nullable(a.si_sdr_db);
    row["si_sdri_db"] = nullable(a.si_sdri_db);
    row["spk_sim"] = nullable(a.spk_sim);
    row["quality"] = nullable(a.quality);
    j["aggregates"].push_back(std::move(row));
  }
  return json::parse(j.dump());
}

fs::path aggregates_path(const fs::path& csv_path) {
  fs::path p = csv_path;
  p += ".json";
  return p;
}

void write_report(const RunReport& report, const fs::path& csv_path) {
  write_text(csv_path, report_csv(report));
  // Stable key order for byte-identical reruns.
  nlohmann::ordered_json j;
  const json plain = report_json(report);
  for (const char* key : {"selector", "extractor", "steps", "rows", "failures", "aggregates"})
    j[key] = plain[key];
  write_text(aggregates_path(csv_path), j.dump(2) + "\n");
}

RunReport read_report(const fs::path& path) {
  fs::path csv = path;
  if (path.extension() == ".json") csv.replace_extension();
  const json j = read_json_file(aggregates_path(csv));
  RunReport report;
  try {
    report.selector = j.at("selector").get<std::string>();
    report.extractor = j.at("extractor").get<std::string>();
    report.steps = j.at("steps").get<int>();
    for (const auto& f : j.at("failures"))
      report.failures.push_back({f.at("id").get<std::string>(), f.at("message").get<std::string>()});
    for (const auto& a : j.at("aggregates"))
      report.aggregates.push_back({a.at("step").get<int>(), a.at("count").get<int>(),
                                   from_nullable(a.at("score")), from_nullable(a.at("si_sdr_db")),
                                   from_nullable(a.at("si_sdri_db")), from_nullable(a.at("spk_sim")),
                                   from_nullable(a.at("quality"))});
  } catch (const json::exception& e) {
    throw MergeError(path.string() + ": malformed aggregates: " + e.what());
  }

  std::ifstream is(csv);
  if (!is) throw IoError("cannot open " + csv.string());
  std::string line;
  if (!std::getline(is, line) || line != kReportHeader)
    throw MergeError(csv.string() + ": unexpected CSV header");
  int number = 1;
  while (std::getline(is, line)) {
    ++number;
    if (line.empty()) continue;
    const std::string where = csv.string() + ":" + std::to_string(number);
    const auto f = split_csv_line(line);
    if (f.size() != 9) throw MergeError(where + ": expected 9 fields");
    ReportRow row;
    row.id = f[0];
    row.selector = f[1];
    row.step = static_cast<int>(parse_double(f[2], where));
    row.selected_r = parse_optional(f[3], where);
    row.score = parse_double(f[4], where);
    row.si_sdr_db = parse_optional(f[5], where);
    row.si_sdri_db = parse_optional(f[6], where);
    row.spk_sim = parse_double(f[7], where);
    row.quality = parse_double(f[8], where);
    report.rows.push_back(std::move(row));
  }
  return report;
}

// ---------------------------------------------------------------------------
// report

ReportSummary summarize_reports(const std::vector<RunReport>& reports) {
  if (reports.empty()) throw MergeError("no reports given");
  const int steps = reports.front().steps;
  for (const auto& r : reports) {
    if (r.steps != steps)
      throw MergeError("reports disagree on step count (" + std::to_string(steps) + " vs " +
                       std::to_string(r.steps) + ")");
    const auto recomputed = aggregate_rows(r.rows, r.steps);
    if (recomputed.size() != r.aggregates.size())
      throw MergeError("report for selector " + r.selector + " has inconsistent aggregates");
    for (std::size_t t = 0; t < recomputed.size(); ++t) {
      const auto& a = recomputed[t];
      const auto& b = r.aggregates[t];
      const bool ok = a.count == b.count && close_or_both_nan(a.score, b.score, 1e-9) &&
                      close_or_both_nan(a.si_sdri_db, b.si_sdri_db, 1e-9) &&
                      close_or_both_nan(a.si_sdr_db, b.si_sdr_db, 1e-9) &&
                      close_or_both_nan(a.spk_sim, b.spk_sim, 1e-9) &&
                      close_or_both_nan(a.quality, b.quality, 1e-9);
      if (!ok)
        throw MergeError("report for selector " + r.selector + ": step " + std::to_string(t) +
                         " aggregates do not match the raw rows");
    }
  }

  std::ostringstream text;
  std::string csv = "selector,step,si_sdri_db,quality,spk_sim\n";
  text << std::left << std::setw(12) << "selector" << std::right << std::setw(6) << "step"
       << std::setw(12) << "SI-SDRi" << std::setw(12) << "quality" << std::setw(12) << "SpkSim" << "\n";
  auto emit = [&](const std::string& label, const StepAggregate& a) {
    auto cell = [](double v) {
      std::ostringstream os;
      if (std::isnan(v)) os << "-";
      else os << std::fixed << std::setprecision(3) << v;
      return os.str();
    };
    text << std::left << std::setw(12) << label << std::right << std::setw(6) << a.step << std::setw(12)
         << cell(a.si_sdri_db) << std::setw(12) << cell(a.quality) << std::setw(12) << cell(a.spk_sim)
         << "\n";
    csv += label + "," + std::to_string(a.step) + "," + format_number(a.si_sdri_db) + "," +
           format_number(a.quality) + "," + format_number(a.spk_sim) + "\n";
  };
  emit("baseline", reports.front().aggregates.front());
  for (const auto& r : reports)
    for (std::size_t t = 1; t < r.aggregates.size(); ++t) emit(r.selector, r.aggregates[t]);
  return {text.str(), csv};
}

ReportSummary cmd_report(const std::vector<fs::path>& report_paths) {
  std::vector<RunReport> reports;
  for (const auto& p : report_paths) reports.push_back(read_report(p));
  return summarize_reports(reports);
}

// ---------------------------------------------------------------------------
// analyze

AnalyzeMode parse_analyze_mode(const std::string& name) {
  if (name == "lipschitz") return AnalyzeMode::lipschitz;
  if (name == "det_bound") return AnalyzeMode::det_bound;
  if (name == "var_bound") return AnalyzeMode::var_bound;
  throw ConfigurationError("unknown analyze mode \"" + name + "\" (lipschitz, det_bound, var_bound)");
}

json analyze_manifest(const Manifest& manifest, const RunConfig& config, AnalyzeMode mode,
                      Selector selector, const AnalyzeOptions& options) {
  for (const auto& entry : manifest.entries) {
    if (selector == Selector::oracle && !entry.target_path)
      throw ConfigurationError("selector \"oracle\" needs target_path on every entry");
    if (config.extractor.kind == ExtractorKind::leaky_linear &&
        (!entry.target_path || !entry.interference_path))
      throw ConfigurationError("extractor \"leaky_linear\" needs target_path and interference_path");
  }
  const Backends backends(config, selector);
  const Scorer& scorer = *backends.selector_scorer();

  json entries = json::array();
  double worst = kNaN;
  for (const auto& entry : manifest.entries) {
    const MixtureScene scene = load_scene(entry);
    const ExtractorHandle extractor = backends.extractor_for(scene);
    json out{{"id", entry.id}};
    switch (mode) {
      case AnalyzeMode::lipschitz: {
        // Probe the mixture-to-estimate segment; when the extractor leaves
        // the mixture unchanged, fall back to the target, then to silence.
        Waveform end = one_step(*extractor, scene.mixture, scene.enrollment);
        std::string segment = "mixture->one_step_estimate";
        if (distance(scene.mixture, end) < 1e-12) {
          if (scene.target) {
            end = *scene.target;
            segment = "mixture->target";
          } else {
            end = Waveform(Eigen::VectorXd::Zero(scene.mixture.size()), scene.mixture.sample_rate());
            segment = "mixture->silence";
          }
        }
        const LipschitzEstimate est = estimate_lipschitz(*extractor, scorer, scene.mixture, end,
                                                         scene.enrollment, options.grid_size, &scene);
        out.update(to_json(est));
        out["segment"] = segment;
        break;
      }
      case AnalyzeMode::det_bound: {
        const Trajectory trajectory = run_search(*extractor, scorer, scene, config.search);
        const BoundCheckReport report = analyze_deterministic_bound(
            *extractor, scorer, trajectory, scene.mixture, scene.enrollment, options.grid_size, &scene);
        out.update(to_json(report));
        if (report.has_pairs() && (std::isnan(worst) || report.max_ratio > worst)) worst = report.max_ratio;
        break;
      }
      case AnalyzeMode::var_bound: {
        VarianceBoundOptions vb;
        vb.epsilon_r = options.epsilon_r;
        vb.trials = options.trials;
        vb.grid_size = options.grid_size;
        vb.seed = config.search.seed;
        const BoundCheckReport report = check_variance_bound(*extractor, scorer, scene, config.search, vb);
        out.update(to_json(report));
        const double ratio = report.variance_rhs > 0 ? report.variance_lhs / report.variance_rhs
                                                     : (report.variance_lhs == 0 ? 0.0 : kNaN);
        out["variance_ratio"] = nullable(ratio);
        if (!std::isnan(ratio) && (std::isnan(worst) || ratio > worst)) worst = ratio;
        break;
      }
    }
    entries.push_back(std::move(out));
  }

  json result{{"mode", options.mode.empty() ? std::string() : options.mode},
              {"selector", to_string(selector)},
              {"extractor", tse::to_string(config.extractor.kind)},
              {"grid_size", options.grid_size},
              {"entries", std::move(entries)}};
  if (mode == AnalyzeMode::det_bound) result["max_ratio"] = nullable(worst);
  if (mode == AnalyzeMode::var_bound) {
    result["epsilon_r"] = options.epsilon_r;
    result["trials"] = options.trials;
    result["max_variance_ratio"] = nullable(worst);
  }
  return result;
}

json cmd_analyze(const AnalyzeOptions& options) {
  const AnalyzeMode mode = parse_analyze_mode(options.mode);
  const RunConfig config = load_config(options.config_path);
  const Manifest manifest = load_manifest(options.manifest_path);
  std::string selector_name = options.selector;
  if (selector_name.empty()) {
    const bool all_targets = std::all_of(manifest.entries.begin(), manifest.entries.end(),
                                         [](const ManifestEntry& e) { return e.target_path.has_value(); });
    selector_name = all_targets ? "oracle" : "quality";
  }
  json result = analyze_manifest(manifest, config, mode, parse_selector(selector_name), options);
  result["mode"] = options.mode;
  write_text(options.out_path, result.dump(2) + "\n");
  return result;
}

}  // namespace tse::harness
