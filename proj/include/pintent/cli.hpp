#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pintent/pintent.hpp"

namespace pintent::cli {

inline constexpr std::string_view kVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kInternal = 4 };

/// Validation and malformed input map to 2, unusable data to 3.
inline int exit_code_for(Errc c) {
  switch (c) {
    case Errc::InvalidConfig:
    case Errc::MalformedLine:
    case Errc::BadTimestamp:
    case Errc::UnknownEnum:
    case Errc::VersionMismatch:
      return kUsage;
    case Errc::UnsortedInput:
    case Errc::TooFewSessions:
    case Errc::SingleClassTraining:
    case Errc::ShortSession:
    case Errc::MissingJourney:
    case Errc::StepOutOfRange:
    case Errc::DegenerateStd:
    case Errc::NonFiniteInput:
    case Errc::Io:
      return kData;
    default:
      return kInternal;
  }
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw Error(Errc::Io, "cannot open " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline std::string file_hash(const std::filesystem::path& p) { return hex64(fnv1a(read_file(p))); }

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error(Errc::Io, "cannot write " + p.string());
  return os;
}

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;  // key=value
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  std::string out;
  std::string input;
};

/// Config file (optional) plus `--set key=value` overrides; flags win over both.
inline KeyValueConfig load_config(const CommonOptions& o) {
  KeyValueConfig kv = o.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(o.config);
  for (const auto& ov : o.overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos) throw Error(Errc::InvalidConfig, "--set expects key=value, got '" + ov + "'");
    kv.set(KeyValueConfig::trim(ov.substr(0, eq)), KeyValueConfig::trim(ov.substr(eq + 1)));
  }
  if (o.seed_set) kv.set("seed", std::to_string(o.seed));
  return kv;
}

inline void reject_unused(const KeyValueConfig& kv) {
  const auto unused = kv.unused_keys();
  if (!unused.empty()) throw Error(Errc::InvalidConfig, "unknown key '" + unused.front() + "'");
}

class Manifest {
 public:
  explicit Manifest(std::string subcommand) : started_(Clock::now()) { j_["subcommand"] = std::move(subcommand); }

  void config(nlohmann::json c) { j_["config"] = std::move(c); }
  void seed(std::uint64_t s) { j_["seed"] = s; }
  void input(const std::filesystem::path& p) {
    j_["inputs"].push_back({{"path", p.string()}, {"hash", file_hash(p)}});
    if (!j_.contains("corpus_hash")) j_["corpus_hash"] = j_["inputs"].back()["hash"];
  }
  void output(const std::filesystem::path& p) { j_["outputs"].push_back(p.filename().string()); }
  void stat(const std::string& key, nlohmann::json v) { j_["stats"][key] = std::move(v); }
  void phase(const std::string& name) {
    const auto now = Clock::now();
    j_["timings_ms"][name] = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
  }

  /// Written last: its presence marks a completed run.
  void write(const std::filesystem::path& dir) {
    j_["versions"] = {{"pintent", kVersion},
                      {"model_format", ml::kFormatVersion},
                      {"matrix_cache", std::string(detail::kMatrixMagic, sizeof detail::kMatrixMagic)}};
    j_["timings_ms"]["total"] = std::chrono::duration<double, std::milli>(Clock::now() - started_).count();
    auto os = open_output(dir / "manifest.json");
    os << j_.dump(2) << '\n';
  }

 private:
  using Clock = std::chrono::steady_clock;
  nlohmann::json j_;
  Clock::time_point started_;
  Clock::time_point last_ = Clock::now();
};

inline std::vector<Session> load_sessions(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::Io, "cannot open " + path);
  return read_sessions_jsonl(is);
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline int cmd_generate(const CommonOptions& o, bool gzip) {
  const auto kv = load_config(o);
  GenConfig cfg = GenConfig::from(kv);
  // Optional planted signals, applied on top of the configured mixes.
  std::vector<SignalKind> signals;
  double strength = 0.8;
  kv.read_list("signals", signals);
  kv.read("signal_strength", strength);
  for (SignalKind k : signals) cfg = plant_signal(cfg, k, strength);
  reject_unused(kv);
  const std::filesystem::path dir(o.out);
  Manifest m("generate");
  auto cj = cfg.to_json();
  std::vector<std::string> signal_names;
  for (SignalKind k : signals) signal_names.emplace_back(to_string(k));
  cj["signals"] = signal_names;
  cj["signal_strength"] = strength;
  m.config(cj);
  m.seed(cfg.seed);
  const auto log = generate(cfg);
  m.phase("generate");
  const std::string name = gzip ? "events.tsv.gz" : "events.tsv";
  write_generated(log, dir, name);
  m.phase("write");
  m.output(dir / name);
  m.output(dir / "truth.jsonl");
  m.stat("events", log.events.size());
  m.stat("sessions", log.truth.size());
  m.stat("events_hash", file_hash(dir / name));
  m.write(dir);
  return kOk;
}

inline BotFilterConfig bot_filter_from(const KeyValueConfig& kv) {
  BotFilterConfig c = BotFilterConfig::defaults();
  if (kv.has("allowed_countries")) {
    std::vector<std::string> v;
    kv.read_list("allowed_countries", v);
    c.allowed_countries = {v.begin(), v.end()};
  }
  if (kv.has("allowed_devices")) {
    std::vector<Device> v;
    kv.read_list("allowed_devices", v);
    c.allowed_devices = {v.begin(), v.end()};
  }
  kv.read("min_session_events", c.min_session_events);
  kv.read("max_session_events", c.max_session_events);
  c.validate();
  return c;
}

inline int cmd_ingest(const CommonOptions& o, bool skip_malformed) {
  const auto kv = load_config(o);
  const auto filter = bot_filter_from(kv);
  std::int64_t idle_minutes = 30;
  kv.read("idle_gap_minutes", idle_minutes);
  if (idle_minutes <= 0) throw Error(Errc::InvalidConfig, "key 'idle_gap_minutes': must be > 0");
  reject_unused(kv);

  const std::filesystem::path dir(o.out);
  std::filesystem::create_directories(dir);
  Manifest m("ingest");
  m.input(o.input);
  m.config({{"idle_gap_minutes", idle_minutes},
            {"min_session_events", filter.min_session_events},
            {"max_session_events", filter.max_session_events},
            {"allowed_countries", filter.allowed_countries},
            {"skip_malformed", skip_malformed}});
  auto read = read_event_log(o.input, skip_malformed);
  m.phase("read");
  auto kept = filter_events(read.events, filter);
  sort_events(kept.events);
  auto opt = SessionizeOptions::from(filter);
  opt.idle_gap_ms = idle_minutes * kMinuteMs;
  const auto result = sessionize(kept.events, opt);
  m.phase("sessionize");
  {
    auto os = open_output(dir / "sessions.jsonl");
    write_sessions_jsonl(os, result.sessions);
  }
  const auto split = split_by_identity(result.sessions);
  m.output(dir / "sessions.jsonl");
  m.stat("events_read", read.events.size());
  m.stat("malformed_skipped", read.malformed);
  m.stat("events_filtered", kept.dropped);
  m.stat("sessions", result.sessions.size());
  m.stat("sessions_dropped", result.dropped_sessions);
  m.stat("anonymous_sessions", split.anonymous.size());
  m.stat("identified_sessions", split.identified.size());
  m.write(dir);
  return kOk;
}

inline int cmd_analyze(const CommonOptions& o) {
  const std::filesystem::path dir(o.out);
  Manifest m("analyze");
  m.input(o.input);
  const auto sessions = load_sessions(o.input);
  m.phase("read");
  const auto report = analyze(sessions);
  write_analytics(report, dir);
  m.phase("analyze");
  for (const char* f : {"ccdf.csv", "weekday.csv", "hour.csv", "channels.csv", "devices.csv", "ownership.csv",
                        "transitions.csv", "queries.csv", "report.json"}) {
    m.output(dir / f);
  }
  m.stat("sessions", sessions.size());
  m.write(dir);
  return kOk;
}

inline ProtocolConfig protocol_from(const CommonOptions& o, const KeyValueConfig& kv) {
  auto cfg = ProtocolConfig::from(kv);
  cfg.threads = o.threads;
  return cfg;
}

inline void report_failures(const StepReport& r) {
  for (const auto& f : r.failures) {
    std::cerr << "warning: " << to_string(f.key.model) << ' ' << to_string(f.key.setting) << ' '
              << to_string(f.key.variant) << " step " << f.key.step << " fold " << f.fold << ": " << f.message
              << '\n';
  }
}

inline int cmd_evaluate(const CommonOptions& o) {
  const auto kv = load_config(o);
  const auto cfg = protocol_from(o, kv);
  reject_unused(kv);
  const std::filesystem::path dir(o.out);
  std::filesystem::create_directories(dir);
  Manifest m("evaluate");
  m.config(cfg.to_json());
  m.seed(cfg.seed);
  m.input(o.input);
  const auto sessions = load_sessions(o.input);
  m.phase("read");
  const auto report = run_protocol(sessions, cfg);
  m.phase("protocol");
  report_failures(report);
  {
    auto os = open_output(dir / "step_report.csv");
    write_step_report_csv(os, report);
  }
  {
    auto os = open_output(dir / "importance.csv");
    write_importance_csv(os, report);
  }
  {
    auto os = open_output(dir / "static_share.csv");
    write_static_share_csv(os, report);
  }
  for (const char* f : {"step_report.csv", "importance.csv", "static_share.csv"}) m.output(dir / f);
  m.stat("pool_sizes", report.pool_sizes);
  m.stat("failed_cells", report.failures.size());
  m.write(dir);
  return kOk;
}

struct TrainSelection {
  ModelKind model = ModelKind::RF;
  Setting setting = Setting::Anonymous;
  Variant variant = Variant::Extended;
  std::size_t step = 0;
};

/// Fit one model on every eligible session and save the fitted artifacts.
inline int cmd_train(const CommonOptions& o, const TrainSelection& sel) {
  const auto kv = load_config(o);
  const auto cfg = protocol_from(o, kv);
  reject_unused(kv);
  if (std::find(cfg.steps.begin(), cfg.steps.end(), sel.step) == cfg.steps.end()) {
    throw Error(Errc::InvalidConfig, "step " + std::to_string(sel.step) + " is not in 'steps'");
  }
  const std::filesystem::path dir(o.out);
  std::filesystem::create_directories(dir);
  Manifest m("train");
  m.config(cfg.to_json());
  m.seed(cfg.seed);
  m.input(o.input);
  const auto sessions = load_sessions(o.input);
  const auto journeys = build_journeys(sessions);
  const auto pool = protocol_pool(sessions, sel.setting, cfg.min_pages);
  if (pool.size() < 2) throw Error(Errc::TooFewSessions, std::to_string(pool.size()) + " eligible sessions");
  auto tcfg = cfg.train;
  tcfg.kind = sel.model;
  tcfg.seed = cell_seed(cfg.seed, sel.setting, 0, sel.step, sel.variant, sel.model);
  tcfg.threads = cfg.threads;
  const auto a = train_fold(pool, journeys, sel.setting, sel.step, sel.variant, tcfg, cfg.extract_options());
  m.phase("train");
  nlohmann::json artifact = a.to_json();
  artifact["setting"] = to_string(sel.setting);
  artifact["variant"] = to_string(sel.variant);
  artifact["step"] = sel.step;
  {
    auto os = open_output(dir / "model.json");
    os << artifact.dump() << '\n';
  }
  const auto pred = a.model->predict(a.train.X);
  const auto score = f1(a.train.y, pred);
  m.output(dir / "model.json");
  m.stat("training_sessions", pool.size());
  m.stat("training_f1", score.f1);
  m.write(dir);
  return kOk;
}

/// Markdown summary of an `evaluate` output directory.
inline int cmd_report(const CommonOptions& o) {
  const std::filesystem::path in(o.input);
  const std::filesystem::path dir(o.out.empty() ? o.input : o.out);
  std::filesystem::create_directories(dir);
  Manifest m("report");
  m.input(in / "step_report.csv");

  auto rows_of = [&](const std::filesystem::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream is(read_file(p));
    std::string line;
    std::getline(is, line);
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto cells = KeyValueConfig::split(line, ',');
      if (cells.size() < 5) throw Error(Errc::MalformedLine, p.filename().string() + ": too few columns", line_no);
      rows.push_back(std::move(cells));
    }
    return rows;
  };
  // (model, setting, variant) -> step -> value
  using Curves = std::map<std::string, std::map<std::size_t, std::string>>;
  auto curves = [](const std::vector<std::vector<std::string>>& rows, std::size_t col) {
    Curves c;
    for (const auto& r : rows) {
      if (col >= r.size()) throw Error(Errc::MalformedLine, "missing column");
      c[r[0] + " " + r[1] + " " + r[2]][std::stoul(r[3])] = r[col];
    }
    return c;
  };
  const auto f1_curves = curves(rows_of(in / "step_report.csv"), 4);
  Curves share;
  if (std::filesystem::exists(in / "static_share.csv")) share = curves(rows_of(in / "static_share.csv"), 4);

  std::ostringstream md;
  auto table = [&](const char* title, const Curves& c) {
    if (c.empty()) return;
    std::set<std::size_t> steps;
    for (const auto& [k, v] : c) {
      for (const auto& [s, x] : v) steps.insert(s);
    }
    md << "## " << title << "\n\n| cell |";
    for (auto s : steps) md << ' ' << s << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < steps.size(); ++i) md << "---|";
    md << '\n';
    for (const auto& [k, v] : c) {
      md << "| " << k << " |";
      for (auto s : steps) {
        auto it = v.find(s);
        md << ' ' << (it == v.end() ? std::string("") : it->second.substr(0, 5)) << " |";
      }
      md << '\n';
    }
    md << '\n';
  };
  md << "# Evaluation summary\n\n";
  table("F1 by step", f1_curves);
  table("Static importance share by step", share);
  {
    auto os = open_output(dir / "report.md");
    os << md.str();
  }
  std::cout << md.str();
  m.output(dir / "report.md");
  m.write(dir);
  return kOk;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run(int argc, char** argv) {
  CLI::App app{"Clickstream sessionization, purchase-intent features and evaluation"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  CommonOptions o;
  bool gzip = false, skip_malformed = false;
  TrainSelection sel;
  std::string model = "RF", setting = "anonymous", variant = "extended";

  auto common = [&](CLI::App* sub, bool needs_input, bool needs_config) {
    auto* cfg = sub->add_option("--config", o.config, "key = value config file")->envname("PINTENT_CONFIG");
    if (needs_config) cfg->check(CLI::ExistingFile);
    sub->add_option("--set", o.overrides, "override a config key (key=value), repeatable");
    sub->add_option("--seed", o.seed, "master seed")->envname("PINTENT_SEED")->each([&](const std::string&) {
      o.seed_set = true;
    });
    sub->add_option("--threads", o.threads, "worker threads")->envname("PINTENT_THREADS")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "output directory")->envname("PINTENT_OUT")->required();
    if (needs_input) sub->add_option("--input", o.input, "input file")->required()->check(CLI::ExistingPath);
  };
  auto* gen = app.add_subcommand("generate", "write a synthetic event log and truth.jsonl");
  common(gen, false, false);
  gen->add_flag("--gzip", gzip, "compress the event log");
  auto* ing = app.add_subcommand("ingest", "filter and sessionize an event log into sessions.jsonl");
  common(ing, true, false);
  ing->add_flag("--skip-malformed", skip_malformed, "count and skip unparseable lines");
  auto* ana = app.add_subcommand("analyze", "purchase vs non-purchase characterization tables");
  common(ana, true, false);
  auto* trn = app.add_subcommand("train", "fit one model on all eligible sessions");
  common(trn, true, false);
  trn->add_option("--model", model, "LR, KNN, SVM, RF, GBDT or MLP");
  trn->add_option("--setting", setting, "anonymous or identified");
  trn->add_option("--variant", variant, "baseline or extended");
  trn->add_option("--step", sel.step, "page step");
  auto* evl = app.add_subcommand("evaluate", "cross-validated step protocol");
  common(evl, true, false);
  auto* rep = app.add_subcommand("report", "summarize an evaluate output directory");
  rep->add_option("--input", o.input, "evaluate output directory")->required()->check(CLI::ExistingDirectory);
  rep->add_option("--out", o.out, "output directory (default: input)")->envname("PINTENT_OUT");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_generate(o, gzip);
    if (*ing) return cmd_ingest(o, skip_malformed);
    if (*ana) return cmd_analyze(o);
    if (*trn) {
      sel.model = parse_enum_or_throw<ModelKind>(model);
      sel.setting = parse_enum_or_throw<Setting>(setting);
      sel.variant = parse_enum_or_throw<Variant>(variant);
      return cmd_train(o, sel);
    }
    if (*evl) return cmd_evaluate(o);
    if (*rep) return cmd_report(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}

}  // namespace pintent::cli
