#include "weld/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include "weld/arc_tracker.hpp"
#include "weld/lic_map.hpp"
#include "weld/protocol_server.hpp"
#include "weld/session_service.hpp"
#include "weld/sim_harness.hpp"

namespace weld::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string read_file(const fs::path& path, const char* stage) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, stage, "cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& text, const char* stage) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, stage, "cannot write " + path.string());
  out << text;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// Nearest-rank percentile.
double percentile(std::vector<double> v, double q) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(item);
  return out;
}

int cmd_simulate(const fs::path& root, const std::string& scenario_arg, const std::string& out_arg, std::ostream& out) {
  const fs::path scenario_path = root / scenario_arg;
  if (!fs::exists(scenario_path)) fail(ErrorCode::kIo, "simulate", "no such scenario file: " + scenario_path.string());
  const sim::Scenario scenario = sim::load_scenario(scenario_path);
  session::Session s(session::SessionConfig::for_scenario(scenario, fs::path(scenario_arg).stem().string()));
  for (const auto& st : s.seam().timings) spdlog::debug("seam stage {}: {:.1f} ms", st.stage, st.millis);
  const auto truth = sim::plan_truth(scenario, s.seam().path);
  for (const auto& t : truth) s.ingest_frame(sim::render_hdr_frame(scenario, t));
  const auto report = s.finalize();

  const fs::path record_path = root / out_arg;
  write_file(record_path, s.record_text(), "simulate");
  session::SessionService store(root);
  const std::string id = store.next_id();
  store.append_index(id, fs::relative(record_path, root).generic_string(), report.score);
  out << "session=" << id << " score=" << fixed2(report.score) << " eps=" << format_g6(report.avg_error)
      << " n=" << report.n << " invalid=" << report.invalid_frames << '\n';
  return kExitOk;
}

int cmd_bench(const fs::path& root, const std::string& scenario_arg, const std::vector<std::string>& methods,
              const std::string& out_arg, std::ostream& out) {
  const BenchResult r = bench(root / scenario_arg, methods);
  std::ostringstream table;
  table << "frame,method,cx,cy,error_px,candidates,tiles_065,tiles_095\n";
  for (const auto& row : r.rows) {
    table << row.frame << ',' << row.method << ',' << format_g6(row.cx) << ',' << format_g6(row.cy) << ','
          << format_g6(row.error_px) << ',' << row.candidates << ',';
    table << (row.tiles_065 < 0 ? std::string() : std::to_string(row.tiles_065)) << ','
          << (row.tiles_095 < 0 ? std::string() : std::to_string(row.tiles_095)) << '\n';
  }
  const fs::path table_path = root / out_arg;
  write_file(table_path, table.str(), "bench");

  // Histogram: how many frames had k tiles at or above each threshold.
  std::map<std::tuple<std::string, std::string, long>, std::size_t> hist;
  for (const auto& row : r.rows) {
    if (row.tiles_065 < 0) continue;
    ++hist[{row.method, "0.65", row.tiles_065}];
    ++hist[{row.method, "0.95", row.tiles_095}];
  }
  std::ostringstream h;
  h << "method,threshold,tiles,frames\n";
  for (const auto& [key, frames] : hist) {
    h << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << frames << '\n';
  }
  fs::path hist_path = table_path;
  hist_path.replace_filename(table_path.stem().string() + "_hist.csv");
  write_file(hist_path, h.str(), "bench");

  out << "frames_checksum=" << r.frame_checksum << '\n';
  for (const auto& s : r.summary) {
    out << s.method << ": scored=" << s.frames_scored << " median_px=" << format_g6(s.median_px)
        << " p95_px=" << format_g6(s.p95_px) << '\n';
  }
  return kExitOk;
}

int cmd_replay(const fs::path& root, const std::string& in_arg, std::ostream& out) {
  const auto result = session::replay(read_file(root / in_arg, "replay"));
  if (!result.identical) {
    out << "MISMATCH " << result.first_difference << '\n';
    return kExitCorrupt;
  }
  out << "OK identical n=" << result.report.n << " eps=" << format_g6(result.report.avg_error)
      << " gamma=" << format_g6(result.report.score) << '\n';
  return kExitOk;
}

int cmd_report(const fs::path& root, const std::string& session_arg, const std::string& out_arg, std::ostream& out) {
  fs::path record_path;
  if (fs::is_regular_file(root / session_arg)) {
    record_path = root / session_arg;
  } else {
    record_path = session::SessionService(root).lookup(session_arg);
  }
  const auto rec = session::parse_record(read_file(record_path, "report"));
  std::ostringstream csv;
  csv << "frame,cx,cy,qx,qy,error_px,eps_running,cue\n";
  std::size_t rows = 0;
  for (const auto& line : rec.updates) {
    const auto f = split_csv(line);
    if (f[7] == "none") continue;  // not a scored sample
    csv << f[0] << ',' << f[1] << ',' << f[2] << ',' << f[5] << ',' << f[6] << ',' << f[8] << ',' << f[9] << ','
        << f[7] << '\n';
    ++rows;
  }
  write_file(root / out_arg, csv.str(), "report");
  out << "rows=" << rows << ' ' << rec.footer << '\n';
  return kExitOk;
}

struct ServeSettings {
  std::string host = "127.0.0.1";
  int port = 8765;
  std::string data_dir;
  std::string log_level = "info";
  std::size_t queue_limit = session::kDefaultQueueLimit;
};

ServeSettings load_serve_settings(const fs::path& root, const std::string& config_arg) {
  ServeSettings s;
  s.data_dir = root.string();
  if (!config_arg.empty()) {
    std::istringstream in(read_file(root / config_arg, "serve"));
    std::string line;
    while (std::getline(in, line)) {
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string v) {
        v.erase(0, v.find_first_not_of(" \t"));
        v.erase(v.find_last_not_of(" \t\r") + 1);
        return v;
      };
      const std::string key = trim(line.substr(0, eq));
      const std::string val = trim(line.substr(eq + 1));
      try {
        if (key == "host") s.host = val;
        else if (key == "port") s.port = std::stoi(val);
        else if (key == "data_dir") s.data_dir = (root / val).string();
        else if (key == "log_level") s.log_level = val;
        else if (key == "queue_limit") s.queue_limit = std::stoul(val);
        else fail(ErrorCode::kInvalidConfig, "serve", "unknown setting '" + key + "'");
      } catch (const std::logic_error&) {
        fail(ErrorCode::kInvalidConfig, "serve", "bad value for '" + key + "'");
      }
    }
  }
  s.host = env_or("WELD_HOST", s.host);
  s.port = std::stoi(env_or("WELD_PORT", std::to_string(s.port)));
  s.log_level = env_or("WELD_LOG_LEVEL", s.log_level);
  if (s.queue_limit == 0) fail(ErrorCode::kInvalidConfig, "serve", "queue_limit must be positive");
  return s;
}

int cmd_serve(const fs::path& root, const std::string& config_arg, std::ostream& out, std::ostream& err) {
  const ServeSettings s = load_serve_settings(root, config_arg);
  spdlog::set_level(spdlog::level::from_str(s.log_level));
  session::SessionService service(s.data_dir, s.queue_limit);
  session::ProtocolServer server(service, s.host, s.port);
  try {
    server.listen();
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << " at stage " << e.stage() << ": " << e.what() << '\n';
    return kExitRuntime;
  }
  out << "listening " << s.host << ':' << server.port() << std::endl;
  spdlog::info("serving {} on {}:{}", s.data_dir, s.host, server.port());
  server.run();
  return kExitOk;
}

int cmd_generate(const fs::path& root, const std::string& out_arg, const sim::Scenario& s, std::ostream& out) {
  sim::validate(s);
  write_file(root / out_arg, sim::to_text(s), "generate");
  out << "wrote " << out_arg << '\n';
  return kExitOk;
}

int cmd_export(const fs::path& root, const std::string& scenario_arg, const std::string& out_arg, std::ostream& out) {
  const fs::path scenario_path = root / scenario_arg;
  if (!fs::exists(scenario_path)) fail(ErrorCode::kIo, "export", "no such scenario file: " + scenario_path.string());
  const auto run = sim::run_scenario(sim::load_scenario(scenario_path));
  sim::export_run(run, root / out_arg);
  out << "frames=" << run.frames.size() << '\n';
  return kExitOk;
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kCorruptRecord: return kExitCorrupt;
    case ErrorCode::kIo:
    case ErrorCode::kParseError:
    case ErrorCode::kUnknownSession:
    case ErrorCode::kInvalidArgument: return kExitUsage;
    default: return kExitPipeline;
  }
}

BenchResult bench(const fs::path& scenario_path, const std::vector<std::string>& methods) {
  if (methods.empty()) fail(ErrorCode::kInvalidArgument, "bench", "no methods given");
  for (const auto& m : methods) {
    if (m != "lic" && m != "softmax" && m != "contour" && m != "intensity") {
      fail(ErrorCode::kInvalidArgument, "bench", "unknown method '" + m + "'");
    }
  }
  if (!fs::exists(scenario_path)) fail(ErrorCode::kIo, "bench", "no such scenario file: " + scenario_path.string());
  const sim::Scenario scenario = sim::load_scenario(scenario_path);
  const auto run = sim::run_scenario(scenario);
  const auto& k = scenario.camera.intrinsics;
  const arc::TrackerConfig tracker_config;

  lic::LicTracker lic_map;
  lic::SoftmaxTracker softmax_map;
  arc::ArcTracker lic_tracker(tracker_config, k.width, k.height);
  arc::ArcTracker softmax_tracker(tracker_config, k.width, k.height);

  BenchResult r;
  std::uint64_t checksum = 0xcbf29ce484222325ULL;
  std::map<std::string, std::vector<double>> errors;
  for (std::size_t i = 0; i < run.frames.size(); ++i) {
    const GrayFrame& frame = run.frames[i];
    const auto px = frame.pixels();
    checksum = session::fnv1a64(std::string_view(reinterpret_cast<const char*>(px.data()), px.size()), checksum);
    const auto& truth = run.truth[i].arc_center;
    const GrayFrame binary = arc::binarize(frame, tracker_config.binarize_threshold);
    const auto contours = arc::extract_contours(binary);
    // Maps advance every frame regardless of which methods are reported.
    const lic::ConfidenceMap lic_now = lic_map.update(frame);
    const lic::ConfidenceMap soft_now = softmax_map.update(frame);
    const auto lic_track = lic_tracker.process(frame, lic_now);
    const auto soft_track = softmax_tracker.process(frame, soft_now);

    for (const auto& m : methods) {
      BenchRow row;
      row.frame = frame.timestamp();
      row.method = m;
      std::optional<ImagePoint> c;
      if (m == "lic" || m == "softmax") {
        const auto& track = m == "lic" ? lic_track : soft_track;
        const auto& map = m == "lic" ? lic_now : soft_now;
        if (track.estimate.valid) c = track.estimate.center;
        row.candidates = track.after_gate;
        row.tiles_095 = static_cast<long>(lic::count_at_least(map, lic::kHighThreshold));
        row.tiles_065 = static_cast<long>(lic::count_at_least(map, lic::kMediumThreshold));
      } else if (m == "contour") {
        if (!contours.empty()) c = arc::baseline_contour_center(contours);
        row.candidates = contours.size();
      } else {
        const auto centers = arc::baseline_intensity_centers(binary);
        if (!centers.empty()) c = centers.front();
        row.candidates = centers.size();
      }
      row.cx = c ? c->x : kNaN;
      row.cy = c ? c->y : kNaN;
      row.error_px = c && truth ? euclidean_distance(*c, *truth) : kNaN;
      if (std::isfinite(row.error_px)) errors[m].push_back(row.error_px);
      r.rows.push_back(row);
    }
  }
  char hex[20];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(checksum));
  r.frame_checksum = hex;
  for (const auto& m : methods) {
    const auto& e = errors[m];
    r.summary.push_back({m, e.size(), median(e), percentile(e, 0.95)});
  }
  spdlog::info("bench {}: {} frames, checksum {}", scenario.name, run.frames.size(), r.frame_checksum);
  return r;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weld training guidance engine"};
  app.require_subcommand(1);
  std::string data_dir = env_or("WELD_DATA_DIR", ".");
  std::string log_level = env_or("WELD_LOG_LEVEL", "warn");
  app.add_option("--data-dir", data_dir, "Root for every relative path (env WELD_DATA_DIR)");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error (env WELD_LOG_LEVEL)");

  std::string scenario;
  std::string out_path;
  std::string in_path;
  std::string methods;
  std::string config;
  std::string session_id;

  auto* simulate = app.add_subcommand("simulate", "Run a scenario headless and write its record");
  simulate->add_option("--scenario", scenario)->required();
  simulate->add_option("--out", out_path)->required();

  auto* bench_cmd = app.add_subcommand("bench", "Compare trackers on one frame stream");
  bench_cmd->add_option("--scenario", scenario)->required();
  bench_cmd->add_option("--methods", methods, "Comma-separated: lic,softmax,contour,intensity")->required();
  bench_cmd->add_option("--out", out_path)->required();

  auto* replay_cmd = app.add_subcommand("replay", "Recompute a record and compare");
  replay_cmd->add_option("--in", in_path)->required();

  auto* serve = app.add_subcommand("serve", "Serve live sessions");
  serve->add_option("--config", config, "key=value settings file");

  auto* report = app.add_subcommand("report", "Trajectory and error series of a finished session");
  report->add_option("--session", session_id, "Session id from the index, or a record path")->required();
  report->add_option("--out", out_path)->required();

  sim::Scenario gen;
  std::string kind = "fillet";
  std::string script = "perfect";
  auto* generate = app.add_subcommand("generate", "Write a scenario file");
  generate->add_option("--out", out_path)->required();
  generate->add_option("--name", gen.name);
  generate->add_option("--kind", kind)->check(CLI::IsMember({"fillet", "butt"}));
  generate->add_option("--orientation", gen.workpiece.orientation_deg);
  generate->add_option("--seed", gen.seed);
  generate->add_option("--frames", gen.frames);
  generate->add_option("--script", script)
      ->check(CLI::IsMember({"perfect", "lagging", "leading", "jitter", "offset", "fixed"}));
  generate->add_option("--target-error", gen.script.target_error);

  auto* export_cmd = app.add_subcommand("export", "Write frames as PGM plus truth.csv");
  export_cmd->add_option("--scenario", scenario)->required();
  export_cmd->add_option("--out", out_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "usage: " << e.what() << '\n';
    return kExitUsage;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));
  const fs::path root = data_dir;

  try {
    if (*simulate) return cmd_simulate(root, scenario, out_path, out);
    if (*bench_cmd) {
      auto list = split_csv(methods);
      std::erase(list, std::string());
      if (list.empty()) {
        err << "usage: --methods needs at least one method\n";
        return kExitUsage;
      }
      return cmd_bench(root, scenario, list, out_path, out);
    }
    if (*replay_cmd) return cmd_replay(root, in_path, out);
    if (*serve) return cmd_serve(root, config, out, err);
    if (*report) return cmd_report(root, session_id, out_path, out);
    if (*generate) {
      gen.workpiece.kind = kind == "butt" ? sim::WorkpieceKind::kButt : sim::WorkpieceKind::kFillet;
      gen = sim::parse_scenario(sim::to_text(gen) + "script " + script + "\n");
      return cmd_generate(root, out_path, gen, out);
    }
    if (*export_cmd) return cmd_export(root, scenario, out_path, out);
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << " at stage " << e.stage() << ": " << e.what() << '\n';
    return exit_code_for(e.code());
  }
  return kExitUsage;
}

}  // namespace weld::cli
