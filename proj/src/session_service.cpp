#include "weld/session_service.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "weld/error.hpp"

namespace weld::session {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Shortest %.Ng that reads back to the same double.
std::string exact(double v) {
  char buf[40];
  for (int digits = 6; digits <= 17; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string point_g6(ImagePoint p) { return format_g6(p.x) + "," + format_g6(p.y); }

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t from = 0;
  while (true) {
    const std::size_t at = s.find(sep, from);
    out.push_back(s.substr(from, at == std::string_view::npos ? std::string_view::npos : at - from));
    if (at == std::string_view::npos) return out;
    from = at + 1;
  }
}

double parse_double(std::string_view s, const char* stage) {
  const std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size()) fail(ErrorCode::kParseError, stage, "bad number '" + tmp + "'");
  return v;
}

template <class Int>
Int parse_int(std::string_view s, const char* stage) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    fail(ErrorCode::kParseError, stage, "bad integer '" + std::string(s) + "'");
  }
  return v;
}

std::string sanitize_ref(std::string ref) {
  if (ref.empty()) return "-";
  for (char& ch : ref) {
    if (ch == ' ' || ch == '\t' || ch == '=' || ch == '\n' || ch == '\r') ch = '_';
  }
  return ref;
}

SessionConfig validated(SessionConfig c) {
  c.validate();
  return c;
}

std::uint64_t digest_frame(const GrayFrame& f, std::uint64_t seed) {
  const std::int64_t header[3] = {f.timestamp(), f.width(), f.height()};
  seed = fnv1a64(std::string_view(reinterpret_cast<const char*>(header), sizeof header), seed);
  const auto px = f.pixels();
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(px.data()), px.size()), seed);
}

sim::Scenario driver_scenario(sim::Scenario s, const std::vector<sim::Waypoint>& inputs) {
  s.script.mode = sim::ScriptMode::kWaypoints;
  s.script.waypoints = inputs;
  s.arc_on_start = 0;
  s.arc_on_end = -1;
  if (!inputs.empty()) s.frames = std::max(s.frames, inputs.back().t + 1);
  return s;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

SessionConfig SessionConfig::for_scenario(const sim::Scenario& scenario, std::string ref) {
  SessionConfig c;
  c.scenario = scenario;
  c.scenario_ref = ref.empty() ? scenario.name : std::move(ref);
  c.guidance.speed_mm_s = scenario.script.speed_mm_s;
  c.guidance.frame_rate_hz = scenario.frame_rate_hz;
  return c;
}

void SessionConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorCode::kInvalidConfig, "config", msg); };
  if (tile_size < 4) bad("tile_size must be at least 4");
  if (!(lic.b > 0.0 && lic.sigma > 0.0)) bad("b and sigma must be positive");
  if (tracker.binarize_threshold < 0 || tracker.binarize_threshold > 255) bad("binarize threshold outside [0, 255]");
  if (!(tracker.area_min > 0.0 && tracker.area_min < tracker.area_max)) bad("need 0 < area_min < area_max");
  if (!(tracker.gate_px < 0.0 || tracker.gate_px > 0.0)) bad("gate_px must be positive (or negative for auto)");
  if (!(tracker.process_noise > 0.0 && tracker.measurement_noise > 0.0)) bad("Kalman noise must be positive");
  if (tracker.reacquire_after < 1) bad("reacquire_after must be at least 1");
  if (!(seam.canny_low >= 0.0 && seam.canny_low <= seam.canny_high)) bad("need 0 <= canny_low <= canny_high");
  if (!(seam.depth_threshold_mm > 0.0)) bad("depth threshold must be positive");
  if (seam.knn < 1) bad("knn must be positive");
  if (seam.denoise_kernel < 1 || seam.denoise_kernel % 2 == 0) bad("denoise kernel must be odd");
  if (!(seam.lift_stride_px > 0.0 && seam.lift_radius_px > 0.0)) bad("lift stride and radius must be positive");
  if (!(guidance.speed_mm_s > 0.0 && guidance.frame_rate_hz > 0.0 && guidance.tolerance_px > 0.0)) {
    bad("speed, frame rate and tolerance must be positive");
  }
  sim::validate(scenario);
}

std::string config_fields(const SessionConfig& c) {
  std::ostringstream o;
  o << "mode=" << (c.mode == FeedMode::kScripted ? "scripted" : "driver");
  o << " scenario=" << sanitize_ref(c.scenario_ref);
  o << " tile_size=" << c.tile_size << " b=" << exact(c.lic.b) << " sigma=" << exact(c.lic.sigma);
  o << " medium_threshold=" << exact(lic::kMediumThreshold) << " high_threshold=" << exact(lic::kHighThreshold);
  o << " binarize=" << c.tracker.binarize_threshold << " area_min=" << exact(c.tracker.area_min)
    << " area_max=" << exact(c.tracker.area_max) << " gate_px=" << exact(c.tracker.gate_px)
    << " process_noise=" << exact(c.tracker.process_noise)
    << " measurement_noise=" << exact(c.tracker.measurement_noise) << " reacquire_after=" << c.tracker.reacquire_after;
  o << " tolerance_px=" << exact(c.guidance.tolerance_px) << " speed_mm_s=" << exact(c.guidance.speed_mm_s)
    << " frame_rate_hz=" << exact(c.guidance.frame_rate_hz);
  const auto& s = c.seam;
  o << " canny_low=" << exact(s.canny_low) << " canny_high=" << exact(s.canny_high)
    << " depth_threshold_mm=" << exact(s.depth_threshold_mm) << " knn=" << s.knn
    << " min_groove_points=" << s.min_groove_points << " denoise_kernel=" << s.denoise_kernel
    << " max_segment_deviation_px=" << exact(s.max_segment_deviation_px) << " min_length_px=" << exact(s.min_length_px)
    << " clearance_deg=" << exact(s.clearance_deg) << " lift_stride_px=" << exact(s.lift_stride_px)
    << " lift_radius_px=" << exact(s.lift_radius_px) << " bottom_band_mm=" << exact(s.bottom_band_mm)
    << " max_hole_fraction=" << exact(s.max_hole_fraction);
  return o.str();
}

SessionConfig parse_config_fields(std::string_view fields) {
  constexpr const char* kStage = "config";
  SessionConfig c;
  std::istringstream in{std::string(fields)};
  std::string kv;
  while (in >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(ErrorCode::kParseError, kStage, "expected key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string_view val = std::string_view(kv).substr(eq + 1);
    auto num = [&] { return parse_double(val, kStage); };
    auto integer = [&] { return parse_int<int>(val, kStage); };
    if (key == "mode") {
      if (val == "scripted") c.mode = FeedMode::kScripted;
      else if (val == "driver") c.mode = FeedMode::kDriver;
      else fail(ErrorCode::kParseError, kStage, "unknown mode '" + std::string(val) + "'");
    } else if (key == "scenario") {
      c.scenario_ref = val == "-" ? std::string() : std::string(val);
    } else if (key == "session") {
      c.session_id = std::string(val);
    } else if (key == "tile_size") {
      c.tile_size = integer();
    } else if (key == "b") {
      c.lic.b = num();
    } else if (key == "sigma") {
      c.lic.sigma = num();
    } else if (key == "medium_threshold" || key == "high_threshold") {
      const double expected = key == "medium_threshold" ? lic::kMediumThreshold : lic::kHighThreshold;
      if (num() != expected) fail(ErrorCode::kInvalidConfig, kStage, key + " is fixed at " + exact(expected));
    } else if (key == "binarize") {
      c.tracker.binarize_threshold = integer();
    } else if (key == "area_min") {
      c.tracker.area_min = num();
    } else if (key == "area_max") {
      c.tracker.area_max = num();
    } else if (key == "gate_px") {
      c.tracker.gate_px = num();
    } else if (key == "process_noise") {
      c.tracker.process_noise = num();
    } else if (key == "measurement_noise") {
      c.tracker.measurement_noise = num();
    } else if (key == "reacquire_after") {
      c.tracker.reacquire_after = integer();
    } else if (key == "tolerance_px") {
      c.guidance.tolerance_px = num();
    } else if (key == "speed_mm_s") {
      c.guidance.speed_mm_s = num();
    } else if (key == "frame_rate_hz") {
      c.guidance.frame_rate_hz = num();
    } else if (key == "canny_low") {
      c.seam.canny_low = num();
    } else if (key == "canny_high") {
      c.seam.canny_high = num();
    } else if (key == "depth_threshold_mm") {
      c.seam.depth_threshold_mm = num();
    } else if (key == "knn") {
      c.seam.knn = integer();
    } else if (key == "min_groove_points") {
      c.seam.min_groove_points = parse_int<std::size_t>(val, kStage);
    } else if (key == "denoise_kernel") {
      c.seam.denoise_kernel = integer();
    } else if (key == "max_segment_deviation_px") {
      c.seam.max_segment_deviation_px = num();
    } else if (key == "min_length_px") {
      c.seam.min_length_px = num();
    } else if (key == "clearance_deg") {
      c.seam.clearance_deg = num();
    } else if (key == "lift_stride_px") {
      c.seam.lift_stride_px = num();
    } else if (key == "lift_radius_px") {
      c.seam.lift_radius_px = num();
    } else if (key == "bottom_band_mm") {
      c.seam.bottom_band_mm = num();
    } else if (key == "max_hole_fraction") {
      c.seam.max_hole_fraction = num();
    } else {
      fail(ErrorCode::kParseError, kStage, "unknown key '" + key + "'");
    }
  }
  return c;
}

std::string GuidanceUpdate::record_line() const {
  const ImagePoint none{kNaN, kNaN};
  std::string out = std::to_string(frame);
  out += ',' + point_g6(c.value_or(none));
  out += ',' + point_g6(c_smoothed.value_or(none));
  out += ',' + point_g6(q.value_or(none));
  out += ',';
  out += cue ? to_string(*cue) : "none";
  out += ',' + format_g6(instant_error);
  out += ',' + format_g6(running_error);
  out += valid ? ",1" : ",0";
  return out;
}

std::string GuidanceUpdate::wire_line() const {
  return record_line() + ',' + std::to_string(high_tiles) + ',' + std::to_string(medium_tiles);
}

std::string seam_line(const seam::SeamReport& r) {
  const auto& p3 = r.path.points_3d;
  std::string out = "start=" + point_g6(r.line.start) + " end=" + point_g6(r.line.end);
  if (!p3.empty()) {
    auto p = [](const Point3& q) { return format_g6(q.x) + "," + format_g6(q.y) + "," + format_g6(q.z); };
    out += " zeta_start=" + p(p3.front()) + " zeta_end=" + p(p3.back());
  }
  out += " length_mm=" + format_g6(r.path.length_mm) + " samples=" + std::to_string(p3.size());
  return out;
}

std::string footer_line(const guidance::TrialReport& r) {
  return "n=" + std::to_string(r.n) + " eps=" + format_g6(r.avg_error) + " gamma=" + format_g6(r.score) +
         " invalid=" + std::to_string(r.invalid_frames) + " direction=" + std::string(to_string(r.direction)) +
         " start=" + point_g6(r.start_point);
}

Session::Session(SessionConfig config)
    : config_(validated(std::move(config))),
      workpiece_(sim::build_workpiece(config_.scenario.workpiece, config_.scenario.camera, config_.scenario.seed,
                                      config_.scenario.depth_noise_mm)),
      seam_(seam::localize_seam(workpiece_.cloud, config_.seam)),
      lic_(config_.tile_size, config_.lic),
      tracker_(config_.tracker, config_.scenario.camera.intrinsics.width, config_.scenario.camera.intrinsics.height),
      trial_(seam_.path, config_.guidance) {}

GuidanceUpdate Session::ingest_frame(const GrayFrame& frame) {
  if (report_) fail(ErrorCode::kInvalidArgument, "ingest", "session already finalized");
  const std::int64_t t = frame.timestamp();
  if (t < 0) fail(ErrorCode::kInvalidArgument, "ingest", "negative frame index");
  if (last_frame_ && t <= *last_frame_) {
    fail(ErrorCode::kOutOfOrderFrame, "ingest",
         "frame " + std::to_string(t) + " after frame " + std::to_string(*last_frame_));
  }
  const auto& k = config_.scenario.camera.intrinsics;
  if (frame.width() != k.width || frame.height() != k.height) {
    fail(ErrorCode::kShapeMismatch, "ingest", "frame size differs from the session camera");
  }
  last_frame_ = t;

  const lic::ConfidenceMap& map = lic_.update(frame);
  const arc::FrameTrack track = tracker_.process(frame, map);
  std::optional<ImagePoint> center;
  if (track.estimate.valid) center = track.estimate.center;
  const guidance::FrameGuidance g = trial_.step(t, center);

  GuidanceUpdate u;
  u.frame = t;
  u.valid = track.estimate.valid;
  if (u.valid) {
    u.c = track.estimate.center;
    u.c_smoothed = track.estimate.smoothed_center;
  }
  u.q = g.q;
  u.instant_error = kNaN;
  if (g.cue) {
    u.cue = g.cue->color;
    u.instant_error = g.cue->instant_error;
  }
  u.running_error = g.running_error;
  u.high_tiles = lic::count_at_least(map, lic::kHighThreshold);
  u.medium_tiles = lic::count_at_least(map, lic::kMediumThreshold) - u.high_tiles;

  updates_.push_back(u.record_line());
  frame_digest_ = digest_frame(frame, frame_digest_);
  return u;
}

GuidanceUpdate Session::ingest_input(std::int64_t t, ImagePoint torch) {
  if (config_.mode != FeedMode::kDriver) fail(ErrorCode::kInvalidArgument, "ingest", "INPUT on a scripted session");
  if (!std::isfinite(torch.x) || !std::isfinite(torch.y)) fail(ErrorCode::kInvalidArgument, "ingest", "bad position");
  if (last_frame_ && t <= *last_frame_) {
    fail(ErrorCode::kOutOfOrderFrame, "ingest",
         "input " + std::to_string(t) + " after frame " + std::to_string(*last_frame_));
  }
  if (!strike_origin_) strike_origin_ = torch;
  const GrayFrame frame =
      sim::render_hdr_frame(config_.scenario, sim::truth_at(config_.scenario, t, torch, strike_origin_));
  GuidanceUpdate u = ingest_frame(frame);
  inputs_.push_back({t, torch});
  return u;
}

guidance::TrialReport Session::finalize() {
  if (!report_) report_ = trial_.finalize();
  return *report_;
}

std::string Session::header_text() const {
  SessionConfig shown = config_;
  if (config_.mode == FeedMode::kDriver) shown.scenario = driver_scenario(config_.scenario, inputs_);
  std::string out = "HEADER " + config_fields(shown) + "\n";
  std::istringstream scenario(sim::to_text(shown.scenario));
  std::string line;
  while (std::getline(scenario, line)) out += "SCENARIO " + line + "\n";
  out += "SEAM " + seam_line(seam_) + "\n";
  return out;
}

std::string Session::record_text() const {
  std::string out = header_text();
  for (const auto& u : updates_) out += u + "\n";
  if (report_) {
    out += "FOOTER " + footer_line(*report_) + " frames=" + std::to_string(updates_.size()) +
           " frame_digest=" + hex64(frame_digest_) + "\n";
    out += "HASH fnv1a64=" + hex64(fnv1a64(out)) + "\n";
  }
  return out;
}

ParsedRecord parse_record(std::string_view text) {
  constexpr const char* kStage = "record";
  auto corrupt = [](const std::string& msg) { fail(ErrorCode::kCorruptRecord, kStage, msg); };
  if (text.empty() || text.back() != '\n') corrupt("record does not end with a newline");
  const std::size_t hash_at = text.rfind("\nHASH ", text.size() - 1);
  if (hash_at == std::string_view::npos) corrupt("missing hash line");
  const std::string_view body = text.substr(0, hash_at + 1);
  const std::string_view hash_line = text.substr(hash_at + 1, text.size() - hash_at - 2);
  if (hash_line != "HASH fnv1a64=" + hex64(fnv1a64(body))) corrupt("hash mismatch");

  ParsedRecord rec;
  std::string scenario_text;
  auto lines = split(body.substr(0, body.size() - 1), '\n');
  enum class Part { kHeader, kScenario, kUpdates, kDone } part = Part::kHeader;
  std::optional<std::int64_t> last_frame;
  try {
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const std::string_view line = lines[i];
      const std::string where = " at line " + std::to_string(i + 1);
      if (i == 0) {
        if (line.substr(0, 7) != "HEADER ") corrupt("first line is not a header");
        rec.config = parse_config_fields(line.substr(7));
        part = Part::kScenario;
      } else if (part == Part::kScenario && line.substr(0, 9) == "SCENARIO ") {
        scenario_text += std::string(line.substr(9)) + "\n";
      } else if (part == Part::kScenario && line.substr(0, 5) == "SEAM ") {
        rec.seam = std::string(line.substr(5));
        rec.config.scenario = sim::parse_scenario(scenario_text);
        part = Part::kUpdates;
      } else if (part == Part::kUpdates && line.substr(0, 7) == "FOOTER ") {
        rec.footer = std::string(line.substr(7));
        part = Part::kDone;
      } else if (part == Part::kUpdates) {
        const auto f = split(line, ',');
        if (f.size() != 11) corrupt("update with " + std::to_string(f.size()) + " fields" + where);
        const auto frame = parse_int<std::int64_t>(f[0], kStage);
        if (last_frame && frame <= *last_frame) corrupt("frames out of order" + where);
        last_frame = frame;
        for (int j : {1, 2, 3, 4, 5, 6, 8, 9}) parse_double(f[j], kStage);
        if (f[7] != "green" && f[7] != "red" && f[7] != "blue" && f[7] != "none") corrupt("bad cue" + where);
        if (f[10] != "0" && f[10] != "1") corrupt("bad valid flag" + where);
        rec.updates.emplace_back(line);
      } else {
        corrupt("unexpected line" + where);
      }
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCorruptRecord) throw;
    corrupt(std::string("malformed record: ") + e.what());
  }
  if (part != Part::kDone) corrupt("record is truncated");
  return rec;
}

ReplayResult replay(std::string_view record_text) {
  const ParsedRecord rec = parse_record(record_text);
  Session session(rec.config);
  const auto truth = sim::plan_truth(rec.config.scenario, session.seam().path);
  for (const auto& line : rec.updates) {
    const auto frame = parse_int<std::int64_t>(split(line, ',')[0], "record");
    if (frame >= static_cast<std::int64_t>(truth.size())) {
      fail(ErrorCode::kCorruptRecord, "record", "frame " + std::to_string(frame) + " beyond the scenario");
    }
    if (rec.config.mode == FeedMode::kDriver) {
      const auto& wps = rec.config.scenario.script.waypoints;
      const auto it = std::find_if(wps.begin(), wps.end(), [&](const sim::Waypoint& w) { return w.t == frame; });
      if (it == wps.end()) fail(ErrorCode::kCorruptRecord, "record", "no input for frame " + std::to_string(frame));
      session.ingest_input(frame, it->p);
    } else {
      session.ingest_frame(sim::render_hdr_frame(rec.config.scenario, truth[static_cast<std::size_t>(frame)]));
    }
  }
  ReplayResult out;
  out.report = session.finalize();
  const std::string again = session.record_text();
  out.identical = again == record_text;
  if (!out.identical) {
    const auto a = split(record_text, '\n');
    const auto b = split(again, '\n');
    for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
      const std::string_view x = i < a.size() ? a[i] : std::string_view("<missing>");
      const std::string_view y = i < b.size() ? b[i] : std::string_view("<missing>");
      if (x != y) {
        out.first_difference = "line " + std::to_string(i + 1) + ": recorded '" + std::string(x) + "', replayed '" +
                               std::string(y) + "'";
        break;
      }
    }
  }
  return out;
}

std::optional<std::string> Subscription::next() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return dropped_ || closed_ || !queue_.empty(); });
  if (dropped_ || queue_.empty()) return std::nullopt;
  std::string m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

std::optional<std::string> Subscription::try_next() {
  std::lock_guard lock(mutex_);
  if (dropped_ || queue_.empty()) return std::nullopt;
  std::string m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

bool Subscription::dropped() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

void Subscription::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool Subscription::push(const std::string& message) {
  {
    std::lock_guard lock(mutex_);
    if (closed_ || dropped_) return false;
    if (queue_.size() >= limit_) {
      dropped_ = true;
      queue_.clear();
    } else {
      queue_.push_back(message);
    }
  }
  cv_.notify_all();
  return !dropped();
}

std::shared_ptr<Subscription> Broadcaster::subscribe(const std::vector<std::string>& preamble) {
  // The header does not count against the update budget.
  auto sub = std::make_shared<Subscription>(limit_ + preamble.size());
  std::lock_guard lock(mutex_);
  for (const auto& m : preamble) sub->push(m);
  subs_.push_back(sub);
  return sub;
}

void Broadcaster::publish(const std::string& message) {
  std::lock_guard lock(mutex_);
  std::erase_if(subs_, [&](const std::shared_ptr<Subscription>& s) { return !s->push(message); });
}

void Broadcaster::close_all() {
  std::lock_guard lock(mutex_);
  for (auto& s : subs_) s->close();
  subs_.clear();
}

std::size_t Broadcaster::subscriber_count() const {
  std::lock_guard lock(mutex_);
  return subs_.size();
}

std::string hello_message(const std::string& id, const SessionConfig& config) {
  return "HELLO session=" + id + " " + config_fields(config);
}

std::string error_message(const Error& e) {
  std::string msg = e.what();
  std::replace(msg.begin(), msg.end(), '\n', ' ');
  return "ERROR " + std::string(to_string(e.code())) + " " + (e.stage().empty() ? "-" : e.stage()) + " " + msg;
}

SessionService::SessionService(std::filesystem::path data_dir, std::size_t queue_limit)
    : data_dir_(std::move(data_dir)), queue_limit_(queue_limit) {}

std::string SessionService::next_id() {
  std::set<std::string> indexed;
  {
    std::ifstream in(sessions_dir() / "index.csv");
    std::string line;
    while (std::getline(in, line)) indexed.insert(line.substr(0, line.find(',')));
  }
  std::lock_guard lock(mutex_);
  while (true) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(++counter_));
    const std::string id = buf;
    if (!sessions_.count(id) && !indexed.count(id) && !std::filesystem::exists(sessions_dir() / (id + ".rec"))) return id;
  }
}

std::string SessionService::create_session(SessionConfig config) {
  std::string id = config.session_id.empty() ? next_id() : config.session_id;
  config.session_id = id;
  auto entry = std::make_shared<Entry>(queue_limit_);
  entry->session = std::make_unique<Session>(std::move(config));
  entry->header = {hello_message(id, entry->session->config()), "SEAM " + seam_line(entry->session->seam())};
  std::lock_guard lock(mutex_);
  if (!sessions_.emplace(id, entry).second) fail(ErrorCode::kInvalidConfig, "session", "session id in use: " + id);
  return id;
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorCode::kUnknownSession, "session", "unknown session " + id);
  return it->second;
}

GuidanceUpdate SessionService::ingest_frame(const std::string& id, const GrayFrame& frame) {
  auto e = find(id);
  std::lock_guard lock(e->pipeline);
  GuidanceUpdate u = e->session->ingest_frame(frame);
  e->broadcaster.publish("UPDATE " + u.wire_line());
  return u;
}

GuidanceUpdate SessionService::ingest_input(const std::string& id, std::int64_t t, ImagePoint torch) {
  auto e = find(id);
  std::lock_guard lock(e->pipeline);
  GuidanceUpdate u = e->session->ingest_input(t, torch);
  e->broadcaster.publish("UPDATE " + u.wire_line());
  return u;
}

guidance::TrialReport SessionService::finalize_session(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->pipeline);
  if (e->session->finished()) return *e->session->report();
  const guidance::TrialReport report = e->session->finalize();
  persist(id, e->session->record_text(), report.score);
  e->report_message = "REPORT " + footer_line(report);
  e->broadcaster.publish(*e->report_message);
  e->broadcaster.close_all();
  return report;
}

std::shared_ptr<Subscription> SessionService::subscribe(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->pipeline);
  if (e->report_message) {
    auto preamble = e->header;
    preamble.push_back(*e->report_message);
    auto sub = Broadcaster(queue_limit_).subscribe(preamble);
    sub->close();
    return sub;
  }
  return e->broadcaster.subscribe(e->header);
}

std::vector<std::string> SessionService::header_messages(const std::string& id) const { return find(id)->header; }

std::string SessionService::map_snapshot(const std::string& id) const {
  auto e = find(id);
  std::lock_guard lock(e->pipeline);
  return "MAP " + lic::serialize(e->session->confidence());
}

bool SessionService::finished(const std::string& id) const {
  auto e = find(id);
  std::lock_guard lock(e->pipeline);
  return e->session->finished();
}

void SessionService::run_scripted(const std::string& id, bool realtime) {
  auto e = find(id);
  std::vector<sim::FrameTruth> truth;
  {
    std::lock_guard lock(e->pipeline);
    truth = sim::plan_truth(e->session->config().scenario, e->session->seam().path);
  }
  const sim::Scenario& scenario = e->session->config().scenario;
  const auto period = std::chrono::duration<double>(1.0 / scenario.frame_rate_hz);
  auto due = std::chrono::steady_clock::now();
  for (const auto& t : truth) {
    if (realtime) {
      std::this_thread::sleep_until(due);
      due += std::chrono::duration_cast<std::chrono::steady_clock::duration>(period);
    }
    ingest_frame(id, sim::render_hdr_frame(scenario, t));
  }
  finalize_session(id);
}

void SessionService::abandon(const std::string& id) {
  std::shared_ptr<Entry> e;
  {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) return;
    e = it->second;
    if (!e->report_message) sessions_.erase(it);
  }
  if (!e->report_message) e->broadcaster.close_all();
}

std::filesystem::path SessionService::persist(const std::string& id, const std::string& record, double gamma) {
  namespace fs = std::filesystem;
  fs::create_directories(sessions_dir());
  const fs::path file = sessions_dir() / (id + ".rec");
  {
    std::ofstream out(file, std::ios::binary);
    if (!out) fail(ErrorCode::kIo, "persist", "cannot write " + file.string());
    out << record;
  }
  append_index(id, fs::relative(file, data_dir_).generic_string(), gamma);
  return file;
}

void SessionService::append_index(const std::string& id, const std::string& file, double gamma) {
  std::lock_guard lock(mutex_);
  std::filesystem::create_directories(sessions_dir());
  const auto index = sessions_dir() / "index.csv";
  const bool fresh = !std::filesystem::exists(index);
  std::ofstream out(index, std::ios::app);
  if (!out) fail(ErrorCode::kIo, "persist", "cannot write " + index.string());
  if (fresh) out << "session,file,gamma\n";
  out << id << ',' << file << ',' << format_g6(gamma) << '\n';
}

std::filesystem::path SessionService::lookup(const std::string& id) const {
  std::ifstream in(sessions_dir() / "index.csv");
  std::string line;
  std::optional<std::string> file;
  while (std::getline(in, line)) {
    const auto f = split(line, ',');
    if (f.size() == 3 && f[0] == id) file = std::string(f[1]);  // the latest entry wins
  }
  if (!file) fail(ErrorCode::kUnknownSession, "report", "no record for session " + id);
  return data_dir_ / *file;
}

}  // namespace weld::session
