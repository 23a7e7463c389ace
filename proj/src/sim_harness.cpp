#include "weld/sim_harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "weld/error.hpp"
#include "weld/guidance.hpp"

namespace weld::sim {
namespace {

constexpr double kRadPerDeg = std::numbers::pi / 180.0;

// Shortest form that reads back to the same double.
std::string num(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& msg) {
  fail(ErrorCode::kParseError, "scenario", "line " + std::to_string(line_no) + ": " + msg);
}

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

// Table frame: z up, top plate surface at z = 0. Camera rows x_c, y_c, z_c.
struct Rig {
  Vec3 position;
  Vec3 xc;
  Vec3 yc;
  Vec3 zc;

  explicit Rig(const CameraSpec& cam) {
    const double tau = cam.tilt_deg * kRadPerDeg;
    position = {0.0, -cam.distance_mm * std::sin(tau), cam.distance_mm * std::cos(tau)};
    xc = {1.0, 0.0, 0.0};
    yc = {0.0, -std::cos(tau), -std::sin(tau)};
    zc = {0.0, std::sin(tau), -std::cos(tau)};
  }

  Point3 to_camera(Vec3 w) const {
    const Vec3 d = w - position;
    return {dot(xc, d), dot(yc, d), dot(zc, d)};
  }
  Vec3 ray_to_table(double rx, double ry, double rz) const { return rx * xc + ry * yc + rz * zc; }
};

// Workpiece-local frame: a along the seam, w across it, z up.
struct Local {
  Vec3 origin;
  Vec3 u;
  Vec3 n;

  explicit Local(const WorkpieceSpec& s) {
    const double th = s.orientation_deg * kRadPerDeg;
    origin = {s.center_x_mm, s.center_y_mm, 0.0};
    u = {std::cos(th), std::sin(th), 0.0};
    n = {-std::sin(th), std::cos(th), 0.0};
  }
  Vec3 to_table(double a, double w, double z) const { return origin + a * u + w * n + Vec3{0.0, 0.0, z}; }
  Vec3 from_table_dir(Vec3 d) const { return {dot(d, u), dot(d, n), d.z}; }
  Vec3 from_table_point(Vec3 p) const {
    const Vec3 d = p - origin;
    return {dot(d, u), dot(d, n), d.z};
  }
};

// Planar facet alpha*w + beta*z + gamma = 0 restricted to a w range and z range.
struct Facet {
  double alpha;
  double beta;
  double gamma;
  double w_lo;
  double w_hi;
  double z_lo;
  double z_hi;
};

std::vector<Facet> facets_for(const WorkpieceSpec& s) {
  const double half = s.plate_width_mm / 2.0;
  const double d = s.groove_depth_mm;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<Facet> f;
  if (s.kind == WorkpieceKind::kFillet) {
    const double h = d;  // 90° V: half-width equals depth
    f.push_back({0.0, 1.0, 0.0, -half, -h, -inf, inf});
    f.push_back({0.0, 1.0, 0.0, h, half, -inf, inf});
    f.push_back({d / h, 1.0, d, -h, 0.0, -inf, inf});
    f.push_back({-d / h, 1.0, d, 0.0, h, -inf, inf});
  } else {
    const double g = s.gap_mm / 2.0;
    f.push_back({0.0, 1.0, 0.0, -half, -g, -inf, inf});
    f.push_back({0.0, 1.0, 0.0, g, half, -inf, inf});
    f.push_back({0.0, 1.0, d, -g, g, -inf, inf});
    f.push_back({1.0, 0.0, g, -g, -g, -d, 0.0});
    f.push_back({1.0, 0.0, -g, g, g, -d, 0.0});
  }
  return f;
}

double gaussian(double d2, double sigma) { return std::exp(-d2 / (2.0 * sigma * sigma)); }

void add_blob(std::vector<double>& acc, int w, int h, ImagePoint c, double peak, double sigma) {
  const double reach = 6.0 * sigma;
  const int x0 = std::max(0, static_cast<int>(std::floor(c.x - reach)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(c.x + reach)));
  const int y0 = std::max(0, static_cast<int>(std::floor(c.y - reach)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(c.y + reach)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - c.x;
      const double dy = y - c.y;
      acc[static_cast<std::size_t>(y) * w + x] += peak * gaussian(dx * dx + dy * dy, sigma);
    }
  }
}

ImagePoint interpolate_waypoints(const std::vector<Waypoint>& wps, std::int64_t t) {
  if (t <= wps.front().t) return wps.front().p;
  for (std::size_t i = 0; i + 1 < wps.size(); ++i) {
    if (t == wps[i + 1].t) return wps[i + 1].p;
    if (t < wps[i + 1].t) {
      const double span = static_cast<double>(wps[i + 1].t - wps[i].t);
      const double f = span > 0.0 ? static_cast<double>(t - wps[i].t) / span : 1.0;
      return {wps[i].p.x + f * (wps[i + 1].p.x - wps[i].p.x), wps[i].p.y + f * (wps[i + 1].p.y - wps[i].p.y)};
    }
  }
  return wps.back().p;
}

std::string_view mode_name(ScriptMode m) {
  switch (m) {
    case ScriptMode::kPerfect: return "perfect";
    case ScriptMode::kLagging: return "lagging";
    case ScriptMode::kLeading: return "leading";
    case ScriptMode::kJitter: return "jitter";
    case ScriptMode::kOffset: return "offset";
    case ScriptMode::kFixed: return "fixed";
    case ScriptMode::kWaypoints: return "waypoints";
  }
  return "perfect";
}

}  // namespace

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

void validate(const Scenario& s) {
  auto bad = [](const std::string& msg) { fail(ErrorCode::kInvalidConfig, "scenario", msg); };
  const auto& w = s.workpiece;
  if (!(w.thickness_mm > 0.0)) bad("thickness_mm must be positive");
  if (!(w.groove_depth_mm > 0.0)) bad("groove_depth_mm must be positive");
  if (!(w.seam_length_mm > 0.0)) bad("seam length must be positive");
  if (!(w.plate_width_mm > 2.0 * std::max(w.groove_depth_mm, w.gap_mm / 2.0))) bad("plates too narrow for the groove");
  if (w.kind == WorkpieceKind::kButt && !(w.gap_mm > 0.0)) bad("gap_mm must be positive");
  if (!s.camera.intrinsics.valid()) bad("invalid intrinsics");
  if (!(s.camera.distance_mm > w.groove_depth_mm)) bad("camera too close");
  if (!(s.frame_rate_hz > 0.0)) bad("frame_rate_hz must be positive");
  if (s.frames <= 0) bad("frames must be positive");
  if (!(s.background >= 0.0 && s.background <= 255.0)) bad("background outside [0, 255]");
  if (!(s.sigma_arc_px > 0.0)) bad("sigma_arc_px must be positive");
  if (!(s.depth_noise_mm >= 0.0 && s.pixel_noise >= 0.0)) bad("noise must be non-negative");
  if (!(s.script.speed_mm_s > 0.0 && s.script.speed_factor > 0.0)) bad("speed must be positive");
  if (!(s.occlusion.fraction >= 0.0 && s.occlusion.fraction < 1.0)) bad("occlusion fraction must be in [0, 1)");
  if (s.arc_on_start < 0) bad("arc_on start must be non-negative");
  if (s.script.mode == ScriptMode::kWaypoints && s.script.waypoints.empty()) bad("waypoint script without waypoints");
  for (std::size_t i = 1; i < s.script.waypoints.size(); ++i) {
    if (s.script.waypoints[i].t < s.script.waypoints[i - 1].t) bad("waypoints must be ordered by time");
  }
  for (const auto& e : s.events) {
    if (e.start < 0 || e.end < e.start || e.end > s.frames) bad("event outside the stream");
    if (!(e.sigma_px > 0.0)) bad("event sigma must be positive");
  }
}

Scenario parse_scenario(std::string_view text) {
  Scenario s;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    auto read = [&](auto&... out) {
      if (!((ls >> out) && ...)) parse_fail(line_no, "bad or missing value for '" + key + "'");
    };
    if (key == "name") {
      read(s.name);
    } else if (key == "kind") {
      std::string v;
      read(v);
      if (v == "fillet") {
        s.workpiece.kind = WorkpieceKind::kFillet;
      } else if (v == "butt") {
        s.workpiece.kind = WorkpieceKind::kButt;
      } else {
        parse_fail(line_no, "unknown kind '" + v + "'");
      }
    } else if (key == "thickness_mm") {
      read(s.workpiece.thickness_mm);
    } else if (key == "groove_depth_mm") {
      read(s.workpiece.groove_depth_mm);
    } else if (key == "gap_mm") {
      read(s.workpiece.gap_mm);
    } else if (key == "seam") {
      read(s.workpiece.seam_length_mm, s.workpiece.orientation_deg, s.workpiece.center_x_mm, s.workpiece.center_y_mm);
    } else if (key == "plate_width_mm") {
      read(s.workpiece.plate_width_mm);
    } else if (key == "camera") {
      read(s.camera.distance_mm, s.camera.tilt_deg);
    } else if (key == "intrinsics") {
      auto& k = s.camera.intrinsics;
      read(k.fx, k.fy, k.cx, k.cy, k.width, k.height);
    } else if (key == "frame_rate_hz") {
      read(s.frame_rate_hz);
    } else if (key == "frames") {
      read(s.frames);
    } else if (key == "seed") {
      read(s.seed);
    } else if (key == "background") {
      read(s.background);
    } else if (key == "sigma_arc_px") {
      read(s.sigma_arc_px);
    } else if (key == "depth_noise_mm") {
      read(s.depth_noise_mm);
    } else if (key == "pixel_noise") {
      read(s.pixel_noise);
    } else if (key == "script") {
      std::string v;
      read(v);
      bool found = false;
      for (auto m : {ScriptMode::kPerfect, ScriptMode::kLagging, ScriptMode::kLeading, ScriptMode::kJitter,
                     ScriptMode::kOffset, ScriptMode::kFixed, ScriptMode::kWaypoints}) {
        if (mode_name(m) == v) {
          s.script.mode = m;
          found = true;
        }
      }
      if (!found) parse_fail(line_no, "unknown script '" + v + "'");
    } else if (key == "speed_mm_s") {
      read(s.script.speed_mm_s);
    } else if (key == "speed_factor") {
      read(s.script.speed_factor);
    } else if (key == "jitter_px") {
      read(s.script.jitter_px);
    } else if (key == "target_error") {
      read(s.script.target_error);
    } else if (key == "fixed_position") {
      read(s.script.fixed_position.x, s.script.fixed_position.y);
    } else if (key == "direction") {
      std::string v;
      read(v);
      if (v != "forward" && v != "reverse") parse_fail(line_no, "direction must be forward or reverse");
      s.script.reverse = v == "reverse";
    } else if (key == "occlusion") {
      read(s.occlusion.fraction, s.occlusion.angle_deg);
    } else if (key == "arc_on") {
      read(s.arc_on_start, s.arc_on_end);
    } else if (key == "event") {
      NoiseEvent e;
      read(e.start, e.end, e.position.x, e.position.y, e.peak, e.sigma_px);
      s.events.push_back(e);
    } else if (key == "strike") {
      read(s.strike.from, s.strike.peak, s.strike.sigma_px);
    } else if (key == "waypoint") {
      Waypoint w;
      read(w.t, w.p.x, w.p.y);
      s.script.waypoints.push_back(w);
    } else {
      parse_fail(line_no, "unknown directive '" + key + "'");
    }
    std::string extra;
    if (ls >> extra) parse_fail(line_no, "unexpected trailing value '" + extra + "'");
  }
  validate(s);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "scenario", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string to_text(const Scenario& s) {
  std::ostringstream o;
  const auto& w = s.workpiece;
  const auto& k = s.camera.intrinsics;
  o << "name " << s.name << '\n';
  o << "kind " << (w.kind == WorkpieceKind::kFillet ? "fillet" : "butt") << '\n';
  o << "thickness_mm " << num(w.thickness_mm) << '\n';
  o << "groove_depth_mm " << num(w.groove_depth_mm) << '\n';
  o << "gap_mm " << num(w.gap_mm) << '\n';
  o << "seam " << num(w.seam_length_mm) << ' ' << num(w.orientation_deg) << ' ' << num(w.center_x_mm) << ' '
    << num(w.center_y_mm) << '\n';
  o << "plate_width_mm " << num(w.plate_width_mm) << '\n';
  o << "camera " << num(s.camera.distance_mm) << ' ' << num(s.camera.tilt_deg) << '\n';
  o << "intrinsics " << num(k.fx) << ' ' << num(k.fy) << ' ' << num(k.cx) << ' ' << num(k.cy) << ' ' << k.width << ' '
    << k.height << '\n';
  o << "frame_rate_hz " << num(s.frame_rate_hz) << '\n';
  o << "frames " << s.frames << '\n';
  o << "seed " << s.seed << '\n';
  o << "background " << num(s.background) << '\n';
  o << "sigma_arc_px " << num(s.sigma_arc_px) << '\n';
  o << "depth_noise_mm " << num(s.depth_noise_mm) << '\n';
  o << "pixel_noise " << num(s.pixel_noise) << '\n';
  o << "script " << mode_name(s.script.mode) << '\n';
  o << "speed_mm_s " << num(s.script.speed_mm_s) << '\n';
  o << "speed_factor " << num(s.script.speed_factor) << '\n';
  o << "jitter_px " << num(s.script.jitter_px) << '\n';
  o << "target_error " << num(s.script.target_error) << '\n';
  o << "fixed_position " << num(s.script.fixed_position.x) << ' ' << num(s.script.fixed_position.y) << '\n';
  o << "direction " << (s.script.reverse ? "reverse" : "forward") << '\n';
  o << "occlusion " << num(s.occlusion.fraction) << ' ' << num(s.occlusion.angle_deg) << '\n';
  o << "arc_on " << s.arc_on_start << ' ' << s.arc_on_end << '\n';
  for (const auto& e : s.events) {
    o << "event " << e.start << ' ' << e.end << ' ' << num(e.position.x) << ' ' << num(e.position.y) << ' '
      << num(e.peak) << ' ' << num(e.sigma_px) << '\n';
  }
  o << "strike " << s.strike.from << ' ' << num(s.strike.peak) << ' ' << num(s.strike.sigma_px) << '\n';
  for (const auto& wp : s.script.waypoints) {
    o << "waypoint " << wp.t << ' ' << num(wp.p.x) << ' ' << num(wp.p.y) << '\n';
  }
  return o.str();
}

Workpiece build_workpiece(const WorkpieceSpec& spec, const CameraSpec& camera, std::uint64_t seed,
                          double depth_noise_mm) {
  const Rig rig(camera);
  const Local local(spec);
  const auto facets = facets_for(spec);
  const Intrinsics& k = camera.intrinsics;
  const double half_len = spec.seam_length_mm / 2.0;
  const Vec3 origin_local = local.from_table_point(rig.position);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);

  Workpiece out;
  out.cloud.intrinsics = k;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const double rx = (u - k.cx) / k.fx;
      const double ry = (v - k.cy) / k.fy;
      const double norm = std::sqrt(rx * rx + ry * ry + 1.0);
      const Vec3 dir_table = (1.0 / norm) * rig.ray_to_table(rx, ry, 1.0);
      const Vec3 d = local.from_table_dir(dir_table);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& f : facets) {
        const double denom = f.alpha * d.y + f.beta * d.z;
        if (std::abs(denom) < 1e-12) continue;
        const double t = -(f.alpha * origin_local.y + f.beta * origin_local.z + f.gamma) / denom;
        if (!(t > 0.0) || t >= best) continue;
        const double a = origin_local.x + t * d.x;
        const double w = origin_local.y + t * d.y;
        const double z = origin_local.z + t * d.z;
        const double eps = 1e-9;
        if (std::abs(a) > half_len) continue;
        if (w < f.w_lo - eps || w > f.w_hi + eps || z < f.z_lo - eps || z > f.z_hi + eps) continue;
        best = t;
      }
      if (!std::isfinite(best)) continue;
      const double t = best + depth_noise_mm * rng.normal();
      out.cloud.points.push_back(rig.to_camera(rig.position + t * dir_table));
    }
  }

  const double bottom = -spec.groove_depth_mm;
  const int steps = std::max(1, static_cast<int>(std::ceil(spec.seam_length_mm)));
  for (int i = 0; i <= steps; ++i) {
    const double a = -half_len + spec.seam_length_mm * i / steps;
    const Point3 p = rig.to_camera(local.to_table(a, 0.0, bottom));
    out.truth.points_3d.push_back(p);
    out.truth.points_2d.push_back(project(k, p).value_or(ImagePoint{}));
    if (i > 0) out.truth.length_mm += euclidean_distance(out.truth.points_3d[i - 1], p);
  }
  return out;
}

GrayFrame render_hdr_frame(const Scenario& s, const FrameTruth& truth) {
  const int w = s.camera.intrinsics.width;
  const int h = s.camera.intrinsics.height;
  std::vector<double> acc(static_cast<std::size_t>(w) * h, s.background);
  if (truth.arc_center) add_blob(acc, w, h, *truth.arc_center, 255.0, s.sigma_arc_px);
  if (truth.strike_center) add_blob(acc, w, h, *truth.strike_center, s.strike.peak, s.strike.sigma_px);
  for (std::size_t i : truth.active_events) {
    const auto& e = s.events[i];
    add_blob(acc, w, h, e.position, e.peak, e.sigma_px);
  }
  if (s.pixel_noise > 0.0) {
    Rng rng(s.seed ^ (0xbf58476d1ce4e5b9ULL * static_cast<std::uint64_t>(truth.frame + 1)));
    for (double& v : acc) v += s.pixel_noise * rng.normal();
  }
  if (truth.arc_center && truth.occluded) {
    // Torch body: a dark sector anchored at the arc center.
    const ImagePoint c = *truth.arc_center;
    const double reach = 4.0 * s.sigma_arc_px;
    const double half_width = s.occlusion.fraction * 180.0;
    for (int y = std::max(0, static_cast<int>(c.y - reach)); y <= std::min(h - 1, static_cast<int>(c.y + reach)); ++y) {
      for (int x = std::max(0, static_cast<int>(c.x - reach)); x <= std::min(w - 1, static_cast<int>(c.x + reach));
           ++x) {
        const double dx = x - c.x;
        const double dy = y - c.y;
        if (dx * dx + dy * dy > reach * reach || (dx == 0.0 && dy == 0.0)) continue;
        const double ang = std::atan2(dy, dx) / kRadPerDeg;
        const double diff = std::abs(std::remainder(ang - s.occlusion.angle_deg, 360.0));
        if (diff <= half_width) acc[static_cast<std::size_t>(y) * w + x] = 0.0;
      }
    }
  }
  GrayFrame out(w, h, 0, truth.frame);
  auto px = out.pixels();
  for (std::size_t i = 0; i < acc.size(); ++i) {
    px[i] = static_cast<std::uint8_t>(std::clamp(std::round(acc[i]), 0.0, 255.0));
  }
  return out;
}

FrameTruth truth_at(const Scenario& s, std::int64_t t, std::optional<ImagePoint> arc_center,
                    std::optional<ImagePoint> strike_origin) {
  FrameTruth f;
  f.frame = t;
  f.arc_center = arc_center;
  f.occluded = arc_center && s.occlusion.fraction > 0.0;
  if (s.strike.from >= 0 && t >= s.strike.from && strike_origin) f.strike_center = strike_origin;
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    if (t >= s.events[i].start && t < s.events[i].end) f.active_events.push_back(i);
  }
  return f;
}

std::vector<FrameTruth> plan_truth(const Scenario& s, const seam::SeamPath& torch_seam) {
  validate(s);
  const auto& script = s.script;
  guidance::TargetSchedule schedule{torch_seam, script.speed_mm_s, s.arc_on_start, s.frame_rate_hz, script.reverse};
  if (script.mode == ScriptMode::kLagging || script.mode == ScriptMode::kLeading) {
    schedule.speed_mm_s *= script.speed_factor;
  }
  Rng jitter_rng(s.seed ^ 0x94d049bb133111ebULL);
  double offset_owed = 0.0;  // error-diffusion balance for the offset script
  std::optional<ImagePoint> strike_at;

  std::vector<FrameTruth> out;
  const std::int64_t arc_end = s.resolved_arc_end();
  for (std::int64_t t = 0; t < s.frames; ++t) {
    std::optional<ImagePoint> arc;
    if (t >= s.arc_on_start && t < arc_end) {
      ImagePoint c;
      switch (script.mode) {
        case ScriptMode::kPerfect:
        case ScriptMode::kLagging:
        case ScriptMode::kLeading:
          c = guidance::target_point(schedule, t);
          break;
        case ScriptMode::kJitter:
          c = guidance::target_point(schedule, t);
          c.x += script.jitter_px * jitter_rng.normal();
          c.y += script.jitter_px * jitter_rng.normal();
          break;
        case ScriptMode::kOffset: {
          // Integer vertical offsets whose running per-sample error tracks target_error.
          c = guidance::target_point(schedule, t);
          offset_owed += script.target_error;
          const double dy = std::round(offset_owed * c.y);
          offset_owed -= dy / c.y;
          c.y += dy;
          break;
        }
        case ScriptMode::kFixed:
          c = script.fixed_position;
          break;
        case ScriptMode::kWaypoints:
          c = interpolate_waypoints(script.waypoints, t);
          break;
      }
      arc = c;
      if (!strike_at) strike_at = c;
    }
    out.push_back(truth_at(s, t, arc, strike_at));
  }
  return out;
}

ScenarioRun run_scenario(const Scenario& s, const seam::SeamConfig& seam_config) {
  validate(s);
  ScenarioRun run;
  run.workpiece = build_workpiece(s.workpiece, s.camera, s.seed, s.depth_noise_mm);
  try {
    run.reference_seam = seam::localize_seam(run.workpiece.cloud, seam_config).path;
  } catch (const Error&) {
    run.reference_seam.reset();
  }
  run.truth = plan_truth(s, run.reference_seam ? *run.reference_seam : run.workpiece.truth);
  run.frames.reserve(run.truth.size());
  for (const auto& t : run.truth) run.frames.push_back(render_hdr_frame(s, t));
  return run;
}

std::string to_pgm(const GrayFrame& frame) {
  std::string out = "P5\n" + std::to_string(frame.width()) + ' ' + std::to_string(frame.height()) + "\n255\n";
  out.append(reinterpret_cast<const char*>(frame.pixels().data()), frame.pixels().size());
  return out;
}

void export_run(const ScenarioRun& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream truth(dir / "truth.csv");
  if (!truth) fail(ErrorCode::kIo, "export", "cannot write " + (dir / "truth.csv").string());
  truth << "frame,arc_x,arc_y,arc_on,occluded,strike,events\n";
  for (std::size_t i = 0; i < run.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06zu.pgm", i);
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) fail(ErrorCode::kIo, "export", "cannot write " + (dir / name).string());
    f << to_pgm(run.frames[i]);
    const auto& t = run.truth[i];
    std::string events;
    for (std::size_t e : t.active_events) events += (events.empty() ? "" : ";") + std::to_string(e);
    truth << t.frame << ',' << (t.arc_center ? format_g6(t.arc_center->x) : "nan") << ','
          << (t.arc_center ? format_g6(t.arc_center->y) : "nan") << ',' << (t.arc_center ? 1 : 0) << ','
          << (t.occluded ? 1 : 0) << ',' << (t.strike_center ? 1 : 0) << ',' << events << '\n';
  }
}

}  // namespace weld::sim
