#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "weld/core_types.hpp"
#include "weld/seam_localizer.hpp"

namespace weld::sim {

enum class WorkpieceKind { kFillet, kButt };

// Two plates on a table, seam running through `center` at `orientation_deg`
// (counter-clockwise from the table x axis). Fillet joints are modelled as a
// 90° V-groove, butt joints as a flat-floored gap.
struct WorkpieceSpec {
  WorkpieceKind kind = WorkpieceKind::kFillet;
  double thickness_mm = 10.0;
  double groove_depth_mm = 10.0;
  double gap_mm = 6.0;
  double seam_length_mm = 300.0;
  double orientation_deg = 0.0;
  double center_x_mm = -20.0;
  double center_y_mm = 40.0;
  double plate_width_mm = 120.0;

  friend bool operator==(const WorkpieceSpec&, const WorkpieceSpec&) = default;
};

// Camera looks at the table origin from `distance_mm`, tilted `tilt_deg`
// off the table normal about the table x axis.
struct CameraSpec {
  Intrinsics intrinsics;
  double distance_mm = 500.0;
  double tilt_deg = 10.0;

  friend bool operator==(const CameraSpec& a, const CameraSpec& b) {
    const auto& p = a.intrinsics;
    const auto& q = b.intrinsics;
    return p.fx == q.fx && p.fy == q.fy && p.cx == q.cx && p.cy == q.cy && p.width == q.width &&
           p.height == q.height && a.distance_mm == b.distance_mm && a.tilt_deg == b.tilt_deg;
  }
};

enum class ScriptMode { kPerfect, kLagging, kLeading, kJitter, kOffset, kFixed, kWaypoints };

struct Waypoint {
  std::int64_t t = 0;
  ImagePoint p;
  friend bool operator==(const Waypoint&, const Waypoint&) = default;
};

struct TorchScript {
  ScriptMode mode = ScriptMode::kPerfect;
  double speed_mm_s = 4.0;
  double speed_factor = 1.0;  // lagging / leading multiplier
  double jitter_px = 0.0;
  double target_error = 0.0;  // per-sample error for the offset script
  bool reverse = false;
  ImagePoint fixed_position{160.0, 240.0};
  std::vector<Waypoint> waypoints;

  friend bool operator==(const TorchScript&, const TorchScript&) = default;
};

struct Occlusion {
  double fraction = 0.0;    // share of the full circle that is masked
  double angle_deg = 90.0;  // sector bisector, image coordinates (y down)
  friend bool operator==(const Occlusion&, const Occlusion&) = default;
};

struct NoiseEvent {
  std::int64_t start = 0;  // first frame
  std::int64_t end = 0;    // one past the last frame
  ImagePoint position;
  double peak = 255.0;
  double sigma_px = 12.0;
  friend bool operator==(const NoiseEvent&, const NoiseEvent&) = default;
};

// Glow left at the point where the arc was struck, active from `from` on.
struct StrikeGlow {
  std::int64_t from = -1;  // negative disables
  double peak = 255.0;
  double sigma_px = 20.0;
  friend bool operator==(const StrikeGlow&, const StrikeGlow&) = default;
};

struct Scenario {
  std::string name = "unnamed";
  WorkpieceSpec workpiece;
  CameraSpec camera;
  double frame_rate_hz = 10.0;
  std::int64_t frames = 300;
  std::uint64_t seed = 1;
  double background = 12.0;
  double sigma_arc_px = 12.0;
  double depth_noise_mm = 0.2;
  double pixel_noise = 0.0;
  TorchScript script;
  Occlusion occlusion;
  std::int64_t arc_on_start = 0;
  std::int64_t arc_on_end = -1;  // negative: until the last frame
  std::vector<NoiseEvent> events;
  StrikeGlow strike;

  friend bool operator==(const Scenario&, const Scenario&) = default;
  std::int64_t resolved_arc_end() const { return arc_on_end < 0 ? frames : arc_on_end; }
};

/// Parses the line-oriented scenario format (see docs/scenario_format.md).
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);
/// Canonical text; parse_scenario(to_text(s)) == s.
std::string to_text(const Scenario& scenario);
void validate(const Scenario& scenario);

// Deterministic generator: std::mt19937_64 words (fixed by the standard)
// mapped to doubles by their top 53 bits, normals by Box-Muller. The
// distributions are written out here because the standard library's are
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  double uniform();  // [0, 1)
  double normal();   // N(0, 1)

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

struct Workpiece {
  PointCloud cloud;
  seam::SeamPath truth;  // groove bottom from seam start to seam end
};

/// Ray-casts every pixel against the workpiece surface (one point per hit).
Workpiece build_workpiece(const WorkpieceSpec& spec, const CameraSpec& camera, std::uint64_t seed,
                          double depth_noise_mm);

struct FrameTruth {
  std::int64_t frame = 0;
  std::optional<ImagePoint> arc_center;
  std::optional<ImagePoint> strike_center;
  bool occluded = false;
  std::vector<std::size_t> active_events;
};

/// Background + Gaussian arc + occlusion sector + reflections + strike glow,
/// rounded and clipped to [0, 255].
GrayFrame render_hdr_frame(const Scenario& scenario, const FrameTruth& truth);

struct ScenarioRun {
  Workpiece workpiece;
  std::optional<seam::SeamPath> reference_seam;  // what the engine localizes, if it can
  std::vector<FrameTruth> truth;
  std::vector<GrayFrame> frames;
};

/// Plans the torch path against the seam the engine will localize (falling
/// back to the true seam when localization fails) and renders every frame.
ScenarioRun run_scenario(const Scenario& scenario, const seam::SeamConfig& seam_config = {});

/// Truth for one frame given the arc position (if lit) and the strike point.
FrameTruth truth_at(const Scenario& scenario, std::int64_t t, std::optional<ImagePoint> arc_center,
                    std::optional<ImagePoint> strike_origin);

/// Arc center and strike point for every frame, without rendering.
std::vector<FrameTruth> plan_truth(const Scenario& scenario, const seam::SeamPath& torch_seam);

/// Writes frame_NNNNNN.pgm files and truth.csv into `dir`.
void export_run(const ScenarioRun& run, const std::filesystem::path& dir);

std::string to_pgm(const GrayFrame& frame);

}  // namespace weld::sim
