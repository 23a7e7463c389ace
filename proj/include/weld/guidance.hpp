#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "weld/core_types.hpp"
#include "weld/seam_localizer.hpp"

namespace weld::guidance {

enum class Direction { kPlusX, kMinusX, kPlusY, kMinusY };
enum class CueColor { kGreen, kRed, kBlue };

std::string_view to_string(Direction d);
std::string_view to_string(CueColor c);

inline constexpr std::size_t kDirectionWindow = 20;
inline constexpr std::size_t kStartWindow = 5;
inline constexpr double kMinMotionPx = 5.0;

struct TargetSchedule {
  seam::SeamPath seam;
  double speed_mm_s = 4.0;
  std::int64_t start_time = 0;
  double frame_rate_hz = 10.0;
  /// Walk the seam from its last point towards its first.
  bool reversed = false;
};

struct Cue {
  CueColor color = CueColor::kGreen;
  ImagePoint relative_motion;  // v = Q - C
  double instant_error = 0.0;  // |v|
};

struct Sample {
  ImagePoint c;
  ImagePoint q;
};

/// Component-wise median of the given centers.
ImagePoint robust_start(std::span<const ImagePoint> centers);

/// Dominant axis of (window.back() - c_start). Needs exactly kDirectionWindow centers.
Direction estimate_direction(ImagePoint c_start, std::span<const ImagePoint> window);

/// Whether following `direction` means walking the seam from its end.
bool walks_backwards(const seam::SeamPath& seam, Direction direction);

/// 2D seam position at arc length `s_mm` from the seam's first point.
ImagePoint seam_point_2d(const seam::SeamPath& seam, double s_mm);

/// Arc length travelled along the walking direction at frame t.
double progress_mm(const TargetSchedule& schedule, std::int64_t t);

/// Seam point at arc length min(speed * elapsed, length), interpolated on the
/// 2D projection and rounded to the nearest pixel.
ImagePoint target_point(const TargetSchedule& schedule, std::int64_t t);

Cue cue(ImagePoint q, ImagePoint c, Direction direction, double tolerance_px);

/// |Cx - Qx| / Qx + |Cy - Qy| / Qy; throws DegenerateTarget for Q coordinates below 1 px.
double sample_error(ImagePoint c, ImagePoint q);
double average_error(std::span<const Sample> trajectory);
double score(double avg_error);

struct GuidanceConfig {
  double speed_mm_s = 4.0;
  double frame_rate_hz = 10.0;
  double tolerance_px = 12.0;
};

struct TrialReport {
  std::vector<Sample> trajectory;
  std::vector<std::int64_t> frames;  // frame index of each trajectory sample
  ImagePoint start_point;
  Direction direction = Direction::kPlusX;
  double avg_error = 0.0;
  double score = 0.0;
  std::size_t n = 0;
  std::size_t invalid_frames = 0;  // frames past direction lock without a detection
};

struct FrameGuidance {
  std::optional<ImagePoint> q;
  std::optional<Cue> cue;
  double running_error = 0.0;  // NaN until the first scored sample
  bool scored = false;
};

// Per-trial accumulator driven by the session, one call per frame in order.
// The target starts moving at the first valid detection; guidance and scoring
// begin once the direction is known.
class Trial {
 public:
  Trial(seam::SeamPath seam, GuidanceConfig config);

  FrameGuidance step(std::int64_t frame, std::optional<ImagePoint> center);
  TrialReport finalize() const;

  bool direction_known() const { return direction_.has_value(); }
  std::optional<Direction> direction() const { return direction_; }

 private:
  seam::SeamPath seam_;
  GuidanceConfig config_;
  std::optional<std::int64_t> start_time_;
  std::vector<ImagePoint> window_;
  std::optional<Direction> direction_;
  ImagePoint start_point_;
  TargetSchedule schedule_;
  std::vector<Sample> trajectory_;
  std::vector<std::int64_t> frames_;
  double error_sum_ = 0.0;
  std::size_t invalid_ = 0;
};

}  // namespace weld::guidance
