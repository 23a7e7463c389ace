#include "weld/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "weld/error.hpp"

namespace weld::guidance {

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::kPlusX: return "+x";
    case Direction::kMinusX: return "-x";
    case Direction::kPlusY: return "+y";
    case Direction::kMinusY: return "-y";
  }
  return "?";
}

std::string_view to_string(CueColor c) {
  switch (c) {
    case CueColor::kGreen: return "green";
    case CueColor::kRed: return "red";
    case CueColor::kBlue: return "blue";
  }
  return "?";
}

ImagePoint robust_start(std::span<const ImagePoint> centers) {
  if (centers.empty()) fail(ErrorCode::kInvalidArgument, "direction", "no centers");
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& c : centers) {
    xs.push_back(c.x);
    ys.push_back(c.y);
  }
  auto median = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  return {median(xs), median(ys)};
}

Direction estimate_direction(ImagePoint c_start, std::span<const ImagePoint> window) {
  if (window.size() != kDirectionWindow) {
    fail(ErrorCode::kInvalidArgument, "direction", "direction window must hold exactly 20 centers");
  }
  const double dx = window.back().x - c_start.x;
  const double dy = window.back().y - c_start.y;
  if (std::hypot(dx, dy) < kMinMotionPx) {
    fail(ErrorCode::kInsufficientMotion, "direction", "torch moved less than 5 px over the direction window");
  }
  if (std::abs(dx) >= std::abs(dy)) return dx >= 0.0 ? Direction::kPlusX : Direction::kMinusX;
  return dy >= 0.0 ? Direction::kPlusY : Direction::kMinusY;
}

bool walks_backwards(const seam::SeamPath& seam, Direction direction) {
  if (seam.points_2d.size() < 2) return false;
  const double dx = seam.points_2d.back().x - seam.points_2d.front().x;
  const double dy = seam.points_2d.back().y - seam.points_2d.front().y;
  switch (direction) {
    case Direction::kPlusX: return dx < 0.0;
    case Direction::kMinusX: return dx > 0.0;
    case Direction::kPlusY: return dy < 0.0;
    case Direction::kMinusY: return dy > 0.0;
  }
  return false;
}

ImagePoint seam_point_2d(const seam::SeamPath& seam, double s_mm) {
  const auto& p3 = seam.points_3d;
  const auto& p2 = seam.points_2d;
  if (p2.empty() || p2.size() != p3.size()) fail(ErrorCode::kInvalidArgument, "target", "seam path is empty");
  if (p2.size() == 1 || s_mm <= 0.0) return p2.front();
  double walked = 0.0;
  for (std::size_t i = 0; i + 1 < p3.size(); ++i) {
    const double step = euclidean_distance(p3[i], p3[i + 1]);
    if (walked + step >= s_mm) {
      const double f = step > 0.0 ? (s_mm - walked) / step : 0.0;
      return {p2[i].x + f * (p2[i + 1].x - p2[i].x), p2[i].y + f * (p2[i + 1].y - p2[i].y)};
    }
    walked += step;
  }
  return p2.back();
}

double progress_mm(const TargetSchedule& schedule, std::int64_t t) {
  if (t < schedule.start_time) fail(ErrorCode::kInvalidArgument, "target", "frame precedes the schedule start");
  if (!(schedule.speed_mm_s > 0.0 && schedule.frame_rate_hz > 0.0)) {
    fail(ErrorCode::kInvalidConfig, "target", "speed and frame rate must be positive");
  }
  const double elapsed_s = static_cast<double>(t - schedule.start_time) / schedule.frame_rate_hz;
  return std::min(schedule.speed_mm_s * elapsed_s, schedule.seam.length_mm);
}

ImagePoint target_point(const TargetSchedule& schedule, std::int64_t t) {
  const double s = progress_mm(schedule, t);
  const ImagePoint p = seam_point_2d(schedule.seam, schedule.reversed ? schedule.seam.length_mm - s : s);
  return {std::round(p.x), std::round(p.y)};
}

Cue cue(ImagePoint q, ImagePoint c, Direction direction, double tolerance_px) {
  Cue out;
  out.relative_motion = {q.x - c.x, q.y - c.y};
  out.instant_error = euclidean_distance(q, c);
  if (out.instant_error <= tolerance_px) {
    out.color = CueColor::kGreen;
    return out;
  }
  double along = 0.0;  // (C - Q) projected on the walking direction
  switch (direction) {
    case Direction::kPlusX: along = c.x - q.x; break;
    case Direction::kMinusX: along = q.x - c.x; break;
    case Direction::kPlusY: along = c.y - q.y; break;
    case Direction::kMinusY: along = q.y - c.y; break;
  }
  out.color = along > 0.0 ? CueColor::kBlue : CueColor::kRed;
  return out;
}

double sample_error(ImagePoint c, ImagePoint q) {
  if (q.x < 1.0 || q.y < 1.0) fail(ErrorCode::kDegenerateTarget, "score", "target coordinate below 1 px");
  return std::abs(c.x - q.x) / q.x + std::abs(c.y - q.y) / q.y;
}

double average_error(std::span<const Sample> trajectory) {
  if (trajectory.empty()) fail(ErrorCode::kInvalidArgument, "score", "empty trajectory");
  double sum = 0.0;
  for (const auto& s : trajectory) sum += sample_error(s.c, s.q);
  return sum / static_cast<double>(trajectory.size());
}

double score(double avg_error) {
  if (!(avg_error >= 0.0)) fail(ErrorCode::kInvalidArgument, "score", "average error must be non-negative");
  return std::clamp(100.0 * (1.0 - avg_error), 0.0, 100.0);
}

Trial::Trial(seam::SeamPath seam, GuidanceConfig config) : seam_(std::move(seam)), config_(config) {
  if (!(config_.speed_mm_s > 0.0 && config_.frame_rate_hz > 0.0 && config_.tolerance_px > 0.0)) {
    fail(ErrorCode::kInvalidConfig, "guidance", "speed, frame rate and tolerance must be positive");
  }
  if (seam_.points_2d.empty()) fail(ErrorCode::kInvalidConfig, "guidance", "empty seam path");
}

FrameGuidance Trial::step(std::int64_t frame, std::optional<ImagePoint> center) {
  FrameGuidance out;
  out.running_error = std::numeric_limits<double>::quiet_NaN();
  if (center && !start_time_) start_time_ = frame;
  if (center && !direction_) {
    window_.push_back(*center);
    if (window_.size() == kDirectionWindow) {
      const ImagePoint c_start = robust_start(std::span(window_).first(kStartWindow));
      try {
        direction_ = estimate_direction(c_start, window_);
        start_point_ = c_start;
        schedule_ = TargetSchedule{seam_, config_.speed_mm_s, *start_time_, config_.frame_rate_hz,
                                   walks_backwards(seam_, *direction_)};
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kInsufficientMotion) throw;
        window_.erase(window_.begin());
      }
    }
  }
  if (!direction_) return out;

  out.q = target_point(schedule_, frame);
  if (center) {
    error_sum_ += sample_error(*center, *out.q);
    trajectory_.push_back({*center, *out.q});
    frames_.push_back(frame);
    out.cue = cue(*out.q, *center, *direction_, config_.tolerance_px);
    out.scored = true;
  } else {
    ++invalid_;
  }
  if (!trajectory_.empty()) out.running_error = error_sum_ / static_cast<double>(trajectory_.size());
  return out;
}

TrialReport Trial::finalize() const {
  if (!direction_ || trajectory_.empty()) {
    fail(ErrorCode::kTooFewFrames, "finalize", "direction was never established; need at least 20 valid frames");
  }
  TrialReport r;
  r.trajectory = trajectory_;
  r.frames = frames_;
  r.start_point = start_point_;
  r.direction = *direction_;
  r.avg_error = average_error(trajectory_);
  r.score = score(r.avg_error);
  r.n = trajectory_.size();
  r.invalid_frames = invalid_;
  return r;
}

}  // namespace weld::guidance
