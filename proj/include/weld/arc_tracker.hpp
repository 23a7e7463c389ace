#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <vector>

#include "weld/core_types.hpp"
#include "weld/lic_map.hpp"

namespace weld::arc {

/// Closed boundary polygon of one connected component; the edge from the
/// last point back to the first is implicit.
struct Contour {
  std::vector<ImagePoint> points;
  double area = 0.0;
};

struct Circle {
  ImagePoint center;
  double radius = 0.0;
};

struct TrackerConfig {
  int binarize_threshold = 220;
  double area_min = 30.0;
  double area_max = 20000.0;
  /// Negative means 40 px scaled by the frame diagonal relative to 640x480.
  double gate_px = -1.0;
  double process_noise = 1.0;      // px^2 / frame^2
  double measurement_noise = 4.0;  // px^2
  /// Consecutive misses after which the previous center is forgotten.
  int reacquire_after = 10;

  double resolved_gate(int width, int height) const;
};

// Constant-velocity model over (x, y, vx, vy), one step per frame.
struct Kalman {
  Eigen::Vector4d x = Eigen::Vector4d::Zero();
  Eigen::Matrix4d P = Eigen::Matrix4d::Identity();
  bool initialized = false;

  void reset(ImagePoint z, double measurement_noise);
  void predict(double process_noise);
  void correct(ImagePoint z, double measurement_noise);
  ImagePoint position() const { return {x(0), x(1)}; }
};

struct TrackerState {
  std::optional<ImagePoint> prev_center;
  Kalman kalman;
  double gate_distance = 40.0;
  int misses = 0;
};

struct ArcEstimate {
  ImagePoint center;
  double radius = 0.0;
  ImagePoint smoothed_center;
  bool valid = false;
  std::size_t candidates = 0;
};

struct TrackResult {
  ArcEstimate estimate;
  TrackerState state;
};

GrayFrame binarize(const GrayFrame& frame, int threshold);

/// Outer boundary of every 8-connected component, found by Moore-neighbour
/// tracing. Components are reported in raster order of their first pixel.
/// Points run so that the signed shoelace area in pixel coordinates is
/// positive (counter-clockwise in the usual y-up reading of the formula).
std::vector<Contour> extract_contours(const GrayFrame& binary);

double signed_area(std::span<const ImagePoint> polygon);
double contour_area(std::span<const ImagePoint> polygon);

/// Keeps contours with area_min < area < area_max, order preserved.
std::vector<Contour> dimension_filter(std::span<const Contour> contours, double area_min, double area_max);

/// Keeps contours whose bounding box touches a tile with p >= 0.65.
std::vector<Contour> confidence_gate(std::span<const Contour> contours, const lic::ConfidenceMap& map);

/// Welzl's algorithm, iterative form, on a deterministically shuffled copy.
Circle min_enclosing_circle(std::span<const ImagePoint> points);

TrackResult track_arc(std::span<const Contour> contours, TrackerState state, const TrackerConfig& config);

/// Centroid of the largest-area contour; ties go to the earliest contour.
ImagePoint baseline_contour_center(std::span<const Contour> contours);

/// Pixel centroid of every 8-connected component, in raster order.
std::vector<ImagePoint> baseline_intensity_centers(const GrayFrame& binary);

struct FrameTrack {
  ArcEstimate estimate;
  std::vector<Contour> contours;  // all traced contours, before filtering
  std::size_t after_dimension = 0;
  std::size_t after_gate = 0;
};

// Per-stream wrapper: binarize, contours, area filter, confidence gate, track.
class ArcTracker {
 public:
  ArcTracker(TrackerConfig config, int width, int height);

  FrameTrack process(const GrayFrame& frame, const lic::ConfidenceMap& map);
  const TrackerState& state() const { return state_; }

 private:
  TrackerConfig config_;
  TrackerState state_;
};

}  // namespace weld::arc
