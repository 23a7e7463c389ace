#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "weld/core_types.hpp"

namespace weld::seam {

/// Plane n·p + d = 0 with unit normal oriented towards the camera, so the
/// camera origin has positive signed distance.
struct Plane {
  Point3 normal{0.0, 0.0, -1.0};
  double offset = 0.0;

  double signed_distance(const Point3& p) const { return normal.x * p.x + normal.y * p.y + normal.z * p.z + offset; }
  /// Distance below the surface, i.e. away from the camera. Positive inside a groove.
  double depth_below(const Point3& p) const { return -signed_distance(p); }
};

struct SeamConfig {
  double depth_threshold_mm = 3.0;
  int knn = 8;
  std::size_t min_groove_points = 50;
  int denoise_kernel = 3;
  double canny_low = 50.0;
  double canny_high = 150.0;
  double max_segment_deviation_px = 1.5;
  /// Negative means 25% of the image diagonal.
  double min_length_px = -1.0;
  double clearance_deg = 10.0;
  double lift_stride_px = 4.0;
  double lift_radius_px = 3.0;
  /// Points within this depth band of the deepest local point count as the groove bottom.
  double bottom_band_mm = 0.75;
  double max_hole_fraction = 0.2;

  double resolved_min_length(const Intrinsics& k) const {
    return min_length_px >= 0.0 ? min_length_px : 0.25 * k.diagonal();
  }
};

/// Groove candidates G, a subset of the source cloud, with the workpiece
/// surface they were measured against.
struct GrooveSegment {
  std::vector<Point3> points;
  Plane surface;
};

struct Projection {
  GrayFrame image;
  std::size_t dropped = 0;  // points outside the frame or behind the camera
};

struct SeamLine {
  ImagePoint start;  // characteristic line l
  ImagePoint end;
  std::vector<LineSegment> inliers;
  double mean_orientation_deg = 0.0;
  double clearance_deg = 0.0;
};

struct SeamPath {
  std::vector<Point3> points_3d;      // ζ₁ … ζₙ
  std::vector<ImagePoint> points_2d;  // projections of points_3d
  double length_mm = 0.0;
};

struct StageTiming {
  std::string stage;
  double millis = 0.0;
};

struct SeamReport {
  SeamLine line;
  SeamPath path;
  std::vector<StageTiming> timings;
};

/// Fits the dominant workpiece surface with iteratively trimmed least squares.
Plane fit_surface(std::span<const Point3> points, double inlier_band_mm);

/// Marks points lying deeper than the threshold below the fitted surface. The
/// per-point depth is the median over the point and its k nearest neighbours,
/// which rejects isolated sensor spikes.
GrooveSegment segment_groove(const PointCloud& cloud, const SeamConfig& config);

/// Pinhole projection of the groove points into a binary (0/255) image.
Projection project_to_image(const GrooveSegment& groove, const Intrinsics& intrinsics);

/// Majority-vote filter iterated to a fixed point: a set pixel survives only
/// while at least half of its kernel neighbourhood (itself included) is set.
/// Pixels are never added, so iteration terminates and the result is idempotent.
GrayFrame denoise(const GrayFrame& binary, int kernel_size);

/// Canny without pre-smoothing: 3x3 Sobel magnitude (unscaled), non-maximum
/// suppression, 8-connected hysteresis. Output is binary (0/255).
GrayFrame detect_edges(const GrayFrame& image, double low, double high);

/// Chains 8-connected edge pixels, splits chains at corners and fits segments
/// with at most `max_deviation_px` perpendicular deviation. Nearly collinear
/// segments with touching ends are joined back together.
std::vector<LineSegment> extract_segments(const GrayFrame& edges, double max_deviation_px = 1.5);

/// Drops short segments, then keeps segments whose orientation lies within
/// `clearance_deg` of the mean orientation of the survivors, repeating until
/// the kept set is self-consistent.
SeamLine filter_segments(std::span<const LineSegment> segments, double min_length_px, double clearance_deg);

/// Groups inlier endpoints by image quadrant (relative to the image center);
/// the two most populated quadrants give the line's endpoints as group means.
SeamLine classify_endpoints_and_fit(SeamLine inliers, int width, int height);

/// Samples `line` at a fixed pixel stride and lifts every sample onto the
/// groove bottom found in the cloud near that pixel.
SeamPath lift_to_3d(const SeamLine& line, const PointCloud& cloud, const SeamConfig& config);

/// Full pipeline: groove → projection → denoise → edges → segments → filter →
/// endpoint fit → 3D lift. Errors carry the failing stage.
SeamReport localize_seam(const PointCloud& cloud, const SeamConfig& config);

}  // namespace weld::seam
