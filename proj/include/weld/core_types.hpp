#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace weld {

/// Pixel coordinates: origin top-left, +x right, +y down. Pixel centers sit on
/// integer coordinates.
struct ImagePoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const ImagePoint&, const ImagePoint&) = default;
};

/// Camera-frame point in millimeters (+z along the optical axis).
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

double euclidean_distance(ImagePoint a, ImagePoint b);
double euclidean_distance(const Point3& a, const Point3& b);

/// Pinhole intrinsics together with the sensor size they apply to.
struct Intrinsics {
  double fx = 525.0;
  double fy = 525.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  bool valid() const { return fx > 0.0 && fy > 0.0 && width > 0 && height > 0; }
  double diagonal() const;
};

/// Projects a camera-frame point; empty for points at or behind the camera.
std::optional<ImagePoint> project(const Intrinsics& k, const Point3& p);
Point3 back_project(const Intrinsics& k, ImagePoint pixel, double depth);

/// 8-bit grayscale frame, row-major.
class GrayFrame {
 public:
  GrayFrame() = default;
  GrayFrame(int width, int height, std::uint8_t fill = 0, std::int64_t timestamp = 0);
  GrayFrame(int width, int height, std::vector<std::uint8_t> pixels, std::int64_t timestamp = 0);

  int width() const { return width_; }
  int height() const { return height_; }
  std::int64_t timestamp() const { return timestamp_; }
  void set_timestamp(std::int64_t t) { timestamp_ = t; }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  std::uint8_t at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::span<std::uint8_t> pixels() { return pixels_; }
  std::size_t count_nonzero() const;

  friend bool operator==(const GrayFrame&, const GrayFrame&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::int64_t timestamp_ = 0;
  std::vector<std::uint8_t> pixels_;
};

struct PointCloud {
  std::vector<Point3> points;
  Intrinsics intrinsics;

  bool empty() const { return points.empty(); }
};

/// Segment between two pixels. Orientation is an undirected angle in
/// [-90, 90) degrees, so swapping endpoints leaves it unchanged and vertical
/// segments are representable.
class LineSegment {
 public:
  LineSegment() = default;
  LineSegment(ImagePoint a, ImagePoint b);

  ImagePoint a() const { return a_; }
  ImagePoint b() const { return b_; }
  double length() const { return length_; }
  double orientation_deg() const { return orientation_deg_; }

 private:
  ImagePoint a_;
  ImagePoint b_;
  double length_ = 0.0;
  double orientation_deg_ = 0.0;
};

/// Folds any angle (degrees) into the undirected range [-90, 90).
double fold_orientation_deg(double angle_deg);

/// Smallest signed difference between two undirected orientations, in (-90, 90].
double orientation_difference_deg(double a_deg, double b_deg);

/// Fixed wire format for numbers: printf "%.6g", "nan" for NaN.
std::string format_g6(double value);

/// Maps a tile/frame mean intensity in [0, 255] onto [0, 1].
double normalize_intensity(double xi_bar);

}  // namespace weld
