#include "weld/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "weld/error.hpp"

namespace weld {

double euclidean_distance(ImagePoint a, ImagePoint b) { return std::hypot(a.x - b.x, a.y - b.y); }

double euclidean_distance(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double Intrinsics::diagonal() const { return std::hypot(static_cast<double>(width), static_cast<double>(height)); }

std::optional<ImagePoint> project(const Intrinsics& k, const Point3& p) {
  if (!(p.z > 0.0)) return std::nullopt;
  return ImagePoint{k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy};
}

Point3 back_project(const Intrinsics& k, ImagePoint pixel, double depth) {
  return Point3{(pixel.x - k.cx) * depth / k.fx, (pixel.y - k.cy) * depth / k.fy, depth};
}

GrayFrame::GrayFrame(int width, int height, std::uint8_t fill, std::int64_t timestamp)
    : width_(width), height_(height), timestamp_(timestamp) {
  if (width < 0 || height < 0) fail(ErrorCode::kInvalidArgument, "", "negative frame size");
  pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

GrayFrame::GrayFrame(int width, int height, std::vector<std::uint8_t> pixels, std::int64_t timestamp)
    : width_(width), height_(height), timestamp_(timestamp), pixels_(std::move(pixels)) {
  if (width < 0 || height < 0 || pixels_.size() != static_cast<std::size_t>(width) * height) {
    fail(ErrorCode::kInvalidArgument, "", "pixel count does not match frame size");
  }
}

std::size_t GrayFrame::count_nonzero() const {
  return static_cast<std::size_t>(std::count_if(pixels_.begin(), pixels_.end(), [](std::uint8_t v) { return v != 0; }));
}

double fold_orientation_deg(double angle_deg) {
  double folded = std::fmod(angle_deg + 90.0, 180.0);
  if (folded < 0.0) folded += 180.0;
  folded -= 90.0;
  // fmod can land exactly on +90 after the shift for inputs like -90 - 1e-17.
  if (folded >= 90.0) folded -= 180.0;
  return folded;
}

double orientation_difference_deg(double a_deg, double b_deg) {
  double d = fold_orientation_deg(a_deg - b_deg);
  if (d == -90.0) d = 90.0;
  return d;
}

LineSegment::LineSegment(ImagePoint a, ImagePoint b) : a_(a), b_(b) {
  length_ = euclidean_distance(a, b);
  orientation_deg_ = fold_orientation_deg(std::atan2(b.y - a.y, b.x - a.x) * 180.0 / std::numbers::pi);
}

std::string format_g6(double value) {
  if (std::isnan(value)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", value == 0.0 ? 0.0 : value);
  return buf;
}

double normalize_intensity(double xi_bar) {
  if (!(xi_bar >= 0.0 && xi_bar <= 255.0)) {
    fail(ErrorCode::kInvalidArgument, "", "mean intensity outside [0, 255]: " + std::to_string(xi_bar));
  }
  return xi_bar / 255.0;
}

}  // namespace weld
