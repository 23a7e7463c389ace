#include "weld/lic_map.hpp"

#include <algorithm>
#include <cmath>

#include "weld/error.hpp"

namespace weld::lic {

ConfidenceMap ConfidenceMap::zeros(int cols, int rows, int tile_size) {
  ConfidenceMap m;
  m.tile_size = tile_size;
  m.cols = cols;
  m.rows = rows;
  m.p.assign(static_cast<std::size_t>(cols) * rows, 0.0);
  return m;
}

TileGrid partition_tiles(const GrayFrame& frame, int tile_size) {
  if (tile_size < 4) fail(ErrorCode::kInvalidArgument, "lic", "tile size must be >= 4");
  TileGrid grid;
  grid.tile_size = tile_size;
  grid.cols = (frame.width() + tile_size - 1) / tile_size;
  grid.rows = (frame.height() + tile_size - 1) / tile_size;
  std::vector<std::uint64_t> sums(static_cast<std::size_t>(grid.cols) * grid.rows, 0);
  for (int y = 0; y < frame.height(); ++y) {
    const std::size_t row_base = static_cast<std::size_t>(y / tile_size) * grid.cols;
    for (int x = 0; x < frame.width(); ++x) sums[row_base + x / tile_size] += frame.at(x, y);
  }
  grid.mean_intensity.resize(sums.size());
  for (int r = 0; r < grid.rows; ++r) {
    const int h = std::min(tile_size, frame.height() - r * tile_size);
    for (int c = 0; c < grid.cols; ++c) {
      const int w = std::min(tile_size, frame.width() - c * tile_size);
      const std::size_t i = static_cast<std::size_t>(r) * grid.cols + c;
      grid.mean_intensity[i] = static_cast<double>(sums[i]) / static_cast<double>(w * h);
    }
  }
  return grid;
}

double lic_step(double norm, double p_prev, const LicParams& params) {
  // std::pow(0, 0) is 1, which is the convention we want for the first frame.
  const double p = std::pow(params.b * norm, p_prev) / params.b * (params.sigma + p_prev);
  return std::min(p, 1.0);
}

ConfidenceMap update_confidence(const TileGrid& grid, const ConfidenceMap& prev, const LicParams& params) {
  if (!(params.b > 0.0 && params.sigma > 0.0)) fail(ErrorCode::kInvalidArgument, "lic", "b and sigma must be positive");
  if (!prev.same_shape(grid)) fail(ErrorCode::kShapeMismatch, "lic", "confidence map and tile grid differ in shape");
  ConfidenceMap out = ConfidenceMap::zeros(grid.cols, grid.rows, grid.tile_size);
  for (std::size_t i = 0; i < out.p.size(); ++i) {
    out.p[i] = lic_step(normalize_intensity(grid.mean_intensity[i]), prev.p[i], params);
    out.p_max = std::max(out.p_max, out.p[i]);
  }
  return out;
}

ConfidenceMap normalize_map(ConfidenceMap map) {
  if (map.p.empty()) return map;
  const double m = *std::max_element(map.p.begin(), map.p.end());
  map.p_max = m;
  if (m > 0.0) {
    for (double& v : map.p) v /= m;
  }
  return map;
}

TileClass classify(double p) {
  if (p >= kHighThreshold) return TileClass::kHigh;
  if (p >= kMediumThreshold) return TileClass::kMedium;
  return TileClass::kLow;
}

std::vector<TileClass> classify_tiles(const ConfidenceMap& map) {
  std::vector<TileClass> out;
  out.reserve(map.p.size());
  for (double v : map.p) out.push_back(classify(v));
  return out;
}

std::size_t count_at_least(const ConfidenceMap& map, double threshold) {
  return static_cast<std::size_t>(std::count_if(map.p.begin(), map.p.end(), [&](double v) { return v >= threshold; }));
}

ConfidenceMap softmax_update(const TileGrid& grid, const ConfidenceMap& prev, double w) {
  if (!(w > 0.0)) fail(ErrorCode::kInvalidArgument, "softmax", "w must be positive");
  if (!prev.same_shape(grid)) fail(ErrorCode::kShapeMismatch, "softmax", "confidence map and tile grid differ in shape");
  ConfidenceMap out = ConfidenceMap::zeros(grid.cols, grid.rows, grid.tile_size);
  for (std::size_t i = 0; i < out.p.size(); ++i) {
    out.p[i] = std::clamp(normalize_intensity(grid.mean_intensity[i]) + w * prev.p[i], 0.0, 1.0);
    out.p_max = std::max(out.p_max, out.p[i]);
  }
  return out;
}

std::string serialize(const ConfidenceMap& map) {
  std::string out = std::to_string(map.cols) + ' ' + std::to_string(map.rows) + ' ' + std::to_string(map.tile_size);
  for (double v : map.p) {
    out += ' ';
    out += format_g6(v);
  }
  return out;
}

const ConfidenceMap& LicTracker::update(const GrayFrame& frame) {
  const TileGrid grid = partition_tiles(frame, tile_size_);
  if (!map_.same_shape(grid)) map_ = ConfidenceMap::zeros(grid.cols, grid.rows, grid.tile_size);
  map_ = normalize_map(update_confidence(grid, map_, params_));
  return map_;
}

ConfidenceMap SoftmaxTracker::update(const GrayFrame& frame) {
  const TileGrid grid = partition_tiles(frame, tile_size_);
  if (!raw_.same_shape(grid)) raw_ = ConfidenceMap::zeros(grid.cols, grid.rows, grid.tile_size);
  raw_ = softmax_update(grid, raw_, w_);
  return normalize_map(raw_);
}

}  // namespace weld::lic
