#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "weld/core_types.hpp"

namespace weld::lic {

struct TileGrid {
  int tile_size = 32;
  int cols = 0;
  int rows = 0;
  std::vector<double> mean_intensity;  // row-major, cols * rows

  double at(int col, int row) const { return mean_intensity[static_cast<std::size_t>(row) * cols + col]; }
};

struct LicParams {
  double b = 4.5;
  double sigma = 1.0;
};

enum class TileClass { kLow, kMedium, kHigh };

inline constexpr double kMediumThreshold = 0.65;
inline constexpr double kHighThreshold = 0.95;

struct ConfidenceMap {
  int tile_size = 32;
  int cols = 0;
  int rows = 0;
  std::vector<double> p;
  double p_max = 0.0;  // maximum over the raw map, kept through normalization

  static ConfidenceMap zeros(int cols, int rows, int tile_size);
  double at(int col, int row) const { return p[static_cast<std::size_t>(row) * cols + col]; }
  bool same_shape(const TileGrid& grid) const { return cols == grid.cols && rows == grid.rows; }
};

TileGrid partition_tiles(const GrayFrame& frame, int tile_size);

/// One step of the LIC recursion per tile, clamped at 1. Uses 0^0 = 1.
ConfidenceMap update_confidence(const TileGrid& grid, const ConfidenceMap& prev, const LicParams& params = {});

/// Single-tile form of the recursion, shared with callers that iterate scalars.
double lic_step(double norm, double p_prev, const LicParams& params = {});

ConfidenceMap normalize_map(ConfidenceMap map);

TileClass classify(double p);
std::vector<TileClass> classify_tiles(const ConfidenceMap& map);
std::size_t count_at_least(const ConfidenceMap& map, double threshold);

/// Softmax-style baseline: p = norm + w * p_prev, clamped to [0, 1].
ConfidenceMap softmax_update(const TileGrid& grid, const ConfidenceMap& prev, double w = 0.01);

/// "cols rows tile_size p0 p1 ..." with 6 significant digits.
std::string serialize(const ConfidenceMap& map);

// Per-stream state: raw update followed by normalization. The normalized map
// is what the next frame sees as p[t-1].
class LicTracker {
 public:
  explicit LicTracker(int tile_size = 32, LicParams params = {}) : tile_size_(tile_size), params_(params) {}

  const ConfidenceMap& update(const GrayFrame& frame);
  const ConfidenceMap& current() const { return map_; }

 private:
  int tile_size_;
  LicParams params_;
  ConfidenceMap map_;
};

class SoftmaxTracker {
 public:
  explicit SoftmaxTracker(int tile_size = 32, double w = 0.01) : tile_size_(tile_size), w_(w) {}

  /// Returns the normalized map; the clamped raw map is fed back.
  ConfidenceMap update(const GrayFrame& frame);

 private:
  int tile_size_;
  double w_;
  ConfidenceMap raw_;
};

}  // namespace weld::lic
