#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <queue>
#include <span>
#include <vector>

namespace weld {

// Static k-d tree over points with `Dim` double coordinates. Points are not
// copied; the caller keeps them alive for the tree's lifetime. Built once by
// median splits on an index permutation.
template <std::size_t Dim>
class KdTree {
 public:
  using Coords = std::array<double, Dim>;

  explicit KdTree(std::span<const Coords> points) : points_(points), index_(points.size()) {
    for (std::size_t i = 0; i < index_.size(); ++i) index_[i] = i;
    build(0, index_.size(), 0);
  }

  std::size_t size() const { return points_.size(); }

  /// Indices of the k nearest points to `query`, closest first. Ties are
  /// broken by index so results are reproducible.
  std::vector<std::size_t> nearest(const Coords& query, std::size_t k) const {
    Heap heap;
    if (k > 0) search(0, index_.size(), 0, query, k, heap);
    std::vector<std::size_t> out(heap.size());
    for (std::size_t i = heap.size(); i-- > 0;) {
      out[i] = heap.top().second;
      heap.pop();
    }
    return out;
  }

  /// Indices of all points within `radius` of `query`, unordered.
  std::vector<std::size_t> within(const Coords& query, double radius) const {
    std::vector<std::size_t> out;
    radius_search(0, index_.size(), 0, query, radius * radius, out);
    return out;
  }

 private:
  using Entry = std::pair<double, std::size_t>;  // squared distance, index
  using Heap = std::priority_queue<Entry>;

  static double sq_dist(const Coords& a, const Coords& b) {
    double s = 0.0;
    for (std::size_t d = 0; d < Dim; ++d) {
      const double diff = a[d] - b[d];
      s += diff * diff;
    }
    return s;
  }

  void build(std::size_t lo, std::size_t hi, std::size_t depth) {
    if (hi - lo <= 1) return;
    const std::size_t axis = depth % Dim;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(index_.begin() + lo, index_.begin() + mid, index_.begin() + hi,
                     [&](std::size_t a, std::size_t b) {
                       if (points_[a][axis] != points_[b][axis]) return points_[a][axis] < points_[b][axis];
                       return a < b;
                     });
    build(lo, mid, depth + 1);
    build(mid + 1, hi, depth + 1);
  }

  void search(std::size_t lo, std::size_t hi, std::size_t depth, const Coords& q, std::size_t k, Heap& heap) const {
    if (lo >= hi) return;
    const std::size_t mid = lo + (hi - lo) / 2;
    const std::size_t idx = index_[mid];
    const Entry candidate{sq_dist(points_[idx], q), idx};
    if (heap.size() < k) {
      heap.push(candidate);
    } else if (candidate < heap.top()) {
      heap.pop();
      heap.push(candidate);
    }
    const std::size_t axis = depth % Dim;
    const double diff = q[axis] - points_[idx][axis];
    const bool left_first = diff < 0.0;
    if (left_first) {
      search(lo, mid, depth + 1, q, k, heap);
    } else {
      search(mid + 1, hi, depth + 1, q, k, heap);
    }
    if (heap.size() < k || diff * diff <= heap.top().first) {
      if (left_first) {
        search(mid + 1, hi, depth + 1, q, k, heap);
      } else {
        search(lo, mid, depth + 1, q, k, heap);
      }
    }
  }

  void radius_search(std::size_t lo, std::size_t hi, std::size_t depth, const Coords& q, double r2,
                     std::vector<std::size_t>& out) const {
    if (lo >= hi) return;
    const std::size_t mid = lo + (hi - lo) / 2;
    const std::size_t idx = index_[mid];
    if (sq_dist(points_[idx], q) <= r2) out.push_back(idx);
    const std::size_t axis = depth % Dim;
    const double diff = q[axis] - points_[idx][axis];
    if (diff <= 0.0 || diff * diff <= r2) radius_search(lo, mid, depth + 1, q, r2, out);
    if (diff >= 0.0 || diff * diff <= r2) radius_search(mid + 1, hi, depth + 1, q, r2, out);
  }

  std::span<const Coords> points_;
  std::vector<std::size_t> index_;
};

}  // namespace weld
