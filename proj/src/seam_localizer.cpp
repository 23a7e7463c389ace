#include "weld/seam_localizer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "weld/error.hpp"
#include "weld/kd_tree.hpp"

namespace weld::seam {
namespace {

constexpr double kDegPerRad = 180.0 / std::numbers::pi;

Plane plane_from(const std::vector<const Point3*>& pts) {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const Point3* p : pts) centroid += Eigen::Vector3d(p->x, p->y, p->z);
  centroid /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const Point3* p : pts) {
    const Eigen::Vector3d d = Eigen::Vector3d(p->x, p->y, p->z) - centroid;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  Eigen::Vector3d n = solver.eigenvectors().col(0).normalized();
  double offset = -n.dot(centroid);
  if (offset < 0.0) {  // camera origin must sit on the positive side
    n = -n;
    offset = -offset;
  }
  return Plane{Point3{n.x(), n.y(), n.z()}, offset};
}

double median_of(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
  }
  return m;
}

double perpendicular_distance(ImagePoint p, ImagePoint a, ImagePoint b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len = std::hypot(dx, dy);
  if (len == 0.0) return euclidean_distance(p, a);
  return std::abs(dx * (a.y - p.y) - dy * (a.x - p.x)) / len;
}

ImagePoint to_point(int x, int y) { return ImagePoint{static_cast<double>(x), static_cast<double>(y)}; }

// Recursive split: emits breakpoints of pts[lo..hi] (lo included, hi excluded).
void split_chain(const std::vector<ImagePoint>& pts, std::size_t lo, std::size_t hi, double tol,
                 std::vector<std::size_t>& breaks) {
  double worst = -1.0;
  std::size_t worst_at = lo;
  for (std::size_t i = lo + 1; i < hi; ++i) {
    const double d = perpendicular_distance(pts[i], pts[lo], pts[hi]);
    if (d > worst) {
      worst = d;
      worst_at = i;
    }
  }
  if (worst > tol) {
    split_chain(pts, lo, worst_at, tol, breaks);
    split_chain(pts, worst_at, hi, tol, breaks);
  } else {
    breaks.push_back(lo);
  }
}

std::vector<std::vector<ImagePoint>> trace_chains(const GrayFrame& edges, std::vector<bool>& closed) {
  const int w = edges.width();
  const int h = edges.height();
  std::vector<std::uint8_t> visited(static_cast<std::size_t>(w) * h, 0);
  auto is_edge = [&](int x, int y) { return edges.contains(x, y) && edges.at(x, y) != 0; };
  auto unvisited_edge = [&](int x, int y) {
    return is_edge(x, y) && visited[static_cast<std::size_t>(y) * w + x] == 0;
  };
  // 4-neighbours first so staircases are walked pixel by pixel.
  static constexpr std::array<std::array<int, 2>, 8> kSteps{
      {{1, 0}, {0, 1}, {-1, 0}, {0, -1}, {1, 1}, {-1, 1}, {-1, -1}, {1, -1}}};

  auto degree = [&](int x, int y) {
    int n = 0;
    for (const auto& s : kSteps) n += is_edge(x + s[0], y + s[1]) ? 1 : 0;
    return n;
  };

  std::vector<std::vector<ImagePoint>> chains;
  auto walk = [&](int x, int y, std::vector<ImagePoint>& out) {
    for (;;) {
      bool moved = false;
      for (const auto& s : kSteps) {
        const int nx = x + s[0];
        const int ny = y + s[1];
        if (unvisited_edge(nx, ny)) {
          visited[static_cast<std::size_t>(ny) * w + nx] = 1;
          out.push_back(to_point(nx, ny));
          x = nx;
          y = ny;
          moved = true;
          break;
        }
      }
      if (!moved) return;
    }
  };
  auto trace_from = [&](int x, int y) {
    visited[static_cast<std::size_t>(y) * w + x] = 1;
    std::vector<ImagePoint> forward{to_point(x, y)};
    walk(x, y, forward);
    std::vector<ImagePoint> backward;
    walk(x, y, backward);
    std::vector<ImagePoint> chain(backward.rbegin(), backward.rend());
    chain.insert(chain.end(), forward.begin(), forward.end());
    const bool is_closed = chain.size() >= 4 && std::abs(chain.front().x - chain.back().x) <= 1.0 &&
                           std::abs(chain.front().y - chain.back().y) <= 1.0;
    chains.push_back(std::move(chain));
    closed.push_back(is_closed);
  };

  for (int pass = 0; pass < 2; ++pass) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!unvisited_edge(x, y)) continue;
        if (pass == 0 && degree(x, y) != 1) continue;  // open chain ends first
        trace_from(x, y);
      }
    }
  }
  return chains;
}

struct Piece {
  std::vector<ImagePoint> pixels;  // ordered along the chain
};

struct LineFit {
  ImagePoint a;
  ImagePoint b;
  double max_deviation = 0.0;
};

// Total least squares through the pixels; endpoints are the extreme
// projections, `a` on the side of the first pixel.
LineFit fit_pixels(const std::vector<ImagePoint>& px) {
  double mx = 0.0;
  double my = 0.0;
  for (const auto& p : px) {
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(px.size());
  my /= static_cast<double>(px.size());
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (const auto& p : px) {
    sxx += (p.x - mx) * (p.x - mx);
    syy += (p.y - my) * (p.y - my);
    sxy += (p.x - mx) * (p.y - my);
  }
  const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  const double ux = std::cos(theta);
  const double uy = std::sin(theta);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  LineFit fit;
  for (const auto& p : px) {
    const double t = (p.x - mx) * ux + (p.y - my) * uy;
    lo = std::min(lo, t);
    hi = std::max(hi, t);
    fit.max_deviation = std::max(fit.max_deviation, std::abs(-(p.x - mx) * uy + (p.y - my) * ux));
  }
  fit.a = {mx + lo * ux, my + lo * uy};
  fit.b = {mx + hi * ux, my + hi * uy};
  const double first = (px.front().x - mx) * ux + (px.front().y - my) * uy;
  const double last = (px.back().x - mx) * ux + (px.back().y - my) * uy;
  if (first > last) std::swap(fit.a, fit.b);
  return fit;
}

double end_gap(const Piece& p, const Piece& q) {
  return std::min({euclidean_distance(p.pixels.front(), q.pixels.front()),
                   euclidean_distance(p.pixels.front(), q.pixels.back()),
                   euclidean_distance(p.pixels.back(), q.pixels.front()),
                   euclidean_distance(p.pixels.back(), q.pixels.back())});
}

// Joins pieces whose ends touch (gap <= max_gap) when one straight line
// still explains every pixel of both within `tol`.
std::vector<Piece> merge_collinear(std::vector<Piece> pieces, double tol, double max_gap) {
  bool merged_any = true;
  while (merged_any) {
    merged_any = false;
    for (std::size_t i = 0; i < pieces.size() && !merged_any; ++i) {
      for (std::size_t j = i + 1; j < pieces.size() && !merged_any; ++j) {
        if (end_gap(pieces[i], pieces[j]) > max_gap) continue;
        const LineSegment si(pieces[i].pixels.front(), pieces[i].pixels.back());
        const LineSegment sj(pieces[j].pixels.front(), pieces[j].pixels.back());
        if (si.length() >= 4.0 && sj.length() >= 4.0 &&
            std::abs(orientation_difference_deg(si.orientation_deg(), sj.orientation_deg())) > 10.0) {
          continue;
        }
        std::vector<ImagePoint> joined = pieces[i].pixels;
        joined.insert(joined.end(), pieces[j].pixels.begin(), pieces[j].pixels.end());
        const LineFit fit = fit_pixels(joined);
        // Judge by each piece's own fitted ends so single-pixel notches in a
        // ragged outline do not veto the join.
        const LineFit fi = fit_pixels(pieces[i].pixels);
        const LineFit fj = fit_pixels(pieces[j].pixels);
        const std::array<ImagePoint, 4> ends{fi.a, fi.b, fj.a, fj.b};
        const bool collinear = std::all_of(ends.begin(), ends.end(), [&](ImagePoint e) {
          return perpendicular_distance(e, fit.a, fit.b) <= tol;
        });
        if (!collinear) continue;
        // Keep pixels ordered along the line so front/back stay the true ends.
        const double ux = fit.b.x - fit.a.x;
        const double uy = fit.b.y - fit.a.y;
        std::stable_sort(joined.begin(), joined.end(), [&](ImagePoint p, ImagePoint q) {
          return p.x * ux + p.y * uy < q.x * ux + q.y * uy;
        });
        pieces[i].pixels = std::move(joined);
        pieces.erase(pieces.begin() + static_cast<std::ptrdiff_t>(j));
        merged_any = true;
      }
    }
  }
  return pieces;
}

double axial_mean_deg(std::span<const LineSegment> segs) {
  double s = 0.0;
  double c = 0.0;
  for (const auto& seg : segs) {
    const double twice = 2.0 * seg.orientation_deg() / kDegPerRad;
    s += std::sin(twice);
    c += std::cos(twice);
  }
  return fold_orientation_deg(0.5 * std::atan2(s, c) * kDegPerRad);
}

// The characteristic line comes from the groove's image outline, which is
// rounded off at the ends. Snap the first and last path points to where the
// groove bottom actually ends along the line.
void refine_ends(std::vector<Point3>& path, const SeamLine& line, const PointCloud& cloud, const Plane& surface,
                 const SeamConfig& config) {
  const Intrinsics& k = cloud.intrinsics;
  const double len = euclidean_distance(line.start, line.end);
  if (len == 0.0 || path.empty()) return;
  const double ux = (line.end.x - line.start.x) / len;
  const double uy = (line.end.y - line.start.y) / len;
  const double reach = len;
  constexpr double kMaxBottomGapPx = 2.0;
  auto along = [&](ImagePoint p) { return (p.x - line.start.x) * ux + (p.y - line.start.y) * uy; };

  struct Candidate {
    double s;
    double depth;
    const Point3* p;
  };
  // Typical groove-bottom depth along the lifted path.
  std::vector<double> path_depths;
  for (const auto& p : path) path_depths.push_back(surface.depth_below(p));
  const double floor_depth = median_of(path_depths) - config.bottom_band_mm;

  std::vector<Candidate> groove;
  for (const auto& p : cloud.points) {
    const auto px = project(k, p);
    if (!px) continue;
    const double s = along(*px);
    const double across = -(px->x - line.start.x) * uy + (px->y - line.start.y) * ux;
    if (std::abs(across) > config.lift_radius_px || s < -reach || s > len + reach) continue;
    const double depth = surface.depth_below(p);
    if (depth > config.depth_threshold_mm && depth >= floor_depth) groove.push_back({s, depth, &p});
  }
  if (groove.empty()) return;

  std::sort(groove.begin(), groove.end(), [](const Candidate& a, const Candidate& b) { return a.s < b.s; });
  // Walk outwards from the lifted ends while the groove bottom continues.
  auto extreme_from = [&](double s0, bool at_start) {
    double extreme = s0;
    if (at_start) {
      for (auto it = groove.rbegin(); it != groove.rend(); ++it) {
        if (it->s >= s0) continue;
        if (extreme - it->s > kMaxBottomGapPx) break;
        extreme = it->s;
      }
    } else {
      for (const auto& c : groove) {
        if (c.s <= s0) continue;
        if (c.s - extreme > kMaxBottomGapPx) break;
        extreme = c.s;
      }
    }
    return extreme;
  };
  const double s_path_first = along(project(k, path.front()).value_or(line.start));
  const double s_path_last = along(project(k, path.back()).value_or(line.end));

  auto bottom_at = [&](bool at_start) {
    const double extreme = extreme_from(at_start ? s_path_first : s_path_last, at_start);
    double deepest = -std::numeric_limits<double>::infinity();
    for (const auto& c : groove) {
      if (std::abs(c.s - extreme) <= 1.0) deepest = std::max(deepest, c.depth);
    }
    Point3 acc;
    std::size_t n = 0;
    for (const auto& c : groove) {
      if (std::abs(c.s - extreme) <= 1.0 && c.depth >= deepest - config.bottom_band_mm) {
        acc.x += c.p->x;
        acc.y += c.p->y;
        acc.z += c.p->z;
        ++n;
      }
    }
    return Point3{acc.x / n, acc.y / n, acc.z / n};
  };
  const Point3 first = bottom_at(true);
  const Point3 last = bottom_at(false);
  const double s_first = along(project(k, first).value_or(line.start));
  const double s_last = along(project(k, last).value_or(line.end));
  if (!(s_last - s_first > 1.0)) return;
  std::vector<Point3> out{first};
  for (const auto& p : path) {
    const double s = along(project(k, p).value_or(line.start));
    if (s > s_first + 1.0 && s < s_last - 1.0) out.push_back(p);
  }
  out.push_back(last);
  path = std::move(out);
}

}  // namespace

Plane fit_surface(std::span<const Point3> points, double inlier_band_mm) {
  if (points.size() < 3) fail(ErrorCode::kInvalidArgument, "groove", "surface fit needs at least 3 points");
  std::vector<const Point3*> inliers;
  inliers.reserve(points.size());
  for (const auto& p : points) inliers.push_back(&p);
  Plane plane = plane_from(inliers);
  std::vector<double> residuals(points.size());
  for (int iter = 0; iter < 12; ++iter) {
    for (std::size_t i = 0; i < points.size(); ++i) residuals[i] = std::abs(plane.signed_distance(points[i]));
    std::vector<double> scratch = residuals;
    const double band = std::max(inlier_band_mm, 2.5 * median_of(scratch));
    std::vector<const Point3*> next;
    next.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (residuals[i] <= band) next.push_back(&points[i]);
    }
    if (next.size() < 3) break;
    const bool stable = next == inliers;
    inliers = std::move(next);
    plane = plane_from(inliers);
    if (stable) break;
  }
  return plane;
}

GrooveSegment segment_groove(const PointCloud& cloud, const SeamConfig& config) {
  if (cloud.empty()) fail(ErrorCode::kInvalidArgument, "groove", "empty point cloud");
  if (config.knn < 1) fail(ErrorCode::kInvalidConfig, "groove", "knn must be positive");
  const auto& pts = cloud.points;
  GrooveSegment out;
  out.surface = fit_surface(pts, std::max(0.5, 0.5 * config.depth_threshold_mm));

  std::vector<double> depth(pts.size());
  std::vector<KdTree<3>::Coords> coords(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    depth[i] = out.surface.depth_below(pts[i]);
    coords[i] = {pts[i].x, pts[i].y, pts[i].z};
  }
  const KdTree<3> tree(coords);
  std::vector<double> local;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto nbrs = tree.nearest(coords[i], static_cast<std::size_t>(config.knn) + 1);
    local.clear();
    for (std::size_t n : nbrs) local.push_back(depth[n]);
    if (median_of(local) > config.depth_threshold_mm) out.points.push_back(pts[i]);
  }
  if (out.points.size() < config.min_groove_points) {
    fail(ErrorCode::kNoGrooveFound, "groove",
         "only " + std::to_string(out.points.size()) + " points deeper than " +
             std::to_string(config.depth_threshold_mm) + " mm below the surface");
  }
  return out;
}

Projection project_to_image(const GrooveSegment& groove, const Intrinsics& k) {
  if (!k.valid()) fail(ErrorCode::kInvalidArgument, "project", "invalid intrinsics");
  Projection out{GrayFrame(k.width, k.height), 0};
  for (const auto& p : groove.points) {
    const auto px = project(k, p);
    if (!px) {
      ++out.dropped;
      continue;
    }
    const int x = static_cast<int>(std::lround(px->x));
    const int y = static_cast<int>(std::lround(px->y));
    if (!out.image.contains(x, y)) {
      ++out.dropped;
      continue;
    }
    out.image.at(x, y) = 255;
  }
  return out;
}

GrayFrame denoise(const GrayFrame& binary, int kernel_size) {
  if (kernel_size < 3 || kernel_size % 2 == 0) {
    fail(ErrorCode::kInvalidArgument, "denoise", "kernel size must be odd and >= 3");
  }
  const int w = binary.width();
  const int h = binary.height();
  const int r = kernel_size / 2;
  const int needed = (kernel_size * kernel_size + 1) / 2;
  GrayFrame cur(w, h, 0, binary.timestamp());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) cur.at(x, y) = binary.at(x, y) != 0 ? 255 : 0;
  }
  std::vector<int> integral(static_cast<std::size_t>(w + 1) * (h + 1));
  auto I = [&](int x, int y) -> int& { return integral[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (;;) {
    for (int y = 0; y < h; ++y) {
      int row = 0;
      for (int x = 0; x < w; ++x) {
        row += cur.at(x, y) != 0 ? 1 : 0;
        I(x + 1, y + 1) = I(x + 1, y) + row;
      }
    }
    bool changed = false;
    GrayFrame next = cur;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (cur.at(x, y) == 0) continue;
        const int x0 = std::max(0, x - r);
        const int y0 = std::max(0, y - r);
        const int x1 = std::min(w, x + r + 1);
        const int y1 = std::min(h, y + r + 1);
        const int count = I(x1, y1) - I(x0, y1) - I(x1, y0) + I(x0, y0);
        if (count < needed) {
          next.at(x, y) = 0;
          changed = true;
        }
      }
    }
    cur = std::move(next);
    if (!changed) return cur;
  }
}

GrayFrame detect_edges(const GrayFrame& image, double low, double high) {
  if (!(low >= 0.0 && low < high && high <= 255.0)) {
    fail(ErrorCode::kInvalidArgument, "edges", "thresholds must satisfy 0 <= low < high <= 255");
  }
  const int w = image.width();
  const int h = image.height();
  GrayFrame out(w, h, 0, image.timestamp());
  if (w < 3 || h < 3) return out;

  std::vector<double> mag(static_cast<std::size_t>(w) * h, 0.0);
  std::vector<std::uint8_t> dir(mag.size(), 0);
  auto px = [&](int x, int y) { return static_cast<double>(image.at(x, y)); };
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const double gx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
      const double gy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      mag[i] = std::hypot(gx, gy);
      double angle = std::atan2(gy, gx) * kDegPerRad;
      if (angle < 0.0) angle += 180.0;
      dir[i] = static_cast<std::uint8_t>(static_cast<int>(std::floor((angle + 22.5) / 45.0)) % 4);
    }
  }

  // 0: horizontal gradient, 1: 45°, 2: vertical, 3: 135° (y axis points down).
  static constexpr std::array<std::array<int, 2>, 4> kAlong{{{1, 0}, {1, 1}, {0, 1}, {-1, 1}}};
  std::vector<std::uint8_t> state(mag.size(), 0);  // 0 none, 1 weak, 2 strong
  std::vector<std::size_t> stack;
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double m = mag[i];
      if (m < low) continue;
      const auto& d = kAlong[dir[i]];
      const double before = mag[static_cast<std::size_t>(y - d[1]) * w + (x - d[0])];
      const double after = mag[static_cast<std::size_t>(y + d[1]) * w + (x + d[0])];
      // Strict on one side so a plateau of two equal maxima yields one pixel.
      if (!(m > before && m >= after)) continue;
      state[i] = m >= high ? 2 : 1;
      if (state[i] == 2) stack.push_back(i);
    }
  }
  std::vector<std::uint8_t> keep(mag.size(), 0);
  for (std::size_t i : stack) keep[i] = 1;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const int x = static_cast<int>(i % w);
    const int y = static_cast<int>(i / w);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx;
        const int ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
        if (state[j] != 0 && keep[j] == 0) {
          keep[j] = 1;
          stack.push_back(j);
        }
      }
    }
  }
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i] != 0) out.pixels()[i] = 255;
  }
  return out;
}

std::vector<LineSegment> extract_segments(const GrayFrame& edges, double max_deviation_px) {
  std::vector<bool> closed;
  const auto chains = trace_chains(edges, closed);
  std::vector<Piece> pieces;
  auto cut = [&](const std::vector<ImagePoint>& pts, const std::vector<std::size_t>& breaks) {
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
      pieces.push_back({std::vector<ImagePoint>(pts.begin() + static_cast<std::ptrdiff_t>(breaks[i]),
                                                pts.begin() + static_cast<std::ptrdiff_t>(breaks[i + 1]) + 1)});
    }
  };
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto& chain = chains[c];
    if (chain.size() < 2) continue;
    std::vector<std::size_t> breaks;
    if (!closed[c]) {
      split_chain(chain, 0, chain.size() - 1, max_deviation_px, breaks);
      breaks.push_back(chain.size() - 1);
      cut(chain, breaks);
      continue;
    }
    // Closed loop: split at the point farthest from the start, then close it.
    std::vector<ImagePoint> ring = chain;
    ring.push_back(chain.front());
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < chain.size(); ++i) {
      const double d = euclidean_distance(chain[i], chain.front());
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    split_chain(ring, 0, far, max_deviation_px, breaks);
    split_chain(ring, far, ring.size() - 1, max_deviation_px, breaks);
    breaks.push_back(ring.size() - 1);
    cut(ring, breaks);
  }
  pieces = merge_collinear(std::move(pieces), max_deviation_px, 8.0);

  std::vector<LineSegment> segs;
  for (const auto& piece : pieces) {
    const ImagePoint first = piece.pixels.front();
    const ImagePoint last = piece.pixels.back();
    if (first == last) continue;
    const LineFit fit = fit_pixels(piece.pixels);
    if (piece.pixels.size() > 2 && fit.max_deviation <= max_deviation_px) {
      segs.emplace_back(fit.a, fit.b);
    } else {
      segs.emplace_back(first, last);
    }
  }
  return segs;
}

SeamLine filter_segments(std::span<const LineSegment> segments, double min_length_px, double clearance_deg) {
  if (!(clearance_deg > 0.0)) fail(ErrorCode::kInvalidArgument, "filter", "clearance must be positive");
  std::vector<LineSegment> kept;
  for (const auto& s : segments) {
    if (s.length() >= min_length_px) kept.push_back(s);
  }
  if (kept.empty()) fail(ErrorCode::kNoCandidateLines, "filter", "no segment reaches the minimum length");
  double mean = axial_mean_deg(kept);
  for (std::size_t iter = 0; iter <= segments.size(); ++iter) {
    std::vector<LineSegment> next;
    for (const auto& s : kept) {
      if (std::abs(orientation_difference_deg(s.orientation_deg(), mean)) <= clearance_deg) next.push_back(s);
    }
    if (next.empty()) fail(ErrorCode::kNoCandidateLines, "filter", "no segment within the orientation clearance");
    const bool stable = next.size() == kept.size();
    kept = std::move(next);
    mean = axial_mean_deg(kept);
    if (stable) break;
  }
  SeamLine out;
  out.inliers = std::move(kept);
  out.mean_orientation_deg = mean;
  out.clearance_deg = clearance_deg;
  return out;
}

SeamLine classify_endpoints_and_fit(SeamLine line, int width, int height) {
  if (line.inliers.empty()) fail(ErrorCode::kNoCandidateLines, "fit", "no inlier segments");
  const double cx = width / 2.0;
  const double cy = height / 2.0;
  std::array<std::vector<ImagePoint>, 4> groups;
  for (const auto& s : line.inliers) {
    for (ImagePoint e : {s.a(), s.b()}) {
      const int q = (e.x < cx ? 0 : 1) + (e.y < cy ? 0 : 2);
      groups[q].push_back(e);
    }
  }
  std::array<int, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return groups[a].size() > groups[b].size(); });
  auto mean_of = [](const std::vector<ImagePoint>& pts) {
    ImagePoint m;
    for (const auto& p : pts) {
      m.x += p.x;
      m.y += p.y;
    }
    m.x /= static_cast<double>(pts.size());
    m.y /= static_cast<double>(pts.size());
    return m;
  };

  ImagePoint p1;
  ImagePoint p2;
  const std::size_t second = groups[order[1]].size();
  if (second == 0) {
    // Whole seam inside one quadrant: split its endpoints along the mean direction.
    const double rad = line.mean_orientation_deg / kDegPerRad;
    const ImagePoint dirv{std::cos(rad), std::sin(rad)};
    std::vector<std::pair<double, ImagePoint>> proj;
    for (const auto& e : groups[order[0]]) proj.emplace_back(e.x * dirv.x + e.y * dirv.y, e);
    std::stable_sort(proj.begin(), proj.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<ImagePoint> lo;
    std::vector<ImagePoint> hi;
    for (std::size_t i = 0; i < proj.size(); ++i) (i < proj.size() / 2 ? lo : hi).push_back(proj[i].second);
    p1 = mean_of(lo);
    p2 = mean_of(hi);
  } else {
    if (second == groups[order[2]].size()) {
      fail(ErrorCode::kAmbiguousSeam, "fit", "endpoint quadrants tie; seam orientation is undetermined");
    }
    p1 = mean_of(groups[order[0]]);
    p2 = mean_of(groups[order[1]]);
  }
  if (p2.x < p1.x || (p2.x == p1.x && p2.y < p1.y)) std::swap(p1, p2);
  line.start = p1;
  line.end = p2;
  return line;
}

SeamPath lift_to_3d(const SeamLine& line, const PointCloud& cloud, const SeamConfig& config) {
  if (cloud.empty()) fail(ErrorCode::kDepthHole, "lift", "empty point cloud");
  const Intrinsics& k = cloud.intrinsics;
  std::vector<KdTree<2>::Coords> pixels;
  std::vector<std::size_t> owner;
  pixels.reserve(cloud.points.size());
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (const auto px = project(k, cloud.points[i])) {
      pixels.push_back({px->x, px->y});
      owner.push_back(i);
    }
  }
  if (pixels.empty()) fail(ErrorCode::kDepthHole, "lift", "no cloud point projects into the image");
  const KdTree<2> tree(pixels);
  const Plane surface = cloud.points.size() >= 3
                            ? fit_surface(cloud.points, std::max(0.5, 0.5 * config.depth_threshold_mm))
                            : Plane{};

  const double len = euclidean_distance(line.start, line.end);
  const std::size_t intervals =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(len / std::max(0.5, config.lift_stride_px))));
  SeamPath path;
  std::size_t holes = 0;
  for (std::size_t s = 0; s <= intervals; ++s) {
    const double t = static_cast<double>(s) / static_cast<double>(intervals);
    const KdTree<2>::Coords sample{line.start.x + t * (line.end.x - line.start.x),
                                   line.start.y + t * (line.end.y - line.start.y)};
    const auto near = tree.within(sample, config.lift_radius_px);
    if (near.empty()) {
      ++holes;
      continue;
    }
    double deepest = -std::numeric_limits<double>::infinity();
    for (std::size_t n : near) deepest = std::max(deepest, surface.depth_below(cloud.points[owner[n]]));
    Point3 acc;
    std::size_t count = 0;
    for (std::size_t n : near) {
      const Point3& p = cloud.points[owner[n]];
      if (surface.depth_below(p) >= deepest - config.bottom_band_mm) {
        acc.x += p.x;
        acc.y += p.y;
        acc.z += p.z;
        ++count;
      }
    }
    const Point3 zeta{acc.x / count, acc.y / count, acc.z / count};
    if (!path.points_3d.empty() && euclidean_distance(path.points_3d.back(), zeta) <= 1e-9) continue;
    path.points_3d.push_back(zeta);
  }
  const double hole_fraction = static_cast<double>(holes) / static_cast<double>(intervals + 1);
  if (hole_fraction > config.max_hole_fraction || path.points_3d.empty()) {
    fail(ErrorCode::kDepthHole, "lift",
         std::to_string(holes) + " of " + std::to_string(intervals + 1) + " seam samples have no depth");
  }
  refine_ends(path.points_3d, line, cloud, surface, config);
  for (std::size_t i = 0; i < path.points_3d.size(); ++i) {
    path.points_2d.push_back(project(k, path.points_3d[i]).value_or(ImagePoint{}));
    if (i > 0) path.length_mm += euclidean_distance(path.points_3d[i - 1], path.points_3d[i]);
  }
  return path;
}

SeamReport localize_seam(const PointCloud& cloud, const SeamConfig& config) {
  using Clock = std::chrono::steady_clock;
  SeamReport report;
  auto t0 = Clock::now();
  auto mark = [&](const char* stage) {
    const auto now = Clock::now();
    report.timings.push_back({stage, std::chrono::duration<double, std::milli>(now - t0).count()});
    t0 = now;
  };
  const Intrinsics& k = cloud.intrinsics;
  if (!k.valid()) fail(ErrorCode::kInvalidConfig, "groove", "invalid intrinsics");

  const GrooveSegment groove = segment_groove(cloud, config);
  mark("groove");
  const Projection projected = project_to_image(groove, k);
  mark("project");
  const GrayFrame clean = denoise(projected.image, config.denoise_kernel);
  mark("denoise");
  const GrayFrame edges = detect_edges(clean, config.canny_low, config.canny_high);
  mark("edges");
  const auto segments = extract_segments(edges, config.max_segment_deviation_px);
  mark("segments");
  SeamLine line = filter_segments(segments, config.resolved_min_length(k), config.clearance_deg);
  mark("filter");
  line = classify_endpoints_and_fit(std::move(line), k.width, k.height);
  mark("fit");
  report.path = lift_to_3d(line, cloud, config);
  mark("lift");
  report.line = std::move(line);
  return report;
}

}  // namespace weld::seam
