#include "weld/arc_tracker.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "weld/error.hpp"

namespace weld::arc {
namespace {

// Clockwise on screen (y down): E, SE, S, SW, W, NW, N, NE.
constexpr std::array<std::array<int, 2>, 8> kRing{
    {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};

int ring_index(int dx, int dy) {
  for (int i = 0; i < 8; ++i) {
    if (kRing[i][0] == dx && kRing[i][1] == dy) return i;
  }
  return -1;
}

struct Pixel {
  int x;
  int y;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

std::vector<ImagePoint> trace_boundary(const GrayFrame& binary, Pixel start) {
  auto set = [&](Pixel p) { return binary.contains(p.x, p.y) && binary.at(p.x, p.y) != 0; };
  std::vector<ImagePoint> out{{static_cast<double>(start.x), static_cast<double>(start.y)}};
  // The raster-first pixel of a component always has background to its west.
  Pixel cur = start;
  Pixel back{start.x - 1, start.y};
  std::optional<Pixel> first_move;
  const std::size_t limit = 4 * static_cast<std::size_t>(binary.width()) * binary.height() + 8;
  for (std::size_t guard = 0; guard < limit; ++guard) {
    const int d0 = ring_index(back.x - cur.x, back.y - cur.y);
    std::optional<Pixel> next;
    Pixel last_bg = back;
    for (int i = 1; i <= 8; ++i) {
      const int d = (d0 + i) % 8;
      const Pixel n{cur.x + kRing[d][0], cur.y + kRing[d][1]};
      if (set(n)) {
        next = n;
        break;
      }
      last_bg = n;
    }
    if (!next) break;  // isolated pixel
    if (cur == start) {
      if (!first_move) {
        first_move = *next;
      } else if (*next == *first_move) {
        break;
      }
    }
    back = last_bg;
    cur = *next;
    out.push_back({static_cast<double>(cur.x), static_cast<double>(cur.y)});
  }
  // The walk ends back on the start pixel; the polygon closes implicitly.
  if (out.size() > 1 && out.back() == out.front()) out.pop_back();
  return out;
}

std::vector<std::vector<Pixel>> label_components(const GrayFrame& binary) {
  const int w = binary.width();
  const int h = binary.height();
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(w) * h, 0);
  std::vector<std::vector<Pixel>> comps;
  std::vector<Pixel> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (binary.at(x, y) == 0 || seen[static_cast<std::size_t>(y) * w + x]) continue;
      std::vector<Pixel> comp;
      seen[static_cast<std::size_t>(y) * w + x] = 1;
      stack.push_back({x, y});
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        comp.push_back(p);
        for (const auto& s : kRing) {
          const int nx = p.x + s[0];
          const int ny = p.y + s[1];
          if (!binary.contains(nx, ny) || binary.at(nx, ny) == 0) continue;
          auto& flag = seen[static_cast<std::size_t>(ny) * w + nx];
          if (flag == 0) {
            flag = 1;
            stack.push_back({nx, ny});
          }
        }
      }
      comps.push_back(std::move(comp));
    }
  }
  return comps;
}

bool inside(const Circle& c, ImagePoint p) {
  return euclidean_distance(c.center, p) <= c.radius * (1.0 + 1e-12) + 1e-12;
}

Circle circle_from(ImagePoint a, ImagePoint b) {
  const ImagePoint m{(a.x + b.x) / 2.0, (a.y + b.y) / 2.0};
  return {m, std::max(euclidean_distance(m, a), euclidean_distance(m, b))};
}

Circle circle_from(ImagePoint a, ImagePoint b, ImagePoint c) {
  const double bx = b.x - a.x;
  const double by = b.y - a.y;
  const double cx = c.x - a.x;
  const double cy = c.y - a.y;
  const double d = 2.0 * (bx * cy - by * cx);
  if (std::abs(d) < 1e-12) {
    // Collinear: the widest pair spans the others.
    Circle best = circle_from(a, b);
    for (const Circle& cand : {circle_from(a, c), circle_from(b, c)}) {
      if (cand.radius > best.radius) best = cand;
    }
    return best;
  }
  const double b2 = bx * bx + by * by;
  const double c2 = cx * cx + cy * cy;
  const ImagePoint center{a.x + (cy * b2 - by * c2) / d, a.y + (bx * c2 - cx * b2) / d};
  return {center, std::max({euclidean_distance(center, a), euclidean_distance(center, b),
                            euclidean_distance(center, c)})};
}

}  // namespace

double TrackerConfig::resolved_gate(int width, int height) const {
  if (gate_px > 0.0) return gate_px;
  return 40.0 * std::hypot(static_cast<double>(width), static_cast<double>(height)) / 800.0;
}

void Kalman::reset(ImagePoint z, double measurement_noise) {
  x << z.x, z.y, 0.0, 0.0;
  P = Eigen::Matrix4d::Zero();
  P(0, 0) = P(1, 1) = measurement_noise;
  P(2, 2) = P(3, 3) = 100.0;
  initialized = true;
}

void Kalman::predict(double process_noise) {
  Eigen::Matrix4d F = Eigen::Matrix4d::Identity();
  F(0, 2) = F(1, 3) = 1.0;
  // Discrete white-acceleration noise for dt = 1.
  Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
  Q(0, 0) = Q(1, 1) = 0.25;
  Q(0, 2) = Q(2, 0) = Q(1, 3) = Q(3, 1) = 0.5;
  Q(2, 2) = Q(3, 3) = 1.0;
  x = F * x;
  P = F * P * F.transpose() + process_noise * Q;
  P = 0.5 * (P + P.transpose());
}

void Kalman::correct(ImagePoint z, double measurement_noise) {
  Eigen::Matrix<double, 2, 4> H = Eigen::Matrix<double, 2, 4>::Zero();
  H(0, 0) = H(1, 1) = 1.0;
  const Eigen::Matrix2d R = measurement_noise * Eigen::Matrix2d::Identity();
  const Eigen::Matrix2d S = H * P * H.transpose() + R;
  const Eigen::Matrix<double, 4, 2> K = P * H.transpose() * S.inverse();
  x += K * (Eigen::Vector2d(z.x, z.y) - H * x);
  // Joseph form keeps P symmetric positive semi-definite.
  const Eigen::Matrix4d I_KH = Eigen::Matrix4d::Identity() - K * H;
  P = I_KH * P * I_KH.transpose() + K * R * K.transpose();
  P = 0.5 * (P + P.transpose());
}

GrayFrame binarize(const GrayFrame& frame, int threshold) {
  if (threshold <= 0 || threshold >= 255) fail(ErrorCode::kInvalidArgument, "binarize", "threshold must be in (0, 255)");
  GrayFrame out(frame.width(), frame.height(), 0, frame.timestamp());
  const auto src = frame.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= threshold ? 255 : 0;
  return out;
}

std::vector<Contour> extract_contours(const GrayFrame& binary) {
  std::vector<Contour> out;
  for (const auto& comp : label_components(binary)) {
    Contour c;
    c.points = trace_boundary(binary, comp.front());
    c.area = c.points.size() >= 3 ? contour_area(c.points) : 0.0;
    out.push_back(std::move(c));
  }
  return out;
}

double signed_area(std::span<const ImagePoint> polygon) {
  double u = 0.0;
  double u_hat = 0.0;
  const std::size_t m = polygon.size();
  if (m == 0) return 0.0;
  // Cross sums taken relative to the first vertex; far from the origin the
  // raw products cancel badly.
  const ImagePoint o = polygon[0];
  for (std::size_t i = 0; i < m; ++i) {
    const ImagePoint a{polygon[i].x - o.x, polygon[i].y - o.y};
    const ImagePoint b{polygon[(i + 1) % m].x - o.x, polygon[(i + 1) % m].y - o.y};
    u += a.x * b.y;
    u_hat += b.x * a.y;
  }
  return 0.5 * (u - u_hat);
}

double contour_area(std::span<const ImagePoint> polygon) {
  if (polygon.size() < 3) fail(ErrorCode::kDegenerateContour, "contours", "area needs at least 3 points");
  return std::abs(signed_area(polygon));
}

std::vector<Contour> dimension_filter(std::span<const Contour> contours, double area_min, double area_max) {
  if (!(area_min > 0.0 && area_min < area_max)) {
    fail(ErrorCode::kInvalidArgument, "dimension", "need 0 < area_min < area_max");
  }
  std::vector<Contour> out;
  for (const auto& c : contours) {
    if (area_min < c.area && c.area < area_max) out.push_back(c);
  }
  return out;
}

std::vector<Contour> confidence_gate(std::span<const Contour> contours, const lic::ConfidenceMap& map) {
  std::vector<Contour> out;
  if (map.cols == 0 || map.rows == 0) return out;
  for (const auto& c : contours) {
    if (c.points.empty()) continue;
    double x0 = c.points.front().x;
    double x1 = x0;
    double y0 = c.points.front().y;
    double y1 = y0;
    for (const auto& p : c.points) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
    const int t = map.tile_size;
    const int c0 = std::clamp(static_cast<int>(std::floor(x0 / t)), 0, map.cols - 1);
    const int c1 = std::clamp(static_cast<int>(std::floor(x1 / t)), 0, map.cols - 1);
    const int r0 = std::clamp(static_cast<int>(std::floor(y0 / t)), 0, map.rows - 1);
    const int r1 = std::clamp(static_cast<int>(std::floor(y1 / t)), 0, map.rows - 1);
    bool hit = false;
    for (int r = r0; r <= r1 && !hit; ++r) {
      for (int col = c0; col <= c1 && !hit; ++col) hit = map.at(col, r) >= lic::kMediumThreshold;
    }
    if (hit) out.push_back(c);
  }
  return out;
}

Circle min_enclosing_circle(std::span<const ImagePoint> points) {
  if (points.empty()) fail(ErrorCode::kInvalidArgument, "circle", "no points");
  std::vector<ImagePoint> pts(points.begin(), points.end());
  std::mt19937 rng(0x5eed);
  std::shuffle(pts.begin(), pts.end(), rng);
  Circle c{pts[0], 0.0};
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (inside(c, pts[i])) continue;
    c = {pts[i], 0.0};
    for (std::size_t j = 0; j < i; ++j) {
      if (inside(c, pts[j])) continue;
      c = circle_from(pts[i], pts[j]);
      for (std::size_t k = 0; k < j; ++k) {
        if (!inside(c, pts[k])) c = circle_from(pts[i], pts[j], pts[k]);
      }
    }
  }
  return c;
}

TrackResult track_arc(std::span<const Contour> contours, TrackerState state, const TrackerConfig& config) {
  std::vector<Circle> circles;
  circles.reserve(contours.size());
  for (const auto& c : contours) {
    if (!c.points.empty()) circles.push_back(min_enclosing_circle(c.points));
  }
  std::stable_sort(circles.begin(), circles.end(), [](const Circle& a, const Circle& b) { return a.radius > b.radius; });

  TrackResult out;
  out.estimate.candidates = circles.size();
  const Circle* chosen = nullptr;
  if (!state.prev_center) {
    if (!circles.empty()) chosen = &circles.front();
  } else {
    for (const auto& c : circles) {
      if (euclidean_distance(c.center, *state.prev_center) <= state.gate_distance) {
        chosen = &c;
        break;
      }
    }
  }

  if (chosen == nullptr) {
    if (state.kalman.initialized) state.kalman.predict(config.process_noise);
    ++state.misses;
    if (state.prev_center) out.estimate.center = *state.prev_center;
    out.estimate.smoothed_center = state.kalman.initialized ? state.kalman.position() : out.estimate.center;
    if (config.reacquire_after > 0 && state.misses >= config.reacquire_after) {
      state.prev_center.reset();
      state.kalman.initialized = false;
    }
    out.state = std::move(state);
    return out;
  }

  if (!state.prev_center || !state.kalman.initialized) {
    state.kalman.reset(chosen->center, config.measurement_noise);
  } else {
    state.kalman.predict(config.process_noise);
    state.kalman.correct(chosen->center, config.measurement_noise);
  }
  state.prev_center = chosen->center;
  state.misses = 0;
  out.estimate.center = chosen->center;
  out.estimate.radius = chosen->radius;
  out.estimate.smoothed_center = state.kalman.position();
  out.estimate.valid = true;
  out.state = std::move(state);
  return out;
}

ImagePoint baseline_contour_center(std::span<const Contour> contours) {
  if (contours.empty()) fail(ErrorCode::kNoArcDetected, "baseline", "no contours");
  const Contour* best = &contours.front();
  for (const auto& c : contours) {
    if (c.area > best->area) best = &c;
  }
  const auto& pts = best->points;
  const double a = pts.size() >= 3 ? signed_area(pts) : 0.0;
  if (a == 0.0) {
    ImagePoint m;
    for (const auto& p : pts) {
      m.x += p.x;
      m.y += p.y;
    }
    return {m.x / pts.size(), m.y / pts.size()};
  }
  double cx = 0.0;
  double cy = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const ImagePoint& p = pts[i];
    const ImagePoint& q = pts[(i + 1) % pts.size()];
    const double cross = p.x * q.y - q.x * p.y;
    cx += (p.x + q.x) * cross;
    cy += (p.y + q.y) * cross;
  }
  return {cx / (6.0 * a), cy / (6.0 * a)};
}

std::vector<ImagePoint> baseline_intensity_centers(const GrayFrame& binary) {
  std::vector<ImagePoint> out;
  for (const auto& comp : label_components(binary)) {
    double sx = 0.0;
    double sy = 0.0;
    for (const auto& p : comp) {
      sx += p.x;
      sy += p.y;
    }
    out.push_back({sx / comp.size(), sy / comp.size()});
  }
  return out;
}

ArcTracker::ArcTracker(TrackerConfig config, int width, int height) : config_(config) {
  state_.gate_distance = config_.resolved_gate(width, height);
  if (!(state_.gate_distance > 0.0)) fail(ErrorCode::kInvalidConfig, "track", "gate distance must be positive");
}

FrameTrack ArcTracker::process(const GrayFrame& frame, const lic::ConfidenceMap& map) {
  FrameTrack out;
  out.contours = extract_contours(binarize(frame, config_.binarize_threshold));
  const auto sized = dimension_filter(out.contours, config_.area_min, config_.area_max);
  out.after_dimension = sized.size();
  const auto gated = confidence_gate(sized, map);
  out.after_gate = gated.size();
  auto result = track_arc(gated, std::move(state_), config_);
  state_ = std::move(result.state);
  out.estimate = result.estimate;
  return out;
}

}  // namespace weld::arc
