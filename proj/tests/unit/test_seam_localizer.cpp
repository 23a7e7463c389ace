#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "oracles/oracles.hpp"
#include "weld/error.hpp"
#include "weld/seam_localizer.hpp"
#include "weld/sim_harness.hpp"

using namespace weld;
using namespace weld::seam;

namespace {

LineSegment at_angle(ImagePoint from, double deg, double len) {
  const double r = deg * M_PI / 180.0;
  return LineSegment(from, {from.x + len * std::cos(r), from.y + len * std::sin(r)});
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIo;
}

PointCloud plane_cloud(double z, double x_max_px = 640.0) {
  PointCloud cloud;
  for (int v = 0; v < 480; v += 2) {
    for (int u = 0; u < static_cast<int>(x_max_px); u += 2) {
      cloud.points.push_back(back_project(cloud.intrinsics, {double(u), double(v)}, z));
    }
  }
  return cloud;
}

}  // namespace

TEST_CASE("groove segmentation on a fillet joint") {
  sim::WorkpieceSpec spec;
  const auto wp = sim::build_workpiece(spec, {}, 3, 0.2);
  const auto groove = segment_groove(wp.cloud, {});
  REQUIRE(groove.points.size() >= 50);
  // Every groove point lies in the V, i.e. within the half-width of the true joint line
  // plus a millimetre.
  const auto& a = wp.truth.points_3d.front();
  const auto& b = wp.truth.points_3d.back();
  const double lx = b.x - a.x, ly = b.y - a.y, lz = b.z - a.z;
  const double ll = std::sqrt(lx * lx + ly * ly + lz * lz);
  double worst = 0.0;
  for (const auto& p : groove.points) {
    const double px = p.x - a.x, py = p.y - a.y, pz = p.z - a.z;
    const double cx = py * lz - pz * ly, cy = pz * lx - px * lz, cz = px * ly - py * lx;
    worst = std::max(worst, std::sqrt(cx * cx + cy * cy + cz * cz) / ll);
  }
  CHECK(worst <= spec.groove_depth_mm * std::sqrt(2.0) + 1.0);
}

TEST_CASE("flat plate and shallow groove have no groove") {
  CHECK(code_of([] { (void)segment_groove(plane_cloud(500.0), {}); }) == ErrorCode::kNoGrooveFound);
  sim::WorkpieceSpec shallow;
  shallow.groove_depth_mm = 2.0;
  shallow.thickness_mm = 2.0;
  const auto wp = sim::build_workpiece(shallow, {}, 3, 0.2);
  CHECK(code_of([&] { (void)segment_groove(wp.cloud, {}); }) == ErrorCode::kNoGrooveFound);
}

TEST_CASE("project_to_image") {
  const Intrinsics k;
  GrooveSegment g;
  g.points = {{0, 0, 500}};
  auto pr = project_to_image(g, k);
  CHECK(pr.image.at(320, 240) == 255);
  CHECK(pr.image.count_nonzero() == 1);

  CHECK(project_to_image(GrooveSegment{}, k).image.count_nonzero() == 0);

  g.points = {{1e5, 0, 500}, {0, 0, -10}};
  pr = project_to_image(g, k);
  CHECK(pr.dropped == 2);
  CHECK(pr.image.count_nonzero() == 0);
}

TEST_CASE("projected groove line follows the analytic projection") {
  const Intrinsics k;
  GrooveSegment g;
  const Point3 a{-150, -40, 480};
  const Point3 b{130, 60, 530};
  for (int i = 0; i <= 2000; ++i) {
    const double t = i / 2000.0;
    g.points.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.z + t * (b.z - a.z)});
  }
  const auto img = project_to_image(g, k).image;
  // Closed-form pinhole of the endpoints; a line in space projects to a line.
  const ImagePoint pa{k.fx * a.x / a.z + k.cx, k.fy * a.y / a.z + k.cy};
  const ImagePoint pb{k.fx * b.x / b.z + k.cx, k.fy * b.y / b.z + k.cy};
  const double dx = pb.x - pa.x, dy = pb.y - pa.y;
  const double len = std::hypot(dx, dy);
  std::size_t marked = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (!img.at(x, y)) continue;
      ++marked;
      CHECK(std::fabs((x - pa.x) * dy - (y - pa.y) * dx) / len <= 1.0);
    }
  }
  CHECK(marked > 200);
}

TEST_CASE("denoise examples") {
  GrayFrame single(20, 20);
  single.at(10, 10) = 255;
  CHECK(denoise(single, 3).count_nonzero() == 0);

  const GrayFrame empty(20, 20);
  CHECK(denoise(empty, 3) == empty);

  CHECK_THROWS_AS(denoise(empty, 4), Error);
  CHECK_THROWS_AS(denoise(empty, 1), Error);
}

TEST_CASE("denoise keeps a solid 10 px band end to end") {
  GrayFrame band(80, 40);
  for (int y = 15; y < 25; ++y) {
    for (int x = 10; x < 70; ++x) band.at(x, y) = 255;
  }
  const auto out = denoise(band, 3);
  CHECK(out == oracle::majority_filter(band, 3));
  for (int y = 15; y < 25; ++y) {
    int first = -1, last = -1;
    for (int x = 0; x < 80; ++x) {
      if (out.at(x, y)) {
        if (first < 0) first = x;
        last = x;
      }
    }
    CHECK(first >= 10);
    CHECK(first <= 11);
    CHECK(last <= 69);
    CHECK(last >= 68);
  }
  for (int y = 16; y < 24; ++y) CHECK(out.at(10, y) == 255);
}

TEST_CASE("denoise matches the brute-force filter and is idempotent") {
  std::mt19937_64 rng(17);
  for (int k : {3, 5}) {
    for (int trial = 0; trial < 20; ++trial) {
      GrayFrame f(48, 36);
      std::bernoulli_distribution on(0.3 + 0.02 * trial);
      for (auto& p : f.pixels()) p = on(rng) ? 255 : 0;
      const auto once = denoise(f, k);
      CHECK(once == oracle::majority_filter(f, k));
      CHECK(denoise(once, k) == once);
      for (std::size_t i = 0; i < f.pixels().size(); ++i) {
        if (once.pixels()[i]) CHECK(f.pixels()[i]);
      }
    }
  }
}

TEST_CASE("detect_edges") {
  const GrayFrame flat(40, 30, 128);
  CHECK(detect_edges(flat, 50, 150).count_nonzero() == 0);

  GrayFrame step(40, 30);
  for (int y = 0; y < 30; ++y) {
    for (int x = 20; x < 40; ++x) step.at(x, y) = 255;
  }
  const auto e = detect_edges(step, 50, 150);
  for (int y = 1; y < 29; ++y) {
    int count = 0;
    int col = -1;
    for (int x = 0; x < 40; ++x) {
      if (e.at(x, y)) {
        ++count;
        col = x;
      }
    }
    CHECK(count == 1);
    CHECK((col == 19 || col == 20));
  }
  CHECK_THROWS_AS(detect_edges(flat, 150, 50), Error);
  CHECK_THROWS_AS(detect_edges(flat, -1, 50), Error);
  CHECK_THROWS_AS(detect_edges(flat, 10, 300), Error);
}

TEST_CASE("extract_segments") {
  CHECK(extract_segments(GrayFrame(20, 20)).empty());

  GrayFrame pair(20, 20);
  pair.at(5, 5) = 255;
  pair.at(6, 5) = 255;
  auto segs = extract_segments(pair);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].length() == doctest::Approx(1.0));

  GrayFrame ell(60, 60);
  for (int y = 10; y <= 40; ++y) ell.at(10, y) = 255;
  for (int x = 10; x <= 50; ++x) ell.at(x, 40) = 255;
  segs = extract_segments(ell);
  REQUIRE(segs.size() == 2);
  std::vector<double> lens{segs[0].length(), segs[1].length()};
  std::sort(lens.begin(), lens.end());
  CHECK(lens[0] == doctest::Approx(30.0).epsilon(0.05));
  CHECK(lens[1] == doctest::Approx(40.0).epsilon(0.05));
}

TEST_CASE("extracted segments stay within the deviation bound") {
  GrayFrame img(200, 200);
  // Digital line of slope 0.37 plus an arc-ish curve.
  for (int x = 10; x < 190; ++x) img.at(x, static_cast<int>(std::lround(20 + 0.37 * x))) = 255;
  for (int a = 0; a < 90; ++a) {
    img.at(static_cast<int>(std::lround(100 + 60 * std::cos(a * M_PI / 180))),
           static_cast<int>(std::lround(190 - 60 * std::sin(a * M_PI / 180)))) = 255;
  }
  const auto segs = extract_segments(img, 1.5);
  CHECK(segs.size() >= 2);
  auto dist = [](const LineSegment& s, ImagePoint p) {
    const double dx = s.b().x - s.a().x, dy = s.b().y - s.a().y;
    const double l2 = dx * dx + dy * dy;
    const double t = l2 > 0 ? std::clamp(((p.x - s.a().x) * dx + (p.y - s.a().y) * dy) / l2, 0.0, 1.0) : 0.0;
    return std::hypot(p.x - s.a().x - t * dx, p.y - s.a().y - t * dy);
  };
  // Every edge pixel is explained by some segment within the deviation bound.
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (!img.at(x, y)) continue;
      double best = 1e9;
      for (const auto& s : segs) best = std::min(best, dist(s, {double(x), double(y)}));
      CHECK(best <= 1.5 + 1e-9);
    }
  }
}

TEST_CASE("filter_segments") {
  std::vector<LineSegment> two{at_angle({0, 0}, 0.5, 100), at_angle({0, 10}, 1.5, 100)};
  auto l = filter_segments(two, 10, 2.0);
  CHECK(l.inliers.size() == 2);
  CHECK(l.mean_orientation_deg == doctest::Approx(1.0).epsilon(1e-9));

  std::vector<LineSegment> three{at_angle({0, 0}, 1.0, 100), at_angle({0, 10}, 1.1, 100),
                                 at_angle({0, 20}, 0.9, 100)};
  l = filter_segments(three, 10, 0.3);
  CHECK(l.inliers.size() == 3);
  CHECK(l.mean_orientation_deg == doctest::Approx(1.0).epsilon(1e-9));

  std::vector<LineSegment> mixed{at_angle({0, 0}, 45.0, 300), at_angle({0, 10}, 0.0, 20),
                                 at_angle({0, 20}, 0.0, 20), at_angle({0, 30}, 0.0, 20)};
  l = filter_segments(mixed, 100, 10.0);
  REQUIRE(l.inliers.size() == 1);
  CHECK(l.mean_orientation_deg == doctest::Approx(45.0).epsilon(1e-9));

  std::vector<LineSegment> shorts{at_angle({0, 0}, 0.0, 5)};
  CHECK(code_of([&] { (void)filter_segments(shorts, 10, 2.0); }) == ErrorCode::kNoCandidateLines);
  CHECK(code_of([&] { (void)filter_segments(two, 10, 0.0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("filter_segments output is self-consistent") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> ang(-30, 30);
  std::uniform_real_distribution<double> len(5, 200);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<LineSegment> segs;
    for (int i = 0; i < 12; ++i) segs.push_back(at_angle({0, double(i)}, ang(rng), len(rng)));
    SeamLine l;
    try {
      l = filter_segments(segs, 50, 8.0);
    } catch (const Error&) {
      continue;
    }
    // Orientations are axial, so average on the doubled angle.
    double sx = 0.0, sy = 0.0;
    for (const auto& s : l.inliers) {
      sx += std::cos(2.0 * s.orientation_deg() * M_PI / 180.0);
      sy += std::sin(2.0 * s.orientation_deg() * M_PI / 180.0);
    }
    const double mean = std::atan2(sy, sx) * 90.0 / M_PI;
    CHECK(l.mean_orientation_deg == doctest::Approx(mean).epsilon(1e-9));
    for (const auto& s : l.inliers) {
      CHECK(s.length() >= 50.0);
      CHECK(std::fabs(orientation_difference_deg(s.orientation_deg(), mean)) <= 8.0 + 1e-9);
    }
  }
}

TEST_CASE("classify_endpoints_and_fit") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> j(-2, 2);
  SeamLine in;
  std::vector<ImagePoint> lo, hi;
  for (int i = 0; i < 8; ++i) {
    const ImagePoint a{100 + j(rng), 100 + j(rng)};
    const ImagePoint b{500 + j(rng), 400 + j(rng)};
    lo.push_back(a);
    hi.push_back(b);
    in.inliers.emplace_back(a, b);
  }
  const auto fit = classify_endpoints_and_fit(in, 640, 480);
  auto centroid = [](const std::vector<ImagePoint>& pts) {
    double x = 0, y = 0;
    for (const auto& p : pts) {
      x += p.x;
      y += p.y;
    }
    return ImagePoint{x / pts.size(), y / pts.size()};
  };
  CHECK(fit.start.x == doctest::Approx(centroid(lo).x));
  CHECK(fit.start.y == doctest::Approx(centroid(lo).y));
  CHECK(fit.end.x == doctest::Approx(centroid(hi).x));
  CHECK(fit.end.y == doctest::Approx(centroid(hi).y));

  SeamLine one;
  one.inliers.emplace_back(ImagePoint{50, 300}, ImagePoint{600, 100});
  const auto f1 = classify_endpoints_and_fit(one, 640, 480);
  CHECK(f1.start == ImagePoint{50, 300});
  CHECK(f1.end == ImagePoint{600, 100});

  SeamLine cross;
  cross.inliers.emplace_back(ImagePoint{100, 100}, ImagePoint{540, 380});
  cross.inliers.emplace_back(ImagePoint{540, 100}, ImagePoint{100, 380});
  CHECK(code_of([&] { (void)classify_endpoints_and_fit(cross, 640, 480); }) == ErrorCode::kAmbiguousSeam);
}

TEST_CASE("lift_to_3d on a plane and over a hole") {
  SeamLine line;
  line.start = {100, 240};
  line.end = {500, 240};
  const auto path = lift_to_3d(line, plane_cloud(500.0), {});
  REQUIRE(path.points_3d.size() > 10);
  for (const auto& p : path.points_3d) CHECK(std::fabs(p.z - 500.0) <= 1.0);
  for (std::size_t i = 1; i < path.points_2d.size(); ++i) CHECK(path.points_2d[i].x > path.points_2d[i - 1].x);
  double len = 0.0;
  for (std::size_t i = 1; i < path.points_3d.size(); ++i) len += euclidean_distance(path.points_3d[i - 1], path.points_3d[i]);
  CHECK(path.length_mm == doctest::Approx(len));

  CHECK(code_of([&] { (void)lift_to_3d(line, plane_cloud(500.0, 200.0), {}); }) == ErrorCode::kDepthHole);
}

TEST_CASE("localize_seam on a fillet and rotation consistency") {
  double base_detected = 0.0;
  double base_truth = 0.0;
  for (double ori : {0.0, 30.0, 60.0}) {
    sim::WorkpieceSpec spec;
    spec.orientation_deg = ori;
    sim::CameraSpec cam;
    const auto wp = sim::build_workpiece(spec, cam, 5, 0.2);
    const auto rep = localize_seam(wp.cloud, {});
    CHECK(rep.timings.size() == 8);
    const auto& p = rep.path.points_3d;
    const auto& t = wp.truth.points_3d;
    const double d = std::min(std::max(euclidean_distance(p.front(), t.front()), euclidean_distance(p.back(), t.back())),
                              std::max(euclidean_distance(p.front(), t.back()), euclidean_distance(p.back(), t.front())));
    CHECK(d <= 2.0);
    const double detected = LineSegment(rep.line.start, rep.line.end).orientation_deg();
    const double truth = LineSegment(*project(cam.intrinsics, t.front()), *project(cam.intrinsics, t.back())).orientation_deg();
    CHECK(std::fabs(orientation_difference_deg(detected, truth)) <= 2.0);
    if (ori == 0.0) {
      base_detected = detected;
      base_truth = truth;
    }
    CHECK(std::fabs(orientation_difference_deg(detected - base_detected, truth - base_truth)) <= 2.0);
  }
}
