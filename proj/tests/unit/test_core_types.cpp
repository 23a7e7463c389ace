#include <cmath>
#include <random>

#include "doctest.h"
#include "weld/core_types.hpp"
#include "weld/error.hpp"

using namespace weld;

TEST_CASE("normalize_intensity") {
  CHECK(normalize_intensity(0.0) == 0.0);
  CHECK(normalize_intensity(255.0) == 1.0);
  CHECK(normalize_intensity(51.0) == doctest::Approx(51.0 / 255.0).epsilon(1e-15));
  CHECK_THROWS_AS(normalize_intensity(-0.5), Error);
  CHECK_THROWS_AS(normalize_intensity(255.5), Error);
}

TEST_CASE("normalize_intensity is monotone") {
  double prev = -1.0;
  for (int i = 0; i <= 2550; ++i) {
    const double v = normalize_intensity(i / 10.0);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("euclidean_distance") {
  CHECK(euclidean_distance(ImagePoint{0, 0}, ImagePoint{0, 0}) == 0.0);
  CHECK(euclidean_distance(ImagePoint{0, 0}, ImagePoint{3, 4}) == 5.0);
  CHECK(euclidean_distance(ImagePoint{1, 2}, ImagePoint{4, 6}) == 5.0);
  CHECK(euclidean_distance(Point3{1, 2, 3}, Point3{1, 2, 3}) == 0.0);
}

TEST_CASE("euclidean_distance is symmetric and non-negative") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e4, 1e4);
  for (int i = 0; i < 1000; ++i) {
    const ImagePoint a{u(rng), u(rng)};
    const ImagePoint b{u(rng), u(rng)};
    CHECK(euclidean_distance(a, b) == euclidean_distance(b, a));
    CHECK(euclidean_distance(a, b) >= 0.0);
  }
}

TEST_CASE("line segment orientation") {
  const LineSegment h({0, 0}, {10, 0});
  CHECK(h.length() == 10.0);
  CHECK(h.orientation_deg() == doctest::Approx(0.0));
  const LineSegment v({5, 0}, {5, 10});
  CHECK(v.orientation_deg() == doctest::Approx(-90.0));
  const LineSegment d({0, 0}, {3, 4});
  CHECK(d.length() == 5.0);
}

TEST_CASE("orientation survives endpoint swap") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-500, 500);
  for (int i = 0; i < 1000; ++i) {
    const ImagePoint a{u(rng), u(rng)};
    const ImagePoint b{u(rng), u(rng)};
    const LineSegment s(a, b);
    const LineSegment t(b, a);
    CHECK(s.orientation_deg() == doctest::Approx(t.orientation_deg()).epsilon(1e-12));
    CHECK(s.orientation_deg() >= -90.0);
    CHECK(s.orientation_deg() < 90.0);
    CHECK(s.length() == doctest::Approx(std::hypot(a.x - b.x, a.y - b.y)));
  }
}

TEST_CASE("orientation folding") {
  CHECK(fold_orientation_deg(90.0) == doctest::Approx(-90.0));
  CHECK(fold_orientation_deg(135.0) == doctest::Approx(-45.0));
  CHECK(fold_orientation_deg(-100.0) == doctest::Approx(80.0));
  CHECK(orientation_difference_deg(89.0, -89.0) == doctest::Approx(-2.0));
  CHECK(orientation_difference_deg(10.0, 0.0) == doctest::Approx(10.0));
}

TEST_CASE("pinhole projection") {
  const Intrinsics k;
  const auto p = project(k, {0, 0, 500});
  REQUIRE(p);
  CHECK(p->x == 320.0);
  CHECK(p->y == 240.0);
  CHECK_FALSE(project(k, {1, 1, 0}));
  CHECK_FALSE(project(k, {1, 1, -5}));
  const Point3 q{12.5, -30.0, 480.0};
  const auto px = project(k, q);
  REQUIRE(px);
  CHECK(px->x == doctest::Approx(525.0 * 12.5 / 480.0 + 320.0));
  CHECK(px->y == doctest::Approx(525.0 * -30.0 / 480.0 + 240.0));
  const auto back = back_project(k, *px, 480.0);
  CHECK(back.x == doctest::Approx(q.x));
  CHECK(back.y == doctest::Approx(q.y));
  CHECK(back.z == doctest::Approx(q.z));
}

TEST_CASE("number format") {
  CHECK(format_g6(1.0) == "1");
  CHECK(format_g6(0.1234567) == "0.123457");
  CHECK(format_g6(std::nan("")) == "nan");
}

TEST_CASE("error carries code and stage") {
  try {
    fail(ErrorCode::kNoGrooveFound, "groove", "flat");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoGrooveFound);
    CHECK(e.stage() == "groove");
    CHECK(to_string(e.code()) == "NoGrooveFound");
  }
}
