#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "weld/error.hpp"
#include "weld/guidance.hpp"
#include "weld/sim_harness.hpp"

using namespace weld;
using namespace weld::sim;

TEST_CASE("scenario text round trip") {
  Scenario s;
  s.name = "rt";
  s.workpiece.kind = WorkpieceKind::kButt;
  s.workpiece.orientation_deg = 17.5;
  s.script.mode = ScriptMode::kWaypoints;
  s.script.waypoints = {{0, {100, 200}}, {50, {300.25, 210}}};
  s.events.push_back({3, 5, {10, 20}, 200, 7});
  s.strike = {40, 250, 15};
  s.occlusion = {0.3, 45};
  s.arc_on_start = 2;
  s.frames = 60;
  CHECK(parse_scenario(to_text(s)) == s);
}

TEST_CASE("scenario parse errors") {
  CHECK_THROWS_AS(parse_scenario("bogus 1\n"), Error);
  CHECK_THROWS_AS(parse_scenario("frames abc\n"), Error);
  CHECK_THROWS_AS(parse_scenario("frames 10 11\n"), Error);
  CHECK_THROWS_AS(parse_scenario("kind triangle\n"), Error);
  try {
    parse_scenario("seed 1\nscript nonsense\n");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParseError);
  }
  CHECK_THROWS_AS(load_scenario("/nonexistent/x.scn"), Error);
}

TEST_CASE("rng is reproducible") {
  Rng a(99), b(99), c(100);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    if (x != c.uniform()) differs = true;
  }
  CHECK(differs);
  double sum = 0.0, sq = 0.0;
  Rng n(7);
  for (int i = 0; i < 20000; ++i) {
    const double v = n.normal();
    sum += v;
    sq += v * v;
  }
  CHECK(std::fabs(sum / 20000) < 0.03);
  CHECK(std::fabs(sq / 20000 - 1.0) < 0.05);
}

TEST_CASE("build_workpiece geometries") {
  WorkpieceSpec fillet;
  const auto f = build_workpiece(fillet, {}, 1, 0.0);
  CHECK(f.cloud.points.size() > 10000);
  REQUIRE(f.truth.points_3d.size() >= 2);
  CHECK(f.truth.length_mm == doctest::Approx(fillet.seam_length_mm).epsilon(1e-6));

  WorkpieceSpec shallow;
  shallow.groove_depth_mm = 2.0;
  shallow.thickness_mm = 2.0;
  const auto s = build_workpiece(shallow, {}, 1, 0.0);
  // Depth of the groove bottom below the plate surface, measured along the camera ray.
  const auto bottom = s.truth.points_3d[s.truth.points_3d.size() / 2];
  double near_surface = 1e9;
  for (const auto& p : s.cloud.points) {
    if (std::hypot(p.x - bottom.x, p.y - bottom.y) < 40 && std::hypot(p.x - bottom.x, p.y - bottom.y) > 15) {
      near_surface = std::min(near_surface, std::fabs(bottom.z - p.z));
    }
  }
  CHECK(near_surface <= 2.5);

  WorkpieceSpec butt;
  butt.kind = WorkpieceKind::kButt;
  const auto b = build_workpiece(butt, {}, 1, 0.0);
  CHECK(b.truth.points_3d.size() >= 2);
}

TEST_CASE("arc rendering") {
  Scenario s;
  FrameTruth t;
  t.arc_center = ImagePoint{320, 240};
  const auto f = render_hdr_frame(s, t);
  CHECK(f.at(320, 240) == 255);
  const int far = static_cast<int>(std::lround(3 * s.sigma_arc_px));
  const double falloff = 255.0 * std::exp(-double(far * far) / (2.0 * s.sigma_arc_px * s.sigma_arc_px));
  CHECK(falloff < 3.0);
  CHECK(f.at(320 + far, 240) == std::lround(s.background + falloff));
  for (int d = 0; d < 60; d += 7) {
    const double v = s.background + 255.0 * std::exp(-double(d * d) / (2.0 * s.sigma_arc_px * s.sigma_arc_px));
    CHECK(f.at(320, 240 + d) == std::lround(std::min(255.0, v)));
  }

  FrameTruth dark;
  const auto d = render_hdr_frame(s, dark);
  for (auto p : d.pixels()) CHECK(p == static_cast<std::uint8_t>(s.background));
}

TEST_CASE("reflection adds a second local maximum") {
  Scenario s;
  s.events.push_back({0, 2, {500, 100}, 200, 8});
  FrameTruth t;
  t.arc_center = ImagePoint{200, 300};
  t.active_events = {0};
  const auto f = render_hdr_frame(s, t);
  const int v = f.at(500, 100);
  CHECK(v >= 200);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) CHECK(f.at(500 + dx, 100 + dy) <= v);
  }
}

TEST_CASE("occlusion masks a sector") {
  Scenario s;
  s.occlusion = {0.25, 0.0};
  FrameTruth t;
  t.arc_center = ImagePoint{320, 240};
  t.occluded = true;
  const auto f = render_hdr_frame(s, t);
  const long open = std::lround(s.background + 255.0 * std::exp(-100.0 / (2.0 * s.sigma_arc_px * s.sigma_arc_px)));
  CHECK(f.at(330, 240) < open);
  CHECK(f.at(310, 240) == open);
  CHECK(f.at(320, 250) == open);
}

TEST_CASE("run_scenario is deterministic and sized") {
  Scenario s;
  s.frames = 300;
  const auto a = run_scenario(s);
  CHECK(a.frames.size() == 300);
  CHECK(a.truth.size() == 300);
  s.frames = 40;
  const auto b = run_scenario(s);
  const auto c = run_scenario(s);
  REQUIRE(b.frames.size() == 40);
  for (std::size_t i = 0; i < b.frames.size(); ++i) CHECK(b.frames[i] == c.frames[i]);
  for (std::size_t i = 0; i < b.frames.size(); ++i) CHECK(b.frames[i] == a.frames[i]);
}

TEST_CASE("jitter statistics") {
  Scenario s;
  s.script.mode = ScriptMode::kJitter;
  s.script.jitter_px = 3.0;
  const auto wp = build_workpiece(s.workpiece, s.camera, s.seed, s.depth_noise_mm);
  const auto truth = plan_truth(s, wp.truth);
  guidance::TargetSchedule sched{wp.truth, s.script.speed_mm_s, s.arc_on_start, s.frame_rate_hz, false};
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& t : truth) {
    const auto q = guidance::target_point(sched, t.frame);
    for (double d : {t.arc_center->x - q.x, t.arc_center->y - q.y}) {
      sum += d;
      sq += d * d;
      ++n;
    }
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  CHECK(sd >= 2.5);
  CHECK(sd <= 3.5);
}

TEST_CASE("truth_at flags") {
  Scenario s;
  s.strike = {10, 255, 20};
  s.occlusion = {0.3, 90};
  s.events.push_back({5, 7, {1, 1}, 100, 5});
  auto t = truth_at(s, 6, ImagePoint{10, 10}, ImagePoint{5, 5});
  CHECK(t.occluded);
  CHECK_FALSE(t.strike_center);
  CHECK(t.active_events == std::vector<std::size_t>{0});
  t = truth_at(s, 12, std::nullopt, ImagePoint{5, 5});
  CHECK_FALSE(t.occluded);
  CHECK(t.strike_center);
  CHECK(t.active_events.empty());
}

TEST_CASE("export writes frames and truth") {
  Scenario s;
  s.frames = 3;
  const auto run = run_scenario(s);
  const auto dir = std::filesystem::temp_directory_path() / "weld_export_test";
  std::filesystem::remove_all(dir);
  export_run(run, dir);
  CHECK(std::filesystem::exists(dir / "frame_000000.pgm"));
  CHECK(std::filesystem::exists(dir / "frame_000002.pgm"));
  std::ifstream in(dir / "truth.csv");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 4);
  const auto pgm = to_pgm(run.frames[0]);
  CHECK(pgm.rfind("P5\n640 480\n255\n", 0) == 0);
  CHECK(pgm.size() == std::string("P5\n640 480\n255\n").size() + 640 * 480);
  std::filesystem::remove_all(dir);
}
