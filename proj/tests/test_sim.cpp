#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "vrl/image_io.hpp"
#include "vrl/sim.hpp"

using namespace vrl;
namespace fs = std::filesystem;

namespace {

// Rounded-rectangle test track with a long axis-aligned straight.
Track rectangle_track() {
  Track t;
  t.id = "rect";
  t.half_width = 6.0;
  t.style_seed = 99;
  auto add_line = [&](Vec2 a, Vec2 b) {
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    const int n = static_cast<int>(std::ceil(len / 4.0));
    for (int i = 0; i < n; ++i)
      t.centerline.push_back({a.x + (b.x - a.x) * i / n, a.y + (b.y - a.y) * i / n});
  };
  add_line({0, 0}, {160, 0});
  add_line({160, 0}, {160, 60});
  add_line({160, 60}, {0, 60});
  add_line({0, 60}, {0, 0});
  t.finalize();
  return t;
}

}  // namespace

TEST_CASE("reward function matches the stated formula exactly") {
  RewardConfig cfg;
  CarState s;
  s.speed = 10;
  s.alpha = 0;
  s.dist_center = 0;
  s.collided = false;
  CHECK(std::abs(compute_reward(s, cfg) - 0.06) < 1e-12);

  s.collided = true;
  CHECK(std::abs(compute_reward(s, cfg) - (-0.025)) < 1e-15);

  s.collided = false;
  s.speed = 5;
  s.alpha = std::numbers::pi / 2;
  s.dist_center = 1;
  CHECK(std::abs(compute_reward(s, cfg) - (-0.006)) < 1e-12);
}

TEST_CASE("reward bound and monotonicity properties") {
  RewardConfig cfg;
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    CarState s;
    s.speed = rng.uniform(0, kMaxSpeed);
    s.alpha = rng.uniform(-std::numbers::pi, std::numbers::pi);
    s.dist_center = rng.uniform(0, 6);
    s.collided = false;
    CHECK(compute_reward(s, cfg) <= s.speed * cfg.beta + 1e-12);
    CarState farther = s;
    farther.dist_center += rng.uniform(0.01, 2.0);
    CHECK(compute_reward(farther, cfg) < compute_reward(s, cfg));
  }
}

TEST_CASE("action decoding covers the 9-way scheme") {
  // lateral: 0 straight, 1 left (+), 2 right (-); longitudinal by group
  CHECK(decode_action(0).steer_rate == 0.0);
  CHECK(decode_action(0).accel == kAccel);
  CHECK(decode_action(1).steer_rate > 0.0);
  CHECK(decode_action(2).steer_rate < 0.0);
  CHECK(decode_action(4).accel == kBrake);
  CHECK(decode_action(4).steer_rate > 0.0);
  CHECK(decode_action(6).accel == 0.0);
  CHECK(decode_action(8).steer_rate < 0.0);
  CHECK_THROWS_AS(decode_action(-1), std::invalid_argument);
  CHECK_THROWS_AS(decode_action(9), std::invalid_argument);
}

TEST_CASE("reset spawns on the centerline, deterministically, seed-independent") {
  const Track track = make_track(TrackSpec::TrackA);
  const CarState a = reset_car(track, 7);
  CHECK(a.dist_center == 0.0);
  CHECK(a.alpha == 0.0);
  CHECK(a.speed == 0.0);
  CHECK_FALSE(a.collided);
  const CarState b = reset_car(track, 7);
  CHECK(a.position.x == b.position.x);
  CHECK(a.heading == b.heading);
  const CarState c = reset_car(track, 8);
  CHECK(a.position.x == c.position.x);
  CHECK(a.position.y == c.position.y);
  CHECK(a.heading == c.heading);
}

TEST_CASE("step applies kinematics and flags collisions") {
  const Track track = make_track(TrackSpec::TrackA);
  RewardConfig cfg;
  CarState s = reset_car(track, 0);
  // accelerate straight one step: v = 0.4, moves along tangent
  StepOutput out = advance(track, s, 0, 0.1, cfg);
  CHECK(out.state.speed == doctest::Approx(0.4));
  CHECK_FALSE(out.done);

  // off-road state stays collided and returns gamma
  CarState off = s;
  off.position.x += 100.0;  // far outside
  out = advance(track, off, 6, 0.1, cfg);
  CHECK(out.state.collided);
  CHECK(out.reward == doctest::Approx(-0.025).epsilon(1e-12));
  CHECK(out.done);

  CHECK_THROWS_AS(advance(track, s, 0, 0.0, cfg), std::invalid_argument);
  CHECK_THROWS_AS(advance(track, s, 11, 0.1, cfg), std::invalid_argument);
}

TEST_CASE("step path reproduces the non-collision reward exactly") {
  const Track track = rectangle_track();
  RewardConfig cfg;
  CarState s = reset_car(track, 0);
  for (int i = 0; i < 25; ++i) s = advance(track, s, 0, 0.1, cfg).state;  // speed reaches 10
  REQUIRE(s.speed == doctest::Approx(10.0).epsilon(1e-12));
  const StepOutput out = advance(track, s, 6, 0.1, cfg);  // coast straight
  CHECK(out.state.dist_center == 0.0);
  CHECK(out.state.alpha == 0.0);
  CHECK(std::abs(out.reward - 0.06) < 1e-12);
}

TEST_CASE("stored dist_center matches a recomputation from position") {
  const Track track = make_track(TrackSpec::TrackB);
  Simulator sim(track);
  sim.reset(3);
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    sim.step(static_cast<int>(rng.uniform_int(kNumActions)));
    const CarState& s = sim.state();
    const double recomputed = nearest_centerline_point(track, s.position).dist;
    CHECK(std::abs(recomputed - s.dist_center) < 1e-9);
    if (s.collided) sim.reset(3);
  }
}

TEST_CASE("straight-line sanity: full throttle on a straight keeps the center") {
  const Track track = rectangle_track();
  RewardConfig cfg;
  CarState s = reset_car(track, 0);
  double max_speed_seen = 0;
  for (int i = 0; i < 120; ++i) {
    StepOutput out = advance(track, s, 0, 0.1, cfg);  // accelerate straight
    s = out.state;
    if (s.position.x > 150) break;  // stop before the corner
    CHECK(std::abs(s.dist_center) < 1e-9);
    max_speed_seen = std::max(max_speed_seen, s.speed);
    CHECK(s.speed <= kMaxSpeed + 1e-12);
  }
  CHECK(max_speed_seen == doctest::Approx(kMaxSpeed));
}

TEST_CASE("trajectories are bit-deterministic given seed and actions") {
  const Track track = make_track(TrackSpec::TrackA);
  auto run = [&]() {
    Simulator sim(track);
    sim.reset(5);
    Rng rng(6);
    std::vector<double> xs;
    for (int i = 0; i < 150; ++i) {
      const int a = static_cast<int>(rng.uniform_int(kNumActions));
      sim.step(a);
      xs.push_back(sim.state().position.x);
      xs.push_back(sim.state().speed);
      if (sim.state().collided) sim.reset(5);
    }
    return xs;
  };
  CHECK(run() == run());
}

TEST_CASE("render is pure and in range") {
  const Track track = make_track(TrackSpec::TrackA);
  CarState s = reset_car(track, 0);
  const Frame a = render(s, track, RenderStyle::real());
  const Frame b = render(s, track, RenderStyle::real());
  CHECK(a.data == b.data);
  for (float v : a.data) {
    CHECK(v >= -1.f);
    CHECK(v <= 1.f);
  }
}

TEST_CASE("parsing render is the palette image of the segmentation") {
  const Track track = make_track(TrackSpec::TrackA);
  CarState s = reset_car(track, 0);
  const SegMap seg = render_segmentation(s, track);
  const Frame parsing = render(s, track, RenderStyle::parsing());
  CHECK(parsing.data == palette_frame(seg).data);
  // palette image maps back to exactly the same classes
  const SegMap back = nearest_palette_classes(parsing);
  CHECK(back.labels == seg.labels);
}

TEST_CASE("segmentation is style-invariant and uses only the 6 classes") {
  const Track track = make_track(TrackSpec::TrackB);
  Simulator sim(track);
  sim.reset(1);
  for (int i = 0; i < 40; ++i) sim.step(center_follow_control(track, sim.state()).action);
  REQUIRE_FALSE(sim.state().collided);
  const CarState s = sim.state();
  const SegMap seg = render_segmentation(s, track);
  for (uint8_t c : seg.labels) CHECK(c < kNumClasses);
  // the geometry pass is shared, so any style's class view matches it
  CHECK(nearest_palette_classes(render(s, track, RenderStyle::parsing())).labels == seg.labels);
  // bottom rows are dominated by road when driving the centerline
  int road = 0, n = 0;
  for (int y = 56; y < 64; ++y)
    for (int x = 16; x < 48; ++x) {
      road += seg.at(y, x) == kClassRoad || seg.at(y, x) == kClassLane;
      ++n;
    }
  CHECK(static_cast<double>(road) / n > 0.8);
}

TEST_CASE("all six classes appear over a lap") {
  const Track track = make_track(TrackSpec::TrackA);
  Simulator sim(track);
  sim.reset(2);
  std::set<int> seen;
  for (int i = 0; i < 400; ++i) {
    sim.step(center_follow_control(track, sim.state()).action);
    const SegMap seg = render_segmentation(sim.state(), track);
    for (uint8_t c : seg.labels) seen.insert(c);
    if (static_cast<int>(seen.size()) == kNumClasses) break;
  }
  CHECK(static_cast<int>(seen.size()) == kNumClasses);
}

TEST_CASE("virtual and real styles differ on at least 30 percent of pixels") {
  const Track track = make_track(TrackSpec::TrackA);
  const CarState s = reset_car(track, 0);
  const Frame virt = render(s, track, RenderStyle::virt());
  const Frame real = render(s, track, RenderStyle::real());
  int differing = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      bool diff = false;
      for (int c = 0; c < 3; ++c)
        if (std::abs(virt.at(c, y, x) - real.at(c, y, x)) > 1e-3) diff = true;
      differing += diff;
    }
  CHECK(static_cast<double>(differing) / (64 * 64) >= 0.30);
}

TEST_CASE("randomized styles are distinct and deterministic") {
  auto styles = randomized_styles(10, 42);
  REQUIRE(styles.size() == 10);
  const Track track = make_track(TrackSpec::TrackA);
  const CarState s = reset_car(track, 0);
  std::vector<Frame> frames;
  for (const auto& st : styles) frames.push_back(render(s, track, st));
  for (size_t i = 0; i < frames.size(); ++i)
    for (size_t j = i + 1; j < frames.size(); ++j) {
      int differing = 0;
      for (size_t k = 0; k < frames[i].data.size(); ++k)
        differing += std::abs(frames[i].data[k] - frames[j].data[k]) > 1e-3;
      CHECK(differing > static_cast<int>(frames[i].data.size() / 10));  // pairwise distinct
    }
  auto again = randomized_styles(10, 42);
  for (size_t i = 0; i < styles.size(); ++i) CHECK(styles[i].seed == again[i].seed);
  CHECK_THROWS_AS(randomized_styles(0, 1), std::invalid_argument);
  // n=1 differs from the canonical virtual style
  auto one = randomized_styles(1, 7);
  const Frame virt = render(s, track, RenderStyle::virt());
  const Frame rand1 = render(s, track, one[0]);
  CHECK(virt.data != rand1.data);
  // randomization changes appearance, never geometry
  CHECK(nearest_palette_classes(render(s, track, RenderStyle::parsing())).labels ==
        render_segmentation(s, track).labels);
}

TEST_CASE("track construction is deterministic and validated") {
  const Track a1 = make_track(TrackSpec::TrackA);
  const Track a2 = make_track(TrackSpec::TrackA);
  CHECK(a1.id == a2.id);
  REQUIRE(a1.centerline.size() == a2.centerline.size());
  for (size_t i = 0; i < a1.centerline.size(); ++i) {
    CHECK(a1.centerline[i].x == a2.centerline[i].x);
    CHECK(a1.centerline[i].y == a2.centerline[i].y);
  }
  const Track b = make_track(TrackSpec::TrackB);
  CHECK(a1.style_seed != b.style_seed);
  CHECK(a1.centerline.size() >= 32);
  bool geometry_differs = a1.centerline.size() != b.centerline.size();
  if (!geometry_differs)
    for (size_t i = 0; i < a1.centerline.size(); ++i)
      if (a1.centerline[i].x != b.centerline[i].x) geometry_differs = true;
  CHECK(geometry_differs);
}

TEST_CASE("seeded tracks satisfy the invariants across 100 seeds") {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const Track t = make_track_seeded(seed);  // finalize() throws on violation
    CHECK(t.centerline.size() >= 32);
    CHECK(t.half_width > kCarWidth);
    for (size_t i = 0; i < t.centerline.size(); ++i) {
      const Vec2 a = t.centerline[i];
      const Vec2 b = t.centerline[(i + 1) % t.centerline.size()];
      CHECK(std::hypot(b.x - a.x, b.y - a.y) < 5.0);
    }
  }
}

TEST_CASE("track invariant violations are rejected") {
  Track t;
  t.id = "bad";
  t.half_width = 6;
  for (int i = 0; i < 8; ++i)
    t.centerline.push_back({4.0 * std::cos(i * std::numbers::pi / 4), 4.0 * std::sin(i * std::numbers::pi / 4)});
  CHECK_THROWS_AS(t.finalize(), std::invalid_argument);  // too few vertices

  Track narrow = make_track(TrackSpec::TrackA);
  narrow.half_width = 1.0;
  CHECK_THROWS_AS(narrow.finalize(), std::invalid_argument);  // narrower than the car
}

TEST_CASE("nearest point ties break to the lowest segment index") {
  const Track t = rectangle_track();
  // exactly at vertex 1: equidistant to segments 0 and 1
  const NearestResult n = nearest_centerline_point(t, t.centerline[1]);
  CHECK(n.seg_index == 0);
  CHECK(n.dist == doctest::Approx(0.0));
}

TEST_CASE("center-follow controller survives a full lap") {
  const Track track = make_track(TrackSpec::TrackB);
  Simulator sim(track);
  sim.reset(9);
  double traveled = 0;
  Vec2 prev = sim.state().position;
  for (int i = 0; i < 3000 && traveled < 1.05 * track.length; ++i) {
    const auto out = sim.step(center_follow_control(track, sim.state()).action);
    CHECK_FALSE(sim.state().collided);
    if (out.done) break;
    traveled += std::hypot(sim.state().position.x - prev.x, sim.state().position.y - prev.y);
    prev = sim.state().position;
  }
  CHECK(traveled >= 1.05 * track.length);
}

TEST_CASE("episode budget terminates episodes") {
  Simulator sim(make_track(TrackSpec::TrackA), RewardConfig{}, 5);
  sim.reset(0);
  bool done = false;
  for (int i = 0; i < 5; ++i) done = sim.step(6).done;
  CHECK(done);
}

TEST_CASE("ppm and pgm files round trip") {
  const auto dir = fs::temp_directory_path() / "vrl_test_sim";
  fs::create_directories(dir);
  const Track track = make_track(TrackSpec::TrackA);
  const CarState s = reset_car(track, 0);
  const SegMap seg = render_segmentation(s, track);
  const Frame parsing = palette_frame(seg);

  const std::string ppm = (dir / "frame.ppm").string();
  write_ppm(ppm, parsing);
  const Frame back = read_ppm(ppm);
  // 8-bit quantization: classes must survive exactly
  CHECK(nearest_palette_classes(back).labels == seg.labels);
  for (size_t i = 0; i < back.data.size(); ++i)
    CHECK(std::abs(back.data[i] - parsing.data[i]) <= 1.f / 127.f);

  const std::string pgm = (dir / "seg.pgm").string();
  write_pgm(pgm, seg);
  CHECK(read_pgm(pgm).labels == seg.labels);
}
