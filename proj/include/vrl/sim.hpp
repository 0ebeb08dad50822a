#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vrl/rng.hpp"

namespace vrl {

struct Vec2 {
  double x = 0, y = 0;
};

// Scene classes shared by the segmentation maps and the parsing palette.
enum SegClass : uint8_t {
  kClassRoad = 0,
  kClassLane = 1,
  kClassOffroad = 2,
  kClassSky = 3,
  kClassBuilding = 4,
  kClassObstacle = 5,
};
inline constexpr int kNumClasses = 6;

// Parsing palette in [-1, 1] RGB; classes are mutually far apart so
// nearest-palette classification is robust.
extern const std::array<std::array<float, 3>, kNumClasses> kClassPalette;

inline constexpr int kFrameSize = 64;
inline constexpr int kNumActions = 9;
inline constexpr double kCarWidth = 2.0;
inline constexpr double kMaxSpeed = 20.0;
inline constexpr double kDefaultDt = 0.1;
inline constexpr int kEpisodeStepBudget = 2000;

struct Track {
  std::string id;
  std::vector<Vec2> centerline;  // simple closed polygon; segment i joins pt i and i+1 (mod n)
  double half_width = 6.0;
  uint64_t style_seed = 0;

  // Derived on finalize().
  std::vector<double> cum_len;
  double length = 0;
  struct Post {
    Vec2 pos;
    double height = 0, width = 0;
  };
  std::vector<Post> posts;  // trackside obstacles, derived from style_seed

  // Exact nearest-segment candidates on a coarse grid.
  double grid_x0 = 0, grid_y0 = 0, grid_cell = 5.0;
  int grid_w = 0, grid_h = 0;
  std::vector<std::vector<int>> grid_cells;

  // Computes derived data and validates invariants; throws on violation.
  void finalize();
};

enum class TrackSpec { TrackA, TrackB };

Track make_track(TrackSpec spec);
Track make_track_seeded(uint64_t seed);

struct NearestResult {
  double dist = 0;          // unsigned meters from centerline
  int seg_index = 0;        // ties broken by lowest index
  double param = 0;         // arc-length position of the foot point
  double tangent_angle = 0;
  double side = 0;          // >0 left of centerline, <0 right (signed, for controllers)
};
NearestResult nearest_centerline_point(const Track& track, Vec2 p);

struct CarState {
  Vec2 position;
  double heading = 0;      // radians
  double speed = 0;        // m/s, >= 0
  double alpha = 0;        // angle between velocity and track tangent, (-pi, pi]
  double dist_center = 0;  // unsigned meters
  bool collided = false;
};

struct RewardConfig {
  double beta = 0.006;
  double gamma_collision = -0.025;
};

// (speed * cos(alpha) - dist_center) * beta, or gamma on collision.
double compute_reward(const CarState& state, const RewardConfig& cfg);

// Action layout follows the 9-way scheme: index % 3 is lateral
// (0 straight, 1 left, 2 right), index / 3 is longitudinal
// (0 accelerate, 1 brake, 2 coast).
struct ActionDecode {
  double steer_rate = 0;  // rad/s, + is left
  double accel = 0;       // m/s^2
};
ActionDecode decode_action(int action);
inline constexpr double kSteerRate = 0.25;
inline constexpr double kAccel = 4.0;
inline constexpr double kBrake = -6.0;

CarState reset_car(const Track& track, uint64_t rng_seed);

struct StepOutput {
  CarState state;
  double reward = 0;
  bool done = false;  // collision only; episode budget handled by Simulator
};
StepOutput advance(const Track& track, const CarState& state, int action, double dt,
                   const RewardConfig& cfg);

struct RenderStyle {
  enum class Kind { Virtual, Parsing, Real, RandomizedVirtual };
  Kind kind = Kind::Virtual;
  uint64_t seed = 0;  // used by RandomizedVirtual

  static RenderStyle virt() { return {Kind::Virtual, 0}; }
  static RenderStyle parsing() { return {Kind::Parsing, 0}; }
  static RenderStyle real() { return {Kind::Real, 0}; }
  static RenderStyle randomized(uint64_t seed) { return {Kind::RandomizedVirtual, seed}; }
};

std::vector<RenderStyle> randomized_styles(int n, uint64_t seed);

// CHW float frame in [-1, 1].
struct Frame {
  int height = kFrameSize, width = kFrameSize;
  std::vector<float> data;  // 3 * height * width

  Frame() : data(static_cast<size_t>(3 * kFrameSize * kFrameSize), 0.f) {}
  float& at(int c, int y, int x) { return data[static_cast<size_t>((c * height + y) * width + x)]; }
  float at(int c, int y, int x) const {
    return data[static_cast<size_t>((c * height + y) * width + x)];
  }
};

struct SegMap {
  int height = kFrameSize, width = kFrameSize;
  std::vector<uint8_t> labels;

  SegMap() : labels(static_cast<size_t>(kFrameSize * kFrameSize), 0) {}
  uint8_t& at(int y, int x) { return labels[static_cast<size_t>(y * width + x)]; }
  uint8_t at(int y, int x) const { return labels[static_cast<size_t>(y * width + x)]; }
};

SegMap render_segmentation(const CarState& state, const Track& track);
Frame render(const CarState& state, const Track& track, const RenderStyle& style);

// Parsing-style frame of a segmentation map (exact palette image).
Frame palette_frame(const SegMap& seg);
// Nearest-palette class of every pixel; ties resolved to the lowest class.
SegMap nearest_palette_classes(const Frame& frame);
double segmap_agreement(const SegMap& a, const SegMap& b);

// Center-following controller used for paired-data capture and labeled drive
// logs. Steering command sign follows the label convention: positive degrees
// steer right, negative steer left.
struct ControlDecision {
  double steer_deg = 0;
  int action = 6;  // coast straight
};
ControlDecision center_follow_control(const Track& track, const CarState& state,
                                      double jitter_deg = 0, Rng* rng = nullptr);

// Episode wrapper owning the step budget.
class Simulator {
 public:
  explicit Simulator(Track track, RewardConfig cfg = {}, int max_steps = kEpisodeStepBudget);

  const CarState& reset(uint64_t seed);
  struct Out {
    double reward = 0;
    bool done = false;
  };
  Out step(int action, double dt = kDefaultDt);

  const CarState& state() const { return state_; }
  const Track& track() const { return track_; }
  int steps() const { return steps_; }
  int max_steps() const { return max_steps_; }
  const RewardConfig& reward_config() const { return cfg_; }

 private:
  Track track_;
  RewardConfig cfg_;
  int max_steps_;
  CarState state_;
  int steps_ = 0;
};

}  // namespace vrl
