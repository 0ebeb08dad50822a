#include "vrl/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace vrl {

const std::array<std::array<float, 3>, kNumClasses> kClassPalette = {{
    {-0.45f, -0.45f, -0.40f},  // road: dark gray
    {0.90f, 0.90f, 0.85f},     // lane marking: near white
    {-0.20f, 0.60f, -0.50f},   // offroad: green
    {-0.10f, 0.30f, 0.95f},    // sky: blue
    {0.60f, 0.10f, -0.30f},    // building band: brown-orange
    {0.85f, -0.60f, 0.55f},    // obstacle: magenta
}};

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, kTwoPi);
  if (a < 0) a += kTwoPi;
  return a - std::numbers::pi;
}

// Camera model: pinhole at car position, kCamHeight above ground, looking
// along heading. Ground at depth z projects to row kHorizonRow + f*camH/z.
constexpr double kFocal = 64.0;
constexpr double kCamHeight = 1.2;
constexpr int kHorizonRow = 20;
constexpr int kBandRows = 6;  // building strip above the horizon
constexpr double kGroundScale = kFocal * kCamHeight;
constexpr double kLaneCenterHalf = 0.18;
constexpr double kLaneEdgeHalf = 0.14;
constexpr double kLaneEdgeInset = 0.45;
constexpr double kLaneDashPeriod = 4.0;
constexpr double kLaneDashDuty = 0.5;

double seg_dist2(Vec2 p, Vec2 a, Vec2 b, double* t_out) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double wx = p.x - a.x, wy = p.y - a.y;
  const double vv = vx * vx + vy * vy;
  double t = vv > 0 ? (wx * vx + wy * vy) / vv : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = wx - t * vx, dy = wy - t * vy;
  if (t_out) *t_out = t;
  return dx * dx + dy * dy;
}

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  auto cross = [](Vec2 u, Vec2 v) { return u.x * v.y - u.y * v.x; };
  const Vec2 ab{b.x - a.x, b.y - a.y};
  const Vec2 cd{d.x - c.x, d.y - c.y};
  const double d1 = cross(ab, {c.x - a.x, c.y - a.y});
  const double d2 = cross(ab, {d.x - a.x, d.y - a.y});
  const double d3 = cross(cd, {a.x - c.x, a.y - c.y});
  const double d4 = cross(cd, {b.x - c.x, b.y - c.y});
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

float hash_noise(uint64_t a, uint64_t b, uint64_t c) {
  // [-1, 1]
  return static_cast<float>(hash_mix(a, b, c) >> 40) * 0x1.0p-23f - 1.0f;
}

}  // namespace

void Track::finalize() {
  const size_t n = centerline.size();
  if (n < 32) throw std::invalid_argument("track '" + id + "': centerline needs >= 32 vertices");
  if (half_width <= kCarWidth)
    throw std::invalid_argument("track '" + id + "': half_width must exceed car width");
  cum_len.assign(n + 1, 0.0);
  for (size_t i = 0; i < n; ++i) {
    const Vec2 a = centerline[i];
    const Vec2 b = centerline[(i + 1) % n];
    const double d = std::hypot(b.x - a.x, b.y - a.y);
    if (d >= 5.0)
      throw std::invalid_argument("track '" + id + "': consecutive centerline points must be < 5 m apart");
    if (d <= 1e-9) throw std::invalid_argument("track '" + id + "': degenerate centerline segment");
    cum_len[i + 1] = cum_len[i] + d;
  }
  length = cum_len[n];
  // Simple polygon check: non-adjacent segments must not intersect.
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      if (segments_intersect(centerline[i], centerline[(i + 1) % n], centerline[j],
                             centerline[(j + 1) % n]))
        throw std::invalid_argument("track '" + id + "': centerline self-intersects");
    }
  }

  // Trackside posts every ~30 m, alternating sides, jittered by style_seed.
  posts.clear();
  const int n_posts = std::max(4, static_cast<int>(length / 30.0));
  for (int k = 0; k < n_posts; ++k) {
    if (hash_mix(style_seed, 0xB0, static_cast<uint64_t>(k)) % 5 == 0) continue;  // gaps
    const double s = (static_cast<double>(k) + 0.5) * length / n_posts;
    // Locate segment containing arc position s.
    size_t seg = 0;
    while (seg + 1 < n && cum_len[seg + 1] < s) ++seg;
    const Vec2 a = centerline[seg];
    const Vec2 b = centerline[(seg + 1) % n];
    const double seg_len = cum_len[seg + 1] - cum_len[seg];
    const double t = (s - cum_len[seg]) / seg_len;
    const double tx = (b.x - a.x) / seg_len, ty = (b.y - a.y) / seg_len;
    const double side = (k % 2 == 0) ? 1.0 : -1.0;
    const double off = half_width + 1.2 +
                       1.2 * (static_cast<double>(hash_mix(style_seed, 0xB1, k) % 1000) / 1000.0);
    Post p;
    p.pos = {a.x + t * (b.x - a.x) - side * ty * off, a.y + t * (b.y - a.y) + side * tx * off};
    p.height = 2.2 + 1.4 * (static_cast<double>(hash_mix(style_seed, 0xB2, k) % 1000) / 1000.0);
    p.width = 0.9 + 0.7 * (static_cast<double>(hash_mix(style_seed, 0xB3, k) % 1000) / 1000.0);
    posts.push_back(p);
  }

  // Exact nearest-segment candidate grid over the bounding box.
  double x0 = centerline[0].x, x1 = x0, y0 = centerline[0].y, y1 = y0;
  for (const Vec2& p : centerline) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const double margin = half_width + 8.0;
  grid_x0 = x0 - margin;
  grid_y0 = y0 - margin;
  grid_cell = 5.0;
  grid_w = static_cast<int>(std::ceil((x1 - x0 + 2 * margin) / grid_cell));
  grid_h = static_cast<int>(std::ceil((y1 - y0 + 2 * margin) / grid_cell));
  grid_cells.assign(static_cast<size_t>(grid_w * grid_h), {});
  const double half_diag = grid_cell * std::numbers::sqrt2 / 2.0;
  for (int gy = 0; gy < grid_h; ++gy) {
    for (int gx = 0; gx < grid_w; ++gx) {
      const Vec2 c{grid_x0 + (gx + 0.5) * grid_cell, grid_y0 + (gy + 0.5) * grid_cell};
      double best_upper = std::numeric_limits<double>::max();
      std::vector<double> d(n);
      for (size_t i = 0; i < n; ++i) {
        d[i] = std::sqrt(seg_dist2(c, centerline[i], centerline[(i + 1) % n], nullptr));
        best_upper = std::min(best_upper, d[i] + half_diag);
      }
      auto& cell = grid_cells[static_cast<size_t>(gy * grid_w + gx)];
      for (size_t i = 0; i < n; ++i)
        if (d[i] - half_diag <= best_upper) cell.push_back(static_cast<int>(i));
    }
  }
}

NearestResult nearest_centerline_point(const Track& track, Vec2 p) {
  const size_t n = track.centerline.size();
  const int gx = static_cast<int>(std::floor((p.x - track.grid_x0) / track.grid_cell));
  const int gy = static_cast<int>(std::floor((p.y - track.grid_y0) / track.grid_cell));
  NearestResult best;
  best.dist = std::numeric_limits<double>::max();
  double best_d2 = std::numeric_limits<double>::max();
  auto scan = [&](int i) {
    const Vec2 a = track.centerline[static_cast<size_t>(i)];
    const Vec2 b = track.centerline[(static_cast<size_t>(i) + 1) % n];
    double t;
    const double d2 = seg_dist2(p, a, b, &t);
    if (d2 < best_d2) {  // strict: ties keep the lowest segment index
      best_d2 = d2;
      best.seg_index = i;
      const double seg_len = track.cum_len[static_cast<size_t>(i) + 1] - track.cum_len[static_cast<size_t>(i)];
      best.param = track.cum_len[static_cast<size_t>(i)] + t * seg_len;
      best.tangent_angle = std::atan2(b.y - a.y, b.x - a.x);
      const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
      best.side = cross >= 0 ? 1.0 : -1.0;
    }
  };
  if (gx >= 0 && gx < track.grid_w && gy >= 0 && gy < track.grid_h) {
    for (int i : track.grid_cells[static_cast<size_t>(gy * track.grid_w + gx)]) scan(i);
  } else {
    for (size_t i = 0; i < n; ++i) scan(static_cast<int>(i));
  }
  best.dist = std::sqrt(best_d2);
  return best;
}

namespace {

Track radial_track(std::string id, uint64_t style_seed, double r0,
                   const std::vector<std::array<double, 3>>& harmonics, int vertices) {
  Track t;
  t.id = std::move(id);
  t.style_seed = style_seed;
  t.centerline.reserve(static_cast<size_t>(vertices));
  for (int i = 0; i < vertices; ++i) {
    const double th = kTwoPi * i / vertices;
    double r = r0;
    for (const auto& h : harmonics) r += h[0] * std::sin(h[1] * th + h[2]);
    t.centerline.push_back({r * std::cos(th), r * std::sin(th)});
  }
  t.finalize();
  return t;
}

}  // namespace

Track make_track(TrackSpec spec) {
  if (spec == TrackSpec::TrackA)
    return radial_track("track-a", 0xA17CEull, 52.0, {{4.0, 2.0, 0.0}, {2.0, 3.0, 1.0}}, 96);
  return radial_track("track-b", 0xB0B57ull, 46.0, {{4.5, 3.0, 0.7}, {1.5, 5.0, 0.0}}, 96);
}

Track make_track_seeded(uint64_t seed) {
  Rng rng(seed);
  const double r0 = rng.uniform(38.0, 50.0);
  std::vector<std::array<double, 3>> harmonics;
  const int nh = 2 + static_cast<int>(rng.uniform_int(2));
  for (int k = 0; k < nh; ++k) {
    const double freq = 2.0 + static_cast<double>(k);
    const double amp = rng.uniform(0.4, 0.16 * r0 / freq);
    harmonics.push_back({amp, freq, rng.uniform(0.0, kTwoPi)});
  }
  Track t = radial_track("track-seed-" + std::to_string(seed), seed, r0, harmonics, 96);
  return t;
}

double compute_reward(const CarState& state, const RewardConfig& cfg) {
  if (state.collided) return cfg.gamma_collision;
  return (state.speed * std::cos(state.alpha) - state.dist_center) * cfg.beta;
}

ActionDecode decode_action(int action) {
  if (action < 0 || action >= kNumActions)
    throw std::invalid_argument("action index " + std::to_string(action) + " out of range [0, 9)");
  ActionDecode d;
  const int lateral = action % 3;
  const int longitudinal = action / 3;
  d.steer_rate = lateral == 0 ? 0.0 : (lateral == 1 ? kSteerRate : -kSteerRate);
  d.accel = longitudinal == 0 ? kAccel : (longitudinal == 1 ? kBrake : 0.0);
  return d;
}

CarState reset_car(const Track& track, uint64_t rng_seed) {
  (void)rng_seed;  // spawn is seed-independent; the seed feeds style noise elsewhere
  CarState s;
  s.position = track.centerline[0];
  const Vec2 a = track.centerline[0];
  const Vec2 b = track.centerline[1];
  s.heading = std::atan2(b.y - a.y, b.x - a.x);
  s.speed = 0;
  s.alpha = 0;
  s.dist_center = 0;
  s.collided = false;
  return s;
}

StepOutput advance(const Track& track, const CarState& state, int action, double dt,
                   const RewardConfig& cfg) {
  if (dt <= 0) throw std::invalid_argument("step dt must be positive");
  const ActionDecode d = decode_action(action);
  StepOutput out;
  CarState& s = out.state;
  s = state;
  s.heading = wrap_angle(s.heading + d.steer_rate * dt);
  s.position.x += s.speed * std::cos(s.heading) * dt;
  s.position.y += s.speed * std::sin(s.heading) * dt;
  s.speed = std::clamp(s.speed + d.accel * dt, 0.0, kMaxSpeed);
  const NearestResult near = nearest_centerline_point(track, s.position);
  s.dist_center = near.dist;
  s.alpha = wrap_angle(s.heading - near.tangent_angle);
  s.collided = s.dist_center > track.half_width;
  out.reward = compute_reward(s, cfg);
  out.done = s.collided;
  return out;
}

std::vector<RenderStyle> randomized_styles(int n, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("randomized_styles: n must be >= 1");
  std::vector<RenderStyle> out;
  out.reserve(static_cast<size_t>(n));
  Rng rng(seed);
  for (int i = 0; i < n; ++i) out.push_back(RenderStyle::randomized(rng.next()));
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

// Per-pixel scene description produced by the shared geometry pass.
struct SceneBuffers {
  SegMap seg;
  std::vector<float> depth;       // meters; large for sky/band
  std::vector<float> world_x, world_y;
  std::vector<float> track_dist;  // centerline distance of ground pixels
  std::vector<float> extra;       // obstacle height fraction / band texture coord

  SceneBuffers()
      : depth(static_cast<size_t>(kFrameSize * kFrameSize), 1e9f),
        world_x(static_cast<size_t>(kFrameSize * kFrameSize), 0.f),
        world_y(static_cast<size_t>(kFrameSize * kFrameSize), 0.f),
        track_dist(static_cast<size_t>(kFrameSize * kFrameSize), 1e9f),
        extra(static_cast<size_t>(kFrameSize * kFrameSize), 0.f) {}
};

uint8_t classify_ground(const Track& track, const NearestResult& near) {
  if (near.dist <= track.half_width) {
    // Center dashed line.
    if (near.dist <= kLaneCenterHalf &&
        std::fmod(near.param, kLaneDashPeriod) < kLaneDashPeriod * kLaneDashDuty)
      return kClassLane;
    // Solid edge lines.
    if (std::abs(near.dist - (track.half_width - kLaneEdgeInset)) <= kLaneEdgeHalf) return kClassLane;
    return kClassRoad;
  }
  return kClassOffroad;
}

SceneBuffers build_scene(const CarState& state, const Track& track) {
  SceneBuffers sb;
  const double ch = std::cos(state.heading), sh = std::sin(state.heading);
  for (int y = 0; y < kFrameSize; ++y) {
    for (int x = 0; x < kFrameSize; ++x) {
      const size_t idx = static_cast<size_t>(y * kFrameSize + x);
      if (y < kHorizonRow - kBandRows) {
        sb.seg.at(y, x) = kClassSky;
        sb.extra[idx] = static_cast<float>(y) / (kHorizonRow - kBandRows);
      } else if (y < kHorizonRow) {
        sb.seg.at(y, x) = kClassBuilding;
        sb.extra[idx] = static_cast<float>(y - (kHorizonRow - kBandRows));
      } else {
        const double z = kGroundScale / (y - kHorizonRow + 0.5);
        const double lat = (x - (kFrameSize - 1) * 0.5) / kFocal * z;
        const double wx = state.position.x + ch * z + sh * lat;
        const double wy = state.position.y + sh * z - ch * lat;
        const NearestResult near = nearest_centerline_point(track, {wx, wy});
        sb.seg.at(y, x) = classify_ground(track, near);
        sb.depth[idx] = static_cast<float>(z);
        sb.world_x[idx] = static_cast<float>(wx);
        sb.world_y[idx] = static_cast<float>(wy);
        sb.track_dist[idx] = static_cast<float>(near.dist);
      }
    }
  }
  // Obstacle posts as camera-facing billboards with depth occlusion.
  for (const Track::Post& post : track.posts) {
    const double rx = post.pos.x - state.position.x;
    const double ry = post.pos.y - state.position.y;
    const double z = rx * ch + ry * sh;
    if (z < 1.2 || z > 90.0) continue;
    const double lat = rx * sh - ry * ch;
    const double cc = (kFrameSize - 1) * 0.5 + kFocal * lat / z;
    const double half_cols = 0.5 * kFocal * post.width / z;
    const double r_base = kHorizonRow - 0.5 + kGroundScale / z;
    const double r_top = r_base - kFocal * post.height / z;
    const int x0 = std::max(0, static_cast<int>(std::ceil(cc - half_cols)));
    const int x1 = std::min(kFrameSize - 1, static_cast<int>(std::floor(cc + half_cols)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(r_top)));
    const int y1 = std::min(kFrameSize - 1, static_cast<int>(std::floor(r_base)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const size_t idx = static_cast<size_t>(y * kFrameSize + x);
        if (static_cast<float>(z) < sb.depth[idx]) {
          sb.seg.at(y, x) = kClassObstacle;
          sb.depth[idx] = static_cast<float>(z);
          sb.extra[idx] = static_cast<float>((r_base - y) / std::max(1.0, r_base - r_top));
          sb.world_x[idx] = static_cast<float>(post.pos.x);
          sb.world_y[idx] = static_cast<float>(post.pos.y);
        }
      }
    }
  }
  return sb;
}

struct StyleParams {
  std::array<std::array<float, 3>, kNumClasses> base;
  bool parsing = false;
  bool textured = false;
  uint64_t tex_seed = 0;
};

StyleParams resolve_style(const RenderStyle& style, const Track& track) {
  StyleParams sp;
  switch (style.kind) {
    case RenderStyle::Kind::Parsing:
      sp.base = kClassPalette;
      sp.parsing = true;
      return sp;
    case RenderStyle::Kind::Virtual:
    case RenderStyle::Kind::RandomizedVirtual: {
      sp.base = {{{-0.55f, -0.55f, -0.50f},
                  {0.95f, 0.95f, 0.90f},
                  {-0.25f, 0.55f, -0.45f},
                  {-0.20f, 0.45f, 0.95f},
                  {0.45f, 0.00f, -0.35f},
                  {0.90f, -0.50f, 0.40f}}};
      // Track identity nudges the palette a little; randomized styles move it a lot.
      for (int c = 0; c < kNumClasses; ++c)
        for (int ch = 0; ch < 3; ++ch)
          sp.base[c][ch] = std::clamp(
              sp.base[c][ch] + 0.08f * hash_noise(track.style_seed, 0x51, c * 3 + ch), -0.95f, 0.95f);
      if (style.kind == RenderStyle::Kind::RandomizedVirtual) {
        for (int c = 0; c < kNumClasses; ++c)
          for (int ch = 0; ch < 3; ++ch)
            sp.base[c][ch] = std::clamp(
                sp.base[c][ch] + 0.45f * hash_noise(style.seed, 0x52, c * 3 + ch), -0.95f, 0.95f);
      }
      return sp;
    }
    case RenderStyle::Kind::Real: {
      sp.base = {{{-0.25f, -0.28f, -0.30f},
                  {0.55f, 0.52f, 0.45f},
                  {-0.05f, 0.18f, -0.12f},
                  {0.35f, 0.55f, 0.80f},
                  {0.00f, -0.08f, -0.18f},
                  {0.35f, 0.05f, -0.05f}}};
      for (int c = 0; c < kNumClasses; ++c)
        for (int ch = 0; ch < 3; ++ch)
          sp.base[c][ch] = std::clamp(
              sp.base[c][ch] + 0.10f * hash_noise(track.style_seed, 0x53, c * 3 + ch), -0.95f, 0.95f);
      sp.textured = true;
      sp.tex_seed = hash_mix(track.style_seed, 0x54, 0);
      return sp;
    }
  }
  throw std::logic_error("unknown render style");
}

}  // namespace

SegMap render_segmentation(const CarState& state, const Track& track) {
  return build_scene(state, track).seg;
}

Frame palette_frame(const SegMap& seg) {
  Frame f;
  for (int y = 0; y < seg.height; ++y)
    for (int x = 0; x < seg.width; ++x) {
      const auto& col = kClassPalette[seg.at(y, x)];
      for (int c = 0; c < 3; ++c) f.at(c, y, x) = col[static_cast<size_t>(c)];
    }
  return f;
}

SegMap nearest_palette_classes(const Frame& frame) {
  SegMap seg;
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x) {
      float best = std::numeric_limits<float>::max();
      uint8_t best_c = 0;
      for (int c = 0; c < kNumClasses; ++c) {
        float d = 0;
        for (int ch = 0; ch < 3; ++ch) {
          const float diff = frame.at(ch, y, x) - kClassPalette[c][static_cast<size_t>(ch)];
          d += diff * diff;
        }
        if (d < best) {  // strict: ties keep the lowest class index
          best = d;
          best_c = static_cast<uint8_t>(c);
        }
      }
      seg.at(y, x) = best_c;
    }
  return seg;
}

double segmap_agreement(const SegMap& a, const SegMap& b) {
  if (a.labels.size() != b.labels.size()) throw std::invalid_argument("segmap size mismatch");
  int64_t same = 0;
  for (size_t i = 0; i < a.labels.size(); ++i) same += a.labels[i] == b.labels[i];
  return static_cast<double>(same) / static_cast<double>(a.labels.size());
}

Frame render(const CarState& state, const Track& track, const RenderStyle& style) {
  const SceneBuffers sb = build_scene(state, track);
  const StyleParams sp = resolve_style(style, track);
  Frame f;
  if (sp.parsing) return palette_frame(sb.seg);

  for (int y = 0; y < kFrameSize; ++y) {
    for (int x = 0; x < kFrameSize; ++x) {
      const size_t idx = static_cast<size_t>(y * kFrameSize + x);
      const uint8_t cls = sb.seg.at(y, x);
      float r = sp.base[cls][0], g = sp.base[cls][1], b = sp.base[cls][2];
      if (sp.textured) {
        const auto qx = static_cast<int64_t>(std::floor(sb.world_x[idx] * 2.0f));
        const auto qy = static_cast<int64_t>(std::floor(sb.world_y[idx] * 2.0f));
        switch (cls) {
          case kClassRoad: {
            const float speck = 0.09f * hash_noise(sp.tex_seed, static_cast<uint64_t>(qx),
                                                   static_cast<uint64_t>(qy));
            const float fade = -0.12f * std::min(1.0f, sb.depth[idx] / 60.0f);
            const float edge = -0.10f * static_cast<float>(
                 std::clamp((sb.track_dist[idx] - (track.half_width - 1.5)) / 1.5, 0.0, 1.0));
            r += speck + fade + edge;
            g += speck + fade + edge;
            b += speck + fade + edge;
            break;
          }
          case kClassLane: {
            const float wear = 0.10f * hash_noise(sp.tex_seed + 1, static_cast<uint64_t>(qx),
                                                  static_cast<uint64_t>(qy));
            r += wear;
            g += wear;
            b += wear;
            break;
          }
          case kClassOffroad: {
            const auto fx = static_cast<int64_t>(std::floor(sb.world_x[idx] * 4.0f));
            const auto fy = static_cast<int64_t>(std::floor(sb.world_y[idx] * 4.0f));
            const float grass = 0.15f * hash_noise(sp.tex_seed + 2, static_cast<uint64_t>(fx),
                                                   static_cast<uint64_t>(fy));
            r += grass * 0.6f;
            g += grass;
            b += grass * 0.5f;
            break;
          }
          case kClassSky: {
            const float t = sb.extra[idx];  // 0 top, 1 near horizon
            r += 0.25f * t;
            g += 0.18f * t;
            b += 0.05f * t;
            break;
          }
          case kClassBuilding: {
            // Window grid: bright cells on darker facade, indexed by heading-
            // stable world direction so the skyline scrolls with the camera.
            const int band_row = static_cast<int>(sb.extra[idx]);
            const double ang = state.heading + (x - (kFrameSize - 1) * 0.5) / kFocal;
            const auto block = static_cast<int64_t>(std::floor(ang * 24.0));
            const bool window = (hash_mix(sp.tex_seed + 3, static_cast<uint64_t>(block),
                                          static_cast<uint64_t>(band_row)) %
                                 5) < 2 && band_row % 2 == 1;
            const float fac = 0.08f * hash_noise(sp.tex_seed + 4, static_cast<uint64_t>(block), 17);
            if (window) {
              r += 0.45f;
              g += 0.40f;
              b += 0.20f;
            } else {
              r += fac;
              g += fac;
              b += fac;
            }
            break;
          }
          case kClassObstacle: {
            const float shade = 0.25f * (sb.extra[idx] - 0.5f);
            const float tint = 0.10f * hash_noise(sp.tex_seed + 5, static_cast<uint64_t>(qx),
                                                  static_cast<uint64_t>(qy));
            r += shade + tint;
            g += shade + tint;
            b += shade + tint;
            break;
          }
          default:
            break;
        }
      }
      f.at(0, y, x) = std::clamp(r, -1.0f, 1.0f);
      f.at(1, y, x) = std::clamp(g, -1.0f, 1.0f);
      f.at(2, y, x) = std::clamp(b, -1.0f, 1.0f);
    }
  }
  return f;
}

// ---------------------------------------------------------------------------

ControlDecision center_follow_control(const Track& track, const CarState& state, double jitter_deg,
                                      Rng* rng) {
  const NearestResult near = nearest_centerline_point(track, state.position);
  const double offset_left = near.side * near.dist;  // >0 when the car sits left of center
  const double alpha_deg = state.alpha * 180.0 / std::numbers::pi;

  // Track direction change over a lookahead arc, for curve anticipation.
  const double lookahead = 8.0;
  double s_ahead = std::fmod(near.param + lookahead, track.length);
  size_t seg = 0;
  while (seg + 1 < track.centerline.size() && track.cum_len[seg + 1] < s_ahead) ++seg;
  const Vec2 a = track.centerline[seg];
  const Vec2 b = track.centerline[(seg + 1) % track.centerline.size()];
  const double tangent_ahead = std::atan2(b.y - a.y, b.x - a.x);
  const double turn_ahead = wrap_angle(tangent_ahead - near.tangent_angle);
  const double turn_ahead_deg = turn_ahead * 180.0 / std::numbers::pi;

  ControlDecision out;
  out.steer_deg = 4.0 * offset_left + 1.0 * alpha_deg - 1.8 * turn_ahead_deg;
  if (rng && jitter_deg > 0) out.steer_deg += rng->uniform(-jitter_deg, jitter_deg);

  const int lateral = out.steer_deg <= -1.5 ? 1 : (out.steer_deg >= 1.5 ? 2 : 0);
  // Slow into curves, cruise on straights.
  const double target_speed = std::abs(turn_ahead_deg) > 8.0 ? 6.0 : 9.5;
  int longitudinal;
  if (state.speed < target_speed - 0.4)
    longitudinal = 0;  // accelerate
  else if (state.speed > target_speed + 0.6)
    longitudinal = 1;  // brake
  else
    longitudinal = 2;  // coast
  out.action = longitudinal * 3 + lateral;
  return out;
}

Simulator::Simulator(Track track, RewardConfig cfg, int max_steps)
    : track_(std::move(track)), cfg_(cfg), max_steps_(max_steps) {
  state_ = reset_car(track_, 0);
}

const CarState& Simulator::reset(uint64_t seed) {
  state_ = reset_car(track_, seed);
  steps_ = 0;
  return state_;
}

Simulator::Out Simulator::step(int action, double dt) {
  StepOutput so = advance(track_, state_, action, dt, cfg_);
  state_ = so.state;
  ++steps_;
  return {so.reward, so.done || steps_ >= max_steps_};
}

}  // namespace vrl
