#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vrl/a3c.hpp"
#include "vrl/gradcheck.hpp"

using namespace vrl;

namespace {

Frame const_frame(float v) {
  Frame f;
  std::fill(f.data.begin(), f.data.end(), v);
  return f;
}

RolloutSegment make_segment(const std::vector<float>& rewards, bool terminal, float bootstrap,
                            const std::vector<float>& values) {
  RolloutSegment seg;
  for (size_t i = 0; i < rewards.size(); ++i) {
    Transition t;
    t.obs = Tensor({1});
    t.action = 0;
    t.reward = rewards[i];
    t.done = terminal && i + 1 == rewards.size();
    t.value_est = values[i];
    seg.steps.push_back(std::move(t));
  }
  seg.terminal = terminal;
  seg.bootstrap_value = bootstrap;
  return seg;
}

}  // namespace

TEST_CASE("stack_frames concatenates newest last with repeat padding") {
  std::deque<Frame> hist;
  for (int i = 0; i < 4; ++i) hist.push_back(const_frame(static_cast<float>(i)));
  const Tensor obs = stack_frames(hist);
  CHECK(obs.shape == std::vector<int64_t>{1, 12, 64, 64});
  const int64_t block = 3 * 64 * 64;
  for (int i = 0; i < 4; ++i) {
    CHECK(obs.data[static_cast<size_t>(i * block)] == static_cast<float>(i));
    CHECK(obs.data[static_cast<size_t>((i + 1) * block - 1)] == static_cast<float>(i));
  }
  // episode start: one real frame repeated four times
  std::deque<Frame> start(4, const_frame(0.5f));
  const Tensor obs2 = stack_frames(start);
  for (float v : obs2.data) CHECK(v == 0.5f);

  std::deque<Frame> three(3, const_frame(0.f));
  CHECK_THROWS_AS(stack_frames(three), std::invalid_argument);
}

TEST_CASE("n_step_returns: recursion bases") {
  // single done step
  auto seg = make_segment({0.06f}, true, 0.f, {0.02f});
  auto ra = n_step_returns(seg, 0.99);
  REQUIRE(ra.size() == 1);
  CHECK(ra[0].ret == doctest::Approx(0.06).epsilon(1e-7));
  CHECK(ra[0].advantage == doctest::Approx(0.06 - 0.02).epsilon(1e-7));

  // all-zero rewards, done: all returns zero
  auto zseg = make_segment({0.f, 0.f, 0.f}, true, 0.f, {0.1f, 0.2f, 0.3f});
  for (const auto& r : n_step_returns(zseg, 0.99)) CHECK(r.ret == 0.0);

  // bootstrap feeds the tail when not done
  auto bseg = make_segment({0.f}, false, 1.0f, {0.f});
  CHECK(n_step_returns(bseg, 0.5)[0].ret == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("n_step_returns matches brute force on all segment shapes") {
  Rng rng(11);
  const double discount = 0.99;
  for (int len = 1; len <= 8; ++len) {
    for (int terminal = 0; terminal <= 1; ++terminal) {
      for (int rep = 0; rep < 50; ++rep) {
        std::vector<float> rewards, values;
        for (int i = 0; i < len; ++i) {
          rewards.push_back(static_cast<float>(rng.uniform(-0.1, 0.12)));
          values.push_back(static_cast<float>(rng.uniform(-1, 1)));
        }
        const float bootstrap = static_cast<float>(rng.uniform(-1, 1));
        auto seg = make_segment(rewards, terminal == 1, bootstrap, values);
        auto ra = n_step_returns(seg, discount);
        for (int t = 0; t < len; ++t) {
          double expected = 0;
          for (int k = t; k < len; ++k)
            expected += std::pow(discount, k - t) * static_cast<double>(rewards[static_cast<size_t>(k)]);
          if (!terminal)
            expected += std::pow(discount, len - t) * static_cast<double>(bootstrap);
          CHECK(std::abs(ra[static_cast<size_t>(t)].ret - expected) <= 1e-9);
          CHECK(std::abs(ra[static_cast<size_t>(t)].advantage -
                         (expected - static_cast<double>(values[static_cast<size_t>(t)]))) <= 1e-9);
        }
      }
    }
  }
}

TEST_CASE("segments reject done before the end and empty input") {
  auto seg = make_segment({0.f, 0.f}, false, 0.f, {0.f, 0.f});
  seg.steps[0].done = true;
  CHECK_THROWS_AS(n_step_returns(seg, 0.99), std::invalid_argument);
  RolloutSegment empty;
  CHECK_THROWS_AS(n_step_returns(empty, 0.99), std::invalid_argument);
}

TEST_CASE("transition rewards are clamped into the documented range") {
  RewardConfig cfg;
  CHECK(clamp_reward(10.0, cfg) == doctest::Approx(kMaxSpeed * cfg.beta));
  CHECK(clamp_reward(-10.0, cfg) == doctest::Approx(cfg.gamma_collision));
  CHECK(clamp_reward(0.05, cfg) == doctest::Approx(0.05));
}

TEST_CASE("act_greedy: tie-break, one-hot, temperature invariance") {
  PolicyValueNet net;
  Rng rng(12);
  init_policy_params(net, rng);  // zero heads: uniform probs
  Tensor obs({1, 12, 64, 64});
  for (auto& v : obs.data) v = rng.uniform_f();
  CHECK(act_greedy(net, obs) == 0);  // uniform -> lowest index

  // bias one logit: that action wins, and positive rescaling cannot change it
  net.policy_head.b.data[4] = 3.0f;
  CHECK(act_greedy(net, obs) == 4);
  for (auto& v : net.policy_head.b.data) v *= 7.0f;
  CHECK(act_greedy(net, obs) == 4);

  net.policy_head.b.data[4] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(act_greedy(net, obs), std::runtime_error);
}

TEST_CASE("linear two-action bandit policy gradient matches finite differences") {
  // One dense layer from a 4-feature context to 2 logits; double precision.
  TensorD w({2, 4}), b({2});
  TensorD x({1, 4});
  Rng rng(13);
  for (auto& v : w.data) v = rng.normal() * 0.3;
  for (auto& v : b.data) v = rng.normal() * 0.1;
  for (auto& v : x.data) v = rng.normal();
  TensorD vw({1, 4}), vb({1});
  for (auto& v : vw.data) v = rng.normal() * 0.3;
  ParamList<double> params{{"w", &w}, {"b", &b}, {"vw", &vw}, {"vb", &vb}};
  const std::vector<int> actions{1};
  const std::vector<double> advantages{0.7};
  const std::vector<double> returns{0.4};
  auto loss = [&](bool wg) {
    GraphD g;
    auto xin = g.constant(x);
    auto logits = g.dense(xin, g.param(w), g.param(b));
    auto value = g.dense(xin, g.param(vw), g.param(vb));
    auto l = g.policy_value_loss(logits, value, actions, advantages, returns, 0.5, 0.01);
    if (wg) g.backward(l);
    return static_cast<double>(g.value(l).data[0]);
  };
  GradCheckOptions opts;
  opts.tolerance = 1e-5;
  const auto report = grad_check(params, loss, opts);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("a3c config validation") {
  A3CConfig cfg;
  cfg.workers = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = A3CConfig{};
  cfg.budget_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = A3CConfig{};
  cfg.discount = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  // translated mode without a pipeline is refused
  A3CConfig tcfg;
  tcfg.workers = 1;
  tcfg.budget_steps = 10;
  tcfg.obs_mode = ObsMode::Translated;
  CHECK_THROWS_AS(a3c_train(tcfg, make_track(TrackSpec::TrackA), nullptr), std::invalid_argument);
}

TEST_CASE("single-worker training is bit-deterministic") {
  const Track track = make_track(TrackSpec::TrackA);
  auto run = [&]() {
    A3CConfig cfg;
    cfg.workers = 1;
    cfg.budget_steps = 240;
    cfg.max_episode_steps = 60;
    cfg.seed = 5;
    return a3c_train(cfg, track, nullptr);
  };
  TrainResult a = run();
  TrainResult b = run();
  REQUIRE(a.curve.size() == b.curve.size());
  CHECK(a.curve.size() > 0);
  for (size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].global_step == b.curve[i].global_step);
    CHECK(a.curve[i].worker_id == b.curve[i].worker_id);
    CHECK(a.curve[i].reward == b.curve[i].reward);  // bitwise
    CHECK(a.curve[i].length == b.curve[i].length);
  }
  auto pa = a.net.named_params("p");
  auto pb = b.net.named_params("p");
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second->data == pb[i].second->data);
  CHECK(a.global_steps >= 240);
}

TEST_CASE("training makes measurable progress on raw virtual frames") {
  const Track track = make_track(TrackSpec::TrackA);
  for (uint64_t seed : {21, 22, 23}) {
    A3CConfig cfg;
    cfg.workers = 2;
    cfg.budget_steps = 6000;
    cfg.seed = seed;
    TrainResult res = a3c_train(cfg, track, nullptr);
    REQUIRE(res.curve.size() >= 20);
    double first = 0, last = 0;
    for (size_t i = 0; i < 10; ++i) first += res.curve[i].reward;
    for (size_t i = res.curve.size() - 10; i < res.curve.size(); ++i) last += res.curve[i].reward;
    CHECK(last / 10 > first / 10);  // smoothed end beats the initial mean
  }
}

TEST_CASE("multi-worker training reaches its budget with live workers") {
  const Track track = make_track(TrackSpec::TrackA);
  A3CConfig cfg;
  cfg.workers = 4;
  cfg.budget_steps = 400;
  cfg.max_episode_steps = 50;
  cfg.seed = 6;
  TrainResult res = a3c_train(cfg, track, nullptr);
  CHECK(res.global_steps >= cfg.budget_steps);
  CHECK_FALSE(res.nonfinite_params_observed);
  int64_t total_updates = 0;
  for (int64_t u : res.worker_updates) total_updates += u;
  CHECK(total_updates > 0);
  CHECK(all_finite(res.net.named_params("p")));
}
