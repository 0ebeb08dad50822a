// Acceptance gate. Runs each criterion at its stated tolerance and prints one
// PASS/FAIL line per criterion. Stages: fast (1,2,3,8,9,10),
// convergence (4,5,6), transfer (7), or all.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <sstream>
#include <string>

#include "vrl/a3c.hpp"
#include "vrl/eval.hpp"
#include "vrl/gradcheck.hpp"
#include "vrl/sim.hpp"
#include "vrl/tensor_io.hpp"
#include "vrl/translate.hpp"

using namespace vrl;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("CRITERION %2d %s  %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

void criterion_1_gradient_correctness() {
  const auto t0 = Clock::now();
  std::ostringstream os;
  const bool ok = run_gradcheck_suite(os, 1e-4);
  const double secs = seconds_since(t0);
  std::fputs(os.str().c_str(), stdout);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "gradcheck suite (double, h=1e-5, tol 1e-4) in %.1f s%s", secs,
                secs < 60.0 ? "" : " [over 60 s budget]");
  report(1, ok && secs < 60.0, buf);
}

void criterion_2_reward_exactness() {
  RewardConfig cfg;
  bool ok = true;
  CarState s;
  s.speed = 10;
  s.alpha = 0;
  s.dist_center = 0;
  ok &= std::abs(compute_reward(s, cfg) - 0.06) < 1e-12;
  s.speed = 5;
  s.alpha = std::numbers::pi / 2;
  s.dist_center = 1;
  ok &= std::abs(compute_reward(s, cfg) - (-0.006)) < 1e-12;
  // collision through the step path
  const Track track = make_track(TrackSpec::TrackA);
  CarState off = reset_car(track, 0);
  off.position.x += 1000.0;
  const StepOutput out = advance(track, off, 6, 0.1, cfg);
  ok &= std::abs(out.reward - (-0.025)) < 1e-12 && out.done && out.state.collided;
  report(2, ok, "reward formula exact to 1e-12 on the three stated cases");
}

void criterion_3_label_mapping() {
  int mismatches = 0;
  for (int deg = -180; deg <= 180; ++deg) {
    const Lateral3 expected =
        (deg > -10 && deg < 10) ? Lateral3::Straight : (deg <= -10 ? Lateral3::Left : Lateral3::Right);
    if (map_steering_to_action(deg) != expected) ++mismatches;
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "exhaustive sweep -180..180: %d mismatches", mismatches);
  report(3, mismatches == 0, buf);
}

void criterion_8_return_oracle() {
  Rng rng(88);
  const double discount = 0.99;
  double worst = 0;
  for (int len = 1; len <= 8; ++len) {
    for (int terminal = 0; terminal <= 1; ++terminal) {
      for (int rep = 0; rep < 200; ++rep) {
        RolloutSegment seg;
        std::vector<double> rewards;
        for (int i = 0; i < len; ++i) {
          Transition t;
          t.obs = Tensor({1});
          t.reward = static_cast<float>(rng.uniform(-0.2, 0.2));
          t.value_est = static_cast<float>(rng.uniform(-1, 1));
          t.done = terminal && i == len - 1;
          rewards.push_back(static_cast<double>(t.reward));
          seg.steps.push_back(std::move(t));
        }
        seg.terminal = terminal;
        seg.bootstrap_value = static_cast<float>(rng.uniform(-1, 1));
        const auto ra = n_step_returns(seg, discount);
        for (int t = 0; t < len; ++t) {
          double expected = 0;  // brute-force discounted sum
          for (int k = t; k < len; ++k) expected += std::pow(discount, k - t) * rewards[static_cast<size_t>(k)];
          if (!terminal) expected += std::pow(discount, len - t) * static_cast<double>(seg.bootstrap_value);
          worst = std::max(worst, std::abs(ra[static_cast<size_t>(t)].ret - expected));
        }
      }
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "lengths 1-8, with/without bootstrap: max |diff| = %.2e", worst);
  report(8, worst <= 1e-9, buf);
}

void criterion_9_determinism_persistence() {
  bool ok = true;
  std::string detail;

  // (a) single-worker fixed-seed training: bit-identical curves twice
  const Track track = make_track(TrackSpec::TrackA);
  auto run = [&]() {
    A3CConfig cfg;
    cfg.workers = 1;
    cfg.budget_steps = 600;
    cfg.max_episode_steps = 80;
    cfg.seed = 9;
    return a3c_train(cfg, track, nullptr);
  };
  TrainResult a = run();
  TrainResult b = run();
  bool curves_equal = a.curve.size() == b.curve.size() && !a.curve.empty();
  if (curves_equal)
    for (size_t i = 0; i < a.curve.size(); ++i)
      curves_equal &= a.curve[i].global_step == b.curve[i].global_step &&
                      a.curve[i].worker_id == b.curve[i].worker_id &&
                      a.curve[i].reward == b.curve[i].reward && a.curve[i].length == b.curve[i].length;
  {
    auto pa = a.net.named_params("p");
    auto pb = b.net.named_params("p");
    for (size_t i = 0; i < pa.size(); ++i) curves_equal &= pa[i].second->data == pb[i].second->data;
  }
  ok &= curves_equal;
  detail += curves_equal ? "curves bit-identical; " : "curves differ; ";

  // (b) checkpoint save -> load -> forward is bit-identical
  {
    const std::string path = "/tmp/vrl_acceptance_policy.ckpt";
    Rng rng(19);
    Tensor obs({1, 12, 64, 64});
    for (auto& v : obs.data) v = rng.uniform_f();
    Graph g;
    auto out = a.net.forward(g, g.constant(obs));
    const auto logits_before = g.value(out.logits).data;
    const auto value_before = g.value(out.value).data;
    save_policy_checkpoint(path, a.net, nullptr, nullptr, 0);
    PolicyValueNet loaded;
    load_policy_checkpoint(path, loaded);
    Graph g2;
    auto out2 = loaded.forward(g2, g2.constant(obs));
    const bool same =
        g2.value(out2.logits).data == logits_before && g2.value(out2.value).data == value_before;
    ok &= same;
    detail += same ? "checkpoint forward bit-identical; " : "checkpoint forward differs; ";
  }

  // (c) VRT1 round trip lossless on random tensors
  {
    Rng rng(29);
    bool lossless = true;
    for (int trial = 0; trial < 50; ++trial) {
      Tensor t({1 + static_cast<int64_t>(rng.uniform_int(5)), 1 + static_cast<int64_t>(rng.uniform_int(7))});
      for (auto& v : t.data) v = static_cast<float>(rng.normal());
      std::stringstream ss;
      write_vrt1(ss, t);
      lossless &= read_vrt1<float>(ss).data == t.data;
      TensorD d({3});
      for (auto& v : d.data) v = rng.normal();
      std::stringstream ss2;
      write_vrt1(ss2, d);
      lossless &= read_vrt1<double>(ss2).data == d.data;
    }
    ok &= lossless;
    detail += lossless ? "VRT1 lossless" : "VRT1 lossy";
  }
  report(9, ok, detail);
}

void criterion_10_liveness() {
  const Track track = make_track(TrackSpec::TrackA);
  A3CConfig cfg;
  cfg.workers = 12;
  cfg.budget_steps = 4000;
  cfg.max_episode_steps = 100;
  cfg.seed = 10;
  TrainResult res = a3c_train(cfg, track, nullptr);
  bool every_worker = true;
  for (int64_t u : res.worker_updates) every_worker &= u >= 1;
  const bool ok = res.global_steps >= cfg.budget_steps && every_worker &&
                  !res.nonfinite_params_observed && all_finite(res.net.named_params("p"));
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "12 workers, %lld steps, min worker updates %lld, nonfinite=%d",
                static_cast<long long>(res.global_steps),
                static_cast<long long>(*std::min_element(res.worker_updates.begin(),
                                                         res.worker_updates.end())),
                res.nonfinite_params_observed ? 1 : 0);
  report(10, ok, buf);
}

// ---------------------------------------------------------------------------

struct ConvergenceArtifacts {
  PairedSet stage1, stage2;
  StageResult g1, g2;
};

void criteria_4_5_6_convergence() {
  const Track track = make_track(TrackSpec::TrackA);
  auto [stage1, stage2] = generate_paired_data(track, 512, DrivePolicy::CenterFollow, 101);

  // Criterion 4: stage-1 convergence within 20 epochs and 15 minutes.
  {
    const auto t0 = Clock::now();
    StageTrainConfig cfg;
    cfg.epochs = 12;
    cfg.seed = 201;
    StageResult g1 = train_stage(GanStage::VirtualToParsing, stage1, cfg);
    const double secs = seconds_since(t0);
    const double acc = holdout_pixel_accuracy(g1.generator, stage1);
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "G1 on 512 pairs, %d epochs: held-out pixel accuracy %.4f (need >= 0.90) in %.0f s",
                  cfg.epochs, acc, secs);
    report(4, acc >= 0.90 && secs <= 900.0 && cfg.epochs <= 20 && !g1.aborted_nonfinite, buf);

    // Criterion 5: stage-2 convergence against the untrained baseline.
    const auto t1 = Clock::now();
    StageTrainConfig cfg2;
    cfg2.epochs = 12;
    cfg2.seed = 202;
    StageResult untrained = train_stage(GanStage::ParsingToReal, stage2,
                                        [] {
                                          StageTrainConfig c;
                                          c.epochs = 0;
                                          c.seed = 202;
                                          return c;
                                        }());
    const double untrained_l1 = holdout_l1(untrained.generator, stage2);
    StageResult g2 = train_stage(GanStage::ParsingToReal, stage2, cfg2);
    const double secs2 = seconds_since(t1);
    const double trained_l1 = holdout_l1(g2.generator, stage2);
    std::snprintf(buf, sizeof(buf),
                  "G2 held-out L1 %.4f vs untrained %.4f (need <= 0.5x) in %.0f s", trained_l1,
                  untrained_l1, secs2);
    report(5, trained_l1 <= 0.5 * untrained_l1 && secs2 <= 900.0 && !g2.aborted_nonfinite, buf);

    // Criterion 6: structure preservation through translate().
    TranslationPipeline pipeline;
    pipeline.g1 = std::move(g1.generator);
    pipeline.g2 = std::move(g2.generator);
    const auto held = stage1.heldout_indices();
    int frames_ok = 0;
    for (size_t i : held) {
      const TranslateOutput out = translate(pipeline, stage1.pairs[i].condition);
      const SegMap truth = nearest_palette_classes(stage1.pairs[i].target);
      const SegMap est = nearest_palette_classes(out.parsing_est);
      if (segmap_agreement(truth, est) >= 0.85) ++frames_ok;
    }
    const double frac = held.empty() ? 0.0 : static_cast<double>(frames_ok) / held.size();
    std::snprintf(buf, sizeof(buf),
                  "%d/%zu held-out frames with >= 85%% class agreement (need >= 90%% of frames)",
                  frames_ok, held.size());
    report(6, frac >= 0.90, buf);
  }
}

void criterion_7_transfer() {
  TransferConfig cfg;
  cfg.budget_steps = 20000;
  cfg.seeds = {1, 2, 3};
  cfg.eval_episodes = 50;
  cfg.workers = 4;
  cfg.pairs_n = 512;
  cfg.gan_epochs = 10;
  cfg.out_dir = "/tmp/vrl_acceptance_transfer";
  cfg.verbose = true;
  const TransferResult res = transfer_experiment(cfg);
  const double oracle = res.by_name("Oracle").mean_reward;
  const double ours = res.by_name("Ours").mean_reward;
  const double dr = res.by_name("DR").mean_reward;
  const double brl = res.by_name("B-RL").mean_reward;
  const bool ok = oracle >= ours && ours >= dr && ours >= 1.2 * brl;
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "seed-mean rewards: Oracle %.4f >= Ours %.4f >= DR %.4f; Ours >= 1.2*B-RL (%.4f)",
                oracle, ours, dr, brl);
  report(7, ok, buf);
}

}  // namespace

int main(int argc, char** argv) {
  const std::string stage = argc > 1 ? argv[1] : "all";
  const bool fast = stage == "fast" || stage == "all";
  const bool convergence = stage == "convergence" || stage == "all";
  const bool transfer = stage == "transfer" || stage == "all";
  if (!fast && !convergence && !transfer) {
    std::fprintf(stderr, "usage: %s [fast|convergence|transfer|all]\n", argv[0]);
    return 2;
  }
  if (fast) {
    criterion_1_gradient_correctness();
    criterion_2_reward_exactness();
    criterion_3_label_mapping();
    criterion_8_return_oracle();
    criterion_9_determinism_persistence();
    criterion_10_liveness();
  }
  if (convergence) criteria_4_5_6_convergence();
  if (transfer) criterion_7_transfer();
  if (g_failures > 0) {
    std::printf("%d criterion(s) FAILED\n", g_failures);
    return 1;
  }
  std::printf("all criteria in stage '%s' PASSED\n", stage.c_str());
  return 0;
}
