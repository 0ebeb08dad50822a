#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "vrl/translate.hpp"

using namespace vrl;
namespace fs = std::filesystem;

namespace {
Frame random_frame(Rng& rng) {
  Frame f;
  for (auto& v : f.data) v = rng.uniform_f() * 2 - 1;
  return f;
}
std::string temp_dir(const char* leaf) {
  const auto dir = fs::temp_directory_path() / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}
}  // namespace

TEST_CASE("d_loss of an all-zero discriminator is 2 ln 2") {
  PatchDiscriminator d;  // zero weights: sigmoid(0) = 0.5 everywhere
  Rng rng(1);
  const Frame cond = random_frame(rng), real = random_frame(rng), fake = random_frame(rng);
  CHECK(d_loss_value(d, cond, real, fake) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-4));
}

TEST_CASE("d_loss stays finite and positive across random nets") {
  Rng rng(2);
  for (int seed = 0; seed < 100; ++seed) {
    PatchDiscriminator d;
    Rng init(static_cast<uint64_t>(seed));
    auto params = d.named_params("d");
    init_gan_params(params, init);
    const Frame cond = random_frame(rng), real = random_frame(rng), fake = random_frame(rng);
    const double loss = d_loss_value(d, cond, real, fake);
    CHECK(std::isfinite(loss));
    CHECK(loss > 0.0);
  }
}

TEST_CASE("g_loss report identities") {
  PatchDiscriminator d;
  Rng rng(3);
  auto params = d.named_params("d");
  init_gan_params(params, rng);
  const Frame cond = random_frame(rng);
  const Frame real = random_frame(rng);

  // fake == target: l1 term is exactly zero
  GanLossReport r0 = g_loss_report(d, cond, real, real, 100.0);
  CHECK(r0.g_l1_loss == 0.0);

  // lambda = 0: combined equals the adversarial term
  GanLossReport r1 = g_loss_report(d, cond, random_frame(rng), real, 0.0);
  CHECK(r1.combined == r1.g_adv_loss);

  // all-ones vs all-minus-ones: l1 exactly 2
  Frame ones, minus;
  std::fill(ones.data.begin(), ones.data.end(), 1.f);
  std::fill(minus.data.begin(), minus.data.end(), -1.f);
  GanLossReport r2 = g_loss_report(d, cond, ones, minus, 100.0);
  CHECK(r2.g_l1_loss == doctest::Approx(2.0).epsilon(1e-7));

  // combined identity holds exactly for every report
  for (int i = 0; i < 20; ++i) {
    GanLossReport r = g_loss_report(d, cond, random_frame(rng), real, 0.5 + i * 7.0);
    CHECK(r.combined == r.g_adv_loss + r.lambda * r.g_l1_loss);
  }
  CHECK_THROWS_AS(g_loss_report(d, cond, ones, minus, -1.0), std::invalid_argument);
}

TEST_CASE("paired data: alignment, coverage, determinism, refusal") {
  const Track track = make_track(TrackSpec::TrackA);
  auto [stage1, stage2] = generate_paired_data(track, 128, DrivePolicy::CenterFollow, 17);
  REQUIRE(stage1.size() == 128);
  REQUIRE(stage2.size() == 128);
  CHECK(stage1.heldout_count() >= 12);  // >= 10%
  // a pair's frames come from one state: stage1 target and stage2 condition
  // are the same parsing image
  for (size_t i = 0; i < stage1.size(); ++i)
    CHECK(stage1.pairs[i].target.data == stage2.pairs[i].condition.data);
  CHECK(lap_coverage(stage1, track) >= 0.95);

  auto [again1, again2] = generate_paired_data(track, 128, DrivePolicy::CenterFollow, 17);
  for (size_t i = 0; i < stage1.size(); ++i) {
    CHECK(stage1.pairs[i].condition.data == again1.pairs[i].condition.data);
    CHECK(stage2.pairs[i].target.data == again2.pairs[i].target.data);
  }
  CHECK(stage1.heldout == again1.heldout);

  CHECK_THROWS_AS(generate_paired_data(track, 10, DrivePolicy::CenterFollow, 1),
                  std::invalid_argument);
}

TEST_CASE("random drive also covers the lap enough to sample") {
  const Track track = make_track(TrackSpec::TrackA);
  auto [stage1, stage2] = generate_paired_data(track, 64, DrivePolicy::RandomDrive, 5);
  CHECK(stage1.size() == 64);
}

TEST_CASE("paired set directory round trip is byte-identical") {
  const std::string dir = temp_dir("vrl_test_dataset");
  const Track track = make_track(TrackSpec::TrackA);
  auto [stage1, stage2] = generate_paired_data(track, 64, DrivePolicy::CenterFollow, 23);
  write_paired_set(dir, stage1);
  const PairedSet back = read_paired_set(dir);
  REQUIRE(back.size() == stage1.size());
  CHECK(back.heldout == stage1.heldout);
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back.pairs[i].condition.data == stage1.pairs[i].condition.data);
    CHECK(back.pairs[i].target.data == stage1.pairs[i].target.data);
  }
}

TEST_CASE("translate: valid range, idempotent without noise, varying with noise") {
  TranslationPipeline p;
  Rng rng(4);
  auto g1p = p.g1.named_params("g1");
  auto g2p = p.g2.named_params("g2");
  init_gan_params(g1p, rng);
  init_gan_params(g2p, rng);
  const Frame virt = random_frame(rng);

  TranslateOutput a = translate(p, virt);
  TranslateOutput b = translate(p, virt);
  CHECK(a.parsing_est.data == b.parsing_est.data);
  CHECK(a.realistic.data == b.realistic.data);
  for (float v : a.realistic.data) {
    CHECK(v >= -1.f);
    CHECK(v <= 1.f);
  }
  for (float v : a.parsing_est.data) {
    CHECK(v >= -1.f);
    CHECK(v <= 1.f);
  }

  p.noise_mode = true;
  CHECK_THROWS_AS(translate(p, virt), std::invalid_argument);
  Rng n1(5), n2(6);
  TranslateOutput c = translate(p, virt, &n1);
  TranslateOutput d = translate(p, virt, &n2);
  CHECK(c.realistic.data != d.realistic.data);
}

TEST_CASE("train_stage: smoke run, reproducible curves, csv artifact") {
  const Track track = make_track(TrackSpec::TrackA);
  auto [stage1, stage2] = generate_paired_data(track, 80, DrivePolicy::CenterFollow, 31);
  const std::string dir = temp_dir("vrl_test_train_stage");
  StageTrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 77;
  cfg.curve_csv = dir + "/curve.csv";
  StageResult a = train_stage(GanStage::VirtualToParsing, stage1, cfg);
  REQUIRE(a.curve.size() == 1);
  CHECK_FALSE(a.aborted_nonfinite);
  CHECK(std::isfinite(a.curve[0].mean.d_loss));
  CHECK(std::isfinite(a.curve[0].holdout_l1));
  CHECK(a.curve[0].mean.combined ==
        a.curve[0].mean.g_adv_loss + a.curve[0].mean.lambda * a.curve[0].mean.g_l1_loss);
  CHECK(fs::exists(cfg.curve_csv));

  StageTrainConfig cfg2 = cfg;
  cfg2.curve_csv.clear();
  StageResult b = train_stage(GanStage::VirtualToParsing, stage1, cfg2);
  CHECK(a.curve[0].mean.d_loss == b.curve[0].mean.d_loss);
  CHECK(a.curve[0].mean.g_l1_loss == b.curve[0].mean.g_l1_loss);
  CHECK(a.curve[0].holdout_l1 == b.curve[0].holdout_l1);

  // too small a corpus is refused
  PairedSet tiny;
  tiny.pairs.resize(32);
  tiny.heldout.assign(32, 0);
  CHECK_THROWS_AS(train_stage(GanStage::VirtualToParsing, tiny, cfg2), std::invalid_argument);
}

TEST_CASE("holdout metrics are computable on an untrained generator") {
  const Track track = make_track(TrackSpec::TrackA);
  auto [stage1, stage2] = generate_paired_data(track, 64, DrivePolicy::CenterFollow, 41);
  UNetGenerator g;
  Rng rng(9);
  auto params = g.named_params("g");
  init_gan_params(params, rng);
  const double l1 = holdout_l1(g, stage1);
  CHECK(std::isfinite(l1));
  CHECK(l1 > 0.0);
  const double acc = holdout_pixel_accuracy(g, stage1);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  const auto agreements = holdout_frame_agreements(g, stage1);
  CHECK(agreements.size() == stage1.heldout_count());
}
