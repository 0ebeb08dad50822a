#include "vrl/translate.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vrl/checkpoint.hpp"
#include "vrl/optim.hpp"
#include "vrl/tensor_io.hpp"

namespace fs = std::filesystem;

namespace vrl {

Tensor frame_to_tensor(const Frame& f) {
  Tensor t({1, 3, f.height, f.width});
  t.data = f.data;
  return t;
}

Tensor frames_to_batch(const std::vector<const Frame*>& fs) {
  if (fs.empty()) throw std::invalid_argument("frames_to_batch: empty batch");
  const int h = fs[0]->height, w = fs[0]->width;
  Tensor t({static_cast<int64_t>(fs.size()), 3, h, w});
  const size_t stride = static_cast<size_t>(3 * h * w);
  for (size_t i = 0; i < fs.size(); ++i)
    std::copy(fs[i]->data.begin(), fs[i]->data.end(), t.data.begin() + static_cast<int64_t>(i * stride));
  return t;
}

Frame tensor_to_frame(const Tensor& t, int64_t batch_index) {
  if (t.rank() != 4 || t.dim(1) != 3) throw std::invalid_argument("tensor_to_frame: need (B,3,H,W)");
  Frame f;
  f.height = static_cast<int>(t.dim(2));
  f.width = static_cast<int>(t.dim(3));
  const int64_t stride = 3 * t.dim(2) * t.dim(3);
  f.data.assign(t.data.begin() + batch_index * stride, t.data.begin() + (batch_index + 1) * stride);
  return f;
}

size_t PairedSet::train_count() const { return size() - heldout_count(); }
size_t PairedSet::heldout_count() const {
  size_t n = 0;
  for (uint8_t h : heldout) n += h;
  return n;
}
std::vector<size_t> PairedSet::train_indices() const {
  std::vector<size_t> out;
  for (size_t i = 0; i < pairs.size(); ++i)
    if (!heldout[i]) out.push_back(i);
  return out;
}
std::vector<size_t> PairedSet::heldout_indices() const {
  std::vector<size_t> out;
  for (size_t i = 0; i < pairs.size(); ++i)
    if (heldout[i]) out.push_back(i);
  return out;
}

std::pair<PairedSet, PairedSet> generate_paired_data(const Track& track, int n, DrivePolicy policy,
                                                     uint64_t seed) {
  if (n < 64) throw std::invalid_argument("generate_paired_data: n must be >= 64");
  Rng rng(seed);
  Rng drive_rng = rng.split("drive");
  Simulator sim(track);
  sim.reset(seed);

  // Drive at least 1.3 laps, recording states with their cumulative travel so
  // samples can be spread evenly in distance rather than time.
  std::vector<CarState> states;
  std::vector<double> travel;
  double distance = 0;
  const double lap_goal = 1.3 * track.length;
  CarState prev = sim.state();
  int guard = 0;
  while (distance < lap_goal && guard < 200000) {
    ++guard;
    int action;
    if (policy == DrivePolicy::CenterFollow) {
      action = center_follow_control(track, sim.state(), 4.0, &drive_rng).action;
    } else {
      action = static_cast<int>(drive_rng.uniform_int(kNumActions));
    }
    const auto out = sim.step(action);
    distance += std::hypot(sim.state().position.x - prev.position.x,
                           sim.state().position.y - prev.position.y);
    prev = sim.state();
    states.push_back(sim.state());
    travel.push_back(distance);
    if (out.done) {
      sim.reset(seed);
      prev = sim.state();
    }
  }
  if (static_cast<int>(states.size()) < n)
    throw std::runtime_error("generate_paired_data: drive too short");

  // n states at evenly spaced travel distances.
  std::vector<size_t> picks;
  picks.reserve(static_cast<size_t>(n));
  size_t cursor = 0;
  for (int i = 0; i < n; ++i) {
    const double target = distance * i / n;
    while (cursor + 1 < travel.size() && travel[cursor] < target) ++cursor;
    picks.push_back(cursor);
  }

  Rng split_rng = rng.split("split");
  PairedSet stage1, stage2;
  stage1.pairs.reserve(static_cast<size_t>(n));
  stage2.pairs.reserve(static_cast<size_t>(n));
  for (size_t idx : picks) {
    const CarState& st = states[idx];
    const SegMap seg = render_segmentation(st, track);
    const Frame parsing = palette_frame(seg);
    const double param = nearest_centerline_point(track, st.position).param;
    PairedSample s1;
    s1.condition = render(st, track, RenderStyle::virt());
    s1.target = parsing;
    s1.track_param = param;
    PairedSample s2;
    s2.condition = parsing;
    s2.target = render(st, track, RenderStyle::real());
    s2.track_param = param;
    const uint8_t hold = split_rng.uniform() < 0.125 ? 1 : 0;
    stage1.pairs.push_back(std::move(s1));
    stage1.heldout.push_back(hold);
    stage2.pairs.push_back(std::move(s2));
    stage2.heldout.push_back(hold);
  }
  // A degenerate split draw could leave no held-out pairs; force the tail.
  if (stage1.heldout_count() < static_cast<size_t>(std::max(1, n / 10))) {
    const size_t need = static_cast<size_t>(std::max(1, n / 10));
    for (size_t i = stage1.pairs.size() - need; i < stage1.pairs.size(); ++i) {
      stage1.heldout[i] = 1;
      stage2.heldout[i] = 1;
    }
  }
  return {std::move(stage1), std::move(stage2)};
}

double lap_coverage(const PairedSet& set, const Track& track) {
  // Bin count adapts to the sample count so the measure stays meaningful for
  // small corpora (n samples can touch at most n bins).
  const int bins = static_cast<int>(std::min<size_t>(64, std::max<size_t>(8, set.size() / 2)));
  std::vector<bool> hit(static_cast<size_t>(bins), false);
  for (const auto& p : set.pairs) {
    int bin = static_cast<int>(p.track_param / track.length * bins);
    bin = std::clamp(bin, 0, bins - 1);
    hit[static_cast<size_t>(bin)] = true;
  }
  int n = 0;
  for (bool b : hit) n += b;
  return static_cast<double>(n) / bins;
}

void write_paired_set(const std::string& dir, const PairedSet& set) {
  fs::create_directories(dir);
  std::ofstream index(dir + "/index.txt");
  if (!index) throw std::runtime_error("cannot write dataset index under " + dir);
  char name[64];
  for (size_t i = 0; i < set.pairs.size(); ++i) {
    std::snprintf(name, sizeof(name), "cond_%06zu.vrt1", i);
    const std::string cond_path = name;
    std::snprintf(name, sizeof(name), "targ_%06zu.vrt1", i);
    const std::string targ_path = name;
    write_vrt1_file(dir + "/" + cond_path, frame_to_tensor(set.pairs[i].condition));
    write_vrt1_file(dir + "/" + targ_path, frame_to_tensor(set.pairs[i].target));
    index << i << ' ' << cond_path << ' ' << targ_path << ' '
          << (set.heldout[i] ? "heldout" : "train") << '\n';
  }
}

PairedSet read_paired_set(const std::string& dir) {
  std::ifstream index(dir + "/index.txt");
  if (!index) throw std::runtime_error("cannot read dataset index under " + dir);
  PairedSet set;
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    size_t id;
    std::string cond_path, targ_path, split;
    if (!(ss >> id >> cond_path >> targ_path >> split) || (split != "train" && split != "heldout"))
      throw std::runtime_error("bad dataset index line: " + line);
    PairedSample s;
    s.condition = tensor_to_frame(read_vrt1_file<float>(dir + "/" + cond_path));
    s.target = tensor_to_frame(read_vrt1_file<float>(dir + "/" + targ_path));
    set.pairs.push_back(std::move(s));
    set.heldout.push_back(split == "heldout" ? 1 : 0);
  }
  return set;
}

// ---------------------------------------------------------------------------

double d_loss_value(PatchDiscriminator& d, const Frame& condition, const Frame& real_target,
                    const Frame& fake_target) {
  Graph g;
  auto cond = g.constant(frame_to_tensor(condition));
  auto real = g.constant(frame_to_tensor(real_target));
  auto fake = g.constant(frame_to_tensor(fake_target));
  auto loss = g.add(g.neg_mean_log(d.forward(g, cond, real, false)),
                    g.neg_mean_log1m(d.forward(g, cond, fake, false)));
  return static_cast<double>(g.value(loss).data[0]);
}

GanLossReport g_loss_report(PatchDiscriminator& d, const Frame& condition, const Frame& fake_target,
                            const Frame& real_target, double lambda) {
  if (lambda < 0) throw std::invalid_argument("g_loss lambda must be >= 0");
  Graph g;
  auto cond = g.constant(frame_to_tensor(condition));
  auto fake = g.constant(frame_to_tensor(fake_target));
  auto real = g.constant(frame_to_tensor(real_target));
  GanLossReport r;
  r.lambda = lambda;
  r.g_adv_loss = static_cast<double>(g.value(g.neg_mean_log(d.forward(g, cond, fake, false))).data[0]);
  r.g_l1_loss = static_cast<double>(g.value(g.l1_loss(fake, real)).data[0]);
  r.combined = r.g_adv_loss + lambda * r.g_l1_loss;
  return r;
}

namespace {

std::vector<float> snapshot(const ParamList<float>& list) {
  std::vector<float> out;
  for (const auto& [n, p] : list) out.insert(out.end(), p->data.begin(), p->data.end());
  return out;
}

void restore_snapshot(const ParamList<float>& list, const std::vector<float>& snap) {
  size_t off = 0;
  for (const auto& [n, p] : list) {
    std::copy(snap.begin() + static_cast<int64_t>(off),
              snap.begin() + static_cast<int64_t>(off + p->data.size()), p->data.begin());
    off += p->data.size();
  }
}

}  // namespace

StageResult train_stage(GanStage stage, const PairedSet& data, const StageTrainConfig& cfg) {
  if (data.pairs.empty()) throw std::invalid_argument("train_stage: empty dataset");
  const auto train_idx_base = data.train_indices();
  if (train_idx_base.size() < 64)
    throw std::invalid_argument("train_stage: need >= 64 training pairs, got " +
                                std::to_string(train_idx_base.size()));

  StageResult res;
  Rng rng(cfg.seed);
  {
    Rng gi = rng.split("g_init");
    auto gp = res.generator.named_params("g");
    init_gan_params(gp, gi);
    Rng di = rng.split("d_init");
    auto dp = res.discriminator.named_params("d");
    init_gan_params(dp, di);
  }
  auto g_params = res.generator.named_params("g");
  auto d_params = res.discriminator.named_params("d");
  auto g_ptrs = param_ptrs(g_params);
  auto d_ptrs = param_ptrs(d_params);
  auto g_state = res.generator.named_state("g");
  auto d_state = res.discriminator.named_state("d");

  Adam adam_g, adam_d;
  adam_g.lr = static_cast<float>(cfg.lr);
  adam_g.beta1 = static_cast<float>(cfg.beta1);
  adam_g.beta2 = static_cast<float>(cfg.beta2);
  adam_g.eps = static_cast<float>(cfg.adam_eps);
  adam_d = adam_g;

  std::ofstream csv;
  if (!cfg.curve_csv.empty()) {
    const fs::path p = fs::path(cfg.curve_csv).parent_path();
    if (!p.empty()) fs::create_directories(p);
    csv.open(cfg.curve_csv, std::ios::app);
    if (csv.tellp() == 0) csv << "epoch,d_loss,g_adv,g_l1,holdout_l1\n";
  }

  Rng noise_rng = rng.split("noise");
  std::vector<float> last_good_g = snapshot(g_params);
  std::vector<float> last_good_d = snapshot(d_params);
  std::vector<float> last_good_gs = snapshot(g_state);
  std::vector<float> last_good_ds = snapshot(d_state);

  const char* tag = stage == GanStage::VirtualToParsing ? "stage1" : "stage2";
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> order = train_idx_base;
    Rng shuffle_rng = rng.split("shuffle", static_cast<uint64_t>(epoch));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    double sum_d = 0, sum_adv = 0, sum_l1 = 0;
    int batches = 0;
    bool nonfinite = false;
    for (size_t start = 0; start < order.size() && !nonfinite; start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<const Frame*> conds, targets;
      for (size_t i = start; i < end; ++i) {
        conds.push_back(&data.pairs[order[i]].condition);
        targets.push_back(&data.pairs[order[i]].target);
      }
      Tensor cond_batch = frames_to_batch(conds);
      Tensor target_batch = frames_to_batch(targets);

      // Generator forward (shared by both steps; D sees the value detached).
      Graph gg;
      auto cond_node = gg.constant(cond_batch);
      auto fake_node = res.generator.forward(gg, cond_node, true, true, &noise_rng);
      Tensor fake_value = gg.value(fake_node);

      // D step.
      double d_loss;
      {
        Graph dg;
        auto c = dg.constant(cond_batch);
        auto real = dg.constant(target_batch);
        auto fake = dg.constant(fake_value);
        auto loss = dg.add(dg.neg_mean_log(res.discriminator.forward(dg, c, real, true)),
                           dg.neg_mean_log1m(res.discriminator.forward(dg, c, fake, true)));
        d_loss = static_cast<double>(dg.value(loss).data[0]);
        if (!std::isfinite(d_loss)) {
          nonfinite = true;
          break;
        }
        zero_grads(d_params);
        dg.backward(loss);
        adam_d.step(d_ptrs);
      }

      // G step against the updated discriminator.
      auto patch = res.discriminator.forward(gg, cond_node, fake_node, true);
      auto adv = gg.neg_mean_log(patch);
      auto l1 = gg.l1_loss(fake_node, gg.constant(target_batch));
      auto combined = gg.add(adv, gg.scale(l1, static_cast<float>(cfg.lambda)));
      const double g_adv = static_cast<double>(gg.value(adv).data[0]);
      const double g_l1 = static_cast<double>(gg.value(l1).data[0]);
      if (!std::isfinite(g_adv) || !std::isfinite(g_l1)) {
        nonfinite = true;
        break;
      }
      zero_grads(g_params);
      zero_grads(d_params);  // the G backward also touches D grads; discard them
      gg.backward(combined);
      adam_g.step(g_ptrs);

      sum_d += d_loss;
      sum_adv += g_adv;
      sum_l1 += g_l1;
      ++batches;
    }

    if (nonfinite || !all_finite(g_params) || !all_finite(d_params)) {
      restore_snapshot(g_params, last_good_g);
      restore_snapshot(d_params, last_good_d);
      restore_snapshot(g_state, last_good_gs);
      restore_snapshot(d_state, last_good_ds);
      res.aborted_nonfinite = true;
      break;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean.lambda = cfg.lambda;
    rec.mean.d_loss = sum_d / std::max(1, batches);
    rec.mean.g_adv_loss = sum_adv / std::max(1, batches);
    rec.mean.g_l1_loss = sum_l1 / std::max(1, batches);
    rec.mean.combined = rec.mean.g_adv_loss + cfg.lambda * rec.mean.g_l1_loss;
    rec.holdout_l1 = holdout_l1(res.generator, data);
    res.curve.push_back(rec);
    if (csv.is_open())
      csv << rec.epoch << ',' << rec.mean.d_loss << ',' << rec.mean.g_adv_loss << ','
          << rec.mean.g_l1_loss << ',' << rec.holdout_l1 << '\n'
          << std::flush;
    if (cfg.verbose)
      std::fprintf(stderr, "[%s] epoch %d  d=%.4f adv=%.4f l1=%.4f holdout_l1=%.4f\n", tag,
                   rec.epoch, rec.mean.d_loss, rec.mean.g_adv_loss, rec.mean.g_l1_loss,
                   rec.holdout_l1);

    last_good_g = snapshot(g_params);
    last_good_d = snapshot(d_params);
    last_good_gs = snapshot(g_state);
    last_good_ds = snapshot(d_state);
  }
  return res;
}

namespace {

Frame generator_eval(UNetGenerator& g, const Frame& input) {
  Graph gr;
  auto out = g.forward(gr, gr.constant(frame_to_tensor(input)), false, false, nullptr);
  return tensor_to_frame(gr.value(out));
}

}  // namespace

double holdout_l1(UNetGenerator& g, const PairedSet& data) {
  const auto idx = data.heldout_indices();
  if (idx.empty()) throw std::invalid_argument("holdout_l1: no held-out pairs");
  double acc = 0;
  for (size_t i : idx) {
    const Frame out = generator_eval(g, data.pairs[i].condition);
    double s = 0;
    for (size_t j = 0; j < out.data.size(); ++j)
      s += std::abs(static_cast<double>(out.data[j]) - static_cast<double>(data.pairs[i].target.data[j]));
    acc += s / static_cast<double>(out.data.size());
  }
  return acc / static_cast<double>(idx.size());
}

std::vector<double> holdout_frame_agreements(UNetGenerator& g, const PairedSet& data) {
  const auto idx = data.heldout_indices();
  std::vector<double> out;
  out.reserve(idx.size());
  for (size_t i : idx) {
    const Frame gen = generator_eval(g, data.pairs[i].condition);
    out.push_back(segmap_agreement(nearest_palette_classes(gen),
                                   nearest_palette_classes(data.pairs[i].target)));
  }
  return out;
}

double holdout_pixel_accuracy(UNetGenerator& g, const PairedSet& data) {
  const auto agreements = holdout_frame_agreements(g, data);
  if (agreements.empty()) throw std::invalid_argument("holdout_pixel_accuracy: no held-out pairs");
  double acc = 0;
  for (double a : agreements) acc += a;
  return acc / static_cast<double>(agreements.size());
}

// ---------------------------------------------------------------------------

TranslateOutput translate(TranslationPipeline& pipeline, const Frame& virtual_frame, Rng* rng) {
  if (pipeline.noise_mode && rng == nullptr)
    throw std::invalid_argument("translate: noise_mode needs an rng");
  Graph g;
  auto x = g.constant(frame_to_tensor(virtual_frame));
  auto parsing = pipeline.g1.forward(g, x, false, pipeline.noise_mode, rng);
  auto realistic = pipeline.g2.forward(g, parsing, false, pipeline.noise_mode, rng);
  TranslateOutput out;
  out.parsing_est = tensor_to_frame(g.value(parsing));
  out.realistic = tensor_to_frame(g.value(realistic));
  return out;
}

void save_generator(const std::string& path, UNetGenerator& g, const std::string& prefix) {
  CheckpointWriter w;
  w.add_list(g.named_params(prefix));
  w.add_list(g.named_state(prefix));
  w.save(path);
}

void load_generator(const std::string& path, UNetGenerator& g, const std::string& prefix) {
  const Checkpoint c = Checkpoint::load(path);
  auto params = g.named_params(prefix);
  auto state = g.named_state(prefix);
  c.restore(params);
  c.restore(state);
  ParamList<float> all = params;
  all.insert(all.end(), state.begin(), state.end());
  c.verify_no_extras(prefix + ".", all);
}

TranslationPipeline load_pipeline(const std::string& dir) {
  TranslationPipeline p;
  load_generator(dir + "/g1.ckpt", p.g1, "g1");
  load_generator(dir + "/g2.ckpt", p.g2, "g2");
  return p;
}

}  // namespace vrl
