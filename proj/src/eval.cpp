#include "vrl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "vrl/optim.hpp"
#include "vrl/tensor_io.hpp"
#include "vrl/translate.hpp"

namespace fs = std::filesystem;

namespace vrl {

const char* lateral3_name(Lateral3 l) {
  switch (l) {
    case Lateral3::Straight: return "straight";
    case Lateral3::Left: return "left";
    case Lateral3::Right: return "right";
  }
  return "?";
}

Lateral3 map_steering_to_action(double angle_degrees) {
  if (!std::isfinite(angle_degrees))
    throw std::invalid_argument("map_steering_to_action: non-finite angle");
  if (angle_degrees <= -10.0) return Lateral3::Left;
  if (angle_degrees >= 10.0) return Lateral3::Right;
  return Lateral3::Straight;
}

Lateral3 collapse_9_to_3(int action) {
  if (action < 0 || action >= kNumActions)
    throw std::invalid_argument("collapse_9_to_3: action out of range");
  switch (action % 3) {
    case 1: return Lateral3::Left;
    case 2: return Lateral3::Right;
    default: return Lateral3::Straight;
  }
}

LabeledDriveLog synthesize_drive_log(const Track& track, int n_frames, uint64_t seed,
                                     RenderStyle style) {
  if (n_frames < 1) throw std::invalid_argument("synthesize_drive_log: need >= 1 frame");
  LabeledDriveLog log;
  log.frames.reserve(static_cast<size_t>(n_frames));
  Rng rng(seed);
  Simulator sim(track);
  sim.reset(seed);
  // Warm up so the log starts at speed.
  for (int i = 0; i < 30; ++i) sim.step(center_follow_control(track, sim.state()).action);
  while (static_cast<int>(log.frames.size()) < n_frames) {
    const ControlDecision c = center_follow_control(track, sim.state(), 2.0, &rng);
    log.frames.push_back(render(sim.state(), track, style));
    log.angles_deg.push_back(c.steer_deg);
    log.labels.push_back(map_steering_to_action(c.steer_deg));
    const auto out = sim.step(c.action);
    if (out.done) sim.reset(seed);
  }
  return log;
}

void save_drive_log(const std::string& dir, const LabeledDriveLog& log) {
  fs::create_directories(dir);
  std::ofstream csv(dir + "/angles.csv");
  if (!csv) throw std::runtime_error("cannot write drive log under " + dir);
  csv << "frame,angle_deg,label\n";
  csv << std::setprecision(17);
  char name[64];
  for (size_t i = 0; i < log.size(); ++i) {
    std::snprintf(name, sizeof(name), "frame_%06zu.vrt1", i);
    write_vrt1_file(dir + "/" + name, frame_to_tensor(log.frames[i]));
    csv << name << ',' << log.angles_deg[i] << ',' << lateral3_name(log.labels[i]) << '\n';
  }
}

LabeledDriveLog load_drive_log(const std::string& dir) {
  std::ifstream csv(dir + "/angles.csv");
  if (!csv) throw std::runtime_error("cannot read drive log under " + dir);
  LabeledDriveLog log;
  std::string line;
  std::getline(csv, line);  // header
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string name, label;
    double angle;
    char comma;
    if (!std::getline(ss, name, ',') || !(ss >> angle))
      throw std::runtime_error("bad drive log line: " + line);
    ss >> comma;  // consume separator before label (unused; labels re-derived)
    log.frames.push_back(tensor_to_frame(read_vrt1_file<float>(dir + "/" + name)));
    log.angles_deg.push_back(angle);
    log.labels.push_back(map_steering_to_action(angle));
  }
  return log;
}

void EvalReport::recompute_accuracy() {
  int64_t trace = 0;
  total = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      total += confusion[static_cast<size_t>(i)][static_cast<size_t>(j)];
      if (i == j) trace += confusion[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
  accuracy = total > 0 ? static_cast<double>(trace) / static_cast<double>(total) : 0.0;
}

EvalReport evaluate_on_log(const ActionFn& policy, const LabeledDriveLog& log, std::string method) {
  if (log.size() == 0) throw std::invalid_argument("evaluate_on_log: empty log");
  EvalReport report;
  report.method = std::move(method);
  std::deque<Frame> hist;
  for (int i = 0; i < 4; ++i) hist.push_back(log.frames[0]);
  for (size_t t = 0; t < log.size(); ++t) {
    if (t > 0) {
      hist.pop_front();
      hist.push_back(log.frames[t]);
    }
    const Lateral3 pred = collapse_9_to_3(policy(stack_frames(hist)));
    report.confusion[static_cast<size_t>(log.labels[t])][static_cast<size_t>(pred)]++;
  }
  report.recompute_accuracy();
  return report;
}

EvalReport evaluate_on_log(PolicyValueNet& policy, const LabeledDriveLog& log, std::string method) {
  if (log.size() > 0 && log.frames[0].height != policy.cfg.input_hw)
    throw std::invalid_argument("evaluate_on_log: frame size does not match policy input");
  return evaluate_on_log([&policy](const Tensor& obs) { return act_greedy(policy, obs); }, log,
                         std::move(method));
}

PolicyValueNet train_supervised_baseline(const LabeledDriveLog& log, int epochs, uint64_t seed) {
  if (log.size() < 4) throw std::invalid_argument("train_supervised_baseline: log too short");
  {
    bool multi_class = false;
    for (size_t i = 1; i < log.size(); ++i)
      if (log.labels[i] != log.labels[0]) {
        multi_class = true;
        break;
      }
    if (!multi_class)
      std::fprintf(stderr, "warning: supervised baseline log has a single label class\n");
  }
  Rng rng(seed);
  PolicyValueNet net;
  {
    Rng init = rng.split("sv_init");
    init_policy_params(net, init);
  }
  auto params = net.named_params("policy");
  auto ptrs = param_ptrs(params);
  Adam opt;
  opt.lr = 1e-3f;
  opt.beta1 = 0.9f;

  // Precompute stacked observations (sliding 4-frame window).
  std::vector<Tensor> obs;
  std::vector<int> targets;  // lateral label mapped onto the coast group
  std::deque<Frame> hist;
  for (int i = 0; i < 4; ++i) hist.push_back(log.frames[0]);
  for (size_t t = 0; t < log.size(); ++t) {
    if (t > 0) {
      hist.pop_front();
      hist.push_back(log.frames[t]);
    }
    obs.push_back(stack_frames(hist));
    targets.push_back(6 + static_cast<int>(log.labels[t]));
  }

  const int batch = 32;
  Rng shuffle_root = rng.split("sv_shuffle");
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<size_t> order(obs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng sr = shuffle_root.split("epoch", static_cast<uint64_t>(epoch));
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[sr.uniform_int(i)]);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(batch));
      Graph g;
      std::vector<Graph::NodeId> logit_ids;
      std::vector<int> labels;
      for (size_t i = start; i < end; ++i) {
        auto out = net.forward(g, g.constant(obs[order[i]]));
        logit_ids.push_back(out.logits);
        labels.push_back(targets[order[i]]);
      }
      auto loss = g.cross_entropy_mean(g.concat_rows(logit_ids), labels);
      zero_grads(params);
      g.backward(loss);
      opt.step(ptrs);
    }
  }
  return net;
}

namespace {

// Evaluation spawn spread around the lap with small lateral offsets.
CarState place_car(const Track& track, double param, double lateral_offset) {
  param = std::fmod(param, track.length);
  size_t seg = 0;
  while (seg + 1 < track.centerline.size() && track.cum_len[seg + 1] < param) ++seg;
  const Vec2 a = track.centerline[seg];
  const Vec2 b = track.centerline[(seg + 1) % track.centerline.size()];
  const double seg_len = track.cum_len[seg + 1] - track.cum_len[seg];
  const double t = (param - track.cum_len[seg]) / seg_len;
  const double tx = (b.x - a.x) / seg_len, ty = (b.y - a.y) / seg_len;
  CarState s;
  s.position = {a.x + t * (b.x - a.x) - ty * lateral_offset, a.y + t * (b.y - a.y) + tx * lateral_offset};
  s.heading = std::atan2(ty, tx);
  s.speed = 0;
  const NearestResult near = nearest_centerline_point(track, s.position);
  s.dist_center = near.dist;
  s.alpha = 0;
  s.collided = false;
  return s;
}

}  // namespace

GreedyEvalResult evaluate_greedy(PolicyValueNet& policy, const Track& track,
                                 const RenderStyle& style, int episodes, int max_steps, double dt) {
  if (episodes < 1) throw std::invalid_argument("evaluate_greedy: episodes must be >= 1");
  GreedyEvalResult res;
  RewardConfig rcfg;
  double total_len = 0;
  for (int e = 0; e < episodes; ++e) {
    CarState state = place_car(track, track.length * e / episodes, ((e % 5) - 2) * 0.8);
    std::deque<Frame> hist;
    const Frame first = render(state, track, style);
    for (int i = 0; i < 4; ++i) hist.push_back(first);
    double ep_reward = 0;
    int steps = 0;
    while (steps < max_steps) {
      const int action = act_greedy(policy, stack_frames(hist));
      const StepOutput out = advance(track, state, action, dt, rcfg);
      state = out.state;
      ep_reward += out.reward;
      ++steps;
      if (out.done) break;
      hist.pop_front();
      hist.push_back(render(state, track, style));
    }
    res.episode_rewards.push_back(ep_reward);
    total_len += steps;
  }
  for (double r : res.episode_rewards) res.mean_reward += r;
  res.mean_reward /= static_cast<double>(episodes);
  res.mean_length = total_len / episodes;
  return res;
}

const MethodSummary& TransferResult::by_name(const std::string& name) const {
  for (const auto& m : methods)
    if (m.method == name) return m;
  throw std::invalid_argument("no transfer method named " + name);
}

TransferResult transfer_experiment(const TransferConfig& cfg) {
  if (cfg.budget_steps < TransferConfig::kMinBudget)
    throw std::invalid_argument("transfer_experiment: budget " + std::to_string(cfg.budget_steps) +
                                " is below the minimum " + std::to_string(TransferConfig::kMinBudget));
  if (cfg.seeds.empty()) throw std::invalid_argument("transfer_experiment: need >= 1 seed");
  const Track track_a = make_track(TrackSpec::TrackA);
  const Track track_b = make_track(TrackSpec::TrackB);
  if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);

  // Translation pipeline: stage 1 learned on the training track, stage 2 on
  // the evaluation track's real appearance.
  TranslationPipeline pipeline;
  {
    auto [stage1a, stage2a] = generate_paired_data(track_a, cfg.pairs_n, DrivePolicy::CenterFollow, 11);
    (void)stage2a;
    auto [stage1b, stage2b] = generate_paired_data(track_b, cfg.pairs_n, DrivePolicy::CenterFollow, 12);
    (void)stage1b;
    StageTrainConfig gcfg;
    gcfg.epochs = cfg.gan_epochs;
    gcfg.seed = 21;
    gcfg.verbose = cfg.verbose;
    if (!cfg.out_dir.empty()) gcfg.curve_csv = cfg.out_dir + "/gan_stage1.csv";
    StageResult s1 = train_stage(GanStage::VirtualToParsing, stage1a, gcfg);
    gcfg.seed = 22;
    if (!cfg.out_dir.empty()) gcfg.curve_csv = cfg.out_dir + "/gan_stage2.csv";
    StageResult s2 = train_stage(GanStage::ParsingToReal, stage2b, gcfg);
    pipeline.g1 = std::move(s1.generator);
    pipeline.g2 = std::move(s2.generator);
  }

  struct MethodSpec {
    const char* name;
    const Track* track;
    ObsMode mode;
  };
  const MethodSpec specs[] = {
      {"Oracle", &track_b, ObsMode::RawReal},
      {"Ours", &track_a, ObsMode::Translated},
      {"DR", &track_a, ObsMode::Randomized},
      {"B-RL", &track_a, ObsMode::RawVirtual},
  };

  TransferResult result;
  std::ofstream csv;
  if (!cfg.out_dir.empty()) {
    csv.open(cfg.out_dir + "/transfer.csv");
    csv << "method,seed,eval_mean_reward,eval_mean_len\n";
  }
  for (const MethodSpec& spec : specs) {
    MethodSummary summary;
    summary.method = spec.name;
    for (uint64_t seed : cfg.seeds) {
      A3CConfig acfg;
      acfg.workers = cfg.workers;
      acfg.budget_steps = cfg.budget_steps;
      acfg.obs_mode = spec.mode;
      acfg.randomized_styles = cfg.randomized_styles;
      acfg.lr = cfg.a3c_lr;
      acfg.seed = seed;
      if (!cfg.out_dir.empty())
        acfg.out_dir = cfg.out_dir + "/" + spec.name + "_seed" + std::to_string(seed);
      TrainResult tr = a3c_train(acfg, *spec.track, spec.mode == ObsMode::Translated ? &pipeline : nullptr);
      GreedyEvalResult ev =
          evaluate_greedy(tr.net, track_b, RenderStyle::real(), cfg.eval_episodes);
      summary.per_seed_mean_reward.push_back(ev.mean_reward);
      if (csv.is_open())
        csv << spec.name << ',' << seed << ',' << ev.mean_reward << ',' << ev.mean_length << '\n'
            << std::flush;
      if (cfg.verbose)
        std::fprintf(stderr, "[transfer] %s seed %llu: eval mean reward %.4f (mean len %.1f)\n",
                     spec.name, static_cast<unsigned long long>(seed), ev.mean_reward,
                     ev.mean_length);
    }
    summary.mean_reward = 0;
    summary.min_reward = summary.per_seed_mean_reward[0];
    summary.max_reward = summary.per_seed_mean_reward[0];
    for (double r : summary.per_seed_mean_reward) {
      summary.mean_reward += r;
      summary.min_reward = std::min(summary.min_reward, r);
      summary.max_reward = std::max(summary.max_reward, r);
    }
    summary.mean_reward /= static_cast<double>(summary.per_seed_mean_reward.size());
    result.methods.push_back(std::move(summary));
  }
  if (!cfg.out_dir.empty()) write_transfer_csv(cfg.out_dir + "/transfer_summary.csv", result);
  return result;
}

void write_transfer_csv(const std::string& path, const TransferResult& result) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "method,mean_reward,min_reward,max_reward,seeds\n";
  for (const auto& m : result.methods)
    f << m.method << ',' << m.mean_reward << ',' << m.min_reward << ',' << m.max_reward << ','
      << m.per_seed_mean_reward.size() << '\n';
}

void print_transfer_table(std::ostream& os, const TransferResult& result) {
  os << std::left << std::setw(8) << "method" << std::right << std::setw(14) << "mean_reward"
     << std::setw(12) << "min" << std::setw(12) << "max" << '\n';
  for (const auto& m : result.methods)
    os << std::left << std::setw(8) << m.method << std::right << std::setw(14) << std::fixed
       << std::setprecision(4) << m.mean_reward << std::setw(12) << m.min_reward << std::setw(12)
       << m.max_reward << '\n';
}

void write_eval_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "method,accuracy,total";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      f << ",c_" << lateral3_name(static_cast<Lateral3>(i)) << "_"
        << lateral3_name(static_cast<Lateral3>(j));
  f << '\n' << report.method << ',' << report.accuracy << ',' << report.total;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      f << ',' << report.confusion[static_cast<size_t>(i)][static_cast<size_t>(j)];
  f << '\n';
}

void print_eval_report(std::ostream& os, const EvalReport& report) {
  os << "method " << report.method << "  accuracy " << std::fixed << std::setprecision(4)
     << report.accuracy << "  (" << report.total << " frames)\n";
  os << std::left << std::setw(10) << "truth\\pred";
  for (int j = 0; j < 3; ++j) os << std::right << std::setw(10) << lateral3_name(static_cast<Lateral3>(j));
  os << '\n';
  for (int i = 0; i < 3; ++i) {
    os << std::left << std::setw(10) << lateral3_name(static_cast<Lateral3>(i));
    for (int j = 0; j < 3; ++j)
      os << std::right << std::setw(10) << report.confusion[static_cast<size_t>(i)][static_cast<size_t>(j)];
    os << '\n';
  }
}

}  // namespace vrl
