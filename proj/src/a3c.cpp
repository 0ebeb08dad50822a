#include "vrl/a3c.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "vrl/checkpoint.hpp"
#include "vrl/optim.hpp"

namespace fs = std::filesystem;

namespace vrl {

void RolloutSegment::validate() const {
  if (steps.empty()) throw std::invalid_argument("empty rollout segment");
  for (size_t i = 0; i + 1 < steps.size(); ++i)
    if (steps[i].done) throw std::invalid_argument("rollout segment has done before the end");
  if (terminal && !steps.back().done)
    throw std::invalid_argument("terminal segment must end with done");
}

std::vector<ReturnAdvantage> n_step_returns(const RolloutSegment& segment, double discount) {
  segment.validate();
  std::vector<ReturnAdvantage> out(segment.steps.size());
  double running = segment.steps.back().done ? 0.0 : static_cast<double>(segment.bootstrap_value);
  for (size_t i = segment.steps.size(); i-- > 0;) {
    running = static_cast<double>(segment.steps[i].reward) + discount * running;
    out[i].ret = running;
    out[i].advantage = running - static_cast<double>(segment.steps[i].value_est);
  }
  return out;
}

Tensor stack_frames(const std::deque<Frame>& history) {
  if (history.size() != 4) throw std::invalid_argument("stack_frames needs exactly 4 frames");
  const int h = history.front().height, w = history.front().width;
  Tensor obs({1, 12, h, w});
  size_t off = 0;
  for (const Frame& f : history) {
    if (f.height != h || f.width != w) throw std::invalid_argument("stack_frames: size mismatch");
    std::copy(f.data.begin(), f.data.end(), obs.data.begin() + static_cast<int64_t>(off));
    off += f.data.size();
  }
  return obs;
}

void A3CConfig::validate() const {
  if (workers < 1) throw std::invalid_argument("a3c: workers must be >= 1");
  if (discount <= 0 || discount >= 1) throw std::invalid_argument("a3c: discount must be in (0,1)");
  if (t_max < 1) throw std::invalid_argument("a3c: t_max must be >= 1");
  if (budget_steps <= 0) throw std::invalid_argument("a3c: step budget must be positive");
  if (obs_mode == ObsMode::Randomized && randomized_styles < 1)
    throw std::invalid_argument("a3c: randomized mode needs >= 1 style");
}

float clamp_reward(double reward, const RewardConfig& cfg) {
  const double hi = kMaxSpeed * cfg.beta;
  return static_cast<float>(std::clamp(reward, cfg.gamma_collision, hi));
}

namespace {

int sample_action(Rng& rng, const Tensor& logits) {
  const int64_t n = logits.numel();
  // Stable softmax in double, then inverse-CDF draw.
  double mx = logits.data[0];
  for (int64_t i = 1; i < n; ++i) mx = std::max(mx, static_cast<double>(logits.data[i]));
  double z = 0;
  std::vector<double> p(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    p[static_cast<size_t>(i)] = std::exp(static_cast<double>(logits.data[i]) - mx);
    z += p[static_cast<size_t>(i)];
  }
  const double u = rng.uniform() * z;
  double acc = 0;
  for (int64_t i = 0; i < n; ++i) {
    acc += p[static_cast<size_t>(i)];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(n - 1);
}

struct GlobalState {
  PolicyValueNet net;
  ParamList<float> params;
  std::vector<Tensor*> param_ptrs_;
  RMSProp opt;
  std::mutex apply_mu;
  std::mutex stats_mu;
  std::atomic<int64_t> step_count{0};
  std::atomic<int64_t> dropped{0};
  std::atomic<bool> nonfinite{false};
  std::vector<EpisodeStat> curve;
  std::vector<int64_t> worker_updates;
  std::ofstream csv;
  std::chrono::steady_clock::time_point t0;
  int64_t next_checkpoint = 0;

  explicit GlobalState(const A3CConfig& cfg) : net(cfg.policy) {
    params = net.named_params("policy");
    param_ptrs_ = param_ptrs(params);
    opt.lr = static_cast<float>(cfg.lr);
    opt.decay = static_cast<float>(cfg.rms_decay);
    opt.eps = static_cast<float>(cfg.rms_eps);
    worker_updates.assign(static_cast<size_t>(cfg.workers), 0);
    t0 = std::chrono::steady_clock::now();
  }

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

class Worker {
 public:
  Worker(int id, const A3CConfig& cfg, const Track& track, TranslationPipeline* pipeline,
         GlobalState& global)
      : id_(id),
        cfg_(cfg),
        pipeline_(pipeline),
        global_(global),
        sim_(track, RewardConfig{}, cfg.max_episode_steps),
        net_(cfg.policy),
        rng_(Rng(cfg.seed).split("worker", static_cast<uint64_t>(id))) {
    local_params_ = net_.named_params("policy");
    local_ptrs_ = param_ptrs(local_params_);
    if (cfg_.obs_mode == ObsMode::Randomized)
      styles_ = randomized_styles(cfg_.randomized_styles, Rng(cfg_.seed).split("styles").seed());
  }

  void run() {
    begin_episode();
    while (global_.step_count.load(std::memory_order_relaxed) < cfg_.budget_steps &&
           !global_.nonfinite.load(std::memory_order_relaxed)) {
      run_segment();
    }
  }

 private:
  Frame observe_current() {
    switch (cfg_.obs_mode) {
      case ObsMode::RawVirtual:
        return render(sim_.state(), sim_.track(), RenderStyle::virt());
      case ObsMode::RawReal:
        return render(sim_.state(), sim_.track(), RenderStyle::real());
      case ObsMode::Translated: {
        Frame virt = render(sim_.state(), sim_.track(), RenderStyle::virt());
        return translate(*pipeline_, virt, &rng_).realistic;
      }
      case ObsMode::Randomized: {
        const RenderStyle& style = styles_[(static_cast<size_t>(id_) + episode_index_) % styles_.size()];
        return render(sim_.state(), sim_.track(), style);
      }
    }
    throw std::logic_error("unknown obs mode");
  }

  void begin_episode() {
    sim_.reset(cfg_.seed);
    history_.clear();
    const Frame first = observe_current();
    for (int i = 0; i < 4; ++i) history_.push_back(first);
    episode_reward_ = 0;
    episode_len_ = 0;
  }

  void finish_episode() {
    EpisodeStat st;
    st.wall_clock_s = global_.elapsed();
    st.global_step = global_.step_count.load(std::memory_order_relaxed);
    st.worker_id = id_;
    st.reward = episode_reward_;
    st.length = episode_len_;
    {
      std::lock_guard<std::mutex> lk(global_.stats_mu);
      global_.curve.push_back(st);
      if (global_.csv.is_open())
        global_.csv << st.wall_clock_s << ',' << st.global_step << ',' << st.worker_id << ','
                    << st.reward << ',' << st.length << '\n'
                    << std::flush;
    }
    ++episode_index_;
    begin_episode();
  }

  void run_segment() {
    {  // snapshot global params
      std::lock_guard<std::mutex> lk(global_.apply_mu);
      copy_params(local_params_, global_.params);
    }
    Graph g;
    std::vector<Graph::NodeId> logits_ids, value_ids;
    RolloutSegment seg;
    for (int t = 0; t < cfg_.t_max; ++t) {
      Tensor obs = stack_frames(history_);
      auto out = net_.forward(g, g.constant(obs));
      const int action = sample_action(rng_, g.value(out.logits));
      const float value_est = g.value(out.value).data[0];
      const auto step = sim_.step(action, cfg_.dt);
      episode_reward_ += clamp_reward(step.reward, sim_.reward_config());
      ++episode_len_;

      Transition tr;
      tr.obs = std::move(obs);
      tr.action = action;
      tr.reward = clamp_reward(step.reward, sim_.reward_config());
      tr.done = step.done;
      tr.value_est = value_est;
      seg.steps.push_back(std::move(tr));
      logits_ids.push_back(out.logits);
      value_ids.push_back(out.value);

      if (step.done) {
        seg.terminal = true;
        break;
      }
      history_.pop_front();
      history_.push_back(observe_current());
    }
    const bool was_done = seg.steps.back().done;
    if (!was_done) {
      // Bootstrap from the state after the last step; frame history already
      // includes it.
      history_.pop_front();
      history_.push_back(observe_current());
      seg.bootstrap_value = state_value(net_, stack_frames(history_));
    }

    const auto ra = n_step_returns(seg, cfg_.discount);
    std::vector<int> actions;
    std::vector<float> advantages, returns;
    for (size_t i = 0; i < seg.steps.size(); ++i) {
      actions.push_back(seg.steps[i].action);
      advantages.push_back(static_cast<float>(ra[i].advantage));
      returns.push_back(static_cast<float>(ra[i].ret));
    }
    auto loss = g.policy_value_loss(g.concat_rows(logits_ids), g.concat_rows(value_ids), actions,
                                    advantages, returns, static_cast<float>(cfg_.value_coeff),
                                    static_cast<float>(cfg_.entropy_coeff));
    zero_grads(local_params_);
    g.backward(loss);

    bool grads_finite = true;
    for (const auto& [name, p] : local_params_) {
      for (float gv : p->grad)
        if (!std::isfinite(gv)) {
          grads_finite = false;
          break;
        }
      if (!grads_finite) break;
    }
    if (!grads_finite) {
      global_.dropped.fetch_add(1, std::memory_order_relaxed);
    } else {
      clip_grad_norm(local_ptrs_, cfg_.grad_clip_norm);
      std::string checkpoint_path;
      PolicyValueNet snapshot(cfg_.policy);
      {
        std::lock_guard<std::mutex> lk(global_.apply_mu);
        global_.opt.step_with_grads(global_.param_ptrs_, local_ptrs_);
        global_.worker_updates[static_cast<size_t>(id_)]++;
        const int64_t steps_now = global_.step_count.fetch_add(
                                      static_cast<int64_t>(seg.steps.size()),
                                      std::memory_order_relaxed) +
                                  static_cast<int64_t>(seg.steps.size());
        if (!all_finite(global_.params)) global_.nonfinite.store(true, std::memory_order_relaxed);
        if (cfg_.checkpoint_every > 0 && !cfg_.out_dir.empty() &&
            steps_now >= global_.next_checkpoint) {
          global_.next_checkpoint += cfg_.checkpoint_every;
          copy_params(snapshot.named_params("policy"), global_.params);
          checkpoint_path = cfg_.out_dir + "/ckpt_" + std::to_string(steps_now) + ".ckpt";
        }
      }
      if (!checkpoint_path.empty())
        save_policy_checkpoint(checkpoint_path, snapshot, nullptr, &rng_,
                               global_.step_count.load(std::memory_order_relaxed));
    }

    if (was_done) finish_episode();
  }

  int id_;
  const A3CConfig& cfg_;
  TranslationPipeline* pipeline_;
  GlobalState& global_;
  Simulator sim_;
  PolicyValueNet net_;
  ParamList<float> local_params_;
  std::vector<Tensor*> local_ptrs_;
  Rng rng_;
  std::deque<Frame> history_;
  std::vector<RenderStyle> styles_;
  double episode_reward_ = 0;
  int episode_len_ = 0;
  size_t episode_index_ = 0;
};

}  // namespace

TrainResult a3c_train(const A3CConfig& cfg, const Track& track, TranslationPipeline* pipeline) {
  cfg.validate();
  if (cfg.obs_mode == ObsMode::Translated && pipeline == nullptr)
    throw std::invalid_argument("a3c: translated mode requires a pipeline");

  GlobalState global(cfg);
  {
    Rng init_rng = Rng(cfg.seed).split("policy_init");
    init_policy_params(global.net, init_rng);
  }
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    global.csv.open(cfg.out_dir + "/curve.csv", std::ios::app);
    if (global.csv.tellp() == 0)
      global.csv << "wall_clock_s,global_step,worker_id,episode_reward,episode_len\n";
  }
  global.next_checkpoint = cfg.checkpoint_every;

  std::vector<std::unique_ptr<Worker>> workers;
  workers.reserve(static_cast<size_t>(cfg.workers));
  for (int i = 0; i < cfg.workers; ++i)
    workers.push_back(std::make_unique<Worker>(i, cfg, track, pipeline, global));

  if (cfg.workers == 1) {
    workers[0]->run();  // fully deterministic path
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers.size());
    for (auto& w : workers) threads.emplace_back([&w]() { w->run(); });
    for (auto& t : threads) t.join();
  }

  TrainResult res;
  res.net = PolicyValueNet(cfg.policy);
  copy_params(res.net.named_params("policy"), global.params);
  res.curve = std::move(global.curve);
  res.dropped_segments = global.dropped.load();
  res.worker_updates = global.worker_updates;
  res.nonfinite_params_observed = global.nonfinite.load();
  res.global_steps = global.step_count.load();
  if (!cfg.out_dir.empty())
    save_policy_checkpoint(cfg.out_dir + "/final.ckpt", res.net, &global.opt, nullptr,
                           res.global_steps);
  return res;
}

int act_greedy(PolicyValueNet& net, const Tensor& obs) {
  Graph g;
  auto out = net.forward(g, g.constant(obs));
  const Tensor& logits = g.value(out.logits);
  int best = 0;
  for (int64_t i = 0; i < logits.numel(); ++i) {
    if (!std::isfinite(static_cast<double>(logits.data[static_cast<size_t>(i)])))
      throw std::runtime_error("act_greedy: non-finite policy output");
    if (logits.data[static_cast<size_t>(i)] > logits.data[static_cast<size_t>(best)])
      best = static_cast<int>(i);
  }
  return best;
}

float state_value(PolicyValueNet& net, const Tensor& obs) {
  Graph g;
  auto out = net.forward(g, g.constant(obs));
  return g.value(out.value).data[0];
}

void save_policy_checkpoint(const std::string& path, PolicyValueNet& net, const RMSProp* opt,
                            const Rng* rng, int64_t global_step) {
  CheckpointWriter w;
  auto params = net.named_params("policy");
  w.add_list(params);
  if (opt) save_optimizer(w, "opt", *opt, params);
  if (rng) w.add("rng.state", rng_state_tensor(*rng));
  w.add("meta.global_step", TensorD::scalar(static_cast<double>(global_step)));
  w.save(path);
}

void load_policy_checkpoint(const std::string& path, PolicyValueNet& net, RMSProp* opt, Rng* rng,
                            int64_t* global_step) {
  const Checkpoint c = Checkpoint::load(path);
  auto params = net.named_params("policy");
  c.restore(params);
  c.verify_no_extras("policy.", params);
  if (opt) load_optimizer(c, "opt", *opt, params);
  if (rng && c.has("rng.state")) *rng = rng_from_state_tensor(c.f64("rng.state"));
  if (global_step) *global_step = static_cast<int64_t>(c.f64("meta.global_step").data[0]);
}

}  // namespace vrl
