#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "vrl/nets.hpp"
#include "vrl/optim.hpp"
#include "vrl/sim.hpp"
#include "vrl/tensor.hpp"
#include "vrl/translate.hpp"

namespace vrl {

struct Transition {
  Tensor obs;  // (1, 12, 64, 64)
  int action = 0;
  float reward = 0;  // clamped to [gamma_collision, v_max * beta]
  bool done = false;
  float value_est = 0;
};

struct RolloutSegment {
  std::vector<Transition> steps;
  float bootstrap_value = 0;  // value of the state after the last step, 0 if done
  bool terminal = false;

  void validate() const;  // at most one done, and only at the end
};

struct ReturnAdvantage {
  double ret = 0;
  double advantage = 0;
};
// R_t = r_t + discount * R_{t+1}, seeded with the bootstrap value;
// A_t = R_t - value_est_t. Computed in double.
std::vector<ReturnAdvantage> n_step_returns(const RolloutSegment& segment, double discount);

// Channel-concatenates the last 4 frames, newest last -> (1, 12, H, W).
Tensor stack_frames(const std::deque<Frame>& history);

enum class ObsMode { RawVirtual, RawReal, Translated, Randomized };

struct A3CConfig {
  int workers = 12;
  double lr = 0.01;
  double rms_decay = 0.9;
  double rms_eps = 0.1;
  double discount = 0.99;
  int t_max = 5;
  double entropy_coeff = 0.01;
  double value_coeff = 0.5;
  double grad_clip_norm = 40.0;
  ObsMode obs_mode = ObsMode::RawVirtual;
  int randomized_styles = 10;
  int64_t budget_steps = 100000;
  int max_episode_steps = kEpisodeStepBudget;
  double dt = kDefaultDt;
  int64_t checkpoint_every = 0;  // env steps; 0 disables
  std::string out_dir;           // curve CSV + checkpoints when non-empty
  uint64_t seed = 1;
  PolicyConfig policy;

  void validate() const;
};

struct EpisodeStat {
  double wall_clock_s = 0;  // log timestamp; excluded from determinism contracts
  int64_t global_step = 0;
  int worker_id = 0;
  double reward = 0;
  int length = 0;
};

struct TrainResult {
  PolicyValueNet net;
  std::vector<EpisodeStat> curve;
  int64_t dropped_segments = 0;
  std::vector<int64_t> worker_updates;
  bool nonfinite_params_observed = false;
  int64_t global_steps = 0;
};

// Spawns cfg.workers threads, each owning an independent simulator; gradients
// apply to the shared parameters under a single short lock. pipeline is
// required for ObsMode::Translated and is shared read-only across workers.
TrainResult a3c_train(const A3CConfig& cfg, const Track& track, TranslationPipeline* pipeline);

// Greedy argmax over the 9 action probabilities; ties break to the lowest
// index. Throws on non-finite outputs.
int act_greedy(PolicyValueNet& net, const Tensor& obs);
float state_value(PolicyValueNet& net, const Tensor& obs);

// Training-time reward clamp bounds.
float clamp_reward(double reward, const RewardConfig& cfg);

void save_policy_checkpoint(const std::string& path, PolicyValueNet& net, const RMSProp* opt,
                            const Rng* rng, int64_t global_step);
void load_policy_checkpoint(const std::string& path, PolicyValueNet& net, RMSProp* opt = nullptr,
                            Rng* rng = nullptr, int64_t* global_step = nullptr);

}  // namespace vrl
