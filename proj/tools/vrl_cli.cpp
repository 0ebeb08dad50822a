// Command-line front end: data generation, translation training, agent
// training, evaluation, frame translation, gradient checking, and rollout
// rendering.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "vrl/a3c.hpp"
#include "vrl/config.hpp"
#include "vrl/eval.hpp"
#include "vrl/gradcheck.hpp"
#include "vrl/image_io.hpp"
#include "vrl/sim.hpp"
#include "vrl/tensor_io.hpp"
#include "vrl/translate.hpp"

namespace fs = std::filesystem;
using namespace vrl;

namespace {

Track track_from_name(const std::string& name) {
  if (name == "A" || name == "a") return make_track(TrackSpec::TrackA);
  if (name == "B" || name == "b") return make_track(TrackSpec::TrackB);
  try {
    return make_track_seeded(std::stoull(name));
  } catch (const std::invalid_argument&) {
    throw std::runtime_error("--track expects A, B, or a numeric seed; got '" + name + "'");
  }
}

Frame load_frame(const std::string& path) {
  if (path.ends_with(".ppm")) return read_ppm(path);
  return tensor_to_frame(read_vrt1_file<float>(path));
}

struct CommonOpts {
  std::string config_file;
  std::string out_dir = "out";
  uint64_t seed = 1;
  std::vector<std::pair<std::string, std::string>> overrides;
};

RunConfig resolve_config(const CommonOpts& common) {
  RunConfig cfg;
  if (!common.config_file.empty()) cfg.load_file(common.config_file);
  for (const auto& [k, v] : common.overrides) cfg.set(k, v);
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& common) {
  cmd->add_option("--config", common.config_file, "key = value config file");
  cmd->add_option("--out", common.out_dir, "output directory");
  cmd->add_option("--seed", common.seed, "root seed for this command");
}

A3CConfig a3c_from_config(const RunConfig& rc, uint64_t seed, const std::string& out_dir) {
  A3CConfig a;
  a.workers = static_cast<int>(rc.get_int("a3c.workers"));
  a.lr = rc.get_double("a3c.lr");
  a.rms_decay = rc.get_double("a3c.rms_decay");
  a.rms_eps = rc.get_double("a3c.rms_eps");
  a.discount = rc.get_double("a3c.discount");
  a.t_max = static_cast<int>(rc.get_int("a3c.t_max"));
  a.entropy_coeff = rc.get_double("a3c.entropy_coeff");
  a.value_coeff = rc.get_double("a3c.value_coeff");
  a.grad_clip_norm = rc.get_double("a3c.grad_clip_norm");
  a.budget_steps = rc.get_int("a3c.budget_steps");
  a.randomized_styles = static_cast<int>(rc.get_int("a3c.randomized_styles"));
  a.checkpoint_every = rc.get_int("a3c.checkpoint_every");
  a.max_episode_steps = static_cast<int>(rc.get_int("sim.max_episode_steps"));
  a.dt = rc.get_double("sim.dt");
  a.seed = seed;
  a.out_dir = out_dir;
  return a;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"virtual-to-real driving RL pipeline"};
  app.require_subcommand(1);

  // ---- gen-data ----
  CommonOpts gd_common;
  std::string gd_track = "A";
  int gd_n = -1;
  std::string gd_policy = "center";
  auto* gen_data = app.add_subcommand("gen-data", "generate paired translation datasets");
  add_common(gen_data, gd_common);
  gen_data->add_option("--track", gd_track, "A, B, or numeric seed");
  gen_data->add_option("--n", gd_n, "pair count (>= 64); defaults to gan.pairs");
  gen_data->add_option("--policy", gd_policy, "center | random");

  // ---- train-g1 / train-g2 ----
  CommonOpts g1_common, g2_common;
  std::string g1_data, g2_data;
  int g1_epochs = -1, g2_epochs = -1;
  auto* train_g1 = app.add_subcommand("train-g1", "train the virtual-to-parsing generator");
  add_common(train_g1, g1_common);
  train_g1->add_option("--data", g1_data, "stage-1 dataset directory")->required();
  train_g1->add_option("--epochs", g1_epochs, "epochs; defaults to gan.epochs");
  auto* train_g2 = app.add_subcommand("train-g2", "train the parsing-to-real generator");
  add_common(train_g2, g2_common);
  train_g2->add_option("--data", g2_data, "stage-2 dataset directory")->required();
  train_g2->add_option("--epochs", g2_epochs, "epochs; defaults to gan.epochs");

  // ---- train-agent ----
  CommonOpts ta_common;
  std::string ta_mode = "raw", ta_pipeline, ta_track = "A";
  int64_t ta_budget = -1;
  int ta_workers = -1, ta_styles = -1;
  auto* train_agent = app.add_subcommand("train-agent", "train the driving policy");
  add_common(train_agent, ta_common);
  train_agent->add_option("--mode", ta_mode, "raw | real | translated | randomized");
  train_agent->add_option("--pipeline", ta_pipeline, "directory with g1.ckpt/g2.ckpt");
  train_agent->add_option("--track", ta_track, "A, B, or numeric seed");
  train_agent->add_option("--budget", ta_budget, "global env-step budget");
  train_agent->add_option("--workers", ta_workers, "worker thread count");
  train_agent->add_option("--styles", ta_styles, "randomized style count");

  // ---- evaluate ----
  CommonOpts ev_common;
  std::string ev_policy, ev_log, ev_track = "B";
  bool ev_transfer = false, ev_make_log = false;
  int ev_frames = -1;
  auto* evaluate = app.add_subcommand("evaluate", "action-accuracy or transfer evaluation");
  add_common(evaluate, ev_common);
  evaluate->add_option("--policy", ev_policy, "policy checkpoint");
  evaluate->add_option("--log", ev_log, "labeled drive-log directory");
  evaluate->add_flag("--make-log", ev_make_log, "synthesize the drive log first");
  evaluate->add_option("--track", ev_track, "track for synthesized logs / transfer");
  evaluate->add_option("--frames", ev_frames, "synthesized log length");
  evaluate->add_flag("--transfer", ev_transfer, "run the four-way transfer experiment");

  // ---- translate ----
  CommonOpts tr_common;
  std::string tr_pipeline, tr_in, tr_out_prefix;
  auto* translate_cmd = app.add_subcommand("translate", "translate one virtual frame");
  add_common(translate_cmd, tr_common);
  translate_cmd->add_option("--pipeline", tr_pipeline, "directory with g1.ckpt/g2.ckpt")->required();
  translate_cmd->add_option("--in", tr_in, "input frame (*.ppm or *.vrt1)")->required();
  translate_cmd->add_option("--out-prefix", tr_out_prefix, "output prefix")->required();

  // ---- gradcheck ----
  CommonOpts gc_common;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_common(gradcheck_cmd, gc_common);

  // ---- render-rollout ----
  CommonOpts rr_common;
  std::string rr_policy, rr_style = "virtual", rr_track = "A";
  int rr_steps = 200;
  auto* render_rollout = app.add_subcommand("render-rollout", "render a driving rollout as PPM frames");
  add_common(render_rollout, rr_common);
  render_rollout->add_option("--policy", rr_policy, "policy checkpoint (center-follow if absent)");
  render_rollout->add_option("--style", rr_style, "virtual | parsing | real | randomized:<seed>");
  render_rollout->add_option("--track", rr_track, "A, B, or numeric seed");
  render_rollout->add_option("--steps", rr_steps, "rollout length");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_data->parsed()) {
      RunConfig rc = resolve_config(gd_common);
      const int n = gd_n > 0 ? gd_n : static_cast<int>(rc.get_int("gan.pairs"));
      const Track track = track_from_name(gd_track);
      const DrivePolicy policy =
          gd_policy == "random" ? DrivePolicy::RandomDrive : DrivePolicy::CenterFollow;
      auto [stage1, stage2] = generate_paired_data(track, n, policy, gd_common.seed);
      write_paired_set(gd_common.out_dir + "/stage1", stage1);
      write_paired_set(gd_common.out_dir + "/stage2", stage2);
      rc.write_resolved(gd_common.out_dir + "/config.resolved");
      std::cout << "wrote " << stage1.size() << " pairs per stage under " << gd_common.out_dir
                << " (coverage " << lap_coverage(stage1, track) << ")\n";
    } else if (train_g1->parsed() || train_g2->parsed()) {
      const bool is_g1 = train_g1->parsed();
      CommonOpts& common = is_g1 ? g1_common : g2_common;
      RunConfig rc = resolve_config(common);
      StageTrainConfig scfg;
      scfg.lr = rc.get_double("gan.lr");
      scfg.beta1 = rc.get_double("gan.beta1");
      scfg.beta2 = rc.get_double("gan.beta2");
      scfg.adam_eps = rc.get_double("gan.eps");
      scfg.batch_size = static_cast<int>(rc.get_int("gan.batch_size"));
      const int epochs_flag = is_g1 ? g1_epochs : g2_epochs;
      scfg.epochs = epochs_flag > 0 ? epochs_flag : static_cast<int>(rc.get_int("gan.epochs"));
      scfg.lambda = rc.get_double("gan.lambda");
      scfg.seed = common.seed;
      scfg.verbose = true;
      const std::string name = is_g1 ? "g1" : "g2";
      scfg.curve_csv = common.out_dir + "/curve_" + name + ".csv";
      const PairedSet data = read_paired_set(is_g1 ? g1_data : g2_data);
      StageResult res = train_stage(
          is_g1 ? GanStage::VirtualToParsing : GanStage::ParsingToReal, data, scfg);
      if (res.aborted_nonfinite) {
        std::cerr << "training aborted on non-finite loss; last good checkpoint saved\n";
      }
      fs::create_directories(common.out_dir);
      save_generator(common.out_dir + "/" + name + ".ckpt", res.generator, name);
      rc.write_resolved(common.out_dir + "/config.resolved");
      std::cout << "final holdout_l1 " << (res.curve.empty() ? -1.0 : res.curve.back().holdout_l1)
                << ", checkpoint at " << common.out_dir << "/" << name << ".ckpt\n";
      if (res.aborted_nonfinite) return 2;
    } else if (train_agent->parsed()) {
      RunConfig rc = resolve_config(ta_common);
      if (ta_budget > 0) rc.set("a3c.budget_steps", std::to_string(ta_budget));
      if (ta_workers > 0) rc.set("a3c.workers", std::to_string(ta_workers));
      if (ta_styles > 0) rc.set("a3c.randomized_styles", std::to_string(ta_styles));
      A3CConfig acfg = a3c_from_config(rc, ta_common.seed, ta_common.out_dir);
      TranslationPipeline pipeline;
      TranslationPipeline* pipeline_ptr = nullptr;
      if (ta_mode == "raw")
        acfg.obs_mode = ObsMode::RawVirtual;
      else if (ta_mode == "real")
        acfg.obs_mode = ObsMode::RawReal;
      else if (ta_mode == "randomized")
        acfg.obs_mode = ObsMode::Randomized;
      else if (ta_mode == "translated") {
        acfg.obs_mode = ObsMode::Translated;
        if (ta_pipeline.empty())
          throw std::runtime_error("--mode translated requires --pipeline");
        pipeline = load_pipeline(ta_pipeline);
        pipeline_ptr = &pipeline;
      } else {
        throw std::runtime_error("unknown --mode '" + ta_mode + "'");
      }
      const Track track = track_from_name(ta_track);
      TrainResult res = a3c_train(acfg, track, pipeline_ptr);
      rc.write_resolved(ta_common.out_dir + "/config.resolved");
      std::cout << "trained " << res.global_steps << " steps, " << res.curve.size()
                << " episodes, checkpoint at " << ta_common.out_dir << "/final.ckpt\n";
      if (res.nonfinite_params_observed) {
        std::cerr << "non-finite parameters observed during training\n";
        return 2;
      }
    } else if (evaluate->parsed()) {
      RunConfig rc = resolve_config(ev_common);
      fs::create_directories(ev_common.out_dir);
      if (ev_transfer) {
        TransferConfig tcfg;
        tcfg.budget_steps = rc.get_int("eval.transfer_budget");
        tcfg.eval_episodes = static_cast<int>(rc.get_int("eval.episodes"));
        tcfg.workers = static_cast<int>(rc.get_int("eval.transfer_workers"));
        tcfg.pairs_n = static_cast<int>(rc.get_int("eval.pairs"));
        tcfg.gan_epochs = static_cast<int>(rc.get_int("eval.gan_epochs"));
        tcfg.a3c_lr = rc.get_double("a3c.lr");
        tcfg.randomized_styles = static_cast<int>(rc.get_int("a3c.randomized_styles"));
        const int n_seeds = static_cast<int>(rc.get_int("eval.transfer_seeds"));
        tcfg.seeds.clear();
        for (int i = 0; i < n_seeds; ++i) tcfg.seeds.push_back(ev_common.seed + static_cast<uint64_t>(i));
        tcfg.out_dir = ev_common.out_dir;
        tcfg.verbose = true;
        TransferResult res = transfer_experiment(tcfg);
        print_transfer_table(std::cout, res);
        rc.write_resolved(ev_common.out_dir + "/config.resolved");
      } else {
        if (ev_policy.empty()) throw std::runtime_error("evaluate needs --policy or --transfer");
        PolicyValueNet net;
        load_policy_checkpoint(ev_policy, net);
        LabeledDriveLog log;
        if (ev_make_log || ev_log.empty()) {
          const Track track = track_from_name(ev_track);
          const int frames =
              ev_frames > 0 ? ev_frames : static_cast<int>(rc.get_int("eval.log_frames"));
          log = synthesize_drive_log(track, frames, ev_common.seed);
          if (!ev_log.empty()) save_drive_log(ev_log, log);
        } else {
          log = load_drive_log(ev_log);
        }
        EvalReport report = evaluate_on_log(net, log, "policy");
        print_eval_report(std::cout, report);
        write_eval_report_csv(ev_common.out_dir + "/eval_report.csv", report);
        rc.write_resolved(ev_common.out_dir + "/config.resolved");
      }
    } else if (translate_cmd->parsed()) {
      RunConfig rc = resolve_config(tr_common);
      TranslationPipeline pipeline = load_pipeline(tr_pipeline);
      const Frame input = load_frame(tr_in);
      Rng rng(tr_common.seed);
      const TranslateOutput out = translate(pipeline, input, &rng);
      write_ppm(tr_out_prefix + "_parsing.ppm", out.parsing_est);
      write_ppm(tr_out_prefix + "_real.ppm", out.realistic);
      std::cout << "wrote " << tr_out_prefix << "_parsing.ppm and " << tr_out_prefix
                << "_real.ppm\n";
      (void)rc;
    } else if (gradcheck_cmd->parsed()) {
      const bool ok = run_gradcheck_suite(std::cout);
      std::cout << (ok ? "gradcheck: all layers within tolerance\n"
                       : "gradcheck: tolerance exceeded\n");
      return ok ? 0 : 1;
    } else if (render_rollout->parsed()) {
      RunConfig rc = resolve_config(rr_common);
      const Track track = track_from_name(rr_track);
      RenderStyle style = RenderStyle::virt();
      if (rr_style == "parsing")
        style = RenderStyle::parsing();
      else if (rr_style == "real")
        style = RenderStyle::real();
      else if (rr_style.rfind("randomized:", 0) == 0)
        style = RenderStyle::randomized(std::stoull(rr_style.substr(11)));
      else if (rr_style != "virtual")
        throw std::runtime_error("unknown --style '" + rr_style + "'");
      PolicyValueNet net;
      const bool use_policy = !rr_policy.empty();
      if (use_policy) load_policy_checkpoint(rr_policy, net);
      Simulator sim(track);
      sim.reset(rr_common.seed);
      fs::create_directories(rr_common.out_dir);
      std::deque<Frame> hist;
      Frame first = render(sim.state(), track, style);
      for (int i = 0; i < 4; ++i) hist.push_back(first);
      char name[64];
      for (int t = 0; t < rr_steps; ++t) {
        const Frame frame = render(sim.state(), track, style);
        std::snprintf(name, sizeof(name), "/frame_%05d.ppm", t);
        write_ppm(rr_common.out_dir + name, frame);
        hist.pop_front();
        hist.push_back(frame);
        const int action = use_policy ? act_greedy(net, stack_frames(hist))
                                      : center_follow_control(track, sim.state()).action;
        if (sim.step(action, rc.get_double("sim.dt")).done) sim.reset(rr_common.seed);
      }
      rc.write_resolved(rr_common.out_dir + "/config.resolved");
      std::cout << "wrote " << rr_steps << " frames under " << rr_common.out_dir << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
