#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vrl/nets.hpp"
#include "vrl/sim.hpp"
#include "vrl/tensor.hpp"

namespace vrl {

Tensor frame_to_tensor(const Frame& f);                        // (1,3,H,W)
Tensor frames_to_batch(const std::vector<const Frame*>& fs);   // (B,3,H,W)
Frame tensor_to_frame(const Tensor& t, int64_t batch_index = 0);

// Pixel-aligned (condition, target) pairs captured from one CarState each.
struct PairedSample {
  Frame condition;
  Frame target;
  double track_param = 0;
};

struct PairedSet {
  std::vector<PairedSample> pairs;
  std::vector<uint8_t> heldout;  // parallel to pairs; 1 = held-out

  size_t size() const { return pairs.size(); }
  size_t train_count() const;
  size_t heldout_count() const;
  std::vector<size_t> train_indices() const;
  std::vector<size_t> heldout_indices() const;
};

enum class DrivePolicy { RandomDrive, CenterFollow };

// Drives the simulator around the track and captures aligned
// (Virtual, Parsing) and (Parsing, Real) pairs at distinct positions covering
// a full lap. Held-out fraction is 1/8.
std::pair<PairedSet, PairedSet> generate_paired_data(const Track& track, int n, DrivePolicy policy,
                                                     uint64_t seed);

// Fraction of the lap (100 arc bins) touched by the samples.
double lap_coverage(const PairedSet& set, const Track& track);

void write_paired_set(const std::string& dir, const PairedSet& set);
PairedSet read_paired_set(const std::string& dir);

// ---------------------------------------------------------------------------

struct GanLossReport {
  double d_loss = 0;
  double g_adv_loss = 0;
  double g_l1_loss = 0;
  double combined = 0;  // g_adv_loss + lambda * g_l1_loss, exactly
  double lambda = 100.0;
};

// Value-only loss evaluations (no parameter updates); the training loop runs
// the same expressions in-graph.
double d_loss_value(PatchDiscriminator& d, const Frame& condition, const Frame& real_target,
                    const Frame& fake_target);
GanLossReport g_loss_report(PatchDiscriminator& d, const Frame& condition, const Frame& fake_target,
                            const Frame& real_target, double lambda);

enum class GanStage { VirtualToParsing, ParsingToReal };

struct StageTrainConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 16;
  int epochs = 200;
  double lambda = 100.0;
  uint64_t seed = 1;
  std::string curve_csv;  // appended per epoch when non-empty
  bool verbose = false;
};

struct EpochRecord {
  int epoch = 0;
  GanLossReport mean;
  double holdout_l1 = 0;
};

struct StageResult {
  UNetGenerator generator;
  PatchDiscriminator discriminator;
  std::vector<EpochRecord> curve;
  bool aborted_nonfinite = false;
};

// Alternating D-step / G-step per minibatch; deterministic given the seed.
// On a non-finite loss the last epoch-end parameters are restored and the run
// aborts with the flag set.
StageResult train_stage(GanStage stage, const PairedSet& data, const StageTrainConfig& cfg);

// Held-out metrics, evaluated with eval-mode batchnorm and noise off.
double holdout_l1(UNetGenerator& g, const PairedSet& data);
// Pixel-class accuracy of nearest-palette classes versus the target's classes.
double holdout_pixel_accuracy(UNetGenerator& g, const PairedSet& data);
// Per-frame class agreement between generator output and target, held-out only.
std::vector<double> holdout_frame_agreements(UNetGenerator& g, const PairedSet& data);

// ---------------------------------------------------------------------------

struct TranslationPipeline {
  UNetGenerator g1;  // virtual -> parsing
  UNetGenerator g2;  // parsing -> real
  bool noise_mode = false;
};

struct TranslateOutput {
  Frame parsing_est;
  Frame realistic;
};
// rng is required when the pipeline has noise_mode set.
TranslateOutput translate(TranslationPipeline& pipeline, const Frame& virtual_frame,
                          Rng* rng = nullptr);

void save_generator(const std::string& path, UNetGenerator& g, const std::string& prefix);
void load_generator(const std::string& path, UNetGenerator& g, const std::string& prefix);
// Loads <dir>/g1.ckpt and <dir>/g2.ckpt.
TranslationPipeline load_pipeline(const std::string& dir);

}  // namespace vrl
