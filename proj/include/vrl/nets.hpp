#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vrl/graph.hpp"
#include "vrl/rng.hpp"
#include "vrl/tensor.hpp"

namespace vrl {

template <typename T>
using ParamList = std::vector<std::pair<std::string, TensorT<T>*>>;

template <typename T>
std::vector<TensorT<T>*> param_ptrs(const ParamList<T>& list);

template <typename T>
int64_t param_count(const ParamList<T>& list);

template <typename T>
struct Conv2dT {
  TensorT<T> w, b;
  int stride = 2, pad = 1;
  Conv2dT() = default;
  Conv2dT(int64_t ci, int64_t co, int k, int stride_, int pad_)
      : w({co, ci, k, k}), b({co}), stride(stride_), pad(pad_) {}
  typename GraphT<T>::NodeId fwd(GraphT<T>& g, typename GraphT<T>::NodeId x) {
    return g.conv2d(x, g.param(w), g.param(b), stride, pad);
  }
};

template <typename T>
struct Deconv2dT {
  TensorT<T> w, b;
  int stride = 2, pad = 1;
  Deconv2dT() = default;
  Deconv2dT(int64_t ci, int64_t co, int k, int stride_, int pad_)
      : w({ci, co, k, k}), b({co}), stride(stride_), pad(pad_) {}
  typename GraphT<T>::NodeId fwd(GraphT<T>& g, typename GraphT<T>::NodeId x) {
    return g.deconv2d(x, g.param(w), g.param(b), stride, pad);
  }
};

template <typename T>
struct BatchNorm2dT {
  TensorT<T> scale, shift;
  BnStateT<T> state;
  BatchNorm2dT() = default;
  explicit BatchNorm2dT(int64_t c)
      : scale(TensorT<T>::full({c}, T(1))), shift({c}), state(c) {}
  typename GraphT<T>::NodeId fwd(GraphT<T>& g, typename GraphT<T>::NodeId x, bool train) {
    return g.batchnorm2d(x, g.param(scale), g.param(shift), state, train);
  }
};

template <typename T>
struct DenseT {
  TensorT<T> w, b;
  DenseT() = default;
  DenseT(int64_t in, int64_t out) : w({out, in}), b({out}) {}
  typename GraphT<T>::NodeId fwd(GraphT<T>& g, typename GraphT<T>::NodeId x) {
    return g.dense(x, g.param(w), g.param(b));
  }
};

// ---------------------------------------------------------------------------
// U-Net generator: stride-2 4x4 encoder down to 1x1, mirrored deconv decoder
// with skip concatenation, 3x3 output conv + Tanh. Noise enters as dropout on
// the innermost decoder levels and stays available at generation time.

struct UNetConfig {
  int levels = 6;
  std::vector<int64_t> enc_channels = {32, 64, 128, 256, 256, 256};
  int64_t in_channels = 3;
  int64_t out_channels = 3;
  int dropout_levels = 3;
  double dropout_rate = 0.5;
  int input_hw = 64;

  static UNetConfig default64() { return UNetConfig{}; }
  static UNetConfig reduced16() {
    UNetConfig c;
    c.levels = 4;
    c.enc_channels = {8, 16, 16, 16};
    c.dropout_levels = 2;
    c.input_hw = 16;
    return c;
  }
};

template <typename T>
struct UNetGeneratorT {
  UNetConfig cfg;
  std::vector<Conv2dT<T>> enc;
  std::vector<BatchNorm2dT<T>> enc_bn;
  std::vector<Deconv2dT<T>> dec;
  std::vector<BatchNorm2dT<T>> dec_bn;
  Conv2dT<T> out_conv;

  UNetGeneratorT() : UNetGeneratorT(UNetConfig::default64()) {}
  explicit UNetGeneratorT(const UNetConfig& c);

  // Node taps for structural tests and kink-margin checks.
  struct Taps {
    std::vector<typename GraphT<T>::NodeId> enc_activations;
    std::vector<typename GraphT<T>::NodeId> dec_inputs;
    std::vector<typename GraphT<T>::NodeId> pre_activations;  // inputs of relu/leaky_relu
  };

  // noise=true requires rng; dropout is active in both training and
  // generation passes. train controls batchnorm statistics.
  typename GraphT<T>::NodeId forward(GraphT<T>& g, typename GraphT<T>::NodeId x, bool train,
                                     bool noise, Rng* rng, Taps* taps = nullptr);

  ParamList<T> named_params(const std::string& prefix);
  ParamList<T> named_state(const std::string& prefix);  // batchnorm running stats
  int64_t decoder_in_channels(int stage) const;
  int64_t decoder_out_channels(int stage) const;
};

// ---------------------------------------------------------------------------
// Patch discriminator over (condition (+) candidate) channel concat:
// 4x4 stride-2 convs 6->32->64->128->1, LeakyReLU 0.2, batchnorm except the
// first block, sigmoid patch grid output (4x4 at 64x64).

template <typename T>
struct PatchDiscriminatorT {
  Conv2dT<T> c0, c1, c2, c3;
  BatchNorm2dT<T> bn1, bn2;

  PatchDiscriminatorT()
      : c0(6, 32, 4, 2, 1), c1(32, 64, 4, 2, 1), c2(64, 128, 4, 2, 1), c3(128, 1, 4, 2, 1),
        bn1(64), bn2(128) {}

  typename GraphT<T>::NodeId forward(GraphT<T>& g, typename GraphT<T>::NodeId condition,
                                     typename GraphT<T>::NodeId candidate, bool train);

  ParamList<T> named_params(const std::string& prefix);
  ParamList<T> named_state(const std::string& prefix);
};

// ---------------------------------------------------------------------------
// Policy-value network: 4 stride-2 ReLU convs over 4 stacked RGB frames
// (12x64x64), dense trunk, a 9-way policy head and a scalar value head.

struct PolicyConfig {
  int input_hw = 64;
  int64_t in_channels = 12;
  std::vector<int64_t> channels = {16, 32, 32, 64};
  std::vector<int> kernels = {5, 3, 3, 3};
  int64_t fc_width = 256;
  int64_t num_actions = 9;

  static PolicyConfig default64() { return PolicyConfig{}; }
  static PolicyConfig reduced16() {
    PolicyConfig c;
    c.input_hw = 16;
    c.channels = {8, 8, 16, 16};
    c.fc_width = 32;
    return c;
  }
};

template <typename T>
struct PolicyValueNetT {
  PolicyConfig cfg;
  std::vector<Conv2dT<T>> convs;
  DenseT<T> fc;
  DenseT<T> policy_head;
  DenseT<T> value_head;

  PolicyValueNetT() : PolicyValueNetT(PolicyConfig::default64()) {}
  explicit PolicyValueNetT(const PolicyConfig& c);

  struct Out {
    typename GraphT<T>::NodeId logits;  // (B, num_actions)
    typename GraphT<T>::NodeId value;   // (B, 1)
  };
  Out forward(GraphT<T>& g, typename GraphT<T>::NodeId obs);

  ParamList<T> named_params(const std::string& prefix);
  int64_t flat_features() const;
};

using UNetGenerator = UNetGeneratorT<float>;
using PatchDiscriminator = PatchDiscriminatorT<float>;
using PolicyValueNet = PolicyValueNetT<float>;

// Trainable parameter counts of the default configurations. Checkpoint
// loading rejects any name or shape drift from these architectures.
inline constexpr int64_t kGeneratorParamCount = 7347715;
inline constexpr int64_t kDiscriminatorParamCount = 169569;
inline constexpr int64_t kPolicyValueParamCount = 302170;

// Weight init: GAN nets use N(0, 0.02) conv weights and N(1, 0.02) batchnorm
// scales; the policy trunk uses He-normal and both heads start at zero so an
// untrained policy is exactly uniform.
template <typename T>
void init_gan_params(const ParamList<T>& params, Rng& rng);
template <typename T>
void init_policy_params(PolicyValueNetT<T>& net, Rng& rng);

// Deep copies for worker-local snapshots.
template <typename T>
void copy_params(const ParamList<T>& dst, const ParamList<T>& src);

template <typename T>
void zero_grads(const ParamList<T>& params);

template <typename T>
bool all_finite(const ParamList<T>& params);

}  // namespace vrl
