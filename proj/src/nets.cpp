#include "vrl/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace vrl {

template <typename T>
std::vector<TensorT<T>*> param_ptrs(const ParamList<T>& list) {
  std::vector<TensorT<T>*> out;
  out.reserve(list.size());
  for (const auto& [name, p] : list) out.push_back(p);
  return out;
}

template <typename T>
int64_t param_count(const ParamList<T>& list) {
  int64_t n = 0;
  for (const auto& [name, p] : list) n += p->numel();
  return n;
}

// ---------------------------------------------------------------------------
// UNetGenerator

template <typename T>
UNetGeneratorT<T>::UNetGeneratorT(const UNetConfig& c) : cfg(c) {
  const int L = cfg.levels;
  if (static_cast<int>(cfg.enc_channels.size()) != L)
    throw std::invalid_argument("UNetConfig: enc_channels size must equal levels");
  if ((1 << L) != cfg.input_hw)
    throw std::invalid_argument("UNetConfig: levels must take input_hw down to 1x1");
  enc.reserve(static_cast<size_t>(L));
  enc_bn.reserve(static_cast<size_t>(L));
  for (int i = 0; i < L; ++i) {
    const int64_t ci = i == 0 ? cfg.in_channels : cfg.enc_channels[static_cast<size_t>(i - 1)];
    const int64_t co = cfg.enc_channels[static_cast<size_t>(i)];
    enc.emplace_back(ci, co, 4, 2, 1);
    enc_bn.emplace_back(co);
  }
  dec.reserve(static_cast<size_t>(L));
  dec_bn.reserve(static_cast<size_t>(L));
  for (int d = 0; d < L; ++d) {
    dec.emplace_back(decoder_in_channels(d), decoder_out_channels(d), 4, 2, 1);
    dec_bn.emplace_back(decoder_out_channels(d));
  }
  out_conv = Conv2dT<T>(cfg.enc_channels[0], cfg.out_channels, 3, 1, 1);
}

template <typename T>
int64_t UNetGeneratorT<T>::decoder_in_channels(int d) const {
  const int L = cfg.levels;
  if (d == 0) return cfg.enc_channels[static_cast<size_t>(L - 1)];
  return decoder_out_channels(d - 1) + cfg.enc_channels[static_cast<size_t>(L - 1 - d)];
}

template <typename T>
int64_t UNetGeneratorT<T>::decoder_out_channels(int d) const {
  const int L = cfg.levels;
  const int idx = L - 2 - d;
  return cfg.enc_channels[static_cast<size_t>(idx < 0 ? 0 : idx)];
}

template <typename T>
typename GraphT<T>::NodeId UNetGeneratorT<T>::forward(GraphT<T>& g, typename GraphT<T>::NodeId x,
                                                      bool train, bool noise, Rng* rng, Taps* taps) {
  const int L = cfg.levels;
  if (noise && cfg.dropout_rate > 0 && rng == nullptr)
    throw std::invalid_argument("generator noise pass needs an rng");
  std::vector<typename GraphT<T>::NodeId> e(static_cast<size_t>(L));
  typename GraphT<T>::NodeId h = x;
  for (int i = 0; i < L; ++i) {
    h = enc[static_cast<size_t>(i)].fwd(g, h);
    h = enc_bn[static_cast<size_t>(i)].fwd(g, h, train);
    if (taps) taps->pre_activations.push_back(h);
    h = g.leaky_relu(h, T(0.2));
    e[static_cast<size_t>(i)] = h;
    if (taps) taps->enc_activations.push_back(h);
  }
  for (int d = 0; d < L; ++d) {
    typename GraphT<T>::NodeId in = d == 0 ? e[static_cast<size_t>(L - 1)]
                                           : g.concat_channels(h, e[static_cast<size_t>(L - 1 - d)]);
    if (taps) taps->dec_inputs.push_back(in);
    h = dec[static_cast<size_t>(d)].fwd(g, in);
    h = dec_bn[static_cast<size_t>(d)].fwd(g, h, train);
    if (noise && d < cfg.dropout_levels && cfg.dropout_rate > 0)
      h = g.dropout(h, static_cast<T>(cfg.dropout_rate), *rng);
    if (taps) taps->pre_activations.push_back(h);
    h = g.relu(h);
  }
  return g.tanh_act(out_conv.fwd(g, h));
}

template <typename T>
ParamList<T> UNetGeneratorT<T>::named_params(const std::string& prefix) {
  ParamList<T> out;
  for (size_t i = 0; i < enc.size(); ++i) {
    const std::string base = prefix + ".enc" + std::to_string(i);
    out.emplace_back(base + ".w", &enc[i].w);
    out.emplace_back(base + ".b", &enc[i].b);
    out.emplace_back(base + ".bn.scale", &enc_bn[i].scale);
    out.emplace_back(base + ".bn.shift", &enc_bn[i].shift);
  }
  for (size_t d = 0; d < dec.size(); ++d) {
    const std::string base = prefix + ".dec" + std::to_string(d);
    out.emplace_back(base + ".w", &dec[d].w);
    out.emplace_back(base + ".b", &dec[d].b);
    out.emplace_back(base + ".bn.scale", &dec_bn[d].scale);
    out.emplace_back(base + ".bn.shift", &dec_bn[d].shift);
  }
  out.emplace_back(prefix + ".out.w", &out_conv.w);
  out.emplace_back(prefix + ".out.b", &out_conv.b);
  return out;
}

template <typename T>
ParamList<T> UNetGeneratorT<T>::named_state(const std::string& prefix) {
  ParamList<T> out;
  for (size_t i = 0; i < enc_bn.size(); ++i) {
    const std::string base = prefix + ".enc" + std::to_string(i) + ".bn";
    out.emplace_back(base + ".rmean", &enc_bn[i].state.running_mean);
    out.emplace_back(base + ".rvar", &enc_bn[i].state.running_var);
  }
  for (size_t d = 0; d < dec_bn.size(); ++d) {
    const std::string base = prefix + ".dec" + std::to_string(d) + ".bn";
    out.emplace_back(base + ".rmean", &dec_bn[d].state.running_mean);
    out.emplace_back(base + ".rvar", &dec_bn[d].state.running_var);
  }
  return out;
}

// ---------------------------------------------------------------------------
// PatchDiscriminator

template <typename T>
typename GraphT<T>::NodeId PatchDiscriminatorT<T>::forward(GraphT<T>& g,
                                                           typename GraphT<T>::NodeId condition,
                                                           typename GraphT<T>::NodeId candidate,
                                                           bool train) {
  auto h = g.concat_channels(condition, candidate);
  h = g.leaky_relu(c0.fwd(g, h), T(0.2));
  h = g.leaky_relu(bn1.fwd(g, c1.fwd(g, h), train), T(0.2));
  h = g.leaky_relu(bn2.fwd(g, c2.fwd(g, h), train), T(0.2));
  return g.sigmoid(c3.fwd(g, h));
}

template <typename T>
ParamList<T> PatchDiscriminatorT<T>::named_params(const std::string& prefix) {
  ParamList<T> out;
  out.emplace_back(prefix + ".c0.w", &c0.w);
  out.emplace_back(prefix + ".c0.b", &c0.b);
  out.emplace_back(prefix + ".c1.w", &c1.w);
  out.emplace_back(prefix + ".c1.b", &c1.b);
  out.emplace_back(prefix + ".bn1.scale", &bn1.scale);
  out.emplace_back(prefix + ".bn1.shift", &bn1.shift);
  out.emplace_back(prefix + ".c2.w", &c2.w);
  out.emplace_back(prefix + ".c2.b", &c2.b);
  out.emplace_back(prefix + ".bn2.scale", &bn2.scale);
  out.emplace_back(prefix + ".bn2.shift", &bn2.shift);
  out.emplace_back(prefix + ".c3.w", &c3.w);
  out.emplace_back(prefix + ".c3.b", &c3.b);
  return out;
}

template <typename T>
ParamList<T> PatchDiscriminatorT<T>::named_state(const std::string& prefix) {
  ParamList<T> out;
  out.emplace_back(prefix + ".bn1.rmean", &bn1.state.running_mean);
  out.emplace_back(prefix + ".bn1.rvar", &bn1.state.running_var);
  out.emplace_back(prefix + ".bn2.rmean", &bn2.state.running_mean);
  out.emplace_back(prefix + ".bn2.rvar", &bn2.state.running_var);
  return out;
}

// ---------------------------------------------------------------------------
// PolicyValueNet

template <typename T>
PolicyValueNetT<T>::PolicyValueNetT(const PolicyConfig& c) : cfg(c) {
  if (cfg.channels.size() != 4 || cfg.kernels.size() != 4)
    throw std::invalid_argument("PolicyConfig: expects 4 conv layers");
  int64_t ci = cfg.in_channels;
  for (int i = 0; i < 4; ++i) {
    const int k = cfg.kernels[static_cast<size_t>(i)];
    convs.emplace_back(ci, cfg.channels[static_cast<size_t>(i)], k, 2, k / 2);
    ci = cfg.channels[static_cast<size_t>(i)];
  }
  fc = DenseT<T>(flat_features(), cfg.fc_width);
  policy_head = DenseT<T>(cfg.fc_width, cfg.num_actions);
  value_head = DenseT<T>(cfg.fc_width, 1);
}

template <typename T>
int64_t PolicyValueNetT<T>::flat_features() const {
  int64_t hw = cfg.input_hw;
  for (int i = 0; i < 4; ++i) {
    const int k = cfg.kernels[static_cast<size_t>(i)];
    hw = conv_out_dim(hw, k, 2, k / 2);
  }
  return cfg.channels[3] * hw * hw;
}

template <typename T>
typename PolicyValueNetT<T>::Out PolicyValueNetT<T>::forward(GraphT<T>& g,
                                                             typename GraphT<T>::NodeId obs) {
  auto h = obs;
  for (auto& conv : convs) h = g.relu(conv.fwd(g, h));
  h = g.relu(fc.fwd(g, g.flatten(h)));
  return {policy_head.fwd(g, h), value_head.fwd(g, h)};
}

template <typename T>
ParamList<T> PolicyValueNetT<T>::named_params(const std::string& prefix) {
  ParamList<T> out;
  for (size_t i = 0; i < convs.size(); ++i) {
    out.emplace_back(prefix + ".conv" + std::to_string(i) + ".w", &convs[i].w);
    out.emplace_back(prefix + ".conv" + std::to_string(i) + ".b", &convs[i].b);
  }
  out.emplace_back(prefix + ".fc.w", &fc.w);
  out.emplace_back(prefix + ".fc.b", &fc.b);
  out.emplace_back(prefix + ".pi.w", &policy_head.w);
  out.emplace_back(prefix + ".pi.b", &policy_head.b);
  out.emplace_back(prefix + ".v.w", &value_head.w);
  out.emplace_back(prefix + ".v.b", &value_head.b);
  return out;
}

// ---------------------------------------------------------------------------
// init / utilities

template <typename T>
void init_gan_params(const ParamList<T>& params, Rng& rng) {
  for (const auto& [name, p] : params) {
    if (name.ends_with(".bn.scale") || name.ends_with("bn1.scale") || name.ends_with("bn2.scale")) {
      for (auto& v : p->data) v = T(1) + T(0.02) * static_cast<T>(rng.normal());
    } else if (name.ends_with(".w") && p->rank() >= 2) {
      for (auto& v : p->data) v = T(0.02) * static_cast<T>(rng.normal());
    } else {
      std::fill(p->data.begin(), p->data.end(), T(0));
    }
  }
}

template <typename T>
void init_policy_params(PolicyValueNetT<T>& net, Rng& rng) {
  for (auto& conv : net.convs) {
    const int64_t fan_in = conv.w.dim(1) * conv.w.dim(2) * conv.w.dim(3);
    const T std = std::sqrt(T(2) / static_cast<T>(fan_in));
    for (auto& v : conv.w.data) v = std * static_cast<T>(rng.normal());
    std::fill(conv.b.data.begin(), conv.b.data.end(), T(0));
  }
  {
    const int64_t fan_in = net.fc.w.dim(1);
    const T std = std::sqrt(T(2) / static_cast<T>(fan_in));
    for (auto& v : net.fc.w.data) v = std * static_cast<T>(rng.normal());
    std::fill(net.fc.b.data.begin(), net.fc.b.data.end(), T(0));
  }
  // Zero heads: uniform policy and zero value at start.
  std::fill(net.policy_head.w.data.begin(), net.policy_head.w.data.end(), T(0));
  std::fill(net.policy_head.b.data.begin(), net.policy_head.b.data.end(), T(0));
  std::fill(net.value_head.w.data.begin(), net.value_head.w.data.end(), T(0));
  std::fill(net.value_head.b.data.begin(), net.value_head.b.data.end(), T(0));
}

template <typename T>
void copy_params(const ParamList<T>& dst, const ParamList<T>& src) {
  if (dst.size() != src.size()) throw std::invalid_argument("copy_params: list size mismatch");
  for (size_t i = 0; i < dst.size(); ++i) {
    if (!dst[i].second->same_shape(*src[i].second))
      throw_shape_error("copy_params " + dst[i].first, dst[i].second->shape, src[i].second->shape);
    dst[i].second->data = src[i].second->data;
  }
}

template <typename T>
void zero_grads(const ParamList<T>& params) {
  for (const auto& [name, p] : params) {
    p->ensure_grad();
    p->zero_grad();
  }
}

template <typename T>
bool all_finite(const ParamList<T>& params) {
  for (const auto& [name, p] : params)
    for (T v : p->data)
      if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template std::vector<TensorT<float>*> param_ptrs(const ParamList<float>&);
template std::vector<TensorT<double>*> param_ptrs(const ParamList<double>&);
template int64_t param_count(const ParamList<float>&);
template int64_t param_count(const ParamList<double>&);
template struct UNetGeneratorT<float>;
template struct UNetGeneratorT<double>;
template struct PatchDiscriminatorT<float>;
template struct PatchDiscriminatorT<double>;
template struct PolicyValueNetT<float>;
template struct PolicyValueNetT<double>;
template void init_gan_params(const ParamList<float>&, Rng&);
template void init_gan_params(const ParamList<double>&, Rng&);
template void init_policy_params(PolicyValueNetT<float>&, Rng&);
template void init_policy_params(PolicyValueNetT<double>&, Rng&);
template void copy_params(const ParamList<float>&, const ParamList<float>&);
template void copy_params(const ParamList<double>&, const ParamList<double>&);
template void zero_grads(const ParamList<float>&);
template void zero_grads(const ParamList<double>&);
template bool all_finite(const ParamList<float>&);
template bool all_finite(const ParamList<double>&);

}  // namespace vrl
