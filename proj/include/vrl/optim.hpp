#pragma once

#include <cstdint>
#include <vector>

#include "vrl/tensor.hpp"

namespace vrl {

// Bias-corrected Adam. Buffers are created lazily on the first step and
// shape-checked against the same param list afterwards.
template <typename T>
struct AdamT {
  T lr = T(2e-4);
  T beta1 = T(0.5);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  int64_t step_count = 0;
  std::vector<TensorT<T>> m, v;

  void step(const std::vector<TensorT<T>*>& params);
};

template <typename T>
struct RMSPropT {
  T lr = T(0.01);
  T decay = T(0.9);
  T eps = T(0.1);
  int64_t step_count = 0;
  std::vector<TensorT<T>> s;

  void step(const std::vector<TensorT<T>*>& params);
  // Apply grads recorded on one param list to another (the a3c global apply:
  // local worker grads, shared global params and statistics).
  void step_with_grads(const std::vector<TensorT<T>*>& params,
                       const std::vector<TensorT<T>*>& grad_holders);
};

using Adam = AdamT<float>;
using RMSProp = RMSPropT<float>;

// Global L2 norm over the grad buffers of a param list.
template <typename T>
double grad_norm(const std::vector<TensorT<T>*>& params);

// In-place scaling so the global norm is at most max_norm. Returns the factor.
template <typename T>
double clip_grad_norm(const std::vector<TensorT<T>*>& params, double max_norm);

}  // namespace vrl
