#include "vrl/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace vrl {

namespace {

template <typename T>
void check_or_init(std::vector<TensorT<T>>& bufs, const std::vector<TensorT<T>*>& params) {
  if (bufs.empty()) {
    bufs.reserve(params.size());
    for (const auto* p : params) bufs.emplace_back(p->shape);
    return;
  }
  if (bufs.size() != params.size())
    throw std::invalid_argument("optimizer state holds " + std::to_string(bufs.size()) +
                                " buffers but got " + std::to_string(params.size()) + " params");
  for (size_t i = 0; i < params.size(); ++i)
    if (!bufs[i].same_shape(*params[i]))
      throw_shape_error("optimizer state", bufs[i].shape, params[i]->shape);
}

}  // namespace

template <typename T>
void AdamT<T>::step(const std::vector<TensorT<T>*>& params) {
  check_or_init(m, params);
  check_or_init(v, params);
  ++step_count;
  const T bc1 = T(1) - std::pow(beta1, static_cast<T>(step_count));
  const T bc2 = T(1) - std::pow(beta2, static_cast<T>(step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    TensorT<T>& p = *params[i];
    const bool has_grad = !p.grad.empty();
    T* mp = m[i].ptr();
    T* vp = v[i].ptr();
    for (int64_t j = 0; j < p.numel(); ++j) {
      const T g = has_grad ? p.grad[static_cast<size_t>(j)] : T(0);
      mp[j] = beta1 * mp[j] + (T(1) - beta1) * g;
      vp[j] = beta2 * vp[j] + (T(1) - beta2) * g * g;
      const T mhat = mp[j] / bc1;
      const T vhat = vp[j] / bc2;
      p.data[static_cast<size_t>(j)] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <typename T>
void RMSPropT<T>::step(const std::vector<TensorT<T>*>& params) {
  step_with_grads(params, params);
}

template <typename T>
void RMSPropT<T>::step_with_grads(const std::vector<TensorT<T>*>& params,
                                  const std::vector<TensorT<T>*>& grad_holders) {
  if (params.size() != grad_holders.size())
    throw std::invalid_argument("RMSProp: param/grad list size mismatch");
  check_or_init(s, params);
  ++step_count;
  for (size_t i = 0; i < params.size(); ++i) {
    TensorT<T>& p = *params[i];
    const TensorT<T>& gh = *grad_holders[i];
    if (!p.same_shape(gh)) throw_shape_error("RMSProp grads", p.shape, gh.shape);
    const bool has_grad = !gh.grad.empty();
    T* sp = s[i].ptr();
    for (int64_t j = 0; j < p.numel(); ++j) {
      const T g = has_grad ? gh.grad[static_cast<size_t>(j)] : T(0);
      sp[j] = decay * sp[j] + (T(1) - decay) * g * g;
      p.data[static_cast<size_t>(j)] -= lr * g / std::sqrt(sp[j] + eps);
    }
  }
}

template <typename T>
double grad_norm(const std::vector<TensorT<T>*>& params) {
  double acc = 0;
  for (const auto* p : params) {
    if (p->grad.empty()) continue;
    for (T g : p->grad) acc += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(acc);
}

template <typename T>
double clip_grad_norm(const std::vector<TensorT<T>*>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm <= max_norm || norm == 0.0) return 1.0;
  const double factor = max_norm / norm;
  for (auto* p : params)
    for (auto& g : p->grad) g = static_cast<T>(static_cast<double>(g) * factor);
  return factor;
}

template struct AdamT<float>;
template struct AdamT<double>;
template struct RMSPropT<float>;
template struct RMSPropT<double>;
template double grad_norm<float>(const std::vector<TensorT<float>*>&);
template double grad_norm<double>(const std::vector<TensorT<double>*>&);
template double clip_grad_norm<float>(const std::vector<TensorT<float>*>&, double);
template double clip_grad_norm<double>(const std::vector<TensorT<double>*>&, double);

}  // namespace vrl
