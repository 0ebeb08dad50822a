#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace vrl {

std::string shape_to_string(const std::vector<int64_t>& shape);

// Dense contiguous tensor with an optional same-shape gradient buffer.
// float for training, double for gradient-check paths.
template <typename T>
struct TensorT {
  std::vector<int64_t> shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty, or data.size()

  TensorT() = default;
  explicit TensorT(std::vector<int64_t> s) : shape(std::move(s)), data(checked_numel(shape), T(0)) {}
  TensorT(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != checked_numel(shape))
      throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_to_string(shape));
  }

  static TensorT zeros(std::vector<int64_t> s) { return TensorT(std::move(s)); }
  static TensorT full(std::vector<int64_t> s, T v) {
    TensorT t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static TensorT scalar(T v) { return TensorT({1}, {v}); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape.at(static_cast<size_t>(i)); }
  bool same_shape(const TensorT& o) const { return shape == o.shape; }
  std::string shape_str() const { return shape_to_string(shape); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  T* gptr() { return grad.data(); }
  const T* gptr() const { return grad.data(); }

  static int64_t checked_numel(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_to_string(s));
      n *= d;
    }
    return n;
  }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <typename T>
TensorT<T> reshape(const TensorT<T>& t, std::vector<int64_t> s) {
  if (TensorT<T>::checked_numel(s) != t.numel())
    throw std::invalid_argument("reshape from " + t.shape_str() + " to " + shape_to_string(s) +
                                " changes element count");
  TensorT<T> out;
  out.shape = std::move(s);
  out.data = t.data;
  return out;
}

[[noreturn]] inline void throw_shape_error(const std::string& op, const std::vector<int64_t>& a,
                                           const std::vector<int64_t>& b) {
  throw std::invalid_argument(op + ": shape mismatch " + shape_to_string(a) + " vs " + shape_to_string(b));
}

}  // namespace vrl
