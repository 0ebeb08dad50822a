#pragma once

#include <functional>
#include <vector>

#include "vrl/rng.hpp"
#include "vrl/tensor.hpp"

namespace vrl {

// Running statistics owned by a batchnorm layer; the graph op reads them in
// eval mode and updates them in train mode.
template <typename T>
struct BnStateT {
  TensorT<T> running_mean;
  TensorT<T> running_var;
  T momentum = T(0.9);  // running = momentum*running + (1-momentum)*batch
  T eps = T(1e-5);

  explicit BnStateT(int64_t channels = 0)
      : running_mean({channels}), running_var(TensorT<T>::full({channels}, T(1))) {}
};

// Reverse-mode tape. Ops append records in execution order; backward() walks
// them once in reverse. Single-threaded by design; a graph may be moved
// between threads but never shared.
template <typename T>
class GraphT {
 public:
  using NodeId = int32_t;

  GraphT() = default;
  GraphT(const GraphT&) = delete;
  GraphT& operator=(const GraphT&) = delete;

  // Leaf that accumulates into p.grad on backward. p must outlive the graph.
  NodeId param(TensorT<T>& p);
  // Leaf with no gradient.
  NodeId constant(TensorT<T> v);

  NodeId conv2d(NodeId x, NodeId w, NodeId b, int stride, int pad);
  NodeId deconv2d(NodeId x, NodeId w, NodeId b, int stride, int pad);
  NodeId dense(NodeId x, NodeId w, NodeId b);
  NodeId batchnorm2d(NodeId x, NodeId scale, NodeId shift, BnStateT<T>& state, bool train);
  NodeId relu(NodeId x);
  NodeId leaky_relu(NodeId x, T slope);
  NodeId tanh_act(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId softmax_rows(NodeId x);  // last dim of a 2-D tensor
  NodeId dropout(NodeId x, T rate, Rng& rng);
  NodeId concat_channels(NodeId a, NodeId b);       // NCHW, along C
  NodeId concat_rows(const std::vector<NodeId>& xs);  // along dim 0
  NodeId flatten(NodeId x);  // (B, ...) -> (B, rest)
  NodeId reshape_to(NodeId x, std::vector<int64_t> shape);
  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId x, T c);

  // Scalar losses. Probabilities are clamped to [1e-7, 1-1e-7] before log.
  NodeId neg_mean_log(NodeId p);
  NodeId neg_mean_log1m(NodeId p);
  NodeId l1_loss(NodeId a, NodeId b);  // mean |a - b|
  // Sum over rollout steps of: -log pi(a_t) * A_t  +  value_coeff * (R_t - v_t)^2
  //                            - entropy_coeff * H(pi_t)
  // advantages are treated as constants.
  NodeId policy_value_loss(NodeId logits, NodeId values, const std::vector<int>& actions,
                           const std::vector<T>& advantages, const std::vector<T>& returns,
                           T value_coeff, T entropy_coeff);
  NodeId cross_entropy_mean(NodeId logits, const std::vector<int>& labels);

  const TensorT<T>& value(NodeId id) const;
  const TensorT<T>& grad_of(NodeId id) const;  // valid after backward()

  // Seeds d(root)=1 and sweeps the tape once. root must be a scalar. May be
  // called once per built graph.
  void backward(NodeId root);

  // Drops all records and node storage; registered params are untouched.
  void clear();

  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    TensorT<T> own;        // value for non-param nodes
    TensorT<T>* param = nullptr;
    TensorT<T> gradbuf;    // lazily sized during backward (non-param nodes)
    bool requires_grad = false;
  };

  NodeId add_node(TensorT<T> value, bool requires_grad);
  TensorT<T>& node_value(NodeId id);
  // Gradient accumulation target for a node (param grad or gradbuf), allocated on demand.
  T* grad_accum(NodeId id);
  bool wants_grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

  std::vector<Node> nodes_;
  std::vector<std::function<void()>> records_;
  bool backward_done_ = false;
};

using Graph = GraphT<float>;
using GraphD = GraphT<double>;

// Spatial size helpers shared with the nets module.
inline int64_t conv_out_dim(int64_t in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}
inline int64_t deconv_out_dim(int64_t in, int k, int stride, int pad) {
  return (in - 1) * stride - 2 * pad + k;
}

}  // namespace vrl
