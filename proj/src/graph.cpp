#include "vrl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "vrl/gemm.hpp"

namespace vrl {

namespace {

constexpr double kProbClampLo = 1e-7;

// col has layout (C*k*k) x (B*oh*ow); column index = b*oh*ow + oy*ow + ox.
template <typename T>
void im2col(const T* x, int64_t B, int64_t C, int64_t H, int64_t W, int k, int stride, int pad,
            int64_t oh, int64_t ow, T* col) {
  const int64_t s = oh * ow;
  const int64_t Ns = B * s;
  for (int64_t c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* crow = col + ((c * k + ky) * k + kx) * Ns;
        for (int64_t b = 0; b < B; ++b) {
          const T* xp = x + (b * C + c) * H * W;
          T* cp = crow + b * s;
          for (int64_t oy = 0; oy < oh; ++oy) {
            const int64_t iy = oy * stride - pad + ky;
            T* dst = cp + oy * ow;
            if (iy < 0 || iy >= H) {
              std::fill(dst, dst + ow, T(0));
              continue;
            }
            const T* src = xp + iy * W;
            for (int64_t ox = 0; ox < ow; ++ox) {
              const int64_t ix = ox * stride - pad + kx;
              dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

// Transpose of im2col: scatter-adds col back into x.
template <typename T>
void col2im_add(const T* col, int64_t B, int64_t C, int64_t H, int64_t W, int k, int stride,
                int pad, int64_t oh, int64_t ow, T* x) {
  const int64_t s = oh * ow;
  const int64_t Ns = B * s;
  for (int64_t c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* crow = col + ((c * k + ky) * k + kx) * Ns;
        for (int64_t b = 0; b < B; ++b) {
          T* xp = x + (b * C + c) * H * W;
          const T* cp = crow + b * s;
          for (int64_t oy = 0; oy < oh; ++oy) {
            const int64_t iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            T* dst = xp + iy * W;
            const T* src = cp + oy * ow;
            for (int64_t ox = 0; ox < ow; ++ox) {
              const int64_t ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < W) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

// (B,C,s) <-> (C,B*s) permutes used around the batched GEMMs.
template <typename T>
void nchw_to_cns(const T* x, int64_t B, int64_t C, int64_t s, T* out) {
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      std::memcpy(out + c * (B * s) + b * s, x + (b * C + c) * s, sizeof(T) * static_cast<size_t>(s));
}

template <typename T>
void cns_add_to_nchw(const T* y, int64_t B, int64_t C, int64_t s, T* out) {
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      const T* src = y + c * (B * s) + b * s;
      T* dst = out + (b * C + c) * s;
      for (int64_t i = 0; i < s; ++i) dst[i] += src[i];
    }
}

}  // namespace

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::add_node(TensorT<T> value, bool requires_grad) {
  Node n;
  n.own = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::param(TensorT<T>& p) {
  Node n;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::constant(TensorT<T> v) {
  return add_node(std::move(v), false);
}

template <typename T>
const TensorT<T>& GraphT<T>::value(NodeId id) const {
  const Node& n = nodes_.at(static_cast<size_t>(id));
  return n.param ? *n.param : n.own;
}

template <typename T>
TensorT<T>& GraphT<T>::node_value(NodeId id) {
  Node& n = nodes_.at(static_cast<size_t>(id));
  return n.param ? *n.param : n.own;
}

template <typename T>
const TensorT<T>& GraphT<T>::grad_of(NodeId id) const {
  const Node& n = nodes_.at(static_cast<size_t>(id));
  if (n.param) return *n.param;  // caller reads param->grad
  return n.gradbuf;
}

template <typename T>
T* GraphT<T>::grad_accum(NodeId id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.param) {
    n.param->ensure_grad();
    return n.param->grad.data();
  }
  if (n.gradbuf.data.size() != n.own.data.size()) {
    n.gradbuf.shape = n.own.shape;
    n.gradbuf.data.assign(n.own.data.size(), T(0));
  }
  return n.gradbuf.data.data();
}

// Returns nullptr when no gradient ever flowed into this node.
template <typename T>
static const T* out_grad_ptr(const TensorT<T>& gradbuf) {
  return gradbuf.data.empty() ? nullptr : gradbuf.data.data();
}

template <typename T>
void GraphT<T>::backward(NodeId root) {
  if (backward_done_) throw std::runtime_error("graph backward() may be called once per build");
  const TensorT<T>& rv = value(root);
  if (rv.numel() != 1) throw std::invalid_argument("backward root must be scalar, got " + rv.shape_str());
  backward_done_ = true;
  Node& rn = nodes_[static_cast<size_t>(root)];
  if (rn.param) {
    rn.param->ensure_grad();
    rn.param->grad[0] += T(1);
  } else {
    rn.gradbuf.shape = rn.own.shape;
    rn.gradbuf.data.assign(1, T(1));
  }
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

template <typename T>
void GraphT<T>::clear() {
  nodes_.clear();
  records_.clear();
  backward_done_ = false;
}

// ---------------------------------------------------------------------------
// conv / deconv / dense

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::conv2d(NodeId xid, NodeId wid, NodeId bid, int stride, int pad) {
  const TensorT<T>& x = value(xid);
  const TensorT<T>& w = value(wid);
  const TensorT<T>& b = value(bid);
  if (x.rank() != 4 || w.rank() != 4) throw_shape_error("conv2d", x.shape, w.shape);
  if (x.dim(1) != w.dim(1)) throw_shape_error("conv2d channels", x.shape, w.shape);
  if (w.dim(2) != w.dim(3)) throw_shape_error("conv2d kernel", w.shape, w.shape);
  const int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Co = w.dim(0);
  const int k = static_cast<int>(w.dim(2));
  if (b.numel() != Co) throw_shape_error("conv2d bias", b.shape, {Co});
  const int64_t oh = conv_out_dim(H, k, stride, pad);
  const int64_t ow = conv_out_dim(W, k, stride, pad);
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: empty output for input " + x.shape_str());
  const int64_t K = Ci * k * k;
  const int64_t s = oh * ow;
  const int64_t Ns = B * s;

  std::vector<T> col(static_cast<size_t>(K * Ns));
  im2col(x.ptr(), B, Ci, H, W, k, stride, pad, oh, ow, col.data());
  std::vector<T> ytmp(static_cast<size_t>(Co * Ns), T(0));
  gemm_nn(Co, Ns, K, w.ptr(), col.data(), ytmp.data());
  col.clear();
  col.shrink_to_fit();

  TensorT<T> y({B, Co, oh, ow});
  for (int64_t bi = 0; bi < B; ++bi)
    for (int64_t co = 0; co < Co; ++co) {
      const T* src = ytmp.data() + co * Ns + bi * s;
      T* dst = y.ptr() + (bi * Co + co) * s;
      const T bias = b.data[static_cast<size_t>(co)];
      for (int64_t i = 0; i < s; ++i) dst[i] = src[i] + bias;
    }

  const bool req = wants_grad(xid) || wants_grad(wid) || wants_grad(bid);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, xid, wid, bid, out, B, Ci, H, W, Co, k, stride, pad, oh, ow]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      const int64_t K = Ci * k * k;
      const int64_t s = oh * ow;
      const int64_t Ns = B * s;
      std::vector<T> gytmp(static_cast<size_t>(Co * Ns));
      nchw_to_cns(gy, B, Co, s, gytmp.data());
      if (wants_grad(bid)) {
        T* gb = grad_accum(bid);
        for (int64_t co = 0; co < Co; ++co) {
          T acc = 0;
          const T* row = gytmp.data() + co * Ns;
          for (int64_t i = 0; i < Ns; ++i) acc += row[i];
          gb[co] += acc;
        }
      }
      if (wants_grad(wid)) {
        const TensorT<T>& x = value(xid);
        std::vector<T> col(static_cast<size_t>(K * Ns));
        im2col(x.ptr(), B, Ci, H, W, k, stride, pad, oh, ow, col.data());
        gemm_nt(Co, K, Ns, gytmp.data(), col.data(), grad_accum(wid));
      }
      if (wants_grad(xid)) {
        const TensorT<T>& w = value(wid);
        std::vector<T> gcol(static_cast<size_t>(K * Ns), T(0));
        gemm_tn(K, Ns, Co, w.ptr(), gytmp.data(), gcol.data());
        col2im_add(gcol.data(), B, Ci, H, W, k, stride, pad, oh, ow, grad_accum(xid));
      }
    });
  }
  return out;
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::deconv2d(NodeId xid, NodeId wid, NodeId bid, int stride, int pad) {
  const TensorT<T>& x = value(xid);
  const TensorT<T>& w = value(wid);
  const TensorT<T>& b = value(bid);
  if (x.rank() != 4 || w.rank() != 4) throw_shape_error("deconv2d", x.shape, w.shape);
  if (x.dim(1) != w.dim(0)) throw_shape_error("deconv2d channels", x.shape, w.shape);
  const int64_t B = x.dim(0), Ci = x.dim(1), ih = x.dim(2), iw = x.dim(3);
  const int64_t Co = w.dim(1);
  const int k = static_cast<int>(w.dim(2));
  if (b.numel() != Co) throw_shape_error("deconv2d bias", b.shape, {Co});
  const int64_t oh = deconv_out_dim(ih, k, stride, pad);
  const int64_t ow = deconv_out_dim(iw, k, stride, pad);
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("deconv2d: empty output for input " + x.shape_str());
  const int64_t Q = Co * k * k;
  const int64_t s_in = ih * iw;
  const int64_t Ns = B * s_in;

  std::vector<T> xtmp(static_cast<size_t>(Ci * Ns));
  nchw_to_cns(x.ptr(), B, Ci, s_in, xtmp.data());
  std::vector<T> coly(static_cast<size_t>(Q * Ns), T(0));
  gemm_tn(Q, Ns, Ci, w.ptr(), xtmp.data(), coly.data());
  xtmp.clear();
  xtmp.shrink_to_fit();

  TensorT<T> y({B, Co, oh, ow});
  col2im_add(coly.data(), B, Co, oh, ow, k, stride, pad, ih, iw, y.ptr());
  for (int64_t bi = 0; bi < B; ++bi)
    for (int64_t co = 0; co < Co; ++co) {
      T* dst = y.ptr() + (bi * Co + co) * oh * ow;
      const T bias = b.data[static_cast<size_t>(co)];
      for (int64_t i = 0; i < oh * ow; ++i) dst[i] += bias;
    }

  const bool req = wants_grad(xid) || wants_grad(wid) || wants_grad(bid);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, xid, wid, bid, out, B, Ci, ih, iw, Co, k, stride, pad, oh, ow]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      const int64_t Q = Co * k * k;
      const int64_t s_in = ih * iw;
      const int64_t Ns = B * s_in;
      if (wants_grad(bid)) {
        T* gb = grad_accum(bid);
        for (int64_t bi = 0; bi < B; ++bi)
          for (int64_t co = 0; co < Co; ++co) {
            const T* src = gy + (bi * Co + co) * oh * ow;
            T acc = 0;
            for (int64_t i = 0; i < oh * ow; ++i) acc += src[i];
            gb[co] += acc;
          }
      }
      // dY gathered with conv geometry: backward-data of deconv is a conv.
      std::vector<T> gcoly(static_cast<size_t>(Q * Ns));
      im2col(gy, B, Co, oh, ow, k, stride, pad, ih, iw, gcoly.data());
      if (wants_grad(xid)) {
        const TensorT<T>& w = value(wid);
        std::vector<T> gxtmp(static_cast<size_t>(Ci * Ns), T(0));
        gemm_nn(Ci, Ns, Q, w.ptr(), gcoly.data(), gxtmp.data());
        cns_add_to_nchw(gxtmp.data(), B, Ci, s_in, grad_accum(xid));
      }
      if (wants_grad(wid)) {
        const TensorT<T>& x = value(xid);
        std::vector<T> xtmp(static_cast<size_t>(Ci * Ns));
        nchw_to_cns(x.ptr(), B, Ci, s_in, xtmp.data());
        gemm_nt(Ci, Q, Ns, xtmp.data(), gcoly.data(), grad_accum(wid));
      }
    });
  }
  return out;
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::dense(NodeId xid, NodeId wid, NodeId bid) {
  const TensorT<T>& x = value(xid);
  const TensorT<T>& w = value(wid);
  const TensorT<T>& b = value(bid);
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1)) throw_shape_error("dense", x.shape, w.shape);
  const int64_t B = x.dim(0), In = x.dim(1), Out = w.dim(0);
  if (b.numel() != Out) throw_shape_error("dense bias", b.shape, {Out});

  TensorT<T> y({B, Out});
  gemm_nt(B, Out, In, x.ptr(), w.ptr(), y.ptr());
  for (int64_t bi = 0; bi < B; ++bi)
    for (int64_t o = 0; o < Out; ++o) y.data[static_cast<size_t>(bi * Out + o)] += b.data[static_cast<size_t>(o)];

  const bool req = wants_grad(xid) || wants_grad(wid) || wants_grad(bid);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, xid, wid, bid, out, B, In, Out]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      if (wants_grad(bid)) {
        T* gb = grad_accum(bid);
        for (int64_t bi = 0; bi < B; ++bi)
          for (int64_t o = 0; o < Out; ++o) gb[o] += gy[bi * Out + o];
      }
      if (wants_grad(wid)) gemm_tn(Out, In, B, gy, value(xid).ptr(), grad_accum(wid));
      if (wants_grad(xid)) gemm_nn(B, In, Out, gy, value(wid).ptr(), grad_accum(xid));
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// batchnorm

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::batchnorm2d(NodeId xid, NodeId scale_id, NodeId shift_id,
                                                  BnStateT<T>& state, bool train) {
  const TensorT<T>& x = value(xid);
  if (x.rank() != 4) throw std::invalid_argument("batchnorm2d expects 4-D input, got " + x.shape_str());
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (B < 1) throw std::invalid_argument("batchnorm2d on empty batch");
  const TensorT<T>& scale = value(scale_id);
  const TensorT<T>& shift = value(shift_id);
  if (scale.numel() != C || shift.numel() != C) throw_shape_error("batchnorm2d affine", scale.shape, {C});
  if (state.running_mean.numel() != C) throw_shape_error("batchnorm2d state", state.running_mean.shape, {C});
  const int64_t m = B * H * W;
  const int64_t s = H * W;

  auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(C));
  auto inv = std::make_shared<std::vector<T>>(static_cast<size_t>(C));
  if (train) {
    for (int64_t c = 0; c < C; ++c) {
      T mu = 0;
      for (int64_t b = 0; b < B; ++b) {
        const T* xp = x.ptr() + (b * C + c) * s;
        for (int64_t i = 0; i < s; ++i) mu += xp[i];
      }
      mu /= static_cast<T>(m);
      T var = 0;
      for (int64_t b = 0; b < B; ++b) {
        const T* xp = x.ptr() + (b * C + c) * s;
        for (int64_t i = 0; i < s; ++i) {
          const T d = xp[i] - mu;
          var += d * d;
        }
      }
      var /= static_cast<T>(m);
      (*mean)[static_cast<size_t>(c)] = mu;
      (*inv)[static_cast<size_t>(c)] = T(1) / std::sqrt(var + state.eps);
      state.running_mean.data[static_cast<size_t>(c)] =
          state.momentum * state.running_mean.data[static_cast<size_t>(c)] + (T(1) - state.momentum) * mu;
      state.running_var.data[static_cast<size_t>(c)] =
          state.momentum * state.running_var.data[static_cast<size_t>(c)] + (T(1) - state.momentum) * var;
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      (*mean)[static_cast<size_t>(c)] = state.running_mean.data[static_cast<size_t>(c)];
      (*inv)[static_cast<size_t>(c)] =
          T(1) / std::sqrt(state.running_var.data[static_cast<size_t>(c)] + state.eps);
    }
  }

  TensorT<T> y(x.shape);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      const T* xp = x.ptr() + (b * C + c) * s;
      T* yp = y.ptr() + (b * C + c) * s;
      const T mu = (*mean)[static_cast<size_t>(c)];
      const T iv = (*inv)[static_cast<size_t>(c)];
      const T ga = scale.data[static_cast<size_t>(c)];
      const T be = shift.data[static_cast<size_t>(c)];
      for (int64_t i = 0; i < s; ++i) yp[i] = (xp[i] - mu) * iv * ga + be;
    }

  const bool req = wants_grad(xid) || wants_grad(scale_id) || wants_grad(shift_id);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, xid, scale_id, shift_id, out, B, C, s, m, mean, inv, train]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      const TensorT<T>& x = value(xid);
      const TensorT<T>& scale = value(scale_id);
      for (int64_t c = 0; c < C; ++c) {
        const T mu = (*mean)[static_cast<size_t>(c)];
        const T iv = (*inv)[static_cast<size_t>(c)];
        const T ga = scale.data[static_cast<size_t>(c)];
        T sum_gy = 0, sum_gy_xhat = 0;
        for (int64_t b = 0; b < B; ++b) {
          const T* xp = x.ptr() + (b * C + c) * s;
          const T* gp = gy + (b * C + c) * s;
          for (int64_t i = 0; i < s; ++i) {
            sum_gy += gp[i];
            sum_gy_xhat += gp[i] * (xp[i] - mu) * iv;
          }
        }
        if (wants_grad(shift_id)) grad_accum(shift_id)[c] += sum_gy;
        if (wants_grad(scale_id)) grad_accum(scale_id)[c] += sum_gy_xhat;
        if (wants_grad(xid)) {
          T* gx = grad_accum(xid);
          if (train) {
            const T k1 = ga * iv / static_cast<T>(m);
            for (int64_t b = 0; b < B; ++b) {
              const T* xp = x.ptr() + (b * C + c) * s;
              const T* gp = gy + (b * C + c) * s;
              T* gxp = gx + (b * C + c) * s;
              for (int64_t i = 0; i < s; ++i) {
                const T xhat = (xp[i] - mu) * iv;
                gxp[i] += k1 * (static_cast<T>(m) * gp[i] - sum_gy - xhat * sum_gy_xhat);
              }
            }
          } else {
            const T k1 = ga * iv;
            for (int64_t b = 0; b < B; ++b) {
              const T* gp = gy + (b * C + c) * s;
              T* gxp = gx + (b * C + c) * s;
              for (int64_t i = 0; i < s; ++i) gxp[i] += k1 * gp[i];
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise / structural

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::relu(NodeId xid) {
  const TensorT<T>& x = value(xid);
  TensorT<T> y(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  const bool req = wants_grad(xid);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, xid, out]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      const TensorT<T>& x = value(xid);
      T* gx = grad_accum(xid);
      for (int64_t i = 0; i < x.numel(); ++i)
        if (x.data[i] > T(0)) gx[i] += gy[i];
    });
  }
  return out;
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::leaky_relu(NodeId xid, T slope) {
  const TensorT<T>& x = value(xid);
  TensorT<T> y(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : slope * x.data[i];
  const bool req = wants_grad(xid);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, xid, out, slope]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      const TensorT<T>& x = value(xid);
      T* gx = grad_accum(xid);
      for (int64_t i = 0; i < x.numel(); ++i) gx[i] += (x.data[i] > T(0) ? T(1) : slope) * gy[i];
    });
  }
  return out;
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::tanh_act(NodeId xid) {
  const TensorT<T>& x = value(xid);
  TensorT<T> y(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) y.data[i] = std::tanh(x.data[i]);
  const bool req = wants_grad(xid);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, xid, out]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      const TensorT<T>& yv = value(out);
      T* gx = grad_accum(xid);
      for (int64_t i = 0; i < yv.numel(); ++i) gx[i] += (T(1) - yv.data[i] * yv.data[i]) * gy[i];
    });
  }
  return out;
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::sigmoid(NodeId xid) {
  const TensorT<T>& x = value(xid);
  TensorT<T> y(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) y.data[i] = T(1) / (T(1) + std::exp(-x.data[i]));
  const bool req = wants_grad(xid);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, xid, out]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      const TensorT<T>& yv = value(out);
      T* gx = grad_accum(xid);
      for (int64_t i = 0; i < yv.numel(); ++i) gx[i] += yv.data[i] * (T(1) - yv.data[i]) * gy[i];
    });
  }
  return out;
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::softmax_rows(NodeId xid) {
  const TensorT<T>& x = value(xid);
  if (x.rank() != 2) throw std::invalid_argument("softmax_rows expects 2-D, got " + x.shape_str());
  const int64_t R = x.dim(0), C = x.dim(1);
  TensorT<T> y(x.shape);
  for (int64_t r = 0; r < R; ++r) {
    const T* xp = x.ptr() + r * C;
    T* yp = y.ptr() + r * C;
    T mx = xp[0];
    for (int64_t c = 1; c < C; ++c) mx = std::max(mx, xp[c]);
    T z = 0;
    for (int64_t c = 0; c < C; ++c) {
      yp[c] = std::exp(xp[c] - mx);
      z += yp[c];
    }
    for (int64_t c = 0; c < C; ++c) yp[c] /= z;
  }
  const bool req = wants_grad(xid);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, xid, out, R, C]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      const TensorT<T>& yv = value(out);
      T* gx = grad_accum(xid);
      for (int64_t r = 0; r < R; ++r) {
        const T* yp = yv.ptr() + r * C;
        const T* gp = gy + r * C;
        T dot = 0;
        for (int64_t c = 0; c < C; ++c) dot += yp[c] * gp[c];
        for (int64_t c = 0; c < C; ++c) gx[r * C + c] += yp[c] * (gp[c] - dot);
      }
    });
  }
  return out;
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::dropout(NodeId xid, T rate, Rng& rng) {
  if (rate < T(0) || rate >= T(1)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (rate == T(0)) return xid;
  const TensorT<T>& x = value(xid);
  const T keep = T(1) - rate;
  const T inv_keep = T(1) / keep;
  auto mask = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(x.numel()));
  TensorT<T> y(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) {
    const bool on = static_cast<T>(rng.uniform()) >= rate;
    (*mask)[static_cast<size_t>(i)] = on;
    y.data[i] = on ? x.data[i] * inv_keep : T(0);
  }
  const bool req = wants_grad(xid);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, xid, out, mask, inv_keep]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      T* gx = grad_accum(xid);
      const int64_t n = value(xid).numel();
      for (int64_t i = 0; i < n; ++i)
        if ((*mask)[static_cast<size_t>(i)]) gx[i] += gy[i] * inv_keep;
    });
  }
  return out;
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::concat_channels(NodeId aid, NodeId bid) {
  const TensorT<T>& a = value(aid);
  const TensorT<T>& b = value(bid);
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
      a.dim(3) != b.dim(3))
    throw_shape_error("concat_channels", a.shape, b.shape);
  const int64_t B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), s = a.dim(2) * a.dim(3);
  TensorT<T> y({B, Ca + Cb, a.dim(2), a.dim(3)});
  for (int64_t bi = 0; bi < B; ++bi) {
    std::memcpy(y.ptr() + bi * (Ca + Cb) * s, a.ptr() + bi * Ca * s, sizeof(T) * static_cast<size_t>(Ca * s));
    std::memcpy(y.ptr() + (bi * (Ca + Cb) + Ca) * s, b.ptr() + bi * Cb * s,
                sizeof(T) * static_cast<size_t>(Cb * s));
  }
  const bool req = wants_grad(aid) || wants_grad(bid);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, aid, bid, out, B, Ca, Cb, s]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      if (wants_grad(aid)) {
        T* ga = grad_accum(aid);
        for (int64_t bi = 0; bi < B; ++bi) {
          const T* src = gy + bi * (Ca + Cb) * s;
          T* dst = ga + bi * Ca * s;
          for (int64_t i = 0; i < Ca * s; ++i) dst[i] += src[i];
        }
      }
      if (wants_grad(bid)) {
        T* gb = grad_accum(bid);
        for (int64_t bi = 0; bi < B; ++bi) {
          const T* src = gy + (bi * (Ca + Cb) + Ca) * s;
          T* dst = gb + bi * Cb * s;
          for (int64_t i = 0; i < Cb * s; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::concat_rows(const std::vector<NodeId>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_rows of nothing");
  const TensorT<T>& first = value(xs[0]);
  std::vector<int64_t> rest(first.shape.begin() + 1, first.shape.end());
  int64_t rows = 0;
  int64_t stride = 1;
  for (int64_t d : rest) stride *= d;
  for (NodeId id : xs) {
    const TensorT<T>& t = value(id);
    std::vector<int64_t> r(t.shape.begin() + 1, t.shape.end());
    if (r != rest) throw_shape_error("concat_rows", first.shape, t.shape);
    rows += t.dim(0);
  }
  std::vector<int64_t> oshape;
  oshape.push_back(rows);
  oshape.insert(oshape.end(), rest.begin(), rest.end());
  TensorT<T> y(oshape);
  int64_t off = 0;
  bool req = false;
  for (NodeId id : xs) {
    const TensorT<T>& t = value(id);
    std::memcpy(y.ptr() + off, t.ptr(), sizeof(T) * static_cast<size_t>(t.numel()));
    off += t.numel();
    req = req || wants_grad(id);
  }
  NodeId out = add_node(std::move(y), req);
  if (req) {
    auto ids = std::make_shared<std::vector<NodeId>>(xs);
    records_.push_back([this, ids, out]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      int64_t off = 0;
      for (NodeId id : *ids) {
        const int64_t n = value(id).numel();
        if (wants_grad(id)) {
          T* g = grad_accum(id);
          for (int64_t i = 0; i < n; ++i) g[i] += gy[off + i];
        }
        off += n;
      }
    });
  }
  return out;
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::flatten(NodeId xid) {
  const TensorT<T>& x = value(xid);
  if (x.rank() < 2) throw std::invalid_argument("flatten expects rank >= 2, got " + x.shape_str());
  TensorT<T> y({x.dim(0), x.numel() / x.dim(0)});
  y.data = x.data;
  const bool req = wants_grad(xid);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, xid, out]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      T* gx = grad_accum(xid);
      const int64_t n = value(xid).numel();
      for (int64_t i = 0; i < n; ++i) gx[i] += gy[i];
    });
  }
  return out;
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::reshape_to(NodeId xid, std::vector<int64_t> shape) {
  const TensorT<T>& x = value(xid);
  if (TensorT<T>::checked_numel(shape) != x.numel())
    throw_shape_error("reshape_to", x.shape, shape);
  TensorT<T> y;
  y.shape = std::move(shape);
  y.data = x.data;
  const bool req = wants_grad(xid);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, xid, out]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      T* gx = grad_accum(xid);
      const int64_t n = value(xid).numel();
      for (int64_t i = 0; i < n; ++i) gx[i] += gy[i];
    });
  }
  return out;
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::add(NodeId aid, NodeId bid) {
  const TensorT<T>& a = value(aid);
  const TensorT<T>& b = value(bid);
  if (!a.same_shape(b)) throw_shape_error("add", a.shape, b.shape);
  TensorT<T> y(a.shape);
  for (int64_t i = 0; i < a.numel(); ++i) y.data[i] = a.data[i] + b.data[i];
  const bool req = wants_grad(aid) || wants_grad(bid);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, aid, bid, out]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      const int64_t n = value(out).numel();
      if (wants_grad(aid)) {
        T* g = grad_accum(aid);
        for (int64_t i = 0; i < n; ++i) g[i] += gy[i];
      }
      if (wants_grad(bid)) {
        T* g = grad_accum(bid);
        for (int64_t i = 0; i < n; ++i) g[i] += gy[i];
      }
    });
  }
  return out;
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::scale(NodeId xid, T c) {
  const TensorT<T>& x = value(xid);
  TensorT<T> y(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) y.data[i] = c * x.data[i];
  const bool req = wants_grad(xid);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, xid, out, c]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      T* gx = grad_accum(xid);
      const int64_t n = value(xid).numel();
      for (int64_t i = 0; i < n; ++i) gx[i] += c * gy[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// losses

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::neg_mean_log(NodeId pid) {
  const TensorT<T>& p = value(pid);
  const int64_t n = p.numel();
  if (n == 0) throw std::invalid_argument("neg_mean_log of empty tensor");
  const T lo = static_cast<T>(kProbClampLo), hi = T(1) - static_cast<T>(kProbClampLo);
  double acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += std::log(static_cast<double>(std::clamp(p.data[i], lo, hi)));
  TensorT<T> y = TensorT<T>::scalar(static_cast<T>(-acc / static_cast<double>(n)));
  const bool req = wants_grad(pid);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, pid, out, n, lo, hi]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      const TensorT<T>& p = value(pid);
      T* gp = grad_accum(pid);
      const T k = gy[0] / static_cast<T>(n);
      for (int64_t i = 0; i < n; ++i)
        if (p.data[i] > lo && p.data[i] < hi) gp[i] -= k / p.data[i];
    });
  }
  return out;
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::neg_mean_log1m(NodeId pid) {
  const TensorT<T>& p = value(pid);
  const int64_t n = p.numel();
  if (n == 0) throw std::invalid_argument("neg_mean_log1m of empty tensor");
  const T lo = static_cast<T>(kProbClampLo), hi = T(1) - static_cast<T>(kProbClampLo);
  double acc = 0;
  for (int64_t i = 0; i < n; ++i)
    acc += std::log(1.0 - static_cast<double>(std::clamp(p.data[i], lo, hi)));
  TensorT<T> y = TensorT<T>::scalar(static_cast<T>(-acc / static_cast<double>(n)));
  const bool req = wants_grad(pid);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, pid, out, n, lo, hi]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      const TensorT<T>& p = value(pid);
      T* gp = grad_accum(pid);
      const T k = gy[0] / static_cast<T>(n);
      for (int64_t i = 0; i < n; ++i)
        if (p.data[i] > lo && p.data[i] < hi) gp[i] += k / (T(1) - p.data[i]);
    });
  }
  return out;
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::l1_loss(NodeId aid, NodeId bid) {
  const TensorT<T>& a = value(aid);
  const TensorT<T>& b = value(bid);
  if (!a.same_shape(b)) throw_shape_error("l1_loss", a.shape, b.shape);
  const int64_t n = a.numel();
  if (n == 0) throw std::invalid_argument("l1_loss of empty tensor");
  double acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]));
  TensorT<T> y = TensorT<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
  const bool req = wants_grad(aid) || wants_grad(bid);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    records_.push_back([this, aid, bid, out, n]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      const TensorT<T>& a = value(aid);
      const TensorT<T>& b = value(bid);
      const T k = gy[0] / static_cast<T>(n);
      T* ga = wants_grad(aid) ? grad_accum(aid) : nullptr;
      T* gb = wants_grad(bid) ? grad_accum(bid) : nullptr;
      for (int64_t i = 0; i < n; ++i) {
        const T d = a.data[i] - b.data[i];
        const T sgn = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
        if (ga) ga[i] += k * sgn;
        if (gb) gb[i] -= k * sgn;
      }
    });
  }
  return out;
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::policy_value_loss(NodeId logits_id, NodeId values_id,
                                                        const std::vector<int>& actions,
                                                        const std::vector<T>& advantages,
                                                        const std::vector<T>& returns, T value_coeff,
                                                        T entropy_coeff) {
  const TensorT<T>& logits = value(logits_id);
  const TensorT<T>& values = value(values_id);
  if (logits.rank() != 2) throw std::invalid_argument("policy_value_loss logits must be 2-D");
  const int64_t L = logits.dim(0), A = logits.dim(1);
  if (values.numel() != L) throw_shape_error("policy_value_loss values", values.shape, {L});
  if (static_cast<int64_t>(actions.size()) != L || static_cast<int64_t>(advantages.size()) != L ||
      static_cast<int64_t>(returns.size()) != L)
    throw std::invalid_argument("policy_value_loss: segment length mismatch");
  for (int a : actions)
    if (a < 0 || a >= A) throw std::invalid_argument("policy_value_loss: action index out of range");

  // Stable log-softmax per row; probabilities and entropies cached for backward.
  auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(L * A));
  auto logp = std::make_shared<std::vector<T>>(static_cast<size_t>(L * A));
  auto entropy = std::make_shared<std::vector<T>>(static_cast<size_t>(L));
  double loss = 0;
  for (int64_t t = 0; t < L; ++t) {
    const T* z = logits.ptr() + t * A;
    T mx = z[0];
    for (int64_t j = 1; j < A; ++j) mx = std::max(mx, z[j]);
    double zsum = 0;
    for (int64_t j = 0; j < A; ++j) zsum += std::exp(static_cast<double>(z[j] - mx));
    const double logz = std::log(zsum);
    double H = 0;
    for (int64_t j = 0; j < A; ++j) {
      const double lp = static_cast<double>(z[j] - mx) - logz;
      const double p = std::exp(lp);
      (*logp)[static_cast<size_t>(t * A + j)] = static_cast<T>(lp);
      (*probs)[static_cast<size_t>(t * A + j)] = static_cast<T>(p);
      H -= p * lp;
    }
    (*entropy)[static_cast<size_t>(t)] = static_cast<T>(H);
    const double v = static_cast<double>(values.data[static_cast<size_t>(t)]);
    const double r = static_cast<double>(returns[static_cast<size_t>(t)]);
    loss += -static_cast<double>((*logp)[static_cast<size_t>(t * A + actions[static_cast<size_t>(t)])]) *
                static_cast<double>(advantages[static_cast<size_t>(t)]) +
            static_cast<double>(value_coeff) * (r - v) * (r - v) -
            static_cast<double>(entropy_coeff) * static_cast<double>((*entropy)[static_cast<size_t>(t)]);
  }
  TensorT<T> y = TensorT<T>::scalar(static_cast<T>(loss));
  const bool req = wants_grad(logits_id) || wants_grad(values_id);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    auto acts = std::make_shared<std::vector<int>>(actions);
    auto advs = std::make_shared<std::vector<T>>(advantages);
    auto rets = std::make_shared<std::vector<T>>(returns);
    records_.push_back([this, logits_id, values_id, out, L, A, probs, logp, entropy, acts, advs, rets,
                        value_coeff, entropy_coeff]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      const T g = gy[0];
      if (wants_grad(logits_id)) {
        T* gz = grad_accum(logits_id);
        for (int64_t t = 0; t < L; ++t) {
          const T adv = (*advs)[static_cast<size_t>(t)];
          const T H = (*entropy)[static_cast<size_t>(t)];
          const int a = (*acts)[static_cast<size_t>(t)];
          for (int64_t j = 0; j < A; ++j) {
            const T p = (*probs)[static_cast<size_t>(t * A + j)];
            const T lp = (*logp)[static_cast<size_t>(t * A + j)];
            T d = adv * (p - (j == a ? T(1) : T(0)));
            d += entropy_coeff * p * (lp + H);
            gz[t * A + j] += g * d;
          }
        }
      }
      if (wants_grad(values_id)) {
        const TensorT<T>& values = value(values_id);
        T* gv = grad_accum(values_id);
        for (int64_t t = 0; t < L; ++t)
          gv[t] += g * T(-2) * value_coeff *
                   ((*rets)[static_cast<size_t>(t)] - values.data[static_cast<size_t>(t)]);
      }
    });
  }
  return out;
}

template <typename T>
typename GraphT<T>::NodeId GraphT<T>::cross_entropy_mean(NodeId logits_id, const std::vector<int>& labels) {
  const TensorT<T>& logits = value(logits_id);
  if (logits.rank() != 2) throw std::invalid_argument("cross_entropy_mean logits must be 2-D");
  const int64_t N = logits.dim(0), K = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != N)
    throw std::invalid_argument("cross_entropy_mean: label count mismatch");
  auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(N * K));
  double loss = 0;
  for (int64_t i = 0; i < N; ++i) {
    const int lab = labels[static_cast<size_t>(i)];
    if (lab < 0 || lab >= K) throw std::invalid_argument("cross_entropy_mean: label out of range");
    const T* z = logits.ptr() + i * K;
    T mx = z[0];
    for (int64_t j = 1; j < K; ++j) mx = std::max(mx, z[j]);
    double zsum = 0;
    for (int64_t j = 0; j < K; ++j) zsum += std::exp(static_cast<double>(z[j] - mx));
    const double logz = std::log(zsum);
    for (int64_t j = 0; j < K; ++j)
      (*probs)[static_cast<size_t>(i * K + j)] =
          static_cast<T>(std::exp(static_cast<double>(z[j] - mx) - logz));
    loss -= static_cast<double>(z[lab] - mx) - logz;
  }
  TensorT<T> y = TensorT<T>::scalar(static_cast<T>(loss / static_cast<double>(N)));
  const bool req = wants_grad(logits_id);
  NodeId out = add_node(std::move(y), req);
  if (req) {
    auto labs = std::make_shared<std::vector<int>>(labels);
    records_.push_back([this, logits_id, out, N, K, probs, labs]() {
      const T* gy = out_grad_ptr(nodes_[static_cast<size_t>(out)].gradbuf);
      if (!gy) return;
      T* gz = grad_accum(logits_id);
      const T k = gy[0] / static_cast<T>(N);
      for (int64_t i = 0; i < N; ++i)
        for (int64_t j = 0; j < K; ++j)
          gz[i * K + j] += k * ((*probs)[static_cast<size_t>(i * K + j)] -
                                (j == (*labs)[static_cast<size_t>(i)] ? T(1) : T(0)));
    });
  }
  return out;
}

template class GraphT<float>;
template class GraphT<double>;

}  // namespace vrl
