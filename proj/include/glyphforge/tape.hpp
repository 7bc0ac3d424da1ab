#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "glyphforge/common.hpp"
#include "glyphforge/tensor.hpp"

namespace glyphforge {

/// Append-only record of one forward pass. Node values live on the tape;
/// insertion order is the topological order, and backward() replays the
/// recorded closures in exact reverse order. Gradients from multiple
/// consumers of a node accumulate by summation.
class Tape {
 public:
  using Var = int32_t;

  /// Registers an input tensor; gradient is tracked iff t.requires_grad.
  Var leaf(Tensor t) {
    bool rg = t.requires_grad;
    return push(std::move(t), rg, nullptr);
  }

  Var leaf(Tensor t, bool requires_grad) {
    t.requires_grad = requires_grad;
    return push(std::move(t), requires_grad, nullptr);
  }

  const Tensor& value(Var v) const { return vals_[static_cast<size_t>(v)]; }

  /// Gradient of the last backward() w.r.t. node v (zeros if v was unreached).
  std::vector<real> grad(Var v) const {
    const auto& g = grads_[static_cast<size_t>(v)];
    if (g.empty()) return std::vector<real>(vals_[static_cast<size_t>(v)].data.size(), real(0));
    return g;
  }

  void backward(Var loss) {
    if (nodes_recorded() == 0) throw shape_error("backward on an empty tape");
    if (value(loss).size() != 1) throw shape_error("backward expects a scalar loss");
    grad_buffer(loss)[0] += real(1);
    for (int32_t i = loss; i >= 0; --i) {
      auto& back = backs_[static_cast<size_t>(i)];
      if (back && !grads_[static_cast<size_t>(i)].empty()) back(*this);
    }
  }

  size_t nodes_recorded() const { return vals_.size(); }

  /// Id the next pushed node will get; ops capture this in their closures.
  Var next_id() const { return static_cast<Var>(vals_.size()); }

  Var push(Tensor out, bool requires_grad, std::function<void(Tape&)> back) {
    out.requires_grad = requires_grad;
    vals_.push_back(std::move(out));
    grads_.emplace_back();
    backs_.push_back(requires_grad ? std::move(back) : nullptr);
    return static_cast<Var>(vals_.size() - 1);
  }

  bool needs_grad(Var v) const { return vals_[static_cast<size_t>(v)].requires_grad; }

  std::vector<real>& grad_buffer(Var v) {
    auto& g = grads_[static_cast<size_t>(v)];
    if (g.empty()) g.assign(vals_[static_cast<size_t>(v)].data.size(), real(0));
    return g;
  }

 private:
  std::vector<Tensor> vals_;
  std::vector<std::vector<real>> grads_;
  std::vector<std::function<void(Tape&)>> backs_;
};

using Var = Tape::Var;

// ---------------------------------------------------------------------------
// Matrix product: C[m,n] = A[m,k] B[k,n]; dA = dC Bt, dB = At dC.
// ---------------------------------------------------------------------------

inline Var matmul(Tape& tp, Var a, Var b) {
  const Tensor& A = tp.value(a);
  const Tensor& B = tp.value(b);
  if (A.rank() != 2 || B.rank() != 2)
    throw shape_error("matmul expects rank-2 tensors, got " + shape_str(A.shape) + " and " +
                      shape_str(B.shape));
  const int64_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  if (B.dim(0) != k)
    throw shape_error("matmul inner dimensions disagree: " + shape_str(A.shape) + " vs " +
                      shape_str(B.shape));
  Tensor C = Tensor::zeros({m, n});
  for (int64_t i = 0; i < m; ++i) {
    const real* arow = A.data.data() + i * k;
    real* crow = C.data.data() + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const real av = arow[p];
      const real* brow = B.data.data() + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  const bool rg = tp.needs_grad(a) || tp.needs_grad(b);
  const Var out = tp.next_id();
  return tp.push(std::move(C), rg, [a, b, out, m, k, n](Tape& t) {
    const auto& go = t.grad_buffer(out);
    const Tensor& Av = t.value(a);
    const Tensor& Bv = t.value(b);
    if (t.needs_grad(a)) {
      auto& ga = t.grad_buffer(a);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
          const real* gorow = go.data() + i * n;
          const real* brow = Bv.data.data() + p * n;
          real acc = 0;
          for (int64_t j = 0; j < n; ++j) acc += gorow[j] * brow[j];
          ga[i * k + p] += acc;
        }
    }
    if (t.needs_grad(b)) {
      auto& gb = t.grad_buffer(b);
      for (int64_t i = 0; i < m; ++i) {
        const real* arow = Av.data.data() + i * k;
        const real* gorow = go.data() + i * n;
        for (int64_t p = 0; p < k; ++p) {
          const real av = arow[p];
          real* gbrow = gb.data() + p * n;
          for (int64_t j = 0; j < n; ++j) gbrow[j] += av * gorow[j];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// 2D convolution (cross-correlation), NCHW, square padding.
// ---------------------------------------------------------------------------

namespace detail {
inline int64_t ceil_div(int64_t a, int64_t b) { return a > 0 ? (a + b - 1) / b : a / b; }
}  // namespace detail

inline Var conv2d(Tape& tp, Var x, Var kernel, int64_t stride, int64_t padding) {
  const Tensor& X = tp.value(x);
  const Tensor& K = tp.value(kernel);
  if (X.rank() != 4 || K.rank() != 4)
    throw shape_error("conv2d expects rank-4 input and kernel, got " + shape_str(X.shape) +
                      " and " + shape_str(K.shape));
  if (stride < 1) throw shape_error("conv2d stride must be >= 1");
  if (padding < 0) throw shape_error("conv2d padding must be >= 0");
  const int64_t bs = X.dim(0), c = X.dim(1), h = X.dim(2), w = X.dim(3);
  const int64_t oc = K.dim(0), kc = K.dim(1), kh = K.dim(2), kw = K.dim(3);
  if (kc != c)
    throw shape_error("conv2d channel mismatch: input " + shape_str(X.shape) + " kernel " +
                      shape_str(K.shape));
  if (kh > h + 2 * padding || kw > w + 2 * padding)
    throw shape_error("conv2d kernel larger than padded input");
  const int64_t oh = (h + 2 * padding - kh) / stride + 1;
  const int64_t ow = (w + 2 * padding - kw) / stride + 1;

  Tensor Y = Tensor::zeros({bs, oc, oh, ow});
  parallel_for(bs, [&](int64_t n) {
    for (int64_t o = 0; o < oc; ++o) {
      real* yplane = Y.data.data() + ((n * oc + o) * oh) * ow;
      for (int64_t ic = 0; ic < c; ++ic) {
        const real* xplane = X.data.data() + ((n * c + ic) * h) * w;
        const real* kplane = K.data.data() + ((o * c + ic) * kh) * kw;
        for (int64_t ky = 0; ky < kh; ++ky) {
          const int64_t oy_lo = std::max<int64_t>(0, detail::ceil_div(padding - ky, stride));
          const int64_t oy_hi = std::min(oh - 1, (h - 1 + padding - ky) / stride);
          for (int64_t kx = 0; kx < kw; ++kx) {
            const real kv = kplane[ky * kw + kx];
            const int64_t ox_lo = std::max<int64_t>(0, detail::ceil_div(padding - kx, stride));
            const int64_t ox_hi = std::min(ow - 1, (w - 1 + padding - kx) / stride);
            for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
              const real* xrow = xplane + (oy * stride - padding + ky) * w - padding + kx;
              real* yrow = yplane + oy * ow;
              for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) yrow[ox] += kv * xrow[ox * stride];
            }
          }
        }
      }
    }
  });

  const bool rg = tp.needs_grad(x) || tp.needs_grad(kernel);
  const Var out = tp.next_id();
  return tp.push(std::move(Y), rg,
                 [x, kernel, out, stride, padding, bs, c, h, w, oc, kh, kw, oh, ow](Tape& t) {
    const auto& go = t.grad_buffer(out);
    const Tensor& X = t.value(x);
    const Tensor& K = t.value(kernel);
    if (t.needs_grad(x)) {
      auto& gx = t.grad_buffer(x);
      parallel_for(bs, [&](int64_t n) {
        for (int64_t o = 0; o < oc; ++o) {
          const real* goplane = go.data() + ((n * oc + o) * oh) * ow;
          for (int64_t ic = 0; ic < c; ++ic) {
            real* gxplane = gx.data() + ((n * c + ic) * h) * w;
            const real* kplane = K.data.data() + ((o * c + ic) * kh) * kw;
            for (int64_t ky = 0; ky < kh; ++ky) {
              const int64_t oy_lo = std::max<int64_t>(0, detail::ceil_div(padding - ky, stride));
              const int64_t oy_hi = std::min(oh - 1, (h - 1 + padding - ky) / stride);
              for (int64_t kx = 0; kx < kw; ++kx) {
                const real kv = kplane[ky * kw + kx];
                const int64_t ox_lo = std::max<int64_t>(0, detail::ceil_div(padding - kx, stride));
                const int64_t ox_hi = std::min(ow - 1, (w - 1 + padding - kx) / stride);
                for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                  real* gxrow = gxplane + (oy * stride - padding + ky) * w - padding + kx;
                  const real* gorow = goplane + oy * ow;
                  for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) gxrow[ox * stride] += kv * gorow[ox];
                }
              }
            }
          }
        }
      });
    }
    if (t.needs_grad(kernel)) {
      // Per-sample partial kernel gradients reduced in sample order, so the
      // result does not depend on the worker-thread count.
      const int64_t ksz = oc * c * kh * kw;
      std::vector<real> partial(static_cast<size_t>(bs * ksz), real(0));
      parallel_for(bs, [&](int64_t n) {
        real* gk = partial.data() + n * ksz;
        for (int64_t o = 0; o < oc; ++o) {
          const real* goplane = go.data() + ((n * oc + o) * oh) * ow;
          for (int64_t ic = 0; ic < c; ++ic) {
            const real* xplane = X.data.data() + ((n * c + ic) * h) * w;
            real* gkplane = gk + ((o * c + ic) * kh) * kw;
            for (int64_t ky = 0; ky < kh; ++ky) {
              const int64_t oy_lo = std::max<int64_t>(0, detail::ceil_div(padding - ky, stride));
              const int64_t oy_hi = std::min(oh - 1, (h - 1 + padding - ky) / stride);
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t ox_lo = std::max<int64_t>(0, detail::ceil_div(padding - kx, stride));
                const int64_t ox_hi = std::min(ow - 1, (w - 1 + padding - kx) / stride);
                real acc = 0;
                for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                  const real* xrow = xplane + (oy * stride - padding + ky) * w - padding + kx;
                  const real* gorow = goplane + oy * ow;
                  for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) acc += xrow[ox * stride] * gorow[ox];
                }
                gkplane[ky * kw + kx] += acc;
              }
            }
          }
        }
      });
      auto& gk = t.grad_buffer(kernel);
      for (int64_t n = 0; n < bs; ++n) {
        const real* src = partial.data() + n * ksz;
        for (int64_t i = 0; i < ksz; ++i) gk[static_cast<size_t>(i)] += src[i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline Var relu(Tape& tp, Var x) {
  const Tensor& X = tp.value(x);
  Tensor Y = Tensor::zeros(X.shape);
  for (size_t i = 0; i < X.data.size(); ++i) Y.data[i] = X.data[i] > 0 ? X.data[i] : real(0);
  const Var out = tp.next_id();
  return tp.push(std::move(Y), tp.needs_grad(x), [x, out](Tape& t) {
    const auto& go = t.grad_buffer(out);
    const Tensor& X = t.value(x);
    auto& gx = t.grad_buffer(x);
    // Subgradient at exactly 0 is taken as 0.
    for (size_t i = 0; i < gx.size(); ++i)
      if (X.data[i] > 0) gx[i] += go[i];
  });
}

inline Var sigmoid(Tape& tp, Var x) {
  const Tensor& X = tp.value(x);
  Tensor Y = Tensor::zeros(X.shape);
  for (size_t i = 0; i < X.data.size(); ++i) Y.data[i] = real(1) / (real(1) + std::exp(-X.data[i]));
  const Var out = tp.next_id();
  return tp.push(std::move(Y), tp.needs_grad(x), [x, out](Tape& t) {
    const auto& go = t.grad_buffer(out);
    const Tensor& Y = t.value(out);
    auto& gx = t.grad_buffer(x);
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * Y.data[i] * (real(1) - Y.data[i]);
  });
}

inline Var tanh_op(Tape& tp, Var x) {
  const Tensor& X = tp.value(x);
  Tensor Y = Tensor::zeros(X.shape);
  for (size_t i = 0; i < X.data.size(); ++i) Y.data[i] = std::tanh(X.data[i]);
  const Var out = tp.next_id();
  return tp.push(std::move(Y), tp.needs_grad(x), [x, out](Tape& t) {
    const auto& go = t.grad_buffer(out);
    const Tensor& Y = t.value(out);
    auto& gx = t.grad_buffer(x);
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * (real(1) - Y.data[i] * Y.data[i]);
  });
}

inline Var add(Tape& tp, Var a, Var b) {
  const Tensor& A = tp.value(a);
  const Tensor& B = tp.value(b);
  if (!same_shape(A, B))
    throw shape_error("add shapes differ: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
  Tensor Y = Tensor::zeros(A.shape);
  for (size_t i = 0; i < A.data.size(); ++i) Y.data[i] = A.data[i] + B.data[i];
  const bool rg = tp.needs_grad(a) || tp.needs_grad(b);
  const Var out = tp.next_id();
  return tp.push(std::move(Y), rg, [a, b, out](Tape& t) {
    const auto& go = t.grad_buffer(out);
    if (t.needs_grad(a)) {
      auto& ga = t.grad_buffer(a);
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
    }
    if (t.needs_grad(b)) {
      auto& gb = t.grad_buffer(b);
      for (size_t i = 0; i < gb.size(); ++i) gb[i] += go[i];
    }
  });
}

inline Var mul(Tape& tp, Var a, Var b) {
  const Tensor& A = tp.value(a);
  const Tensor& B = tp.value(b);
  if (!same_shape(A, B))
    throw shape_error("mul shapes differ: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
  Tensor Y = Tensor::zeros(A.shape);
  for (size_t i = 0; i < A.data.size(); ++i) Y.data[i] = A.data[i] * B.data[i];
  const bool rg = tp.needs_grad(a) || tp.needs_grad(b);
  const Var out = tp.next_id();
  return tp.push(std::move(Y), rg, [a, b, out](Tape& t) {
    const auto& go = t.grad_buffer(out);
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (t.needs_grad(a)) {
      auto& ga = t.grad_buffer(a);
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * B.data[i];
    }
    if (t.needs_grad(b)) {
      auto& gb = t.grad_buffer(b);
      for (size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * A.data[i];
    }
  });
}

/// y = c * x for a scalar constant c.
inline Var scale(Tape& tp, Var x, real c) {
  const Tensor& X = tp.value(x);
  Tensor Y = Tensor::zeros(X.shape);
  for (size_t i = 0; i < X.data.size(); ++i) Y.data[i] = c * X.data[i];
  const Var out = tp.next_id();
  return tp.push(std::move(Y), tp.needs_grad(x), [x, out, c](Tape& t) {
    const auto& go = t.grad_buffer(out);
    auto& gx = t.grad_buffer(x);
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += c * go[i];
  });
}

/// y = x + c for a scalar constant c.
inline Var add_scalar(Tape& tp, Var x, real c) {
  const Tensor& X = tp.value(x);
  Tensor Y = Tensor::zeros(X.shape);
  for (size_t i = 0; i < X.data.size(); ++i) Y.data[i] = X.data[i] + c;
  const Var out = tp.next_id();
  return tp.push(std::move(Y), tp.needs_grad(x), [x, out](Tape& t) {
    const auto& go = t.grad_buffer(out);
    auto& gx = t.grad_buffer(x);
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
  });
}

/// Bias broadcast: [m,n]+[n] adds per column, [b,c,h,w]+[c] adds per channel.
inline Var bias_add(Tape& tp, Var x, Var bias) {
  const Tensor& X = tp.value(x);
  const Tensor& B = tp.value(bias);
  if (B.rank() != 1) throw shape_error("bias must be rank-1, got " + shape_str(B.shape));
  Tensor Y = X;
  Y.grad.clear();
  int64_t groups, span;
  if (X.rank() == 2 && X.dim(1) == B.dim(0)) {
    groups = X.dim(0);
    span = 1;
  } else if (X.rank() == 4 && X.dim(1) == B.dim(0)) {
    groups = X.dim(0);
    span = X.dim(2) * X.dim(3);
  } else {
    throw shape_error("bias_add cannot broadcast " + shape_str(B.shape) + " over " +
                      shape_str(X.shape));
  }
  const int64_t nb = B.dim(0);
  for (int64_t g = 0; g < groups; ++g)
    for (int64_t j = 0; j < nb; ++j) {
      real* dst = Y.data.data() + (g * nb + j) * span;
      const real bv = B.data[static_cast<size_t>(j)];
      for (int64_t s = 0; s < span; ++s) dst[s] += bv;
    }
  const bool rg = tp.needs_grad(x) || tp.needs_grad(bias);
  const Var out = tp.next_id();
  return tp.push(std::move(Y), rg, [x, bias, out, groups, span, nb](Tape& t) {
    const auto& go = t.grad_buffer(out);
    if (t.needs_grad(x)) {
      auto& gx = t.grad_buffer(x);
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
    }
    if (t.needs_grad(bias)) {
      auto& gb = t.grad_buffer(bias);
      for (int64_t g = 0; g < groups; ++g)
        for (int64_t j = 0; j < nb; ++j) {
          const real* src = go.data() + (g * nb + j) * span;
          real acc = 0;
          for (int64_t s = 0; s < span; ++s) acc += src[s];
          gb[static_cast<size_t>(j)] += acc;
        }
    }
  });
}

// ---------------------------------------------------------------------------
// Structure ops
// ---------------------------------------------------------------------------

inline Var concat_cols(Tape& tp, Var a, Var b) {
  const Tensor& A = tp.value(a);
  const Tensor& B = tp.value(b);
  if (A.rank() != 2 || B.rank() != 2 || A.dim(0) != B.dim(0))
    throw shape_error("concat_cols expects rank-2 with equal rows: " + shape_str(A.shape) +
                      " vs " + shape_str(B.shape));
  const int64_t m = A.dim(0), p = A.dim(1), q = B.dim(1);
  Tensor Y = Tensor::zeros({m, p + q});
  for (int64_t i = 0; i < m; ++i) {
    std::copy_n(A.data.data() + i * p, p, Y.data.data() + i * (p + q));
    std::copy_n(B.data.data() + i * q, q, Y.data.data() + i * (p + q) + p);
  }
  const bool rg = tp.needs_grad(a) || tp.needs_grad(b);
  const Var out = tp.next_id();
  return tp.push(std::move(Y), rg, [a, b, out, m, p, q](Tape& t) {
    const auto& go = t.grad_buffer(out);
    if (t.needs_grad(a)) {
      auto& ga = t.grad_buffer(a);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < p; ++j) ga[i * p + j] += go[i * (p + q) + j];
    }
    if (t.needs_grad(b)) {
      auto& gb = t.grad_buffer(b);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < q; ++j) gb[i * q + j] += go[i * (p + q) + p + j];
    }
  });
}

/// Embedding lookup: rows of table selected by index; backward scatter-adds.
inline Var gather_rows(Tape& tp, Var table, const std::vector<int64_t>& indices) {
  const Tensor& T = tp.value(table);
  if (T.rank() != 2) throw shape_error("gather_rows expects rank-2 table");
  const int64_t n = T.dim(0), d = T.dim(1);
  for (int64_t idx : indices)
    if (idx < 0 || idx >= n)
      throw index_error("row index " + std::to_string(idx) + " out of range [0," +
                        std::to_string(n) + ")");
  const int64_t b = static_cast<int64_t>(indices.size());
  Tensor Y = Tensor::zeros({b, d});
  for (int64_t i = 0; i < b; ++i)
    std::copy_n(T.data.data() + indices[static_cast<size_t>(i)] * d, d, Y.data.data() + i * d);
  const Var out = tp.next_id();
  return tp.push(std::move(Y), tp.needs_grad(table), [table, out, indices, d](Tape& t) {
    const auto& go = t.grad_buffer(out);
    auto& gt = t.grad_buffer(table);
    for (size_t i = 0; i < indices.size(); ++i) {
      real* dst = gt.data() + indices[i] * d;
      const real* src = go.data() + static_cast<int64_t>(i) * d;
      for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

/// Global average pool over spatial dims: [b,c,h,w] -> [b,c].
inline Var mean_spatial(Tape& tp, Var x) {
  const Tensor& X = tp.value(x);
  if (X.rank() != 4) throw shape_error("mean_spatial expects rank-4 input");
  const int64_t b = X.dim(0), c = X.dim(1), hw = X.dim(2) * X.dim(3);
  Tensor Y = Tensor::zeros({b, c});
  for (int64_t i = 0; i < b * c; ++i) {
    const real* src = X.data.data() + i * hw;
    real acc = 0;
    for (int64_t s = 0; s < hw; ++s) acc += src[s];
    Y.data[static_cast<size_t>(i)] = acc / static_cast<real>(hw);
  }
  const Var out = tp.next_id();
  return tp.push(std::move(Y), tp.needs_grad(x), [x, out, b, c, hw](Tape& t) {
    const auto& go = t.grad_buffer(out);
    auto& gx = t.grad_buffer(x);
    const real inv = real(1) / static_cast<real>(hw);
    for (int64_t i = 0; i < b * c; ++i) {
      const real g = go[static_cast<size_t>(i)] * inv;
      real* dst = gx.data() + i * hw;
      for (int64_t s = 0; s < hw; ++s) dst[s] += g;
    }
  });
}

/// Sum of all elements -> scalar.
inline Var sum(Tape& tp, Var x) {
  const Tensor& X = tp.value(x);
  real acc = 0;
  for (real v : X.data) acc += v;
  const Var out = tp.next_id();
  return tp.push(Tensor::scalar(acc), tp.needs_grad(x), [x, out](Tape& t) {
    const real g = t.grad_buffer(out)[0];
    auto& gx = t.grad_buffer(x);
    for (auto& v : gx) v += g;
  });
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy, mean over the batch, max-subtraction stabilized.
// ---------------------------------------------------------------------------

inline Var softmax_cross_entropy(Tape& tp, Var logits, const std::vector<int64_t>& targets) {
  const Tensor& L = tp.value(logits);
  if (L.rank() != 2) throw shape_error("softmax_cross_entropy expects rank-2 logits");
  const int64_t b = L.dim(0), n = L.dim(1);
  if (static_cast<int64_t>(targets.size()) != b)
    throw shape_error("target count does not match batch size");
  for (int64_t tgt : targets)
    if (tgt < 0 || tgt >= n)
      throw index_error("target " + std::to_string(tgt) + " out of range [0," + std::to_string(n) +
                        ")");
  std::vector<real> probs(static_cast<size_t>(b * n));
  real loss = 0;
  for (int64_t i = 0; i < b; ++i) {
    const real* row = L.data.data() + i * n;
    real mx = row[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    real denom = 0;
    for (int64_t j = 0; j < n; ++j) denom += std::exp(row[j] - mx);
    const real log_denom = std::log(denom);
    for (int64_t j = 0; j < n; ++j)
      probs[static_cast<size_t>(i * n + j)] = std::exp(row[j] - mx) / denom;
    loss += -(row[targets[static_cast<size_t>(i)]] - mx - log_denom);
  }
  loss /= static_cast<real>(b);
  const Var out = tp.next_id();
  return tp.push(Tensor::scalar(loss), tp.needs_grad(logits),
                 [logits, out, targets, b, n, probs = std::move(probs)](Tape& t) {
    const real g = t.grad_buffer(out)[0];
    auto& gl = t.grad_buffer(logits);
    const real inv_b = real(1) / static_cast<real>(b);
    for (int64_t i = 0; i < b; ++i)
      for (int64_t j = 0; j < n; ++j) {
        real v = probs[static_cast<size_t>(i * n + j)];
        if (j == targets[static_cast<size_t>(i)]) v -= real(1);
        gl[static_cast<size_t>(i * n + j)] += g * v * inv_b;
      }
  });
}

/// Row-wise argmax of a rank-2 tensor (not a tape op).
inline std::vector<int64_t> argmax_rows(const Tensor& t) {
  if (t.rank() != 2) throw shape_error("argmax_rows expects rank-2 input");
  const int64_t b = t.dim(0), n = t.dim(1);
  std::vector<int64_t> out(static_cast<size_t>(b));
  for (int64_t i = 0; i < b; ++i) {
    const real* row = t.data.data() + i * n;
    int64_t best = 0;
    for (int64_t j = 1; j < n; ++j)
      if (row[j] > row[best]) best = j;
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

}  // namespace glyphforge
