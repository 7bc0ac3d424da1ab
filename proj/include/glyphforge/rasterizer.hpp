#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "glyphforge/common.hpp"
#include "glyphforge/stroke.hpp"
#include "glyphforge/tape.hpp"
#include "glyphforge/tensor.hpp"

namespace glyphforge {

/// Geometry and softness of the analytic stroke renderer.
/// Pixel intensity for one stroke is a smooth maximum over K curve samples of
///   g_j = w(t_j) * exp(-d(p, B(t_j))^2 / (2 sigma^2)),
/// aggregated as I = log(mean_j exp(sharpness * g_j)) / sharpness, which stays
/// in [0, max_j g_j] and equals the plain maximum as sharpness grows.
struct RasterConfig {
  int64_t height = 64;
  int64_t width = 64;
  real sigma = 0.02;       // falloff in normalized units; sets stroke thickness
  int samples = 32;        // uniform curve discretization
  real sharpness = 100;    // smooth-max temperature
  bool hard_max = false;   // inference-only hard aggregation

  void validate() const {
    if (height < 1 || width < 1) throw parameter_error("canvas dimensions must be positive");
    if (sigma <= 0) throw parameter_error("sigma must be positive");
    if (samples < 2) throw parameter_error("need at least 2 curve samples");
    if (sharpness <= 0 || sharpness > 700)
      throw parameter_error("sharpness must be in (0, 700]");
  }
};

namespace raster_detail {

// Gaussian terms below this bound are dropped; the induced error on the
// aggregated intensity is under K * 1e-14, far inside every stated tolerance.
inline real cutoff_radius(real sigma) { return sigma * std::sqrt(real(-2) * std::log(real(1e-14))); }

inline void check_stroke_range(const Stroke& s) {
  for (real v : s.flat())
    if (!(v >= real(-1e-6) && v <= real(1) + real(1e-6)))
      throw parameter_error("stroke field outside [0,1]: " + std::to_string(v));
}

}  // namespace raster_detail

/// Renders one stroke into canvas (size H*W, row-major, row y = index / W).
/// If accum is non-null it receives the per-pixel sum of exp(sharpness*g_j)
/// (including the K implicit zero terms), which backward reuses.
inline void render_stroke_into(const Stroke& s, const RasterConfig& cfg, real* canvas,
                               real* accum = nullptr) {
  cfg.validate();
  raster_detail::check_stroke_range(s);
  const int64_t h = cfg.height, w = cfg.width;
  const int64_t npx = h * w;
  const int K = cfg.samples;
  const real tau = cfg.sharpness;
  const real inv2s2 = real(1) / (real(2) * cfg.sigma * cfg.sigma);
  const real rcut = raster_detail::cutoff_radius(cfg.sigma);

  std::vector<real> local;
  real* acc = accum;
  if (cfg.hard_max) {
    for (int64_t q = 0; q < npx; ++q) canvas[q] = 0;
  } else {
    if (!acc) {
      local.assign(static_cast<size_t>(npx), static_cast<real>(K));
      acc = local.data();
    } else {
      for (int64_t q = 0; q < npx; ++q) acc[q] = static_cast<real>(K);
    }
  }

  for (int j = 0; j < K; ++j) {
    const real t = static_cast<real>(j) / static_cast<real>(K - 1);
    real bx, by;
    curve_point(s, t, bx, by);
    const real wt = pressure_at(s, t);
    const int64_t ix_lo = std::max<int64_t>(0, static_cast<int64_t>(std::ceil((bx - rcut) * w - real(0.5))));
    const int64_t ix_hi = std::min<int64_t>(w - 1, static_cast<int64_t>(std::floor((bx + rcut) * w - real(0.5))));
    const int64_t iy_lo = std::max<int64_t>(0, static_cast<int64_t>(std::ceil((by - rcut) * h - real(0.5))));
    const int64_t iy_hi = std::min<int64_t>(h - 1, static_cast<int64_t>(std::floor((by + rcut) * h - real(0.5))));
    for (int64_t iy = iy_lo; iy <= iy_hi; ++iy) {
      const real py = (static_cast<real>(iy) + real(0.5)) / static_cast<real>(h);
      const real dy2 = (py - by) * (py - by);
      for (int64_t ix = ix_lo; ix <= ix_hi; ++ix) {
        const real px = (static_cast<real>(ix) + real(0.5)) / static_cast<real>(w);
        const real d2 = (px - bx) * (px - bx) + dy2;
        const real g = wt * std::exp(-d2 * inv2s2);
        const int64_t q = iy * w + ix;
        if (cfg.hard_max) {
          if (g > canvas[q]) canvas[q] = g;
        } else {
          acc[q] += std::exp(tau * g) - real(1);
        }
      }
    }
  }

  if (!cfg.hard_max) {
    const real invK = real(1) / static_cast<real>(K);
    for (int64_t q = 0; q < npx; ++q) canvas[q] = std::log(acc[q] * invK) / tau;
  }
}

inline std::vector<real> render_stroke(const Stroke& s, const RasterConfig& cfg) {
  std::vector<real> canvas(static_cast<size_t>(cfg.height * cfg.width));
  render_stroke_into(s, cfg, canvas.data());
  return canvas;
}

/// Adds dL/d(stroke fields) into g[8], given upstream dL/dI and the forward
/// accumulator. Soft aggregation only.
inline void render_stroke_backward(const Stroke& s, const RasterConfig& cfg, const real* accum,
                                   const real* upstream, real* g) {
  if (cfg.hard_max) throw parameter_error("hard_max rendering has no gradient path");
  const int64_t h = cfg.height, w = cfg.width;
  const int K = cfg.samples;
  const real tau = cfg.sharpness;
  const real s2 = cfg.sigma * cfg.sigma;
  const real inv2s2 = real(1) / (real(2) * s2);
  const real rcut = raster_detail::cutoff_radius(cfg.sigma);

  for (int j = 0; j < K; ++j) {
    const real t = static_cast<real>(j) / static_cast<real>(K - 1);
    const real u = real(1) - t;
    const real ca = u * u, cb = real(2) * t * u, cc = t * t;
    real bx, by;
    curve_point(s, t, bx, by);
    const real wt = pressure_at(s, t);
    const int64_t ix_lo = std::max<int64_t>(0, static_cast<int64_t>(std::ceil((bx - rcut) * w - real(0.5))));
    const int64_t ix_hi = std::min<int64_t>(w - 1, static_cast<int64_t>(std::floor((bx + rcut) * w - real(0.5))));
    const int64_t iy_lo = std::max<int64_t>(0, static_cast<int64_t>(std::ceil((by - rcut) * h - real(0.5))));
    const int64_t iy_hi = std::min<int64_t>(h - 1, static_cast<int64_t>(std::floor((by + rcut) * h - real(0.5))));
    real gbx = 0, gby = 0, gep = 0, gpr = 0;
    for (int64_t iy = iy_lo; iy <= iy_hi; ++iy) {
      const real py = (static_cast<real>(iy) + real(0.5)) / static_cast<real>(h);
      const real dy = py - by;
      for (int64_t ix = ix_lo; ix <= ix_hi; ++ix) {
        const real px = (static_cast<real>(ix) + real(0.5)) / static_cast<real>(w);
        const real dx = px - bx;
        const real d2 = dx * dx + dy * dy;
        const real e = std::exp(-d2 * inv2s2);
        const real gq = wt * e;
        const int64_t q = iy * w + ix;
        // dI/dg for this sample is its softmax share of the accumulator.
        const real coef = upstream[q] * std::exp(tau * gq) / accum[q];
        gep += coef * e * u;
        gpr += coef * e * t;
        const real geo = coef * gq / s2;
        gbx += geo * dx;
        gby += geo * dy;
      }
    }
    g[0] += gbx * ca;
    g[1] += gby * ca;
    g[2] += gbx * cb;
    g[3] += gby * cb;
    g[4] += gbx * cc;
    g[5] += gby * cc;
    g[6] += gep;
    g[7] += gpr;
  }
}

/// Screen blend: I = 1 - prod_k (1 - I_k). Order-independent, stays in [0,1].
inline std::vector<real> composite(const std::vector<std::vector<real>>& layers) {
  if (layers.empty()) throw shape_error("composite needs at least one layer");
  const size_t n = layers[0].size();
  for (const auto& l : layers)
    if (l.size() != n) throw shape_error("composite layer geometry mismatch");
  std::vector<real> out(n, real(1));
  for (const auto& l : layers)
    for (size_t q = 0; q < n; ++q) out[q] *= (real(1) - l[q]);
  for (size_t q = 0; q < n; ++q) out[q] = real(1) - out[q];
  return out;
}

/// Full deterministic forward render of one glyph.
inline std::vector<real> render_symbol(const ActionSequence& seq, const RasterConfig& cfg) {
  if (seq.strokes.empty()) throw shape_error("empty action sequence");
  std::vector<std::vector<real>> layers;
  layers.reserve(seq.strokes.size());
  for (const auto& s : seq.strokes) layers.push_back(render_stroke(s, cfg));
  return composite(layers);
}

/// Differentiable batch render as a tape op.
/// actions: [batch, strokes*8] with fields ordered as Stroke::flat().
/// output: [batch, 1, H, W].
inline Var render_symbol_op(Tape& tp, Var actions, const RasterConfig& cfg) {
  cfg.validate();
  const Tensor& A = tp.value(actions);
  if (A.rank() != 2 || A.dim(1) % Stroke::kFields != 0)
    throw shape_error("actions must be [batch, strokes*8], got " + shape_str(A.shape));
  const int64_t b = A.dim(0);
  const int64_t S = A.dim(1) / Stroke::kFields;
  const int64_t npx = cfg.height * cfg.width;
  if (cfg.hard_max && tp.needs_grad(actions))
    throw parameter_error("hard_max rendering has no gradient path");

  Tensor Y = Tensor::zeros({b, 1, cfg.height, cfg.width});
  // Saved context: per (sample, stroke) layer canvases and soft-max
  // accumulators, reused verbatim in backward.
  auto layers = std::make_shared<std::vector<real>>(static_cast<size_t>(b * S * npx));
  auto accums = std::make_shared<std::vector<real>>(
      cfg.hard_max ? size_t(0) : static_cast<size_t>(b * S * npx));

  parallel_for(b, [&](int64_t n) {
    const real* arow = A.data.data() + n * S * Stroke::kFields;
    real* yrow = Y.data.data() + n * npx;
    for (int64_t q = 0; q < npx; ++q) yrow[q] = real(1);
    for (int64_t k = 0; k < S; ++k) {
      Stroke st = Stroke::from_flat(arow + k * Stroke::kFields);
      real* layer = layers->data() + (n * S + k) * npx;
      real* acc = cfg.hard_max ? nullptr : accums->data() + (n * S + k) * npx;
      render_stroke_into(st, cfg, layer, acc);
      for (int64_t q = 0; q < npx; ++q) yrow[q] *= (real(1) - layer[q]);
    }
    for (int64_t q = 0; q < npx; ++q) yrow[q] = real(1) - yrow[q];
  });

  const Var out = tp.next_id();
  return tp.push(std::move(Y), tp.needs_grad(actions),
                 [actions, out, cfg, b, S, npx, layers, accums](Tape& t) {
    const auto& go = t.grad_buffer(out);
    const Tensor& A = t.value(actions);
    auto& ga = t.grad_buffer(actions);
    parallel_for(b, [&](int64_t n) {
      const real* arow = A.data.data() + n * S * Stroke::kFields;
      real* garow = ga.data() + n * S * Stroke::kFields;
      const real* gorow = go.data() + n * npx;
      std::vector<real> upstream(static_cast<size_t>(npx));
      for (int64_t k = 0; k < S; ++k) {
        // d(out)/d(layer_k) = prod_{m != k} (1 - layer_m), per pixel.
        for (int64_t q = 0; q < npx; ++q) {
          real prod = 1;
          for (int64_t m = 0; m < S; ++m) {
            if (m == k) continue;
            prod *= (real(1) - (*layers)[static_cast<size_t>((n * S + m) * npx + q)]);
          }
          upstream[static_cast<size_t>(q)] = gorow[q] * prod;
        }
        Stroke st = Stroke::from_flat(arow + k * Stroke::kFields);
        render_stroke_backward(st, cfg, accums->data() + (n * S + k) * npx, upstream.data(),
                               garow + k * Stroke::kFields);
      }
    });
  });
}

}  // namespace glyphforge
