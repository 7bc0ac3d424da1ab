#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glyphforge/common.hpp"
#include "glyphforge/rng.hpp"
#include "glyphforge/tape.hpp"
#include "glyphforge/tensor.hpp"

namespace glyphforge {

/// Three stride-2 conv blocks (1 -> 16 -> 32 -> 64 channels, 3x3 kernels),
/// global average pool, linear head to N logits.
struct ClassifierParams {
  int64_t n_symbols = 0;

  struct ConvBlock {
    Tensor kernel;  // [out_c, in_c, 3, 3]
    Tensor bias;    // [out_c]
  };
  std::vector<ConvBlock> blocks;
  Tensor head_w;  // [64, N]
  Tensor head_b;  // [N]

  static constexpr int64_t kChannels[4] = {1, 16, 32, 64};

  template <class F>
  void for_each(F&& f) {
    for (size_t i = 0; i < blocks.size(); ++i) {
      const std::string tag = "cls.block" + std::to_string(i);
      f(tag + ".kernel", blocks[i].kernel);
      f(tag + ".bias", blocks[i].bias);
    }
    f("cls.head_w", head_w);
    f("cls.head_b", head_b);
  }
};

/// Fan-in-scaled uniform weights, zero biases, deterministic per seed.
inline ClassifierParams init_classifier(int64_t n_symbols, Rng& rng) {
  if (n_symbols < 2) throw config_error("need at least 2 symbol classes");
  ClassifierParams p;
  p.n_symbols = n_symbols;
  for (int i = 0; i < 3; ++i) {
    const int64_t in_c = ClassifierParams::kChannels[i];
    const int64_t out_c = ClassifierParams::kChannels[i + 1];
    const real bound = std::sqrt(real(6) / static_cast<real>(in_c * 9));
    ClassifierParams::ConvBlock b;
    b.kernel = rand_uniform({out_c, in_c, 3, 3}, rng, -bound, bound);
    b.bias = Tensor::zeros({out_c});
    p.blocks.push_back(std::move(b));
  }
  const real hb = std::sqrt(real(6) / real(64));
  p.head_w = rand_uniform({64, n_symbols}, rng, -hb, hb);
  p.head_b = Tensor::zeros({n_symbols});
  return p;
}

inline ClassifierParams init_classifier(int64_t n_symbols, uint64_t seed) {
  Rng rng(seed);
  return init_classifier(n_symbols, rng);
}

struct ClassifierVars {
  std::vector<std::pair<Var, Var>> blocks;  // (kernel, bias)
  Var head_w, head_b;
};

inline ClassifierVars watch(Tape& tp, const ClassifierParams& p, bool requires_grad) {
  ClassifierVars v;
  for (const auto& b : p.blocks) {
    // Sequenced separately: the leaf registration order must match for_each.
    const Var kernel = tp.leaf(b.kernel, requires_grad);
    const Var bias = tp.leaf(b.bias, requires_grad);
    v.blocks.emplace_back(kernel, bias);
  }
  v.head_w = tp.leaf(p.head_w, requires_grad);
  v.head_b = tp.leaf(p.head_b, requires_grad);
  return v;
}

/// [batch, 1, H, W] canvases -> [batch, N] logits.
inline Var classify(Tape& tp, Var canvas, const ClassifierVars& c) {
  const Tensor& x = tp.value(canvas);
  if (x.rank() != 4 || x.dim(1) != 1)
    throw shape_error("classifier expects [batch, 1, H, W], got " + shape_str(x.shape));
  Var h = canvas;
  for (const auto& [kernel, bias] : c.blocks)
    h = relu(tp, bias_add(tp, conv2d(tp, h, kernel, /*stride=*/2, /*padding=*/1), bias));
  Var pooled = mean_spatial(tp, h);
  return bias_add(tp, matmul(tp, pooled, c.head_w), c.head_b);
}

}  // namespace glyphforge
