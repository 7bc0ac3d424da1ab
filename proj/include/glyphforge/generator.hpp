#pragma once

#include <cstdint>
#include <vector>

#include "glyphforge/common.hpp"
#include "glyphforge/rng.hpp"
#include "glyphforge/stroke.hpp"
#include "glyphforge/tape.hpp"
#include "glyphforge/tensor.hpp"

namespace glyphforge {

/// Embedding table + two-layer MLP mapping (symbol index, noise) to the
/// flat action vector of one glyph.
struct GeneratorParams {
  int64_t n_symbols = 0;
  int64_t strokes = 0;
  static constexpr int64_t kEmbedDim = 16;
  static constexpr int64_t kNoiseDim = 16;
  static constexpr int64_t kHiddenDim = 32;

  Tensor embedding;  // [N, 16]
  Tensor w1;         // [16+16, 32]
  Tensor b1;         // [32]
  Tensor w2;         // [32, S*8]
  Tensor b2;         // [S*8]

  int64_t action_dim() const { return strokes * Stroke::kFields; }

  template <class F>
  void for_each(F&& f) {
    f("gen.embedding", embedding);
    f("gen.w1", w1);
    f("gen.b1", b1);
    f("gen.w2", w2);
    f("gen.b2", b2);
  }
};

/// Embeddings ~ Normal(0,1); weights ~ Uniform(+-sqrt(6/fan_in)); zero biases.
inline GeneratorParams init_generator(int64_t n_symbols, int64_t strokes, Rng& rng) {
  if (n_symbols < 2) throw config_error("need at least 2 symbol classes");
  if (strokes < 1) throw config_error("need at least 1 stroke");
  GeneratorParams p;
  p.n_symbols = n_symbols;
  p.strokes = strokes;
  const int64_t in1 = GeneratorParams::kEmbedDim + GeneratorParams::kNoiseDim;
  const int64_t hid = GeneratorParams::kHiddenDim;
  const int64_t out = p.action_dim();
  p.embedding = randn({n_symbols, GeneratorParams::kEmbedDim}, rng);
  const real bound1 = std::sqrt(real(6) / static_cast<real>(in1));
  const real bound2 = std::sqrt(real(6) / static_cast<real>(hid));
  p.w1 = rand_uniform({in1, hid}, rng, -bound1, bound1);
  p.b1 = Tensor::zeros({hid});
  p.w2 = rand_uniform({hid, out}, rng, -bound2, bound2);
  p.b2 = Tensor::zeros({out});
  return p;
}

inline GeneratorParams init_generator(int64_t n_symbols, int64_t strokes, uint64_t seed) {
  Rng rng(seed);
  return init_generator(n_symbols, strokes, rng);
}

/// i.i.d. Normal(0, T^2) noise; T scales the draw so T=0 gives exact zeros
/// while consuming the same rng stream.
inline Tensor sample_noise(int64_t batch, real temperature, Rng& rng) {
  if (temperature < 0) throw parameter_error("temperature must be non-negative");
  Tensor t = Tensor::zeros({batch, GeneratorParams::kNoiseDim});
  for (auto& v : t.data) v = temperature * static_cast<real>(rng.normal());
  return t;
}

struct GeneratorVars {
  Var embedding, w1, b1, w2, b2;
};

/// Registers the parameters on a tape for one forward pass.
inline GeneratorVars watch(Tape& tp, const GeneratorParams& p, bool requires_grad) {
  GeneratorVars v;
  v.embedding = tp.leaf(p.embedding, requires_grad);
  v.w1 = tp.leaf(p.w1, requires_grad);
  v.b1 = tp.leaf(p.b1, requires_grad);
  v.w2 = tp.leaf(p.w2, requires_grad);
  v.b2 = tp.leaf(p.b2, requires_grad);
  return v;
}

/// (indices, noise) -> sigmoid-squashed flat actions [batch, S*8].
inline Var generate_actions(Tape& tp, const std::vector<int64_t>& indices, Var noise,
                            const GeneratorVars& g) {
  const Tensor& nz = tp.value(noise);
  if (nz.rank() != 2 || nz.dim(1) != GeneratorParams::kNoiseDim)
    throw shape_error("noise must be [batch, 16], got " + shape_str(nz.shape));
  if (nz.dim(0) != static_cast<int64_t>(indices.size()))
    throw shape_error("noise batch does not match index count");
  Var e = gather_rows(tp, g.embedding, indices);
  Var x = concat_cols(tp, e, noise);
  Var h = relu(tp, bias_add(tp, matmul(tp, x, g.w1), g.b1));
  Var raw = bias_add(tp, matmul(tp, h, g.w2), g.b2);
  return sigmoid(tp, raw);
}

/// Convenience: sample actions without gradient tracking.
inline std::vector<ActionSequence> sample_actions(const GeneratorParams& p,
                                                  const std::vector<int64_t>& indices,
                                                  real temperature, Rng& rng) {
  Tape tp;
  GeneratorVars g = watch(tp, p, false);
  Tensor noise = sample_noise(static_cast<int64_t>(indices.size()), temperature, rng);
  Var a = generate_actions(tp, indices, tp.leaf(std::move(noise), false), g);
  const Tensor& av = tp.value(a);
  std::vector<ActionSequence> out;
  out.reserve(indices.size());
  for (int64_t i = 0; i < av.dim(0); ++i)
    out.push_back(ActionSequence::from_flat(av.data.data() + i * p.action_dim(),
                                            static_cast<int>(p.strokes)));
  return out;
}

}  // namespace glyphforge
