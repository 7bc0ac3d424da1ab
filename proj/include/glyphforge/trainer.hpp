#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "glyphforge/adam.hpp"
#include "glyphforge/classifier.hpp"
#include "glyphforge/common.hpp"
#include "glyphforge/generator.hpp"
#include "glyphforge/rasterizer.hpp"
#include "glyphforge/rng.hpp"
#include "glyphforge/tape.hpp"

namespace glyphforge {

struct TrainConfig {
  int64_t n = 10;          // symbol classes
  int64_t strokes = 3;     // strokes per glyph
  int64_t batch = 16;
  real lr = 1e-3;
  int64_t steps = 10000;
  int64_t canvas = 64;     // square canvas edge
  real sigma = 0.02;       // stroke softness
  uint64_t seed = 0;
  int64_t val_every = 250;
  int64_t val_samples = 512;

  void validate() const {
    if (n < 2) throw config_error("n must be >= 2");
    if (strokes < 1) throw config_error("strokes must be >= 1");
    if (batch < 1) throw config_error("batch must be >= 1");
    if (lr <= 0) throw config_error("lr must be positive");
    if (steps < 0) throw config_error("steps must be >= 0");
    if (canvas < 8) throw config_error("canvas must be >= 8");
    if (sigma <= 0) throw config_error("sigma must be positive");
    if (val_every < 1) throw config_error("val_every must be >= 1");
    if (val_samples < 1) throw config_error("val_samples must be >= 1");
  }

  RasterConfig raster() const {
    RasterConfig rc;
    rc.height = canvas;
    rc.width = canvas;
    rc.sigma = sigma;
    return rc;
  }
};

/// All trainable parameters plus the optimizer moments, enumerated in a
/// fixed order shared by the optimizer and the checkpoint layout.
struct ModelState {
  GeneratorParams gen;
  ClassifierParams cls;
  std::vector<std::vector<real>> adam_m, adam_v;
  int64_t adam_t = 0;

  template <class F>
  void for_each_param(F&& f) {
    gen.for_each(f);
    cls.for_each(f);
  }

  size_t param_count() {
    size_t n = 0;
    for_each_param([&](const std::string&, Tensor&) { ++n; });
    return n;
  }

  void init_moments() {
    adam_m.clear();
    adam_v.clear();
    adam_t = 0;
    for_each_param([&](const std::string&, Tensor& t) {
      adam_m.emplace_back(t.data.size(), real(0));
      adam_v.emplace_back(t.data.size(), real(0));
    });
  }
};

/// Zero-valued model with the right shapes (checkpoint loading target).
inline ModelState make_model_skeleton(int64_t n, int64_t strokes) {
  Rng rng(0);
  ModelState st;
  st.gen = init_generator(n, strokes, rng);
  st.cls = init_classifier(n, rng);
  st.for_each_param([](const std::string&, Tensor& t) {
    std::fill(t.data.begin(), t.data.end(), real(0));
  });
  st.init_moments();
  return st;
}

inline ModelState init_model(const TrainConfig& cfg) {
  Rng rng(cfg.seed);
  ModelState st;
  st.gen = init_generator(cfg.n, cfg.strokes, rng);
  st.cls = init_classifier(cfg.n, rng);
  st.init_moments();
  return st;
}

/// i.i.d. uniform symbol indices.
inline std::vector<int64_t> make_batch(int64_t n, int64_t batch, Rng& rng) {
  if (n < 2) throw config_error("n must be >= 2");
  std::vector<int64_t> idx(static_cast<size_t>(batch));
  for (auto& i : idx) i = static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(n)));
  return idx;
}

struct StepStats {
  real loss = 0;
  real accuracy = 0;
};

namespace trainer_detail {

struct ForwardResult {
  Var loss;
  real accuracy;
};

/// Shared forward pass: indices + noise -> loss var, batch accuracy.
inline ForwardResult forward_pipeline(Tape& tp, const GeneratorParams& gen,
                                      const ClassifierParams& cls, const RasterConfig& rc,
                                      const std::vector<int64_t>& indices, Tensor noise,
                                      bool requires_grad) {
  GeneratorVars gv = watch(tp, gen, requires_grad);
  ClassifierVars cv = watch(tp, cls, requires_grad);
  Var nz = tp.leaf(std::move(noise), false);
  Var actions = generate_actions(tp, indices, nz, gv);
  Var canvas = render_symbol_op(tp, actions, rc);
  Var logits = classify(tp, canvas, cv);
  Var loss = softmax_cross_entropy(tp, logits, indices);
  auto pred = argmax_rows(tp.value(logits));
  int64_t hits = 0;
  for (size_t i = 0; i < indices.size(); ++i)
    if (pred[i] == indices[i]) ++hits;
  return {loss, static_cast<real>(hits) / static_cast<real>(indices.size())};
}

}  // namespace trainer_detail

/// Forward-only top-1 accuracy over fresh uniform indices and fresh noise.
inline real eval_accuracy(const GeneratorParams& gen, const ClassifierParams& cls,
                          const RasterConfig& rc, int64_t samples, real temperature, Rng& rng) {
  if (samples < 1) throw config_error("samples must be >= 1");
  int64_t done = 0, hits = 0;
  while (done < samples) {
    const int64_t b = std::min<int64_t>(64, samples - done);
    auto indices = make_batch(gen.n_symbols, b, rng);
    Tape tp;
    GeneratorVars gv = watch(tp, gen, false);
    ClassifierVars cv = watch(tp, cls, false);
    Var nz = tp.leaf(sample_noise(b, temperature, rng), false);
    Var actions = generate_actions(tp, indices, nz, gv);
    Var canvas = render_symbol_op(tp, actions, rc);
    Var logits = classify(tp, canvas, cv);
    auto pred = argmax_rows(tp.value(logits));
    for (size_t i = 0; i < indices.size(); ++i)
      if (pred[i] == indices[i]) ++hits;
    done += b;
  }
  return static_cast<real>(hits) / static_cast<real>(samples);
}

/// One training step: forward at T=1, backward, one Adam update over the
/// union of generator and classifier parameters.
inline StepStats train_step(ModelState& state, const TrainConfig& cfg, Rng& rng) {
  auto indices = make_batch(cfg.n, cfg.batch, rng);
  Tensor noise = sample_noise(cfg.batch, real(1), rng);
  Tape tp;
  auto fwd = trainer_detail::forward_pipeline(tp, state.gen, state.cls, cfg.raster(), indices,
                                              std::move(noise), true);
  const real loss = tp.value(fwd.loss).data[0];
  if (!std::isfinite(loss))
    throw training_error("non-finite loss " + std::to_string(loss) + " (batch of " +
                         std::to_string(cfg.batch) + " at n=" + std::to_string(cfg.n) + ")");
  tp.backward(fwd.loss);

  // Leaves were pushed first, in for_each_param order.
  AdamConfig ac;
  ac.lr = cfg.lr;
  state.adam_t += 1;
  Var v = 0;
  state.for_each_param([&](const std::string& name, Tensor& t) {
    const size_t i = static_cast<size_t>(v);
    adam_step(t.data, tp.grad(v), state.adam_m[i], state.adam_v[i], ac, state.adam_t, name);
    ++v;
  });
  return {loss, fwd.accuracy};
}

struct Checkpoint {
  ModelState state;
  TrainConfig config;
  int64_t step = 0;
  real val_accuracy = 0;
  Rng::state_type rng_state{};
};

struct MetricsRecord {
  int64_t step = 0;
  real loss = 0;
  real val_accuracy = 0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<MetricsRecord> metrics;
  bool aborted = false;
};

/// Full training loop. Validates every val_every steps on fresh samples at
/// T=1 and returns the checkpoint with the highest validation accuracy seen.
/// Persistent non-finite losses abort and return the best checkpoint so far.
template <class ProgressFn>
TrainResult train(const TrainConfig& cfg, ProgressFn&& progress) {
  cfg.validate();
  ModelState state = init_model(cfg);
  Rng rng(cfg.seed);

  auto validate_at = [&](int64_t step) {
    Rng vrng(cfg.seed ^ (0x5eed5eedull + static_cast<uint64_t>(step) * 0x9e3779b97f4a7c15ull));
    return eval_accuracy(state.gen, state.cls, cfg.raster(), cfg.val_samples, real(1), vrng);
  };

  TrainResult res;
  // Initial loss probe (no update) and initial validation seed the baseline.
  real last_loss;
  {
    Rng probe(cfg.seed ^ 0x1057ull);
    auto indices = make_batch(cfg.n, cfg.batch, probe);
    Tape tp;
    auto fwd = trainer_detail::forward_pipeline(tp, state.gen, state.cls, cfg.raster(), indices,
                                                sample_noise(cfg.batch, real(1), probe), false);
    last_loss = tp.value(fwd.loss).data[0];
  }
  const real init_acc = validate_at(0);
  res.best = Checkpoint{state, cfg, 0, init_acc, rng.state()};
  res.metrics.push_back({0, last_loss, init_acc});
  progress(0, last_loss, init_acc);

  int consecutive_failures = 0;
  for (int64_t step = 1; step <= cfg.steps; ++step) {
    StepStats stats;
    try {
      stats = train_step(state, cfg, rng);
      consecutive_failures = 0;
    } catch (const training_error&) {
      if (++consecutive_failures >= 5) {
        res.aborted = true;
        break;
      }
      continue;
    } catch (const optimizer_error&) {
      if (++consecutive_failures >= 5) {
        res.aborted = true;
        break;
      }
      continue;
    }
    last_loss = stats.loss;
    if (step % cfg.val_every == 0 || step == cfg.steps) {
      const real acc = validate_at(step);
      res.metrics.push_back({step, last_loss, acc});
      progress(step, last_loss, acc);
      if (acc > res.best.val_accuracy) res.best = Checkpoint{state, cfg, step, acc, rng.state()};
    }
  }
  return res;
}

inline TrainResult train(const TrainConfig& cfg) {
  return train(cfg, [](int64_t, real, real) {});
}

}  // namespace glyphforge
