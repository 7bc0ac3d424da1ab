#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "glyphforge/classifier.hpp"
#include "glyphforge/common.hpp"
#include "glyphforge/generator.hpp"
#include "glyphforge/rasterizer.hpp"
#include "glyphforge/rng.hpp"
#include "glyphforge/tape.hpp"
#include "glyphforge/trainer.hpp"

namespace glyphforge {

struct GradCheckResult {
  std::string name;
  real max_rel_err = 0;
  real tolerance = 0;
  bool pass = false;
};

struct GradCheckOptions {
  uint64_t seed = 0;
  real primitive_tol = 1e-5;
  real primitive_step = 1e-5;
  real raster_tol = 1e-3;
  // The soft-max sharpness makes third derivatives large; central-difference
  // truncation error scales as h^2 and needs h=1e-5 to sit safely under tol.
  real raster_step = 1e-5;
  real e2e_tol = 1e-3;
  int raster_configs = 50;
  int e2e_params = 50;
  bool inject_fault = false;  // test fixture: adds a deliberately wrong backward
  real tol_override = -1;     // when positive, replaces every tolerance
};

namespace gradcheck_detail {

inline real rel_err(real analytic, real fd) {
  const real denom = std::max({std::abs(analytic), std::abs(fd), real(1e-8)});
  return std::abs(analytic - fd) / denom;
}

/// Checks the analytic gradient of a random scalar projection of the graph's
/// output against central finite differences over every input element.
/// build(tape, leaves) must return the output var; inputs are the leaf values.
inline real check_graph(const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                        const std::vector<Tensor>& inputs, real step, Rng& rng) {
  // Random projection weights fixed across all evaluations.
  std::vector<real> proj;
  {
    Tape tp;
    std::vector<Var> leaves;
    for (const auto& in : inputs) leaves.push_back(tp.leaf(in, false));
    Var out = build(tp, leaves);
    proj.resize(tp.value(out).data.size());
    for (auto& w : proj) w = rng.uniform(-1, 1);
  }
  auto project = [&](const std::vector<Tensor>& vals, bool with_grad,
                     std::vector<std::vector<real>>* grads) {
    Tape tp;
    std::vector<Var> leaves;
    for (const auto& in : vals) leaves.push_back(tp.leaf(in, with_grad));
    Var out = build(tp, leaves);
    Tensor w = Tensor::zeros(tp.value(out).shape);
    w.data = proj;
    Var loss = sum(tp, mul(tp, out, tp.leaf(std::move(w), false)));
    const real value = tp.value(loss).data[0];
    if (with_grad) {
      tp.backward(loss);
      grads->clear();
      for (Var v : leaves) grads->push_back(tp.grad(v));
    }
    return value;
  };

  std::vector<std::vector<real>> analytic;
  project(inputs, true, &analytic);

  real worst = 0;
  std::vector<Tensor> perturbed = inputs;
  for (size_t t = 0; t < inputs.size(); ++t) {
    for (size_t i = 0; i < inputs[t].data.size(); ++i) {
      const real orig = perturbed[t].data[i];
      perturbed[t].data[i] = orig + step;
      const real hi = project(perturbed, false, nullptr);
      perturbed[t].data[i] = orig - step;
      const real lo = project(perturbed, false, nullptr);
      perturbed[t].data[i] = orig;
      const real fd = (hi - lo) / (2 * step);
      worst = std::max(worst, rel_err(analytic[t][i], fd));
    }
  }
  return worst;
}

/// relu with a sign-flipped backward; exists only to prove the checker
/// catches a broken kernel.
inline Var relu_faulty(Tape& tp, Var x) {
  const Tensor& X = tp.value(x);
  Tensor Y = Tensor::zeros(X.shape);
  for (size_t i = 0; i < X.data.size(); ++i) Y.data[i] = X.data[i] > 0 ? X.data[i] : real(0);
  const Var out = tp.next_id();
  return tp.push(std::move(Y), tp.needs_grad(x), [x, out](Tape& t) {
    const auto& go = t.grad_buffer(out);
    const Tensor& X = t.value(x);
    auto& gx = t.grad_buffer(x);
    for (size_t i = 0; i < gx.size(); ++i)
      if (X.data[i] > 0) gx[i] -= go[i];
  });
}

inline Tensor random_tensor(Shape shape, Rng& rng, real lo = -2, real hi = 2,
                            real avoid_zero_band = 0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) {
    do {
      v = rng.uniform(lo, hi);
    } while (avoid_zero_band > 0 && std::abs(v) < avoid_zero_band);
  }
  return t;
}

}  // namespace gradcheck_detail

/// Runs the full finite-difference suite: every autodiff primitive, the
/// stroke renderer, and the whole generate->render->classify->loss chain.
inline std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& opt) {
  using namespace gradcheck_detail;
  Rng rng(opt.seed);
  std::vector<GradCheckResult> results;
  auto tol_of = [&](real t) { return opt.tol_override > 0 ? opt.tol_override : t; };
  auto record = [&](const std::string& name, real err, real tol) {
    results.push_back({name, err, tol, err < tol});
  };

  // --- primitives ---
  {
    auto a = random_tensor({4, 5}, rng);
    auto b = random_tensor({5, 3}, rng);
    real err = check_graph([](Tape& t, const std::vector<Var>& l) { return matmul(t, l[0], l[1]); },
                           {a, b}, opt.primitive_step, rng);
    record("matmul", err, tol_of(opt.primitive_tol));
  }
  {
    auto x = random_tensor({2, 3, 8, 8}, rng);
    auto k = random_tensor({4, 3, 3, 3}, rng);
    real err = check_graph(
        [](Tape& t, const std::vector<Var>& l) { return conv2d(t, l[0], l[1], 2, 1); }, {x, k},
        opt.primitive_step, rng);
    record("conv2d", err, tol_of(opt.primitive_tol));
  }
  {
    auto x = random_tensor({3, 7}, rng, -2, 2, /*avoid_zero_band=*/0.01);
    real err = check_graph([](Tape& t, const std::vector<Var>& l) { return relu(t, l[0]); }, {x},
                           opt.primitive_step, rng);
    record("relu", err, tol_of(opt.primitive_tol));
  }
  {
    auto x = random_tensor({3, 7}, rng);
    real err = check_graph([](Tape& t, const std::vector<Var>& l) { return sigmoid(t, l[0]); },
                           {x}, opt.primitive_step, rng);
    record("sigmoid", err, tol_of(opt.primitive_tol));
  }
  {
    auto x = random_tensor({3, 7}, rng);
    real err = check_graph([](Tape& t, const std::vector<Var>& l) { return tanh_op(t, l[0]); },
                           {x}, opt.primitive_step, rng);
    record("tanh", err, tol_of(opt.primitive_tol));
  }
  {
    auto a = random_tensor({4, 6}, rng);
    auto b = random_tensor({4, 6}, rng);
    real err =
        check_graph([](Tape& t, const std::vector<Var>& l) { return add(t, l[0], l[1]); }, {a, b},
                    opt.primitive_step, rng);
    record("add", err, tol_of(opt.primitive_tol));
  }
  {
    auto a = random_tensor({4, 6}, rng);
    auto b = random_tensor({4, 6}, rng);
    real err =
        check_graph([](Tape& t, const std::vector<Var>& l) { return mul(t, l[0], l[1]); }, {a, b},
                    opt.primitive_step, rng);
    record("mul", err, tol_of(opt.primitive_tol));
  }
  {
    auto x = random_tensor({5, 5}, rng);
    real err = check_graph(
        [](Tape& t, const std::vector<Var>& l) { return scale(t, l[0], real(-1.7)); }, {x},
        opt.primitive_step, rng);
    record("scale", err, tol_of(opt.primitive_tol));
  }
  {
    auto x = random_tensor({2, 4, 5, 5}, rng);
    auto b = random_tensor({4}, rng);
    real err = check_graph(
        [](Tape& t, const std::vector<Var>& l) { return bias_add(t, l[0], l[1]); }, {x, b},
        opt.primitive_step, rng);
    record("bias_add", err, tol_of(opt.primitive_tol));
  }
  {
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({3, 6}, rng);
    real err = check_graph(
        [](Tape& t, const std::vector<Var>& l) { return concat_cols(t, l[0], l[1]); }, {a, b},
        opt.primitive_step, rng);
    record("concat_cols", err, tol_of(opt.primitive_tol));
  }
  {
    auto table = random_tensor({6, 4}, rng);
    std::vector<int64_t> idx = {0, 3, 3, 5, 1};
    real err = check_graph(
        [idx](Tape& t, const std::vector<Var>& l) { return gather_rows(t, l[0], idx); }, {table},
        opt.primitive_step, rng);
    record("gather_rows", err, tol_of(opt.primitive_tol));
  }
  {
    auto x = random_tensor({2, 3, 4, 4}, rng);
    real err = check_graph([](Tape& t, const std::vector<Var>& l) { return mean_spatial(t, l[0]); },
                           {x}, opt.primitive_step, rng);
    record("mean_spatial", err, tol_of(opt.primitive_tol));
  }
  {
    auto x = random_tensor({3, 5}, rng);
    real err = check_graph([](Tape& t, const std::vector<Var>& l) { return sum(t, l[0]); }, {x},
                           opt.primitive_step, rng);
    record("sum", err, tol_of(opt.primitive_tol));
  }
  {
    auto logits = random_tensor({4, 10}, rng);
    std::vector<int64_t> targets;
    for (int i = 0; i < 4; ++i) targets.push_back(static_cast<int64_t>(rng.uniform_index(10)));
    real err = check_graph(
        [targets](Tape& t, const std::vector<Var>& l) {
          return softmax_cross_entropy(t, l[0], targets);
        },
        {logits}, opt.primitive_step, rng);
    record("softmax_cross_entropy", err, tol_of(opt.primitive_tol));
  }

  // --- rasterizer: random strokes on a 16x16 canvas ---
  {
    RasterConfig rc;
    rc.height = 16;
    rc.width = 16;
    rc.sigma = 0.06;
    real worst = 0;
    for (int c = 0; c < opt.raster_configs; ++c) {
      const int strokes = 1 + static_cast<int>(rng.uniform_index(3));
      Tensor actions = random_tensor({1, strokes * Stroke::kFields}, rng, 0.08, 0.92);
      worst = std::max(worst, check_graph(
                                  [rc](Tape& t, const std::vector<Var>& l) {
                                    return render_symbol_op(t, l[0], rc);
                                  },
                                  {actions}, opt.raster_step, rng));
    }
    record("render_symbol", worst, tol_of(opt.raster_tol));
  }

  // --- end-to-end: embedding -> MLP -> rasterizer -> CNN -> loss ---
  {
    TrainConfig cfg;
    cfg.n = 5;
    cfg.strokes = 3;
    cfg.batch = 1;
    cfg.canvas = 24;
    cfg.sigma = 0.05;
    cfg.seed = opt.seed ^ 0xe2eull;
    ModelState state = init_model(cfg);
    // Blank canvas regions make conv pre-activations exactly equal to the
    // bias; zero-initialized biases would park them on the relu hinge, where
    // central differences straddle the kink. Jitter every parameter so each
    // element sits at least 0.02 away from zero, well outside the probe step.
    state.for_each_param([&](const std::string&, Tensor& t) {
      for (auto& v : t.data) {
        const real sgn = rng.uniform() < real(0.5) ? real(-1) : real(1);
        v += sgn * rng.uniform(0.02, 0.08);
      }
    });
    Rng drng(cfg.seed + 1);
    const std::vector<int64_t> indices = {static_cast<int64_t>(drng.uniform_index(5))};
    Tensor noise = sample_noise(1, real(1), drng);

    auto loss_value = [&](ModelState& st) {
      Tape tp;
      auto fwd = trainer_detail::forward_pipeline(tp, st.gen, st.cls, cfg.raster(), indices,
                                                  noise, false);
      return tp.value(fwd.loss).data[0];
    };
    // Analytic gradients for every parameter.
    std::vector<std::vector<real>> analytic;
    {
      Tape tp;
      auto fwd = trainer_detail::forward_pipeline(tp, state.gen, state.cls, cfg.raster(), indices,
                                                  noise, true);
      tp.backward(fwd.loss);
      Var v = 0;
      state.for_each_param([&](const std::string&, Tensor&) { analytic.push_back(tp.grad(v)); ++v; });
    }
    std::vector<std::pair<size_t, Tensor*>> params;
    state.for_each_param([&](const std::string&, Tensor& t) {
      params.emplace_back(params.size(), &t);
    });
    real worst = 0;
    int checked = 0, attempts = 0;
    const real step = real(1e-5);
    while (checked < opt.e2e_params && attempts < opt.e2e_params * 20) {
      ++attempts;
      const size_t pi = rng.uniform_index(params.size());
      Tensor& t = *params[pi].second;
      const size_t ei = rng.uniform_index(t.data.size());
      const real orig = t.data[ei];
      t.data[ei] = orig + step;
      const real hi = loss_value(state);
      t.data[ei] = orig - step;
      const real lo = loss_value(state);
      t.data[ei] = orig;
      const real fd = (hi - lo) / (2 * step);
      // Skip directions where the finite difference sits in its own noise
      // floor; they carry no signal about the backward kernels.
      if (std::abs(fd) < real(1e-7) && std::abs(analytic[pi][ei]) < real(1e-7)) continue;
      worst = std::max(worst, rel_err(analytic[pi][ei], fd));
      ++checked;
    }
    record("end_to_end(" + std::to_string(checked) + " params)", worst, tol_of(opt.e2e_tol));
  }

  if (opt.inject_fault) {
    auto x = random_tensor({3, 7}, rng, -2, 2, 0.01);
    real err = check_graph([](Tape& t, const std::vector<Var>& l) { return relu_faulty(t, l[0]); },
                           {x}, opt.primitive_step, rng);
    record("relu(injected sign fault)", err, tol_of(opt.primitive_tol));
  }
  return results;
}

}  // namespace glyphforge
