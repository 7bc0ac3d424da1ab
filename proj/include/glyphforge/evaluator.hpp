#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "glyphforge/common.hpp"
#include "glyphforge/trainer.hpp"

namespace glyphforge {

/// Default temperature grid for sweeps.
inline std::vector<real> default_temperature_grid() {
  return {0, 0.25, 0.5, 1.0, 1.5, 2.0, 4.0};
}

/// Top-1 accuracy on fresh samples from the checkpointed model.
inline real measure_accuracy(const Checkpoint& ckpt, int64_t samples, real temperature,
                             uint64_t seed) {
  Rng rng(seed);
  return eval_accuracy(ckpt.state.gen, ckpt.state.cls, ckpt.config.raster(), samples, temperature,
                       rng);
}

// ---------------------------------------------------------------------------
// Accuracy vs N benchmark
// ---------------------------------------------------------------------------

struct NSweepRow {
  int64_t n = 0;
  int64_t seeds_requested = 0;
  std::vector<real> raw;  // per-seed accuracies; failed cells are absent
  real mean = 0;
  real stddev = 0;  // sample std over raw (ddof=1), 0 when fewer than 2 cells
};

struct NSweepReport {
  std::vector<NSweepRow> rows;  // sorted by n
  int64_t eval_samples = 0;
  real eval_temperature = 1;  // assumption: evaluation matches the training condition
};

inline void finalize_row(NSweepRow& row) {
  if (row.raw.empty()) return;
  real s = 0;
  for (real v : row.raw) s += v;
  row.mean = s / static_cast<real>(row.raw.size());
  if (row.raw.size() >= 2) {
    real ss = 0;
    for (real v : row.raw) ss += (v - row.mean) * (v - row.mean);
    row.stddev = std::sqrt(ss / static_cast<real>(row.raw.size() - 1));
  }
}

/// Trains one model per (N, seed) cell under the template config's step
/// budget and measures accuracy on eval_samples fresh draws. Individual cell
/// failures leave gaps rather than aborting the sweep.
template <class ProgressFn>
NSweepReport n_sweep(std::vector<int64_t> n_values, int64_t seeds, const TrainConfig& base,
                     int64_t eval_samples, ProgressFn&& progress) {
  for (int64_t n : n_values)
    if (n < 2) throw config_error("sweep n values must be >= 2");
  std::sort(n_values.begin(), n_values.end());
  NSweepReport report;
  report.eval_samples = eval_samples;
  for (int64_t n : n_values) {
    NSweepRow row;
    row.n = n;
    row.seeds_requested = seeds;
    for (int64_t s = 0; s < seeds; ++s) {
      TrainConfig cfg = base;
      cfg.n = n;
      cfg.seed = base.seed + static_cast<uint64_t>(s);
      try {
        TrainResult res = train(cfg);
        const real acc = measure_accuracy(res.best, eval_samples, real(1),
                                          cfg.seed ^ 0xe4a1ull);
        row.raw.push_back(acc);
        progress(n, s, acc);
      } catch (const std::exception&) {
        // missing cell
      }
    }
    finalize_row(row);
    report.rows.push_back(std::move(row));
  }
  return report;
}

inline NSweepReport n_sweep(std::vector<int64_t> n_values, int64_t seeds, const TrainConfig& base,
                            int64_t eval_samples = 10000) {
  return n_sweep(std::move(n_values), seeds, base, eval_samples, [](int64_t, int64_t, real) {});
}

// ---------------------------------------------------------------------------
// Temperature sweep
// ---------------------------------------------------------------------------

struct TemperatureSweep {
  std::vector<real> temperatures;
  std::vector<int64_t> symbols;
  int64_t canvas = 0;
  // canvases[symbol][temperature][sample] is one H*W image.
  std::vector<std::vector<std::vector<std::vector<real>>>> canvases;
  // Mean pairwise pixel L2 distance per (symbol, temperature) cell.
  std::vector<std::vector<real>> stochasticity;
};

inline real mean_pairwise_l2(const std::vector<std::vector<real>>& images) {
  if (images.size() < 2) return 0;
  real total = 0;
  int64_t pairs = 0;
  for (size_t i = 0; i < images.size(); ++i)
    for (size_t j = i + 1; j < images.size(); ++j) {
      real ss = 0;
      for (size_t q = 0; q < images[i].size(); ++q) {
        const real d = images[i][q] - images[j][q];
        ss += d * d;
      }
      total += std::sqrt(ss);
      ++pairs;
    }
  return total / static_cast<real>(pairs);
}

inline TemperatureSweep temperature_sweep(const Checkpoint& ckpt, std::vector<real> temperatures,
                                          std::vector<int64_t> symbols, int64_t samples_per_cell,
                                          uint64_t seed = 0) {
  if (temperatures.empty()) temperatures = default_temperature_grid();
  if (symbols.empty())
    for (int64_t i = 0; i < ckpt.config.n; ++i) symbols.push_back(i);
  for (int64_t s : symbols)
    if (s < 0 || s >= ckpt.config.n) throw index_error("symbol out of range");
  const RasterConfig rc = ckpt.config.raster();
  TemperatureSweep sweep;
  sweep.temperatures = temperatures;
  sweep.symbols = symbols;
  sweep.canvas = ckpt.config.canvas;
  Rng rng(seed ^ 0x7e4bull);
  for (int64_t sym : symbols) {
    std::vector<std::vector<std::vector<real>>> per_t;
    std::vector<real> stats;
    for (real T : temperatures) {
      std::vector<int64_t> indices(static_cast<size_t>(samples_per_cell), sym);
      auto actions = sample_actions(ckpt.state.gen, indices, T, rng);
      std::vector<std::vector<real>> images;
      images.reserve(actions.size());
      for (const auto& seq : actions) images.push_back(render_symbol(seq, rc));
      stats.push_back(mean_pairwise_l2(images));
      per_t.push_back(std::move(images));
    }
    sweep.canvases.push_back(std::move(per_t));
    sweep.stochasticity.push_back(std::move(stats));
  }
  return sweep;
}

// ---------------------------------------------------------------------------
// Redundant symbol detection
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
  int64_t n = 0;
  std::vector<int64_t> counts;  // n x n, counts[i*n+j] = true i predicted j
  std::vector<int64_t> totals;  // per-class sample counts

  real rate(int64_t i, int64_t j) const {
    return totals[static_cast<size_t>(i)] == 0
               ? real(0)
               : static_cast<real>(counts[static_cast<size_t>(i * n + j)]) /
                     static_cast<real>(totals[static_cast<size_t>(i)]);
  }
};

inline ConfusionMatrix confusion_matrix(const Checkpoint& ckpt, int64_t samples, real temperature,
                                        uint64_t seed) {
  const int64_t n = ckpt.config.n;
  ConfusionMatrix cm;
  cm.n = n;
  cm.counts.assign(static_cast<size_t>(n * n), 0);
  cm.totals.assign(static_cast<size_t>(n), 0);
  Rng rng(seed);
  const RasterConfig rc = ckpt.config.raster();
  int64_t done = 0;
  while (done < samples) {
    const int64_t b = std::min<int64_t>(64, samples - done);
    auto indices = make_batch(n, b, rng);
    Tape tp;
    GeneratorVars gv = watch(tp, ckpt.state.gen, false);
    ClassifierVars cv = watch(tp, ckpt.state.cls, false);
    Var nz = tp.leaf(sample_noise(b, temperature, rng), false);
    Var logits = classify(tp, render_symbol_op(tp, generate_actions(tp, indices, nz, gv), rc), cv);
    auto pred = argmax_rows(tp.value(logits));
    for (size_t i = 0; i < indices.size(); ++i) {
      cm.counts[static_cast<size_t>(indices[i] * n + pred[i])] += 1;
      cm.totals[static_cast<size_t>(indices[i])] += 1;
    }
    done += b;
  }
  return cm;
}

struct RedundantPair {
  int64_t a = 0, b = 0;
  real canvas_distance = 0;   // RMS pixel distance between canonical forms
  real confusion = 0;         // max of the two directed confusion rates
  bool by_distance = false;
  bool by_confusion = false;
};

/// Canonical T=0 canvases per symbol whose RMS pixel distance falls below
/// threshold, plus pairs confused above 10% in a sampled confusion matrix.
inline std::vector<RedundantPair> detect_redundancy(const Checkpoint& ckpt, real threshold,
                                                    int64_t confusion_samples = 10000,
                                                    uint64_t seed = 0) {
  const int64_t n = ckpt.config.n;
  const RasterConfig rc = ckpt.config.raster();
  std::vector<int64_t> all(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
  Rng rng(seed);
  auto actions = sample_actions(ckpt.state.gen, all, real(0), rng);
  std::vector<std::vector<real>> canonical;
  canonical.reserve(actions.size());
  for (const auto& seq : actions) canonical.push_back(render_symbol(seq, rc));

  const ConfusionMatrix cm = confusion_matrix(ckpt, confusion_samples, real(1), seed ^ 0xc0f5ull);

  std::vector<RedundantPair> pairs;
  const real inv_npx = real(1) / static_cast<real>(rc.height * rc.width);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) {
      real ss = 0;
      for (size_t q = 0; q < canonical[static_cast<size_t>(i)].size(); ++q) {
        const real d =
            canonical[static_cast<size_t>(i)][q] - canonical[static_cast<size_t>(j)][q];
        ss += d * d;
      }
      const real dist = std::sqrt(ss * inv_npx);
      const real conf = std::max(cm.rate(i, j), cm.rate(j, i));
      RedundantPair p{i, j, dist, conf, dist < threshold, conf > real(0.10)};
      if (p.by_distance || p.by_confusion) pairs.push_back(p);
    }
  return pairs;
}

}  // namespace glyphforge
