#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "glyphforge/trainer.hpp"

using namespace glyphforge;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.n = 4;
  cfg.strokes = 2;
  cfg.batch = 4;
  cfg.canvas = 16;
  cfg.sigma = 0.05;
  cfg.steps = 10;
  cfg.val_every = 5;
  cfg.val_samples = 32;
  cfg.seed = 123;
  return cfg;
}

}  // namespace

TEST_CASE("uniform batches hit both classes of n=2 about equally") {
  Rng rng(1);
  auto idx = make_batch(2, 100000, rng);
  int64_t zeros = 0;
  for (int64_t i : idx) {
    CHECK(i >= 0);
    CHECK(i < 2);
    zeros += (i == 0);
  }
  const double f = static_cast<double>(zeros) / 100000.0;
  CHECK(f > 0.49);
  CHECK(f < 0.51);
}

TEST_CASE("batches replay exactly from a saved rng state") {
  Rng rng(9);
  auto saved = rng.state();
  auto a = make_batch(10, 64, rng);
  rng.set_state(saved);
  auto b = make_batch(10, 64, rng);
  CHECK(a == b);
  CHECK_THROWS_AS(make_batch(1, 4, rng), config_error);
}

TEST_CASE("initial loss sits near ln N across seeds") {
  TrainConfig cfg;
  cfg.n = 10;
  cfg.canvas = 24;
  cfg.sigma = 0.04;
  const real target = std::log(real(10));
  for (uint64_t seed = 0; seed < 20; ++seed) {
    cfg.seed = seed;
    ModelState st = init_model(cfg);
    Rng rng(seed ^ 0xabcdull);
    auto indices = make_batch(cfg.n, cfg.batch, rng);
    Tape tp;
    auto fwd = trainer_detail::forward_pipeline(tp, st.gen, st.cls, cfg.raster(), indices,
                                                sample_noise(cfg.batch, 1, rng), false);
    CHECK(std::abs(tp.value(fwd.loss).data[0] - target) < 0.7);
  }
}

TEST_CASE("the first optimizer step reports a loss near ln N") {
  TrainConfig cfg;
  cfg.n = 10;
  cfg.canvas = 16;
  cfg.sigma = 0.05;
  cfg.seed = 4;
  ModelState st = init_model(cfg);
  Rng rng(cfg.seed);
  StepStats s = train_step(st, cfg, rng);
  CHECK(std::abs(s.loss - std::log(real(10))) < 0.7);
  CHECK(st.adam_t == 1);
  CHECK(s.accuracy >= 0);
  CHECK(s.accuracy <= 1);
}

TEST_CASE("same-seed training produces bit-identical loss trajectories") {
  TrainConfig cfg = tiny_config();
  auto run = [&cfg]() {
    ModelState st = init_model(cfg);
    Rng rng(cfg.seed);
    std::vector<real> losses;
    for (int step = 1; step <= 20; ++step) losses.push_back(train_step(st, cfg, rng).loss);
    return losses;
  };
  auto a = run();
  auto b = run();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("every trainable tensor moves within ten steps") {
  TrainConfig cfg = tiny_config();
  ModelState st = init_model(cfg);
  ModelState init = st;
  Rng rng(cfg.seed);
  for (int step = 1; step <= 10; ++step) train_step(st, cfg, rng);
  std::vector<Tensor*> before, after;
  init.for_each_param([&](const std::string&, Tensor& t) { before.push_back(&t); });
  st.for_each_param([&](const std::string&, Tensor& t) { after.push_back(&t); });
  REQUIRE(before.size() == after.size());
  for (size_t k = 0; k < before.size(); ++k) {
    bool moved = false;
    for (size_t i = 0; i < before[k]->data.size(); ++i)
      moved |= (before[k]->data[i] != after[k]->data[i]);
    CHECK(moved);
  }
}

TEST_CASE("zero-step training returns the initial model with chance accuracy") {
  TrainConfig cfg = tiny_config();
  cfg.steps = 0;
  cfg.val_samples = 512;
  TrainResult res = train(cfg);
  CHECK(res.best.step == 0);
  CHECK(!res.aborted);
  REQUIRE(res.metrics.size() == 1);
  CHECK(res.metrics[0].step == 0);
  CHECK(std::abs(res.best.val_accuracy - real(1) / 4) < 0.1);
  ModelState fresh = init_model(cfg);
  std::vector<Tensor*> a, b;
  fresh.for_each_param([&](const std::string&, Tensor& t) { a.push_back(&t); });
  res.best.state.for_each_param([&](const std::string&, Tensor& t) { b.push_back(&t); });
  for (size_t k = 0; k < a.size(); ++k)
    for (size_t i = 0; i < a[k]->data.size(); ++i) CHECK(a[k]->data[i] == b[k]->data[i]);
}

TEST_CASE("the returned checkpoint dominates every validation point") {
  TrainConfig cfg = tiny_config();
  cfg.steps = 20;
  TrainResult res = train(cfg);
  for (const auto& m : res.metrics) CHECK(res.best.val_accuracy >= m.val_accuracy);
}

TEST_CASE("full training runs are deterministic end to end") {
  TrainConfig cfg = tiny_config();
  TrainResult a = train(cfg);
  TrainResult b = train(cfg);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].step == b.metrics[i].step);
    CHECK(a.metrics[i].loss == b.metrics[i].loss);
    CHECK(a.metrics[i].val_accuracy == b.metrics[i].val_accuracy);
  }
  CHECK(a.best.step == b.best.step);
  CHECK(a.best.val_accuracy == b.best.val_accuracy);
}

TEST_CASE("poisoned parameters surface as a training error") {
  TrainConfig cfg = tiny_config();
  ModelState st = init_model(cfg);
  st.cls.head_b.data[0] = std::numeric_limits<real>::quiet_NaN();
  Rng rng(cfg.seed);
  CHECK_THROWS_AS(train_step(st, cfg, rng), training_error);
}

TEST_CASE("invalid configurations are rejected up front") {
  TrainConfig cfg = tiny_config();
  cfg.n = 1;
  CHECK_THROWS_AS(cfg.validate(), config_error);
  cfg = tiny_config();
  cfg.lr = 0;
  CHECK_THROWS_AS(cfg.validate(), config_error);
  cfg = tiny_config();
  cfg.steps = -1;
  CHECK_THROWS_AS(train(cfg), config_error);
  cfg = tiny_config();
  cfg.canvas = 4;
  CHECK_THROWS_AS(cfg.validate(), config_error);
}
