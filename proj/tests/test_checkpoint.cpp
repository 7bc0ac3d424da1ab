#include "doctest.h"

#include <cstdio>
#include <string>
#include <vector>

#include "glyphforge/checkpoint.hpp"

using namespace glyphforge;

namespace {

Checkpoint trained_checkpoint() {
  TrainConfig cfg;
  cfg.n = 4;
  cfg.strokes = 2;
  cfg.batch = 4;
  cfg.canvas = 16;
  cfg.sigma = 0.05;
  cfg.steps = 6;
  cfg.val_every = 3;
  cfg.val_samples = 64;
  cfg.seed = 77;
  return train(cfg).best;
}

std::vector<uint8_t> with_fresh_crc(std::vector<uint8_t> bytes) {
  const uint32_t crc = ckpt_detail::crc32(bytes.data(), bytes.size() - 4);
  for (int i = 0; i < 4; ++i) bytes[bytes.size() - 4 + static_cast<size_t>(i)] =
      static_cast<uint8_t>(crc >> (8 * i));
  return bytes;
}

}  // namespace

TEST_CASE("serialize / deserialize / serialize is byte-identical") {
  Checkpoint ckpt = trained_checkpoint();
  auto bytes1 = serialize_checkpoint(ckpt);
  Checkpoint back = deserialize_checkpoint(bytes1);
  auto bytes2 = serialize_checkpoint(back);
  CHECK(bytes1 == bytes2);
  CHECK(back.step == ckpt.step);
  CHECK(back.val_accuracy == ckpt.val_accuracy);
  CHECK(back.rng_state == ckpt.rng_state);
  CHECK(back.state.adam_t == ckpt.state.adam_t);
  CHECK(back.config.n == ckpt.config.n);
  CHECK(back.config.seed == ckpt.config.seed);
}

TEST_CASE("file round trip preserves every byte") {
  Checkpoint ckpt = trained_checkpoint();
  const std::string path = "test_ckpt_roundtrip.bin";
  save_checkpoint(ckpt, path);
  Checkpoint back = load_checkpoint(path);
  auto a = serialize_checkpoint(ckpt);
  auto b = serialize_checkpoint(back);
  CHECK(a == b);
  std::remove(path.c_str());
}

TEST_CASE("a corrupted payload byte trips the checksum") {
  Checkpoint ckpt = trained_checkpoint();
  auto bytes = serialize_checkpoint(ckpt);
  bytes[bytes.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(deserialize_checkpoint(bytes), checkpoint_checksum_error);
}

TEST_CASE("a truncated payload with a valid checksum reports truncation") {
  Checkpoint ckpt = trained_checkpoint();
  auto bytes = serialize_checkpoint(ckpt);
  bytes.resize(bytes.size() - 300);  // drop tail, keep room for a new crc
  CHECK_THROWS_AS(deserialize_checkpoint(with_fresh_crc(bytes)), checkpoint_truncated_error);
  CHECK_THROWS_AS(deserialize_checkpoint(std::vector<uint8_t>{1, 2, 3}),
                  checkpoint_truncated_error);
}

TEST_CASE("bad magic and unknown versions are format errors") {
  Checkpoint ckpt = trained_checkpoint();
  auto bytes = serialize_checkpoint(ckpt);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(with_fresh_crc(bad_magic)), checkpoint_format_error);
  auto bad_version = bytes;
  bad_version[4] = 99;
  CHECK_THROWS_AS(deserialize_checkpoint(with_fresh_crc(bad_version)), checkpoint_format_error);
}

TEST_CASE("a loaded checkpoint reproduces its recorded validation accuracy") {
  Checkpoint ckpt = trained_checkpoint();
  auto bytes = serialize_checkpoint(ckpt);
  Checkpoint back = deserialize_checkpoint(bytes);
  Rng vrng(back.config.seed ^
           (0x5eed5eedull + static_cast<uint64_t>(back.step) * 0x9e3779b97f4a7c15ull));
  const real acc = eval_accuracy(back.state.gen, back.state.cls, back.config.raster(),
                                 back.config.val_samples, 1, vrng);
  CHECK(acc == back.val_accuracy);
}
