#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "glyphforge/common.hpp"
#include "glyphforge/trainer.hpp"

namespace glyphforge {

struct checkpoint_format_error : io_error {
  explicit checkpoint_format_error(const std::string& m) : io_error("checkpoint format: " + m) {}
};
struct checkpoint_truncated_error : io_error {
  explicit checkpoint_truncated_error(const std::string& m)
      : io_error("checkpoint truncated: " + m) {}
};
struct checkpoint_checksum_error : io_error {
  explicit checkpoint_checksum_error(const std::string& m)
      : io_error("checkpoint checksum: " + m) {}
};

namespace ckpt_detail {

constexpr char kMagic[4] = {'G', 'L', 'F', 'K'};
constexpr uint32_t kVersion = 1;

inline uint32_t crc32(const uint8_t* data, size_t len) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t crc = 0xffffffffu;
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

class Writer {
 public:
  void raw(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void u32(uint32_t v) { le(v); }
  void u64(uint64_t v) { le(v); }
  void i64(int64_t v) { le(static_cast<uint64_t>(v)); }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    le(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void reals(const std::vector<real>& v) {
    u64(v.size());
    for (real x : v) f64(static_cast<double>(x));
  }
  std::vector<uint8_t> buf;

 private:
  template <class T>
  void le(T v) {
    for (size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  Reader(const uint8_t* p, size_t n) : p_(p), n_(n) {}
  void raw(void* dst, size_t n) {
    if (pos_ + n > n_) throw checkpoint_truncated_error("unexpected end of file");
    std::memcpy(dst, p_ + pos_, n);
    pos_ += n;
  }
  uint32_t u32() { return static_cast<uint32_t>(le(4)); }
  uint64_t u64() { return le(8); }
  int64_t i64() { return static_cast<int64_t>(le(8)); }
  double f64() {
    uint64_t bits = le(8);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    uint32_t n = u32();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  std::vector<real> reals() {
    uint64_t n = u64();
    if (pos_ + n * 8 > n_) throw checkpoint_truncated_error("tensor payload cut short");
    std::vector<real> v(n);
    for (auto& x : v) x = static_cast<real>(f64());
    return v;
  }
  size_t pos() const { return pos_; }

 private:
  uint64_t le(size_t bytes) {
    if (pos_ + bytes > n_) throw checkpoint_truncated_error("unexpected end of file");
    uint64_t v = 0;
    for (size_t i = 0; i < bytes; ++i) v |= static_cast<uint64_t>(p_[pos_ + i]) << (8 * i);
    pos_ += bytes;
    return v;
  }
  const uint8_t* p_;
  size_t n_, pos_ = 0;
};

}  // namespace ckpt_detail

inline std::vector<uint8_t> serialize_checkpoint(Checkpoint& ckpt) {
  using namespace ckpt_detail;
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  const TrainConfig& c = ckpt.config;
  w.i64(c.n);
  w.i64(c.strokes);
  w.i64(c.batch);
  w.f64(static_cast<double>(c.lr));
  w.i64(c.steps);
  w.i64(c.canvas);
  w.f64(static_cast<double>(c.sigma));
  w.u64(c.seed);
  w.i64(c.val_every);
  w.i64(c.val_samples);
  w.i64(ckpt.step);
  w.f64(static_cast<double>(ckpt.val_accuracy));
  for (uint64_t s : ckpt.rng_state) w.u64(s);
  w.i64(ckpt.state.adam_t);

  uint32_t count = 0;
  ckpt.state.for_each_param([&](const std::string&, Tensor&) { ++count; });
  w.u32(count);
  ckpt.state.for_each_param([&](const std::string& name, Tensor& t) {
    w.str(name);
    w.u32(static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) w.i64(d);
    w.reals(t.data);
  });
  for (uint32_t i = 0; i < count; ++i) {
    w.reals(ckpt.state.adam_m[i]);
    w.reals(ckpt.state.adam_v[i]);
  }
  const uint32_t crc = crc32(w.buf.data(), w.buf.size());
  w.u32(crc);
  return std::move(w.buf);
}

inline Checkpoint deserialize_checkpoint(const std::vector<uint8_t>& bytes) {
  using namespace ckpt_detail;
  if (bytes.size() < 12) throw checkpoint_truncated_error("file shorter than header");
  const size_t payload = bytes.size() - 4;
  {
    Reader tail(bytes.data() + payload, 4);
    const uint32_t stored = tail.u32();
    if (crc32(bytes.data(), payload) != stored)
      throw checkpoint_checksum_error("stored checksum does not match payload");
  }
  Reader r(bytes.data(), payload);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw checkpoint_format_error("bad magic");
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw checkpoint_format_error("unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  TrainConfig& c = ckpt.config;
  c.n = r.i64();
  c.strokes = r.i64();
  c.batch = r.i64();
  c.lr = static_cast<real>(r.f64());
  c.steps = r.i64();
  c.canvas = r.i64();
  c.sigma = static_cast<real>(r.f64());
  c.seed = r.u64();
  c.val_every = r.i64();
  c.val_samples = r.i64();
  ckpt.step = r.i64();
  ckpt.val_accuracy = static_cast<real>(r.f64());
  for (auto& s : ckpt.rng_state) s = r.u64();
  const int64_t adam_t = r.i64();

  ckpt.state = make_model_skeleton(c.n, c.strokes);
  ckpt.state.adam_t = adam_t;
  const uint32_t count = r.u32();
  uint32_t expected = 0;
  ckpt.state.for_each_param([&](const std::string&, Tensor&) { ++expected; });
  if (count != expected) throw checkpoint_format_error("parameter count mismatch");
  ckpt.state.for_each_param([&](const std::string& name, Tensor& t) {
    const std::string stored = r.str();
    if (stored != name)
      throw checkpoint_format_error("parameter order mismatch: expected " + name + ", found " +
                                    stored);
    const uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.i64();
    if (shape != t.shape)
      throw checkpoint_format_error("shape mismatch for " + name + ": " + shape_str(shape) +
                                    " vs " + shape_str(t.shape));
    t.data = r.reals();
    if (static_cast<int64_t>(t.data.size()) != numel(t.shape))
      throw checkpoint_format_error("payload size mismatch for " + name);
  });
  for (uint32_t i = 0; i < count; ++i) {
    ckpt.state.adam_m[i] = r.reals();
    ckpt.state.adam_v[i] = r.reals();
    if (ckpt.state.adam_m[i].size() != ckpt.state.adam_v[i].size())
      throw checkpoint_format_error("moment size mismatch");
  }
  return ckpt;
}

inline void save_checkpoint(Checkpoint& ckpt, const std::string& path) {
  auto bytes = serialize_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw io_error("write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace glyphforge
