#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "glyphforge/common.hpp"
#include "glyphforge/rng.hpp"

namespace glyphforge {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

/// Dense row-major real tensor. grad is either empty or the same size as data.
struct Tensor {
  Shape shape;
  std::vector<real> data;
  bool requires_grad = false;
  std::vector<real> grad;

  Tensor() = default;
  Tensor(Shape s, std::vector<real> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != static_cast<int64_t>(data.size()))
      throw shape_error("data length " + std::to_string(data.size()) + " does not match shape " +
                        shape_str(shape));
  }

  static Tensor zeros(Shape s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(static_cast<size_t>(numel(t.shape)), real(0));
    return t;
  }

  static Tensor full(Shape s, real value) {
    Tensor t = zeros(std::move(s));
    for (auto& v : t.data) v = value;
    return t;
  }

  static Tensor scalar(real value) { return Tensor({1}, {value}); }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int64_t dim(size_t i) const { return shape.at(i); }
  int rank() const { return static_cast<int>(shape.size()); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), real(0));
  }
  void zero_grad() {
    if (!grad.empty()) grad.assign(data.size(), real(0));
  }

  bool all_finite() const {
    for (real v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

#ifndef NDEBUG
inline void debug_check_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) throw std::runtime_error(std::string("non-finite value in ") + where);
}
#else
inline void debug_check_finite(const Tensor&, const char*) {}
#endif

/// i.i.d. Normal(0, std^2).
inline Tensor randn(Shape s, Rng& rng, real stddev = 1) {
  Tensor t = Tensor::zeros(std::move(s));
  for (auto& v : t.data) v = stddev * static_cast<real>(rng.normal());
  return t;
}

/// i.i.d. Uniform(lo, hi).
inline Tensor rand_uniform(Shape s, Rng& rng, real lo, real hi) {
  Tensor t = Tensor::zeros(std::move(s));
  for (auto& v : t.data) v = static_cast<real>(rng.uniform(lo, hi));
  return t;
}

}  // namespace glyphforge
