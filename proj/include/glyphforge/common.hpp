#pragma once

#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace glyphforge {

#ifdef GLYPHFORGE_REAL
using real = GLYPHFORGE_REAL;
#else
using real = double;
#endif

struct shape_error : std::runtime_error {
  explicit shape_error(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct index_error : std::runtime_error {
  explicit index_error(const std::string& msg) : std::runtime_error("index error: " + msg) {}
};

struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct parameter_error : std::runtime_error {
  explicit parameter_error(const std::string& msg) : std::runtime_error("parameter error: " + msg) {}
};

struct optimizer_error : std::runtime_error {
  explicit optimizer_error(const std::string& msg) : std::runtime_error("optimizer error: " + msg) {}
};

struct training_error : std::runtime_error {
  explicit training_error(const std::string& msg) : std::runtime_error("training error: " + msg) {}
};

struct io_error : std::runtime_error {
  explicit io_error(const std::string& msg) : std::runtime_error("i/o error: " + msg) {}
};

/// Worker-thread cap: GLYPHFORGE_THREADS env var, else hardware concurrency.
inline int max_threads() {
  if (const char* env = std::getenv("GLYPHFORGE_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Runs fn(i) for i in [0, n). Work is split into contiguous chunks whose
/// boundaries do not depend on the thread count, so any reduction the caller
/// performs per-index stays deterministic.
template <typename Fn>
void parallel_for(int64_t n, Fn&& fn) {
  int threads = max_threads();
  if (threads <= 1 || n <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (threads > n) threads = static_cast<int>(n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  int64_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    int64_t lo = t * chunk;
    int64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace glyphforge
