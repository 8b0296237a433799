#pragma once

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#if defined(__GLIBC__) || defined(__linux__)
#include <malloc.h>
#endif

namespace s2i {

#if defined(__GLIBC__) || defined(__linux__)
// Large activation buffers churn every batch; keep them on the heap instead
// of round-tripping through mmap.
inline const bool kMallocTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  return true;
}();
#endif

// All library errors carry a "category: message" string so callers can
// surface a single machine-parseable line.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& category, const std::string& msg) {
  throw Error(category + ": " + msg);
}

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline void check_shape(bool cond, const std::string& msg) {
  if (!cond) fail("shape", msg);
}

// Worker count for intra-op parallelism. Defaults to S2I_NUM_THREADS if set,
// otherwise the hardware concurrency. Results are independent of this value:
// every output element is produced by exactly one worker with a fixed
// accumulation order.
inline int& worker_count() {
  static int workers = [] {
    if (const char* env = std::getenv("S2I_NUM_THREADS")) {
      int n = std::atoi(env);
      if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
  }();
  return workers;
}

inline void set_worker_count(int n) {
  if (n < 1) fail("config", "worker count must be >= 1");
  worker_count() = n;
}

// Static range partition. fn(begin, end) runs on each chunk; chunk boundaries
// never affect results because indices are independent.
inline void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  int w = worker_count();
  if (n <= 0) return;
  if (w == 1 || n < 2 * w) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(w) - 1);
  int64_t chunk = (n + w - 1) / w;
  for (int t = 1; t < w; ++t) {
    int64_t begin = t * chunk;
    int64_t end = std::min<int64_t>(begin + chunk, n);
    if (begin >= end) break;
    threads.emplace_back(fn, begin, end);
  }
  fn(0, std::min<int64_t>(chunk, n));
  for (auto& th : threads) th.join();
}

}  // namespace s2i
