#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace mrsi {

namespace detail {
inline std::atomic<int> &thread_count()
{
  static std::atomic<int> n{1};
  return n;
}
} // namespace detail

inline void set_threads(int n) { detail::thread_count() = std::max(1, n); }
inline int threads() { return detail::thread_count(); }

// Static contiguous chunking. Each index is processed exactly once and writes
// only its own outputs, so results do not depend on the thread count.
template <typename F>
void parallel_for(std::ptrdiff_t n, F &&fn)
{
  int const nt = static_cast<int>(std::min<std::ptrdiff_t>(threads(), n));
  if (nt <= 1) {
    for (std::ptrdiff_t i = 0; i < n; i++) {
      fn(i);
    }
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(nt);
  std::ptrdiff_t const chunk = (n + nt - 1) / nt;
  for (int t = 0; t < nt; t++) {
    pool.emplace_back([&, t] {
      try {
        std::ptrdiff_t const lo = t * chunk;
        std::ptrdiff_t const hi = std::min(n, lo + chunk);
        for (std::ptrdiff_t i = lo; i < hi; i++) {
          fn(i);
        }
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto &th : pool) {
    th.join();
  }
  for (auto &e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

} // namespace mrsi
