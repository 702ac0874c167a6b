#include "gac/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <stdexcept>

namespace gac {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GAC_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return int(std::min(v, 256L));
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? int(hw) : 1;
}

void parallel_for_index(std::int64_t n, int threads,
                        const std::function<void(std::int64_t)>& body) {
  if (n <= 0) return;
  const int t = int(std::max<std::int64_t>(1, std::min<std::int64_t>(threads, n)));
  if (t == 1) {
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(t));
  for (int w = 0; w < t; ++w) {
    pool.emplace_back([&, w]() {
      for (std::int64_t i = w; i < n; i += t) {
        if (failed.load(std::memory_order_relaxed)) return;
        try {
          body(i);
        } catch (...) {
          if (!failed.exchange(true)) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

} // namespace gac
