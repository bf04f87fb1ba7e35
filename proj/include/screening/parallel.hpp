#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace screening {

/// Worker count: SCREEN_THREADS if set and positive, else hardware concurrency.
inline int thread_count() {
  if (const char* env = std::getenv("SCREEN_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {
inline thread_local bool in_worker = false;
}

/// Runs body(i) for i in [0, count). Work is handed out by index, so results
/// written to slot i do not depend on the number of workers. The first
/// exception thrown by any body is rethrown on the caller's thread. Calls
/// made from inside a worker run serially.
template <typename Body>
void parallel_for(std::size_t count, Body&& body, int threads = 0) {
  if (threads <= 0) threads = thread_count();
  threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(threads), count));
  if (threads <= 1 || detail::in_worker) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    const bool outer = detail::in_worker;
    detail::in_worker = true;
    struct Reset {
      bool value;
      ~Reset() { detail::in_worker = value; }
    } reset{outer};
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace screening
