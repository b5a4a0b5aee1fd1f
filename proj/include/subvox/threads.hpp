#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace subvox {

// Worker count: explicit request, else SUBVOX_THREADS, else hardware.
inline int thread_count(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SUBVOX_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs fn(i) for i in [0, n). Items must be independent; scheduling order is
// unspecified, so results must not depend on it.
inline void parallel_for(std::int64_t n, int threads, const std::function<void(std::int64_t)>& fn) {
  threads = std::min<std::int64_t>(thread_count(threads), n);
  if (threads <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::int64_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// Computes work items in parallel but folds them into shared state strictly
// in item order, so the reduction is bit-identical for any worker count.
// compute(i, slot) fills a per-thread slot; reduce(i, slot) runs serially in
// increasing i.
template <typename Slot>
void ordered_parallel_reduce(int n_items, int threads, std::vector<Slot>& slots,
                             const std::function<void(int, Slot&)>& compute,
                             const std::function<void(int, Slot&)>& reduce) {
  threads = std::min(thread_count(threads), std::max(n_items, 1));
  if (threads <= 1 || n_items <= 1) {
    Slot& slot = slots.at(0);
    for (int i = 0; i < n_items; ++i) {
      compute(i, slot);
      reduce(i, slot);
    }
    return;
  }
  std::atomic<int> next_claim{0};
  std::mutex m;
  std::condition_variable cv;
  int next_reduce = 0;
  std::exception_ptr error;

  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      Slot& slot = slots.at(static_cast<std::size_t>(t));
      for (;;) {
        const int i = next_claim.fetch_add(1);
        if (i >= n_items) return;
        try {
          compute(i, slot);
          std::unique_lock<std::mutex> lock(m);
          cv.wait(lock, [&] { return next_reduce == i || error; });
          if (error) return;
          reduce(i, slot);
          ++next_reduce;
          cv.notify_all();
        } catch (...) {
          std::lock_guard<std::mutex> lock(m);
          if (!error) error = std::current_exception();
          cv.notify_all();
          return;
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace subvox
