// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal fork-join helper. parallel_for partitions [0, n) into contiguous
// chunks with a fixed ownership rule, so results are identical for any
// worker count; with one worker it degenerates to an inline loop with zero
// threading overhead (this matters on single-core hosts).

#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace stg {

class ThreadLimit {
 public:
  // 0 means "use hardware concurrency".
  static void set(unsigned n) { value_ref() = n; }
  static unsigned get() {
    unsigned v = value_ref();
    if (v == 0) {
      v = std::thread::hardware_concurrency();
      if (v == 0) v = 1;
    }
    return v;
  }

 private:
  static unsigned& value_ref() {
    static unsigned v = 0;
    return v;
  }
};

// body(begin, end) is invoked on disjoint ranges covering [0, n).
// Ranges depend only on (n, workers), never on scheduling order.
inline void parallel_for(size_t n, const std::function<void(size_t, size_t)>& body,
                         size_t min_per_worker = 1024) {
  if (n == 0) return;
  size_t workers = ThreadLimit::get();
  workers = std::min(workers, std::max<size_t>(1, n / std::max<size_t>(1, min_per_worker)));
  if (workers <= 1) {
    body(0, n);
    return;
  }
  const size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  std::exception_ptr first_error = nullptr;
  std::mutex mu;
  for (size_t w = 0; w < workers; ++w) {
    const size_t b = w * chunk;
    const size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    threads.emplace_back([&, b, e] {
      try {
        body(b, e);
      } catch (...) {
        std::lock_guard<std::mutex> lk(mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace stg
