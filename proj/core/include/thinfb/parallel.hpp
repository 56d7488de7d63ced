#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace thinfb {

// Worker count, capped by THINFB_THREADS when set.
inline int thread_count() {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("THINFB_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

// Calls f(i) for i in [begin, end). Work is split into contiguous chunks;
// results must not depend on the split.
template <class F>
void parallel_for(int begin, int end, F&& f) {
  const int total = end - begin;
  if (total <= 0) return;
  const int nt = std::min(thread_count(), total);
  if (nt <= 1) {
    for (int i = begin; i < end; ++i) f(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(nt);
  for (int t = 0; t < nt; ++t) {
    const int lo = begin + total * t / nt;
    const int hi = begin + total * (t + 1) / nt;
    workers.emplace_back([lo, hi, &f] {
      for (int i = lo; i < hi; ++i) f(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace thinfb
