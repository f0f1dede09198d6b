#include "vcfl/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace vcfl {

namespace {
std::atomic<std::size_t> g_workers{1};
constexpr std::size_t kMinParallelCost = 1u << 16;
}  // namespace

void set_worker_count(std::size_t workers) { g_workers = std::max<std::size_t>(1, workers); }

std::size_t worker_count() { return g_workers; }

void parallel_for(std::size_t n, std::size_t cost,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1 || n * cost < kMinParallelCost) {
    body(0, n);
    return;
  }
  std::vector<std::jthread> threads;
  threads.reserve(workers - 1);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&body, begin, end] { body(begin, end); });
  }
  body(0, std::min(n, chunk));
}

}  // namespace vcfl
