#pragma once

#include <cstddef>
#include <functional>

namespace vcfl {

/// Upper bound on threads used by data-parallel sections. Results never depend
/// on this value: work is split by output index and every index is computed by
/// the same sequential code.
void set_worker_count(std::size_t workers);
std::size_t worker_count();

/// Calls body(begin, end) over disjoint chunks of [0, n). Runs inline when the
/// worker count is 1 or when cost (a rough flop estimate) is small.
void parallel_for(std::size_t n, std::size_t cost,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace vcfl
