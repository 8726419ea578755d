#pragma once

#include <cstddef>
#include <functional>

namespace binadapt {

// Worker budget from BINADAPT_THREADS; 0 or unset means hardware concurrency.
std::size_t thread_budget();

// Runs fn(index, worker) for index in [0, n) on up to `workers` threads.
// Index i always runs on worker i % workers, so per-worker state is
// deterministic. The first exception thrown is rethrown after all join.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t index, std::size_t worker)>& fn);

}  // namespace binadapt
