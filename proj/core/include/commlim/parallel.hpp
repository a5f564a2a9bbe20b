#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace commlim {

// Resolves the worker count: an explicit positive request wins, then the
// COMMLIM_THREADS environment variable, then 1.
int resolve_threads(int requested = 0);

// Runs body(i) for i in [0, count) on up to `threads` workers. Work is split
// into contiguous static blocks; body must write only to slot i of its
// output so results are independent of the thread count.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

// Pairwise (tree) summation. The association order depends only on the
// length of the input, never on how it was produced.
double pairwise_sum(std::span<const double> values);

}  // namespace commlim
