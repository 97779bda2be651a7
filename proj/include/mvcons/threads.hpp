#pragma once

#include <cstdint>
#include <functional>

namespace mvcons {

// Worker cap for embarrassingly parallel loops (file decoding, per-sample
// augmentation, pairwise distances). 0 = hardware concurrency. Every parallel
// call site computes each output element exactly once with a fixed-order inner
// reduction, so results are bit-identical at any thread count.
void set_max_threads(int n);
int max_threads();

// Splits [0, n) into contiguous chunks, one worker per chunk. Runs inline when
// the configured cap is 1 or the range is small.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body);

}  // namespace mvcons
