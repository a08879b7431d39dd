// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>

namespace dgs {

/// Runs fn(begin, end, worker) over a static block partition of [0, n).
/// threads <= 1 executes inline as fn(0, n, 0). Workers own disjoint ranges,
/// so callers may keep per-worker partial results and reduce them in worker
/// order afterwards; that reduction order is fixed for a given thread count.
void parallel_for(int64_t n, int threads,
                  const std::function<void(int64_t, int64_t, int)>& fn);

/// Work-stealing variant: items are handed out in chunks from a shared
/// counter, which balances concentrated workloads. Use only when the work
/// items write disjoint outputs (the item-to-worker mapping is not
/// reproducible).
void parallel_for_dynamic(int64_t n, int threads, int64_t chunk,
                          const std::function<void(int64_t, int64_t)>& fn);

/// Hardware concurrency, at least 1.
int hardware_threads();

}  // namespace dgs
