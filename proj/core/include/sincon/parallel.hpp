#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace sincon {

// Caps the worker count used by parallel_for. 0 = hardware concurrency.
void set_max_threads(int count);
int max_threads();

// Static block partition of [begin, end). Each index is visited exactly once;
// work items must write to disjoint slots so results are independent of the
// worker count. Reductions belong in a serial pass over the output arrays.
inline void parallel_for(long begin, long end, const std::function<void(long, long)>& body) {
    const long count = end - begin;
    int workers = max_threads();
    if (workers > count) workers = static_cast<int>(std::max<long>(1, count));
    if (workers <= 1 || count < 512) {
        body(begin, end);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const long chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const long lo = begin + w * chunk;
        const long hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace sincon
