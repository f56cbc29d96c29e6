#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

#include <malloc.h>

#include "madf/blas.hpp"

namespace madf {

// Intra-op worker count, read once from MADF_THREADS (default 1).
// Parallel regions only ever split work whose writes are disjoint per
// index, so results are bitwise identical for any thread count.
inline int worker_threads() {
    static const int n = [] {
        // Large tensors churn every iteration; keep freed blocks on the
        // heap instead of returning pages to the kernel, and keep BLAS
        // single-threaded (batch parallelism happens here).
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
        blas::pin_single_threaded();
        const char* env = std::getenv("MADF_THREADS");
        if (!env) return 1;
        int v = std::atoi(env);
        if (v <= 0) return 1;
        return std::min(v, 64);
    }();
    return n;
}

// Splits [0, count) into contiguous chunks and runs fn(lo, hi) on each.
// Chunk boundaries never affect results: use only for elementwise maps
// and per-chunk-disjoint writes.
template <typename Fn>
void parallel_chunks(std::size_t count, Fn&& fn) {
    const int threads = worker_threads();
    if (threads <= 1 || count < (1u << 15)) {
        fn(std::size_t{0}, count);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        const std::size_t lo = count * t / threads;
        const std::size_t hi = count * (t + 1) / threads;
        pool.emplace_back([lo, hi, &fn] { fn(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

// Runs fn(i) for i in [begin, end). Each index must write to storage no
// other index touches.
template <typename Fn>
void parallel_for(int begin, int end, Fn&& fn) {
    const int count = end - begin;
    if (count <= 0) return;
    const int threads = std::min(worker_threads(), count);
    if (threads <= 1) {
        for (int i = begin; i < end; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        const int lo = begin + static_cast<int>(static_cast<long long>(count) * t / threads);
        const int hi = begin + static_cast<int>(static_cast<long long>(count) * (t + 1) / threads);
        pool.emplace_back([lo, hi, &fn] {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace madf
