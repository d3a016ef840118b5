// Block-parallel execution of Monte Carlo replicas.
#pragma once

#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

#include "bpre/rng.hpp"

namespace bpre {

struct BlockRange {
    std::uint64_t index;
    std::uint64_t begin;
    std::uint64_t end;
};

inline std::uint64_t num_blocks(std::uint64_t reps, std::uint64_t block_size = kBlockSize) {
    return (reps + block_size - 1) / block_size;
}

// Runs fn(block) for every block of [0, reps); blocks are claimed dynamically
// by up to `workers` threads.  fn must write only to per-block state; callers
// merge the per-block results in index order afterwards.
template <class Fn>
void run_blocks(std::uint64_t reps, int workers, Fn&& fn,
                std::uint64_t block_size = kBlockSize) {
    const std::uint64_t nb = num_blocks(reps, block_size);
    if (nb == 0) return;
    if (workers <= 1 || nb == 1) {
        for (std::uint64_t b = 0; b < nb; ++b) {
            std::uint64_t lo = b * block_size;
            std::uint64_t hi = lo + block_size < reps ? lo + block_size : reps;
            fn(BlockRange{b, lo, hi});
        }
        return;
    }
    std::atomic<std::uint64_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::uint64_t b = next.fetch_add(1);
            if (b >= nb) return;
            std::uint64_t lo = b * block_size;
            std::uint64_t hi = lo + block_size < reps ? lo + block_size : reps;
            fn(BlockRange{b, lo, hi});
        }
    };
    std::vector<std::thread> pool;
    int nt = workers < static_cast<int>(nb) ? workers : static_cast<int>(nb);
    pool.reserve(nt);
    for (int i = 0; i < nt; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

} // namespace bpre
