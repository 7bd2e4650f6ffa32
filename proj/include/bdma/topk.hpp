#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <utility>
#include <vector>

#include "bdma/linalg.hpp"

namespace bdma {

// Keeps the k best (score, index) pairs seen so far. Higher score wins;
// equal scores prefer the smaller index, so results are deterministic for
// any scan order that feeds indices ascending.
class TopK {
public:
    explicit TopK(int k) : k_(static_cast<std::size_t>(k)) { heap_.reserve(k_ + 1); }

    void offer(double score, Eigen::Index index) {
        if (heap_.size() < k_) {
            heap_.push_back({score, index});
            std::push_heap(heap_.begin(), heap_.end(), better_);
            return;
        }
        if (better_({score, index}, heap_.front())) {
            std::pop_heap(heap_.begin(), heap_.end(), better_);
            heap_.back() = {score, index};
            std::push_heap(heap_.begin(), heap_.end(), better_);
        }
    }

    // Entries best-first.
    std::vector<std::pair<double, Eigen::Index>> sorted() const {
        auto out = heap_;
        std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        return out;
    }

private:
    using Entry = std::pair<double, Eigen::Index>;
    // Heap comparator: the heap front is the worst kept entry.
    struct Better {
        bool operator()(const Entry& a, const Entry& b) const {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        }
    };
    std::size_t k_;
    Better better_;
    std::vector<Entry> heap_;
};

// Runs fn(begin, end) over fixed-size chunks of [0, n). The chunk grid does
// not depend on the worker count, and each index is written by exactly one
// worker, so results are identical for any number of threads.
inline void parallel_chunks(std::size_t n, int threads,
                            const std::function<void(std::size_t, std::size_t)>& fn,
                            std::size_t chunk = 256) {
    if (n == 0) return;
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    std::size_t nchunks = (n + chunk - 1) / chunk;
    if (threads == 1 || nchunks == 1) {
        fn(0, n);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t c = next.fetch_add(1); c < nchunks; c = next.fetch_add(1)) {
            std::size_t begin = c * chunk;
            std::size_t end = std::min(n, begin + chunk);
            fn(begin, end);
        }
    };
    std::vector<std::thread> pool;
    int spawn = std::min<int>(threads, static_cast<int>(nchunks));
    pool.reserve(static_cast<std::size_t>(spawn));
    for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

}  // namespace bdma
