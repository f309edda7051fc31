#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bsvie {

// Splits [0, count) into contiguous blocks, one per worker, and runs fn(begin, end)
// on each. Work items must write to disjoint outputs; under that contract the result
// does not depend on the number of workers.
template <class Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
    if (count == 0) return;
    const std::size_t w = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers)));
    if (w <= 1) {
        fn(std::size_t{0}, count);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(w);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const std::size_t block = (count + w - 1) / w;
    for (std::size_t t = 0; t < w; ++t) {
        const std::size_t begin = t * block;
        const std::size_t end = std::min(count, begin + block);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace bsvie
