#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace kalikow {

/// Number of worker threads; honours KALIKOW_THREADS when set.
std::size_t worker_count();

/// Splits [0, n) into `chunks` fixed ranges and runs fn(chunk, begin, end) on
/// a thread pool. The partition depends only on (n, chunks), so per-chunk
/// results reduced in chunk order are bit-identical for any thread count.
/// The first exception thrown by a chunk is rethrown after all threads join.
template <class Fn>
void parallel_chunks(std::size_t n, std::size_t chunks, Fn&& fn) {
    chunks = std::max<std::size_t>(1, std::min(chunks, n));
    if (n == 0) return;
    auto range = [&](std::size_t c) {
        return std::pair{n * c / chunks, n * (c + 1) / chunks};
    };
    const std::size_t workers = std::min(worker_count(), chunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) {
            auto [b, e] = range(c);
            fn(c, b, e);
        }
        return;
    }
    std::mutex mu;
    std::exception_ptr error;
    std::size_t next = 0;
    auto work = [&] {
        for (;;) {
            std::size_t c;
            {
                std::lock_guard lock(mu);
                if (next >= chunks || error) return;
                c = next++;
            }
            try {
                auto [b, e] = range(c);
                fn(c, b, e);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    pool.clear();
    if (error) std::rethrow_exception(error);
}

}  // namespace kalikow
