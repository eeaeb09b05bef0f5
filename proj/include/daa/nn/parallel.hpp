#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace daa::nn {

namespace detail {
inline std::atomic<std::size_t>& thread_cap() {
    static std::atomic<std::size_t> cap{1};
    return cap;
}
}  // namespace detail

/// Upper bound on worker threads used inside ops. 1 means fully serial.
inline void set_num_threads(std::size_t n) { detail::thread_cap() = std::max<std::size_t>(1, n); }
inline std::size_t num_threads() { return detail::thread_cap(); }

/// Runs fn(i) for i in [0, n). Work is split into contiguous static chunks;
/// callers only write to per-index outputs so results do not depend on the
/// thread count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min(num_threads(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace daa::nn
