#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace comevl {

namespace detail {

inline std::size_t env_thread_cap() {
    const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("COME_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
    }
    return hw;
}

inline std::atomic<std::size_t>& thread_cap_slot() {
    static std::atomic<std::size_t> cap{env_thread_cap()};
    return cap;
}

}  // namespace detail

/// Worker cap for parallel_for. Defaults to COME_THREADS, else the core count.
inline std::size_t thread_cap() { return detail::thread_cap_slot().load(); }
inline void set_thread_cap(std::size_t n) { detail::thread_cap_slot().store(std::max<std::size_t>(1, n)); }

/// Calls fn(i) for i in [0, n). Work items must write disjoint outputs; any
/// reduction happens afterwards in index order so results do not depend on
/// the worker count. The first exception (lowest index) is rethrown.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min(n, thread_cap());
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace comevl
