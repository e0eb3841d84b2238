#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace its {

/// Calls fn(i) for i in [0, n) on up to `jobs` threads. Each index is
/// handled exactly once; callers write results into index-addressed slots so
/// the outcome does not depend on scheduling. If several calls throw, the
/// exception from the lowest index is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    const std::size_t lanes = std::min<std::size_t>(n, jobs > 1 ? static_cast<std::size_t>(jobs) : 1);
    if (lanes <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    {
        std::vector<std::jthread> workers;
        workers.reserve(lanes);
        for (std::size_t lane = 0; lane < lanes; ++lane) {
            workers.emplace_back([&, lane] {
                for (std::size_t i = lane; i < n; i += lanes) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

}  // namespace its
