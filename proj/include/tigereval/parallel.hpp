// Copyright 2026 The tigereval Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace tigereval {

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Items are
/// claimed from a shared counter, so results must be stored by index. If any
/// call throws, the exception of the lowest failing index is rethrown after
/// all threads have joined.
template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
    const auto n_threads = static_cast<std::size_t>(std::clamp<long long>(workers, 1, 256));
    if (n_threads == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(count);
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < std::min(n_threads, count); ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace tigereval
