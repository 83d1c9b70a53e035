#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace salsa2d {

inline constexpr const char* kVersion = "0.3.0";

/// Malformed or inconsistent user input (files, flags, preconditions).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation that could not produce a usable numeric answer.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Design matrix columns are linearly dependent within tolerance.
class RankDeficientError : public NumericalError {
public:
    RankDeficientError(const std::string& what, std::vector<std::size_t> columns, std::vector<std::string> labels)
        : NumericalError(what), columns_(std::move(columns)), labels_(std::move(labels)) {}

    const std::vector<std::size_t>& columns() const noexcept { return columns_; }
    const std::vector<std::string>& labels() const noexcept { return labels_; }

private:
    std::vector<std::size_t> columns_;
    std::vector<std::string> labels_;
};

// Warnings go through a replaceable sink so tests and the CLI can capture them.
namespace detail {
inline std::function<void(const std::string&)>& warning_sink() {
    static std::function<void(const std::string&)> sink = [](const std::string& msg) {
        std::clog << "warning: " << msg << '\n';
    };
    return sink;
}
inline std::mutex& warning_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace detail

inline void warn(const std::string& msg) {
    std::lock_guard lock(detail::warning_mutex());
    if (detail::warning_sink()) detail::warning_sink()(msg);
}

/// Swap the warning sink; returns the previous one.
inline std::function<void(const std::string&)> set_warning_sink(std::function<void(const std::string&)> sink) {
    std::lock_guard lock(detail::warning_mutex());
    auto old = std::move(detail::warning_sink());
    detail::warning_sink() = std::move(sink);
    return old;
}

/// Thread count from SALSA2D_THREADS, falling back to the hardware count.
inline unsigned default_thread_count() {
    if (const char* env = std::getenv("SALSA2D_THREADS")) {
        try {
            int n = std::stoi(env);
            if (n > 0) return static_cast<unsigned>(n);
        } catch (const std::exception&) {
        }
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

/// Runs fn(i) for i in [0, n). Work is split into contiguous chunks; fn must
/// only write to per-index slots.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned threads = 0) {
    if (threads == 0) threads = default_thread_count();
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = t; i < n; i += threads) fn(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// splitmix64 finaliser; derives independent per-task seeds from one run seed.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace salsa2d
