#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace fairclust {

// Row-major so that each sample / token is a contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const { return 1; }
};

/// Invalid configuration (bad hyperparameters, k not dividing n, ...).
class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 2; }
};

/// Unreadable or inconsistent input data.
class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 3; }
};

/// Malformed file contents. `offset` is a byte offset (binary) or 1-based line (csv).
class ParseError : public DataError {
public:
    enum class Unit { byte, line };

    ParseError(const std::string& what, std::size_t offset, Unit unit)
        : DataError(what + (unit == Unit::byte ? " (at byte " : " (at line ") + std::to_string(offset) + ")"),
          offset_(offset), unit_(unit) {}

    std::size_t offset() const { return offset_; }
    Unit unit() const { return unit_; }

private:
    std::size_t offset_;
    Unit unit_;
};

/// Non-finite values produced during optimisation.
class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 4; }
};

/// Runs fn(i) for i in [0, count) over at most `threads` workers with static chunking.
/// Callers write results into per-index slots, so output never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::vector<std::exception_ptr> failures(workers);
    const std::size_t chunk = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([begin, end, &fn, &slot = failures[w]] {
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                slot = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& f : failures)
        if (f) std::rethrow_exception(f);
}

}  // namespace fairclust
