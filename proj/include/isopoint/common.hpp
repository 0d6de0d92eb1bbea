#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace isopoint {

/// Raised when an input file violates its documented grammar.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Raised when data fails a semantic precondition (empty map, zero variance, ...).
class DataError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised on tensor shape mismatches; message names the operation and shapes.
class ShapeError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double round_decimals(double x, int decimals) {
    const double f = std::pow(10.0, decimals);
    return std::round(x * f) / f;
}

inline double round4(double x) { return round_decimals(x, 4); }
inline double round2(double x) { return round_decimals(x, 2); }

/// Integer m/z key at 4-decimal resolution (1 unit = 0.0001 Th).
inline std::int64_t mz_key4(double mz) { return std::llround(mz * 1e4); }
inline double key4_to_mz(std::int64_t key) { return static_cast<double>(key) * 1e-4; }

/// Deterministic RNG with explicit bit-to-double conversion so that streams are
/// reproducible across standard libraries (std::uniform_real_distribution is
/// implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0x9e3779b97f4a7c15ULL) : state_(seed ? seed : 1) {}

    std::uint64_t next_u64() {
        // xorshift64* -- fast, full period, good enough for data generation.
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dULL;
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
    }

    /// Standard normal via Box-Muller (no cached spare so the stream stays simple).
    double gaussian() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// Split off an independent child stream; deterministic in (parent state, salt).
    Rng fork(std::uint64_t salt) {
        return Rng(next_u64() ^ (salt * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL));
    }

private:
    std::uint64_t state_;
};

}  // namespace isopoint
