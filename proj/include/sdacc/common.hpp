#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace sdacc {

// Bad input or configuration. CLI exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Valid request with an empty answer (e.g. no plan satisfies the constraints). Exit code 2.
struct InfeasibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A model invariant was broken. Exit code 3.
struct InvariantError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Counts are kept below 2^63 so they survive a round trip through signed types.
inline constexpr std::uint64_t kCountLimit = std::numeric_limits<std::int64_t>::max();

inline std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
    if (a != 0 && b > kCountLimit / a)
        throw InvariantError("integer overflow in count (exceeds 2^63)");
    return a * b;
}

inline std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
    if (b > kCountLimit - a)
        throw InvariantError("integer overflow in count (exceeds 2^63)");
    return a + b;
}

template <class T>
constexpr T ceil_div(T a, T b) {
    return (a + b - 1) / b;
}

}  // namespace sdacc
