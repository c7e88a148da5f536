#pragma once

// Tile-at-a-time softmax and layernorm. Statistics are gathered while a row streams out of the
// array (update calls) and applied as it streams back in (norm calls).

#include <sdacc/common.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace sdacc {

inline constexpr int kDefaultTileSize = 32;
inline constexpr double kGeluSigmoidScale = 1.702;
inline constexpr double kLayerNormEps = 1e-5;

struct SoftmaxState {
    double running_max = -std::numeric_limits<double>::infinity();
    double es = 0.0;
    std::int64_t n1 = 0;
    int tile_size = kDefaultTileSize;
};

struct MomentState {
    double sum = 0.0;
    double sqsum = 0.0;
    std::int64_t n = 0;
};

struct Moments {
    double mean = 0.0;
    double var = 0.0;
};

struct NonlinearTiming {
    std::int64_t tile_latency_cycles = kDefaultTileSize;
    std::int64_t pipeline_latency_cycles = 8;

    void validate() const {
        if (tile_latency_cycles < 0 || pipeline_latency_cycles < 0)
            throw ConfigError("nonlinear timing latencies must be >= 0");
    }
};

namespace detail {
inline void check_tile(std::span<const double> tile, int tile_size) {
    if (tile.empty()) throw ConfigError("empty tile");
    if (tile_size > 0 && static_cast<int>(tile.size()) > tile_size) throw ConfigError("tile longer than tile_size");
    for (double x : tile)
        if (!std::isfinite(x)) throw ConfigError("non-finite value in tile");
}
}  // namespace detail

inline SoftmaxState softmax_nca_update(SoftmaxState s, std::span<const double> tile) {
    detail::check_tile(tile, s.tile_size);
    const double tile_max = *std::max_element(tile.begin(), tile.end());
    const double new_max = std::max(s.running_max, tile_max);
    double acc = 0.0;
    for (double x : tile) acc += std::exp(x - new_max);
    const double carried = s.n1 == 0 ? 0.0 : s.es * std::exp(s.running_max - new_max);
    s.es = carried + acc;
    s.n1 += static_cast<std::int64_t>(tile.size());
    s.running_max = new_max;
    return s;
}

// Combines states of two disjoint parts of a row.
inline SoftmaxState softmax_merge(const SoftmaxState& a, const SoftmaxState& b) {
    if (a.n1 == 0) return b;
    if (b.n1 == 0) return a;
    SoftmaxState s = a;
    s.running_max = std::max(a.running_max, b.running_max);
    s.es = a.es * std::exp(a.running_max - s.running_max) + b.es * std::exp(b.running_max - s.running_max);
    s.n1 = a.n1 + b.n1;
    return s;
}

inline double softmax_norm(double x, const SoftmaxState& s) {
    if (!(s.es > 0.0)) throw InvariantError("softmax_norm: exponential sum is zero");
    return std::exp(x - s.running_max) / s.es;
}

inline SoftmaxState softmax_stats(std::span<const double> row, int tile_size = kDefaultTileSize) {
    SoftmaxState s;
    s.tile_size = tile_size;
    for (std::size_t i = 0; i < row.size(); i += static_cast<std::size_t>(tile_size))
        s = softmax_nca_update(s, row.subspan(i, std::min<std::size_t>(tile_size, row.size() - i)));
    return s;
}

inline std::vector<double> softmax_streaming(std::span<const double> row, int tile_size = kDefaultTileSize) {
    auto s = softmax_stats(row, tile_size);
    std::vector<double> y;
    y.reserve(row.size());
    for (double x : row) y.push_back(softmax_norm(x, s));
    return y;
}

inline MomentState layernorm_nca_update(MomentState s, std::span<const double> tile) {
    detail::check_tile(tile, 0);
    for (double x : tile) {
        s.sum += x;
        s.sqsum += x * x;
    }
    s.n += static_cast<std::int64_t>(tile.size());
    return s;
}

inline MomentState moment_merge(const MomentState& a, const MomentState& b) {
    return {a.sum + b.sum, a.sqsum + b.sqsum, a.n + b.n};
}

// var = E[x^2] - E[x]^2, clamped at zero. Loses precision when |mean| >> stddev.
inline Moments layernorm_finalize(const MomentState& s) {
    if (s.n == 0) throw ConfigError("layernorm_finalize: no elements");
    const double n = static_cast<double>(s.n);
    Moments m;
    m.mean = s.sum / n;
    m.var = std::max(0.0, s.sqsum / n - m.mean * m.mean);
    return m;
}

inline double layernorm_norm(double x, double mean, double var, double gamma = 1.0, double beta = 0.0,
                             double eps = kLayerNormEps) {
    if (var < 0.0) throw ConfigError("layernorm_norm: negative variance");
    if (!(eps > 0.0)) throw ConfigError("layernorm_norm: eps must be > 0");
    return gamma * (x - mean) / std::sqrt(var + eps) + beta;
}

inline std::vector<double> layernorm_streaming(std::span<const double> row, double gamma = 1.0, double beta = 0.0,
                                               double eps = kLayerNormEps, int tile_size = kDefaultTileSize) {
    MomentState s;
    for (std::size_t i = 0; i < row.size(); i += static_cast<std::size_t>(tile_size))
        s = layernorm_nca_update(s, row.subspan(i, std::min<std::size_t>(tile_size, row.size() - i)));
    auto m = layernorm_finalize(s);
    std::vector<double> y;
    y.reserve(row.size());
    for (double x : row) y.push_back(layernorm_norm(x, m.mean, m.var, gamma, beta, eps));
    return y;
}

inline double gelu_sigmoid(double x) { return x / (1.0 + std::exp(-kGeluSigmoidScale * x)); }

}  // namespace sdacc
