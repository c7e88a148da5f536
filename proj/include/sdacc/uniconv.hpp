#pragma once

// Convolution as a sum of pointwise matmuls with a fixed partial-sum address shift per kernel slice.

#include <sdacc/common.hpp>
#include <sdacc/workload.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace sdacc {

struct AddressMap {
    int f = 0;             // slice index, row-major over (r, s)
    int dr = 0, ds = 0;    // offset of the tap from the kernel center
    std::int64_t W = 1;    // row width used for delta
    std::int64_t delta = 0;
};

// Activation stored as (L, C) with l = h*W + w.
template <class T>
struct PackedActivation {
    std::int64_t H = 0, W = 0, C = 0;
    std::vector<T> data;

    PackedActivation() = default;
    PackedActivation(std::int64_t h, std::int64_t w, std::int64_t c)
        : H(h), W(w), C(c), data(static_cast<std::size_t>(h * w * c), T{}) {}

    std::int64_t L() const { return H * W; }
    T& at(std::int64_t l, std::int64_t c) { return data[static_cast<std::size_t>(l * C + c)]; }
    const T& at(std::int64_t l, std::int64_t c) const { return data[static_cast<std::size_t>(l * C + c)]; }
    T& at(std::int64_t h, std::int64_t w, std::int64_t c) { return at(h * W + w, c); }
    const T& at(std::int64_t h, std::int64_t w, std::int64_t c) const { return at(h * W + w, c); }
    friend bool operator==(const PackedActivation&, const PackedActivation&) = default;
};

// Weights stored as (F, C_out, C_in).
template <class T>
struct PackedWeight {
    int K = 1;  // kernel side; F = K*K
    std::int64_t C_out = 0, C_in = 0;
    std::vector<T> data;

    PackedWeight() = default;
    PackedWeight(int k, std::int64_t cout, std::int64_t cin)
        : K(k), C_out(cout), C_in(cin), data(static_cast<std::size_t>(k * k * cout * cin), T{}) {}

    int F() const { return K * K; }
    T& at(int f, std::int64_t co, std::int64_t ci) {
        return data[static_cast<std::size_t>((f * C_out + co) * C_in + ci)];
    }
    const T& at(int f, std::int64_t co, std::int64_t ci) const {
        return data[static_cast<std::size_t>((f * C_out + co) * C_in + ci)];
    }
};

inline std::vector<AddressMap> decompose(int kernel, std::int64_t W) {
    if (kernel != 1 && kernel != 3) throw ConfigError("uniconv: unsupported kernel size " + std::to_string(kernel));
    if (W < 1) throw ConfigError("uniconv: W must be >= 1");
    std::vector<AddressMap> maps;
    const int half = kernel / 2;
    for (int r = 0; r < kernel; ++r) {
        for (int s = 0; s < kernel; ++s) {
            AddressMap m;
            m.f = r * kernel + s;
            m.dr = r - half;
            m.ds = s - half;
            m.W = W;
            m.delta = -m.dr * W - m.ds;
            maps.push_back(m);
        }
    }
    return maps;
}

inline std::vector<AddressMap> decompose(const LayerDescriptor& layer) {
    if (!is_conv(layer.kind)) throw ConfigError("uniconv: layer " + std::to_string(layer.id) + " is not a convolution");
    return decompose(kernel_size(layer.kind), layer.W);
}

// Whether the partial sum produced from input row l_in by slice `m` lands inside the output grid.
inline bool edge_flag(const AddressMap& m, std::int64_t l_in, std::int64_t H, std::int64_t W) {
    if (l_in < 0 || l_in >= H * W) throw ConfigError("edge_flag: l_in out of range");
    const std::int64_t h = l_in / W, w = l_in % W;
    const std::int64_t p = h - m.dr, q = w - m.ds;
    return p >= 0 && p < H && q >= 0 && q < W;
}

// Optional instrumentation for the scatter-add passes.
struct UniconvObserver {
    virtual ~UniconvObserver() = default;
    virtual void on_pass(int /*f*/) {}
    virtual void on_scatter(int /*f*/, std::int64_t /*l_in*/, std::int64_t /*l_out*/) {}
};

// Runs the convolution slice by slice: a (L_in, C_in) x (C_in, C_out) product per slice, each row
// scattered to row l_in + delta of the output. Stride 2 keeps only even destinations.
template <class T>
PackedActivation<T> uniconv_execute(const PackedActivation<T>& in, const PackedWeight<T>& w, int stride,
                                    UniconvObserver* obs = nullptr) {
    if (in.C != w.C_in) throw ConfigError("uniconv: input channels do not match weights");
    if (static_cast<std::int64_t>(in.data.size()) != in.L() * in.C ||
        static_cast<std::int64_t>(w.data.size()) != w.F() * w.C_out * w.C_in)
        throw ConfigError("uniconv: buffer sizes do not match shapes");
    if (stride != 1 && stride != 2) throw ConfigError("uniconv: stride must be 1 or 2");
    if (stride == 2 && w.K != 3) throw ConfigError("uniconv: stride 2 requires a 3x3 kernel");

    const std::int64_t P = stride == 1 ? in.H : (in.H + 1) / 2;
    const std::int64_t Q = stride == 1 ? in.W : (in.W + 1) / 2;
    PackedActivation<T> out(P, Q, w.C_out);
    std::vector<T> partial(static_cast<std::size_t>(w.C_out));

    for (const auto& m : decompose(w.K, in.W)) {
        if (obs) obs->on_pass(m.f);
        for (std::int64_t l = 0; l < in.L(); ++l) {
            if (!edge_flag(m, l, in.H, in.W)) continue;
            std::int64_t dst = l + m.delta;
            if (stride == 2) {
                const std::int64_t p = dst / in.W, q = dst % in.W;
                if (p % 2 || q % 2) continue;
                dst = (p / 2) * Q + q / 2;
            }
            for (std::int64_t co = 0; co < w.C_out; ++co) {
                T acc{};
                for (std::int64_t ci = 0; ci < in.C; ++ci) acc += in.at(l, ci) * w.at(m.f, co, ci);
                partial[static_cast<std::size_t>(co)] = acc;
            }
            if (obs) obs->on_scatter(m.f, l, dst);
            for (std::int64_t co = 0; co < w.C_out; ++co) out.at(dst, co) += partial[static_cast<std::size_t>(co)];
        }
    }
    return out;
}

}  // namespace sdacc
