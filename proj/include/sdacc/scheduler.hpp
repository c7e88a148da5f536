#pragma once

// Per-layer reuse selection, fusion grouping and the DRAM traffic model.
//
// Traffic rules:
//   input_reuse / weight_reuse   every operand crosses DRAM once: W + A + O
//   both_tiled                   a chunk of one operand (chunk = buffer * chunk_fraction) stays resident
//                                and the other operand is re-streamed once per chunk
//   fused edge (producer -> consumer)   producer output write and the consumer's main-branch input read
//                                       are dropped; skip-concat channels are still read
//
// "Weight" below means the stationary operand: layer weights, or K / V for attention products.

#include <sdacc/common.hpp>
#include <sdacc/workload.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sdacc {

enum class ReuseMode { none, input_reuse, weight_reuse, both_tiled };
enum class FusionKind { none, layer_by_layer, cross_layer };

inline std::string_view to_string(ReuseMode m) {
    switch (m) {
        case ReuseMode::none: return "none";
        case ReuseMode::input_reuse: return "input_reuse";
        case ReuseMode::weight_reuse: return "weight_reuse";
        case ReuseMode::both_tiled: return "both_tiled";
    }
    return "?";
}

inline std::string_view to_string(FusionKind k) {
    switch (k) {
        case FusionKind::none: return "none";
        case FusionKind::layer_by_layer: return "layer_by_layer";
        case FusionKind::cross_layer: return "cross_layer";
    }
    return "?";
}

struct TileConfig {
    std::int64_t L0 = 1, Cin0 = 32, Cout0 = 32;
};

enum TensorClass { kWeight = 0, kActIn = 1, kActOut = 2 };

struct TrafficEstimate {
    std::array<std::uint64_t, 3> read{};
    std::array<std::uint64_t, 3> write{};

    std::uint64_t reads() const { return read[0] + read[1] + read[2]; }
    std::uint64_t writes() const { return write[0] + write[1] + write[2]; }
    std::uint64_t total() const { return reads() + writes(); }

    TrafficEstimate& operator+=(const TrafficEstimate& o) {
        for (int i = 0; i < 3; ++i) {
            read[i] = checked_add(read[i], o.read[i]);
            write[i] = checked_add(write[i], o.write[i]);
        }
        return *this;
    }
};

struct ReuseOptions {
    double chunk_fraction = 0.5;
};

struct ReuseChoice {
    ReuseMode mode = ReuseMode::none;
    TrafficEstimate traffic;
    std::uint64_t weight_passes = 1;  // DRAM read multiplicity of the stationary operand
    std::uint64_t act_passes = 1;     // DRAM read multiplicity of the streamed input
    std::uint64_t resident_bytes = 0;
};

namespace detail {
inline ReuseChoice make_choice(ReuseMode mode, const LayerFootprint& fp, std::uint64_t wp, std::uint64_t ap,
                               std::uint64_t resident) {
    ReuseChoice c;
    c.mode = mode;
    c.weight_passes = wp;
    c.act_passes = ap;
    c.resident_bytes = resident;
    c.traffic.read[kWeight] = checked_mul(fp.weight_bytes, wp);
    c.traffic.read[kActIn] = checked_mul(fp.act_in_bytes, ap);
    c.traffic.write[kActOut] = fp.act_out_bytes;
    return c;
}

inline std::uint64_t chunk_bytes(std::uint64_t buffer, const ReuseOptions& o) {
    if (!(o.chunk_fraction > 0.0 && o.chunk_fraction <= 1.0)) throw ConfigError("chunk_fraction must be in (0,1]");
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(static_cast<double>(buffer) * o.chunk_fraction));
}
}  // namespace detail

// Traffic for one specific mode, or nullopt if the mode does not fit the buffer.
inline std::optional<ReuseChoice> evaluate_reuse(const LayerFootprint& fp, ReuseMode mode, std::uint64_t buffer,
                                                 const ReuseOptions& opt = {}) {
    switch (mode) {
        case ReuseMode::input_reuse:
            if (fp.act_in_bytes > buffer) return std::nullopt;
            return detail::make_choice(mode, fp, 1, 1, fp.act_in_bytes);
        case ReuseMode::weight_reuse:
            if (fp.weight_bytes > buffer) return std::nullopt;
            return detail::make_choice(mode, fp, 1, 1, fp.weight_bytes);
        case ReuseMode::both_tiled: {
            const auto chunk = detail::chunk_bytes(buffer, opt);
            auto w_resident = detail::make_choice(mode, fp, 1, std::max<std::uint64_t>(1, ceil_div(fp.weight_bytes, chunk)),
                                                  std::min(chunk, fp.weight_bytes));
            auto a_resident = detail::make_choice(mode, fp, std::max<std::uint64_t>(1, ceil_div(fp.act_in_bytes, chunk)), 1,
                                                  std::min(chunk, fp.act_in_bytes));
            return a_resident.traffic.total() < w_resident.traffic.total() ? a_resident : w_resident;
        }
        case ReuseMode::none:
            break;
    }
    return std::nullopt;
}

// Cheapest feasible mode. Single-residency modes are preferred; ties go to weight_reuse.
inline ReuseChoice choose_reuse(const LayerFootprint& fp, std::uint64_t buffer, const ReuseOptions& opt = {}) {
    if (buffer == 0) throw ConfigError("choose_reuse: buffer_bytes must be > 0");
    auto w = evaluate_reuse(fp, ReuseMode::weight_reuse, buffer, opt);
    auto i = evaluate_reuse(fp, ReuseMode::input_reuse, buffer, opt);
    if (w && i) return i->traffic.total() < w->traffic.total() ? *i : *w;
    if (w) return *w;
    if (i) return *i;
    return *evaluate_reuse(fp, ReuseMode::both_tiled, buffer, opt);
}

// Baseline dataflow: keep weights resident, falling back to resident weight chunks.
inline ReuseChoice fixed_weight_reuse(const LayerFootprint& fp, std::uint64_t buffer, const ReuseOptions& opt = {}) {
    if (auto w = evaluate_reuse(fp, ReuseMode::weight_reuse, buffer, opt)) return *w;
    const auto chunk = detail::chunk_bytes(buffer, opt);
    return detail::make_choice(ReuseMode::both_tiled, fp, 1, ceil_div(fp.weight_bytes, chunk), chunk);
}

struct ScheduleOptions {
    std::uint64_t buffer_bytes = 2097152;
    std::uint64_t staging_bytes = 65536;
    std::int64_t array_width = 32;
    std::uint64_t bytes_per_element = 2;
    bool adaptive = true;    // choose_reuse per layer; otherwise fixed weight reuse
    bool fusion = true;
    bool im2col = false;     // lowered 3x3 convs read the input R*S times
    double chunk_fraction = 0.5;
};

struct FusionGroup {
    FusionKind kind = FusionKind::none;
    std::vector<int> layers;
};

struct FusionPlan {
    std::vector<FusionGroup> groups;
};

struct LayerPlan {
    int layer_id = 0;
    bool on_array = false;
    TileConfig tile;
    ReuseMode mode = ReuseMode::none;
    LayerFootprint footprint;      // operand sizes as seen by DRAM (im2col expansion included)
    std::uint64_t main_in_bytes = 0;  // part of the streamed input produced by the previous conv
    std::uint64_t input_expansion = 1;
    std::uint64_t weight_passes = 1, act_passes = 1;
    std::uint64_t resident_bytes = 0;
    int group = -1;
    FusionKind fusion = FusionKind::none;
    bool fused_in = false, fused_out = false;
};

struct SchedulePlan {
    ScheduleOptions options;
    std::vector<LayerPlan> layers;
    FusionPlan fusion;
};

// Sizes of the stationary operand, the streamed input and the output for an array layer.
inline LayerFootprint operand_footprint(const LayerDescriptor& l, std::uint64_t bpe) {
    auto fp = layer_footprint(l, bpe);
    auto u = [](std::int64_t v) { return static_cast<std::uint64_t>(v); };
    if (l.kind == LayerKind::attention_qk) {
        fp.weight_bytes = u(l.kv_len) * u(l.c_in) * bpe;
        fp.act_in_bytes = u(l.seq_len) * u(l.c_in) * bpe;
    } else if (l.kind == LayerKind::attention_av) {
        fp.weight_bytes = u(l.kv_len) * u(l.c_in) * bpe;
        fp.act_in_bytes = u(l.heads) * u(l.seq_len) * u(l.kv_len) * bpe;
    }
    return fp;
}

// Rows streamed through the array per stationary tile.
inline std::int64_t streamed_rows(const LayerDescriptor& l) {
    if (is_conv(l.kind)) return l.out_len();
    if (l.seq_len) return l.seq_len;
    return l.spatial_len();
}

namespace detail {

inline bool lbl_feasible(const LayerPlan& a, const LayerPlan& b, std::uint64_t buffer) {
    auto ok_mode = [](ReuseMode m) { return m == ReuseMode::input_reuse || m == ReuseMode::weight_reuse; };
    if (!ok_mode(a.mode) || !ok_mode(b.mode)) return false;
    if (a.mode != ReuseMode::input_reuse && b.mode != ReuseMode::input_reuse) return false;
    return a.footprint.act_in_bytes + a.footprint.act_out_bytes <= buffer && b.footprint.act_in_bytes <= buffer;
}

// DRAM bytes saved by forwarding a's output to b on chip.
inline std::uint64_t edge_saving(const LayerPlan& a, const LayerPlan& b) {
    return a.footprint.act_out_bytes + b.main_in_bytes * b.act_passes;
}

}  // namespace detail

// Fusion over the 3x3 conv stack, treated as a chain in execution order. Input-reuse layers are
// grouped first (layer_by_layer), then runs of remaining weight-reuse layers (cross_layer).
inline FusionPlan plan_fusion(const NetworkGraph& g, const std::vector<LayerPlan>& plans, std::uint64_t buffer) {
    auto stack = conv3x3_stack(g);
    const std::size_t n = stack.size();
    std::vector<FusionKind> edge(n > 0 ? n - 1 : 0, FusionKind::none);
    auto P = [&](std::size_t k) -> const LayerPlan& { return plans[static_cast<std::size_t>(stack[k])]; };

    for (std::size_t k = 0; k + 1 < n; ++k) {
        if (detail::lbl_feasible(P(k), P(k + 1), buffer) && detail::edge_saving(P(k), P(k + 1)) > 0)
            edge[k] = FusionKind::layer_by_layer;
    }
    auto touched = [&](std::size_t k) {
        return (k > 0 && edge[k - 1] != FusionKind::none) || (k + 1 < n && edge[k] != FusionKind::none);
    };
    for (std::size_t k = 0; k < n;) {
        if (P(k).mode != ReuseMode::weight_reuse || touched(k)) {
            ++k;
            continue;
        }
        std::uint64_t weights = P(k).footprint.weight_bytes;
        std::size_t j = k;
        while (j + 1 < n && P(j + 1).mode == ReuseMode::weight_reuse && !touched(j + 1) &&
               weights + P(j + 1).footprint.weight_bytes <= buffer) {
            ++j;
            weights += P(j).footprint.weight_bytes;
        }
        for (std::size_t e = k; e < j; ++e) edge[e] = FusionKind::cross_layer;
        k = j + 1;
    }

    FusionPlan fp;
    for (std::size_t k = 0; k < n;) {
        FusionGroup grp;
        grp.layers.push_back(stack[k]);
        if (k + 1 < n) grp.kind = edge[k];
        std::size_t j = k;
        while (j + 1 < n && edge[j] != FusionKind::none && edge[j] == grp.kind) grp.layers.push_back(stack[++j]);
        if (grp.layers.size() == 1) grp.kind = FusionKind::none;
        fp.groups.push_back(std::move(grp));
        k = j + 1;
    }
    return fp;
}

inline void apply_fusion(SchedulePlan& plan, const FusionPlan& fusion) {
    plan.fusion = fusion;
    for (std::size_t gi = 0; gi < fusion.groups.size(); ++gi) {
        const auto& grp = fusion.groups[gi];
        for (std::size_t i = 0; i < grp.layers.size(); ++i) {
            auto& lp = plan.layers[static_cast<std::size_t>(grp.layers[i])];
            lp.group = static_cast<int>(gi);
            lp.fusion = grp.kind;
            lp.fused_in = grp.kind != FusionKind::none && i > 0;
            lp.fused_out = grp.kind != FusionKind::none && i + 1 < grp.layers.size();
        }
    }
}

inline TileConfig tile_for(const LayerDescriptor& l, const ScheduleOptions& o) {
    TileConfig t;
    t.Cin0 = t.Cout0 = o.array_width;
    const auto rows_fit = static_cast<std::int64_t>(o.staging_bytes / (static_cast<std::uint64_t>(o.array_width) *
                                                                        o.bytes_per_element));
    t.L0 = std::max<std::int64_t>(1, std::min(streamed_rows(l), rows_fit));
    return t;
}

inline SchedulePlan plan_schedule(const NetworkGraph& g, const ScheduleOptions& o = {}) {
    if (o.buffer_bytes == 0 || o.staging_bytes == 0 || o.array_width < 1 || o.bytes_per_element < 1)
        throw ConfigError("schedule options must be positive");
    SchedulePlan plan;
    plan.options = o;
    const ReuseOptions ro{o.chunk_fraction};
    for (const auto& l : g.layers) {
        LayerPlan lp;
        lp.layer_id = l.id;
        if (is_matmul(l.kind)) {
            lp.on_array = true;
            lp.tile = tile_for(l, o);
            lp.footprint = operand_footprint(l, o.bytes_per_element);
            if (o.im2col && kernel_size(l.kind) == 3) {
                lp.input_expansion = 9;
                lp.footprint.act_in_bytes = checked_mul(lp.footprint.act_in_bytes, 9);
            }
            if (is_conv(l.kind)) {
                lp.main_in_bytes = lp.footprint.act_in_bytes / static_cast<std::uint64_t>(l.c_in) *
                                   static_cast<std::uint64_t>(l.c_in - l.skip_channels);
            }
            auto c = o.adaptive ? choose_reuse(lp.footprint, o.buffer_bytes, ro)
                                : fixed_weight_reuse(lp.footprint, o.buffer_bytes, ro);
            lp.mode = c.mode;
            lp.weight_passes = c.weight_passes;
            lp.act_passes = c.act_passes;
            lp.resident_bytes = c.resident_bytes;
        }
        plan.layers.push_back(lp);
    }
    FusionPlan fusion;
    if (o.fusion) {
        fusion = plan_fusion(g, plan.layers, o.buffer_bytes);
    } else {
        for (int id : conv3x3_stack(g)) fusion.groups.push_back({FusionKind::none, {id}});
    }
    apply_fusion(plan, fusion);
    return plan;
}

struct TrafficReport {
    std::vector<TrafficEstimate> per_layer;
    TrafficEstimate total;
    std::uint64_t total_bytes() const { return total.total(); }
};

// Largest on-chip resident set the plan asks for at any layer.
inline std::uint64_t layer_residency(const SchedulePlan& plan, const NetworkGraph& g, int id,
                                     std::uint64_t* group_weights = nullptr) {
    const auto& lp = plan.layers[static_cast<std::size_t>(id)];
    if (!lp.on_array) return 0;
    if (lp.fusion == FusionKind::cross_layer) {
        std::uint64_t w = 0;
        for (int m : plan.fusion.groups[static_cast<std::size_t>(lp.group)].layers)
            w += plan.layers[static_cast<std::size_t>(m)].footprint.weight_bytes;
        if (group_weights) *group_weights = w;
        return w;
    }
    if (lp.fusion == FusionKind::layer_by_layer)
        return lp.footprint.act_in_bytes + (lp.fused_out ? lp.footprint.act_out_bytes : 0);
    (void)g;
    return lp.resident_bytes;
}

inline void validate_plan(const NetworkGraph& g, const SchedulePlan& plan) {
    const auto B = plan.options.buffer_bytes;
    if (plan.layers.size() != g.layers.size()) throw InvariantError("plan does not cover every layer");
    for (const auto& lp : plan.layers) {
        const auto& l = g.layers[static_cast<std::size_t>(lp.layer_id)];
        auto fail = [&](const std::string& what) {
            throw InvariantError("layer " + std::to_string(l.id) + " (" + l.name + "): " + what);
        };
        if (lp.on_array != is_matmul(l.kind)) fail("array assignment does not match layer kind");
        if (!lp.on_array) continue;
        if (lp.tile.Cin0 != lp.tile.Cout0) fail("tile Cin0 != Cout0");
        if (lp.tile.L0 < 1 || lp.tile.L0 > streamed_rows(l)) fail("tile L0 outside [1, rows]");
        if (lp.mode == ReuseMode::input_reuse && lp.footprint.act_in_bytes > B)
            fail("input_reuse requires act_in_bytes <= buffer");
        if (lp.mode == ReuseMode::weight_reuse && lp.footprint.weight_bytes > B)
            fail("weight_reuse requires weight_bytes <= buffer");
        if (lp.mode == ReuseMode::both_tiled && lp.fusion != FusionKind::none) fail("both_tiled layer inside a fusion group");
        if (lp.fusion == FusionKind::cross_layer && lp.mode != ReuseMode::weight_reuse)
            fail("cross_layer group member is not weight_reuse");
        if (lp.fusion == FusionKind::layer_by_layer && lp.fused_out &&
            lp.footprint.act_in_bytes + lp.footprint.act_out_bytes > B)
            fail("layer_by_layer pair exceeds buffer (act_in + act_out)");
        if (layer_residency(plan, g, l.id) > B) fail("resident set exceeds buffer");
    }
}

inline TrafficReport traffic_model(const NetworkGraph& g, const SchedulePlan& plan) {
    validate_plan(g, plan);
    TrafficReport r;
    r.per_layer.resize(g.layers.size());
    for (const auto& lp : plan.layers) {
        if (!lp.on_array) continue;
        auto& t = r.per_layer[static_cast<std::size_t>(lp.layer_id)];
        t = detail::make_choice(lp.mode, lp.footprint, lp.weight_passes, lp.act_passes, 0).traffic;
        if (lp.fused_in) t.read[kActIn] -= checked_mul(lp.main_in_bytes, lp.act_passes);
        if (lp.fused_out) t.write[kActOut] = 0;
        r.total += t;
    }
    return r;
}

// Traffic of the 3x3 conv stack only (the scope of the reuse/fusion comparison).
inline std::uint64_t conv_stack_traffic(const NetworkGraph& g, const TrafficReport& r) {
    std::uint64_t sum = 0;
    for (int id : conv3x3_stack(g)) sum += r.per_layer[static_cast<std::size_t>(id)].total();
    return sum;
}

}  // namespace sdacc
