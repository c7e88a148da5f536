#pragma once

// Analytical timing, traffic and energy model of the accelerator.
//
// Array layers (per layer):
//   sa      = G * F * nN * (nL * K + nK * M) + sa_h + sa_w
//             G heads, F kernel slices, M streamed rows, K reduction depth, N outputs,
//             nK = ceil(K / sa_w), nN = ceil(N / sa_h), nL = row chunks per stationary tile
//             (1 when the whole input is resident, else ceil(M / L0)). Each weight tile load costs
//             K cycles and is not hidden; fill/drain is paid once per layer.
//   im2col  adds exposed conversion = overlap * lowered_elements / conversion_width
//   memory  = DRAM bytes / (bandwidth / freq)
//   total   = max(sa + conversion, memory) + first-tile load + last-tile store
//             (the load is skipped for fused inputs, the store for fused outputs)
// Vector layers:
//   blocking   passes * ceil(elements / width); softmax 3 passes, group/layer norm 2, elementwise 1.
//              Layernorm statistics reduce along the channel axis at channel_reduce_width.
//   streaming  hidden behind the neighbouring matmul; only tile and pipeline latency remain.

#include <sdacc/common.hpp>
#include <sdacc/nonlinear.hpp>
#include <sdacc/phase.hpp>
#include <sdacc/scheduler.hpp>
#include <sdacc/unet_recipe.hpp>
#include <sdacc/workload.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace sdacc {

inline constexpr int kReportSchemaVersion = 1;

struct HardwareConfig {
    std::int64_t sa_h = 32, sa_w = 32;
    std::int64_t vpu_lanes = 32;
    double freq_hz = 2.0e8;
    double dram_bw_bytes_per_s = 38.4e9;
    std::uint64_t bytes_per_element = 2;
    std::uint64_t global_buffer_bytes = 2097152;
    std::uint64_t staging_buffer_bytes = 65536;  // each of input, weight and output staging
    std::int64_t fifo_depth = 32;
    double power_w = 15.98;
    double dram_energy_per_byte = 1.2e-10;

    std::int64_t tile_latency_cycles = 32;
    std::int64_t pipeline_latency_cycles = 8;
    std::int64_t channel_reduce_width = 2;

    double reuse_chunk_fraction = 0.5;

    // im2col baseline. The conversion width is calibrated, see README.
    double im2col_overlap = 0.5;
    double im2col_conversion_width = 1.25;

    double peak_mac_per_s() const { return static_cast<double>(sa_h * sa_w) * freq_hz; }
    double bytes_per_cycle() const { return dram_bw_bytes_per_s / freq_hz; }

    void validate() const {
        auto fail = [](const std::string& s) { throw ConfigError("hardware config: " + s); };
        if (sa_h < 1 || sa_w < 1 || vpu_lanes < 1 || fifo_depth < 1 || channel_reduce_width < 1)
            fail("array, lane and fifo sizes must be positive");
        if (vpu_lanes != sa_h) fail("vpu_lanes must equal sa_h");
        if (sa_h != sa_w) fail("the tiling assumes a square array (sa_h == sa_w)");
        if (!(freq_hz > 0) || !(dram_bw_bytes_per_s > 0) || !(power_w > 0) || !(dram_energy_per_byte >= 0))
            fail("frequency, bandwidth and power must be positive");
        if (bytes_per_element < 1 || global_buffer_bytes < 1 || staging_buffer_bytes < 1)
            fail("byte sizes must be positive");
        if (tile_latency_cycles < 0 || pipeline_latency_cycles < 0) fail("latencies must be >= 0");
        if (!(reuse_chunk_fraction > 0 && reuse_chunk_fraction <= 1)) fail("reuse_chunk_fraction must be in (0,1]");
        if (!(im2col_overlap >= 0 && im2col_overlap <= 1)) fail("im2col_overlap must be in [0,1]");
        if (!(im2col_conversion_width > 0)) fail("im2col_conversion_width must be > 0");
    }
};

struct AblationSwitches {
    bool address_centric = true;
    bool adaptive_dataflow = true;
    bool streaming_nonlinear = true;

    static AblationSwitches baseline() { return {false, false, false}; }
    std::string label() const {
        std::string s;
        auto add = [&](bool on, const char* n) {
            if (!on) return;
            if (!s.empty()) s += "+";
            s += n;
        };
        add(address_centric, "AC");
        add(adaptive_dataflow, "AD");
        add(streaming_nonlinear, "SC");
        return s.empty() ? "base" : s;
    }
};

inline ScheduleOptions schedule_options(const HardwareConfig& hw, const AblationSwitches& sw) {
    ScheduleOptions o;
    o.buffer_bytes = hw.global_buffer_bytes;
    o.staging_bytes = hw.staging_buffer_bytes;
    o.array_width = hw.sa_w;
    o.bytes_per_element = hw.bytes_per_element;
    o.adaptive = sw.adaptive_dataflow;
    o.fusion = sw.adaptive_dataflow;
    o.im2col = !sw.address_centric;
    o.chunk_fraction = hw.reuse_chunk_fraction;
    return o;
}

struct LayerStats {
    std::uint64_t macs = 0;
    std::uint64_t cycles_total = 0;
    std::uint64_t cycles_sa_busy = 0;
    std::uint64_t cycles_mem_bound = 0;
    std::uint64_t cycles_nonlinear_stall = 0;
    std::uint64_t cycles_other = 0;
    std::uint64_t dram_bytes = 0;
    double energy_j = 0.0;
    double op_intensity = 0.0;
    double attained_mac_per_s = 0.0;

    LayerStats& operator+=(const LayerStats& o) {
        macs += o.macs;
        cycles_total += o.cycles_total;
        cycles_sa_busy += o.cycles_sa_busy;
        cycles_mem_bound += o.cycles_mem_bound;
        cycles_nonlinear_stall += o.cycles_nonlinear_stall;
        cycles_other += o.cycles_other;
        dram_bytes += o.dram_bytes;
        return *this;
    }
};

inline void finish_stats(LayerStats& s, const HardwareConfig& hw) {
    const double seconds = static_cast<double>(s.cycles_total) / hw.freq_hz;
    s.energy_j = hw.power_w * seconds + hw.dram_energy_per_byte * static_cast<double>(s.dram_bytes);
    s.op_intensity = s.dram_bytes ? static_cast<double>(s.macs) / static_cast<double>(s.dram_bytes) : 0.0;
    s.attained_mac_per_s = seconds > 0 ? static_cast<double>(s.macs) / seconds : 0.0;
}

inline std::uint64_t simulate_matmul_tile(std::int64_t M, std::int64_t K, std::int64_t N, const HardwareConfig& hw) {
    if (M < 1 || K < 1 || N < 1) throw ConfigError("simulate_matmul_tile: dimensions must be >= 1");
    if (K > hw.sa_w || N > hw.sa_h) throw ConfigError("simulate_matmul_tile: tile exceeds the array");
    return static_cast<std::uint64_t>(K + M + hw.sa_h + hw.sa_w);
}

// Array work of one layer: G groups of F slices, each an (M x K) x (K x N) product.
struct MatmulShape {
    std::int64_t G = 1, F = 1, M = 1, K = 1, N = 1;
    std::uint64_t lowered_elements = 0;  // im2col only
};

inline MatmulShape matmul_shape(const LayerDescriptor& l, bool im2col) {
    MatmulShape s;
    switch (l.kind) {
        case LayerKind::conv3x3:
        case LayerKind::downsample_conv:
            s.M = l.out_len();
            s.N = l.c_out;
            if (im2col) {
                s.K = 9 * l.c_in;
                s.lowered_elements = static_cast<std::uint64_t>(s.M) * static_cast<std::uint64_t>(s.K);
            } else {
                s.F = 9;
                s.K = l.c_in;
            }
            break;
        case LayerKind::conv1x1:
        case LayerKind::linear:
            s.M = l.spatial_len();
            s.K = l.c_in;
            s.N = l.c_out;
            break;
        case LayerKind::attention_qk:
            s.G = l.heads;
            s.M = l.seq_len;
            s.K = l.head_dim;
            s.N = l.kv_len;
            break;
        case LayerKind::attention_av:
            s.G = l.heads;
            s.M = l.seq_len;
            s.K = l.kv_len;
            s.N = l.head_dim;
            break;
        default:
            throw ConfigError("layer " + std::to_string(l.id) + " is not an array layer");
    }
    return s;
}

inline std::uint64_t array_cycles(const MatmulShape& s, std::int64_t nL, const HardwareConfig& hw) {
    const auto nK = ceil_div(s.K, hw.sa_w);
    const auto nN = ceil_div(s.N, hw.sa_h);
    const auto per_slice = nN * (nL * s.K + nK * s.M);
    return static_cast<std::uint64_t>(s.G * s.F * per_slice + hw.sa_h + hw.sa_w);
}

inline std::uint64_t dram_cycles(std::uint64_t bytes, const HardwareConfig& hw) {
    return static_cast<std::uint64_t>(std::ceil(static_cast<double>(bytes) / hw.bytes_per_cycle()));
}

inline LayerStats simulate_array_layer(const LayerDescriptor& l, const LayerPlan& lp, const TrafficEstimate& t,
                                       const HardwareConfig& hw, const AblationSwitches& sw) {
    LayerStats s;
    s.macs = layer_macs(l);
    s.dram_bytes = t.total();
    const auto shape = matmul_shape(l, !sw.address_centric);
    const bool whole_input = lp.mode == ReuseMode::input_reuse || lp.fused_in;
    const std::int64_t nL = whole_input ? 1 : ceil_div(shape.M, lp.tile.L0);
    s.cycles_sa_busy = array_cycles(shape, nL, hw);

    std::uint64_t conversion = 0;
    if (shape.lowered_elements)
        conversion = static_cast<std::uint64_t>(
            std::ceil(hw.im2col_overlap * static_cast<double>(shape.lowered_elements) / hw.im2col_conversion_width));
    const auto compute = s.cycles_sa_busy + conversion;
    const auto memory = dram_cycles(s.dram_bytes, hw);

    const auto bpe = hw.bytes_per_element;
    std::uint64_t edge = 0;
    const auto weight_tile = static_cast<std::uint64_t>(hw.sa_w * hw.sa_h) * bpe;
    edge += dram_cycles(std::min(lp.footprint.weight_bytes, weight_tile), hw);
    if (!lp.fused_in)
        edge += dram_cycles(std::min(t.read[kActIn], static_cast<std::uint64_t>(lp.tile.L0 * lp.tile.Cin0) * bpe), hw);
    if (!lp.fused_out)
        edge += dram_cycles(std::min(t.write[kActOut], static_cast<std::uint64_t>(lp.tile.L0 * lp.tile.Cout0) * bpe), hw);

    s.cycles_mem_bound = memory > compute ? memory - compute : 0;
    s.cycles_other = conversion + edge;
    s.cycles_total = std::max(compute, memory) + edge;
    finish_stats(s, hw);
    return s;
}

inline LayerStats simulate_vector_layer(const LayerDescriptor& l, const HardwareConfig& hw,
                                        const AblationSwitches& sw) {
    LayerStats s;
    const auto n = vector_elements(l);
    const auto lanes = static_cast<std::uint64_t>(hw.vpu_lanes);
    const auto tail_norm = static_cast<std::uint64_t>(hw.tile_latency_cycles + hw.pipeline_latency_cycles);
    const auto tail_elem = static_cast<std::uint64_t>(hw.pipeline_latency_cycles);
    std::uint64_t c = 0;
    switch (l.kind) {
        case LayerKind::softmax:
            c = sw.streaming_nonlinear ? tail_norm : 3 * ceil_div(n, lanes);
            break;
        case LayerKind::groupnorm:
            c = sw.streaming_nonlinear ? tail_norm : 2 * ceil_div(n, lanes);
            break;
        case LayerKind::layernorm:
            c = sw.streaming_nonlinear ? tail_norm
                                       : 2 * ceil_div(n, static_cast<std::uint64_t>(hw.channel_reduce_width));
            break;
        case LayerKind::gelu:
        case LayerKind::silu:
        case LayerKind::add:
        case LayerKind::upsample_nearest:
            c = sw.streaming_nonlinear ? tail_elem : ceil_div(n, lanes);
            break;
        case LayerKind::concat:
            c = 0;  // address remapping only
            break;
        default:
            throw ConfigError("layer " + std::to_string(l.id) + " is not a vector layer");
    }
    s.cycles_nonlinear_stall = c;
    s.cycles_total = c;
    finish_stats(s, hw);
    return s;
}

inline LayerStats simulate_layer(const NetworkGraph& g, const SchedulePlan& plan, const TrafficReport& traffic, int id,
                                 const HardwareConfig& hw, const AblationSwitches& sw) {
    const auto& l = g.layers[static_cast<std::size_t>(id)];
    const auto& lp = plan.layers[static_cast<std::size_t>(id)];
    if (lp.layer_id != id) throw InvariantError("plan/graph mismatch at layer " + std::to_string(id));
    if (is_matmul(l.kind)) return simulate_array_layer(l, lp, traffic.per_layer[static_cast<std::size_t>(id)], hw, sw);
    return simulate_vector_layer(l, hw, sw);
}

// Convolution layer alone.
inline LayerStats simulate_uniconv(const NetworkGraph& g, const SchedulePlan& plan, int id, const HardwareConfig& hw,
                                   const AblationSwitches& sw) {
    if (!is_conv(g.layers[static_cast<std::size_t>(id)].kind))
        throw ConfigError("simulate_uniconv: layer " + std::to_string(id) + " is not a convolution");
    return simulate_layer(g, plan, traffic_model(g, plan), id, hw, sw);
}

inline LayerStats sum_stats(const std::vector<LayerStats>& v, const HardwareConfig& hw) {
    LayerStats s;
    for (const auto& x : v) s += x;
    finish_stats(s, hw);
    return s;
}

// Aggregate over a set of layers (e.g. one attention or feed-forward section).
inline LayerStats simulate_attention(const NetworkGraph& g, const SchedulePlan& plan, const std::vector<int>& ids,
                                     const HardwareConfig& hw, const AblationSwitches& sw) {
    const auto traffic = traffic_model(g, plan);
    std::vector<LayerStats> v;
    for (int id : ids) {
        const auto& l = g.layers[static_cast<std::size_t>(id)];
        if ((l.kind == LayerKind::attention_qk || l.kind == LayerKind::attention_av || l.kind == LayerKind::softmax) &&
            (l.seq_len < 1 || l.kv_len < 1 || l.heads < 1 || l.head_dim < 1))
            throw ConfigError("simulate_attention: layer " + std::to_string(id) + " lacks attention shape fields");
        v.push_back(simulate_layer(g, plan, traffic, id, hw, sw));
    }
    return sum_stats(v, hw);
}

// One transformer layer at sequence length L and width c, split into its self-attention and
// feed-forward sections.
struct TransformerProbe {
    NetworkGraph graph;
    std::vector<int> self_attention;
    std::vector<int> feed_forward;
};

inline TransformerProbe transformer_probe(std::int64_t side, std::int64_t c, std::int64_t heads) {
    UNetRecipe r = recipe_for(ModelId::sd14);
    r.heads = heads;
    detail::GraphBuilder b(r);
    b.block = {BlockSide::mid, 0};
    TransformerProbe p;
    auto mark = [&] { return static_cast<int>(b.g.layers.size()); };
    int s0 = mark();
    b.vec(LayerKind::layernorm, "norm1", side, side, c);
    b.attention("attn1.", side, side, c, false);
    int s1 = mark();
    b.vec(LayerKind::layernorm, "norm3", side, side, c);
    b.linear("ff1", side, side, c, 8 * c, true);
    b.vec(LayerKind::gelu, "geglu", side, side, 4 * c);
    b.linear("ff2", side, side, 4 * c, c, true);
    b.vec(LayerKind::add, "ff_residual", side, side, c);
    int s2 = mark();
    for (int i = s0; i < s1; ++i) p.self_attention.push_back(i);
    for (int i = s1; i < s2; ++i) p.feed_forward.push_back(i);
    p.graph = b.g;
    p.graph.depth = 1;
    return p;
}

struct BlockTotals {
    std::uint64_t macs = 0, cycles = 0, dram_bytes = 0;
};

struct SamplingTotals {
    SamplingPlan plan;
    std::uint64_t cycles = 0, dram_bytes = 0, macs = 0;
    std::uint64_t full_cycles = 0, full_dram_bytes = 0, full_macs = 0;
    double energy_j = 0.0;
    double speedup = 1.0;
    double avg_intensity = 0.0, full_avg_intensity = 0.0;
};

struct SimReport {
    std::string model;
    HardwareConfig hw;
    AblationSwitches switches;
    const SchedulePlan* plan = nullptr;  // echoed on serialization
    std::vector<LayerStats> layers;
    std::map<BlockId, BlockTotals> blocks;
    LayerStats step;  // one full network evaluation
    std::optional<SamplingTotals> sampling;
    std::uint64_t traffic_total = 0;
};

inline SimReport simulate_network(const NetworkGraph& g, const SchedulePlan& plan, const SamplingPlan* sampling,
                                  const HardwareConfig& hw, const AblationSwitches& sw) {
    hw.validate();
    if (plan.layers.size() != g.layers.size()) throw InvariantError("plan/graph mismatch: layer counts differ");
    SimReport r;
    r.model = std::string(to_string(g.model_id));
    r.hw = hw;
    r.switches = sw;
    r.plan = &plan;
    const auto traffic = traffic_model(g, plan);
    r.traffic_total = traffic.total_bytes();
    for (const auto& l : g.layers) {
        auto s = simulate_layer(g, plan, traffic, l.id, hw, sw);
        auto& b = r.blocks[l.block];
        b.macs += s.macs;
        b.cycles += s.cycles_total;
        b.dram_bytes += s.dram_bytes;
        r.layers.push_back(s);
    }
    r.step = sum_stats(r.layers, hw);
    if (r.step.dram_bytes != r.traffic_total) throw InvariantError("report bytes differ from the traffic model");

    if (sampling) {
        if (sampling->full_level != g.full_level())
            throw ConfigError("sampling plan depth does not match the network (full level " +
                              std::to_string(g.full_level()) + ")");
        SamplingTotals st;
        st.plan = *sampling;
        for (int lt : sampling->depth_schedule) {
            for (const auto& [b, tot] : r.blocks) {
                if (!block_executed(b, lt, g.full_level())) continue;
                st.cycles += tot.cycles;
                st.dram_bytes += tot.dram_bytes;
                st.macs += tot.macs;
            }
        }
        const auto T = static_cast<std::uint64_t>(sampling->T);
        st.full_cycles = r.step.cycles_total * T;
        st.full_dram_bytes = r.step.dram_bytes * T;
        st.full_macs = r.step.macs * T;
        st.energy_j = hw.power_w * static_cast<double>(st.cycles) / hw.freq_hz +
                      hw.dram_energy_per_byte * static_cast<double>(st.dram_bytes);
        st.speedup = static_cast<double>(st.full_cycles) / static_cast<double>(st.cycles);
        st.avg_intensity = static_cast<double>(st.macs) / static_cast<double>(st.dram_bytes);
        st.full_avg_intensity = static_cast<double>(st.full_macs) / static_cast<double>(st.full_dram_bytes);
        r.sampling = st;
    }
    return r;
}

// Convenience: plan with the switches' dataflow and simulate.
inline SimReport simulate(const NetworkGraph& g, const HardwareConfig& hw, const AblationSwitches& sw,
                          const SamplingPlan* sampling, SchedulePlan& plan_out) {
    hw.validate();
    plan_out = plan_schedule(g, schedule_options(hw, sw));
    return simulate_network(g, plan_out, sampling, hw, sw);
}

struct RooflinePoint {
    int layer_id = 0;
    double intensity = 0.0;
    double attained = 0.0;
    double bound = 0.0;
};

inline double roofline_bound(double intensity, const HardwareConfig& hw) {
    return std::min(hw.peak_mac_per_s(), intensity * hw.dram_bw_bytes_per_s);
}

// Array layers only; vector layers perform no MACs.
inline std::vector<RooflinePoint> roofline_points(const SimReport& r, const HardwareConfig& hw) {
    std::vector<RooflinePoint> pts;
    for (std::size_t i = 0; i < r.layers.size(); ++i) {
        const auto& s = r.layers[i];
        if (s.macs == 0 || s.dram_bytes == 0) continue;
        pts.push_back({static_cast<int>(i), s.op_intensity, s.attained_mac_per_s, roofline_bound(s.op_intensity, hw)});
    }
    return pts;
}

// Relative slack for floating-point rounding in the bound check.
inline bool within_roofline(const RooflinePoint& p) { return p.attained <= p.bound * (1.0 + 1e-12); }

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json hardware_to_json(const HardwareConfig& hw) {
    nlohmann::ordered_json j;
    j["sa_h"] = hw.sa_h;
    j["sa_w"] = hw.sa_w;
    j["vpu_lanes"] = hw.vpu_lanes;
    j["freq_hz"] = hw.freq_hz;
    j["dram_bw_bytes_per_s"] = hw.dram_bw_bytes_per_s;
    j["bytes_per_element"] = hw.bytes_per_element;
    j["global_buffer_bytes"] = hw.global_buffer_bytes;
    j["staging_buffer_bytes"] = hw.staging_buffer_bytes;
    j["fifo_depth"] = hw.fifo_depth;
    j["power_w"] = hw.power_w;
    j["dram_energy_per_byte"] = hw.dram_energy_per_byte;
    j["tile_latency_cycles"] = hw.tile_latency_cycles;
    j["pipeline_latency_cycles"] = hw.pipeline_latency_cycles;
    j["channel_reduce_width"] = hw.channel_reduce_width;
    j["reuse_chunk_fraction"] = hw.reuse_chunk_fraction;
    j["im2col_overlap"] = hw.im2col_overlap;
    j["im2col_conversion_width"] = hw.im2col_conversion_width;
    return j;
}

inline nlohmann::ordered_json switches_to_json(const AblationSwitches& sw) {
    nlohmann::ordered_json j;
    j["address_centric"] = sw.address_centric;
    j["adaptive_dataflow"] = sw.adaptive_dataflow;
    j["streaming_nonlinear"] = sw.streaming_nonlinear;
    return j;
}

inline nlohmann::ordered_json plan_to_json(const SchedulePlan& p) {
    nlohmann::ordered_json j;
    j["buffer_bytes"] = p.options.buffer_bytes;
    j["adaptive"] = p.options.adaptive;
    j["fusion"] = p.options.fusion;
    j["im2col"] = p.options.im2col;
    auto layers = nlohmann::ordered_json::array();
    for (const auto& lp : p.layers) {
        if (!lp.on_array) continue;
        nlohmann::ordered_json jl;
        jl["layer_id"] = lp.layer_id;
        jl["tile"] = {lp.tile.L0, lp.tile.Cin0, lp.tile.Cout0};
        jl["reuse"] = to_string(lp.mode);
        jl["fusion_group"] = lp.group;
        jl["fusion"] = to_string(lp.fusion);
        layers.push_back(std::move(jl));
    }
    j["layers"] = std::move(layers);
    auto groups = nlohmann::ordered_json::array();
    for (const auto& gr : p.fusion.groups) {
        if (gr.kind == FusionKind::none) continue;
        groups.push_back({{"kind", to_string(gr.kind)}, {"layers", gr.layers}});
    }
    j["fusion_groups"] = std::move(groups);
    return j;
}

inline nlohmann::ordered_json stats_to_json(const LayerStats& s) {
    nlohmann::ordered_json j;
    j["macs"] = s.macs;
    j["cycles_total"] = s.cycles_total;
    j["cycles_sa_busy"] = s.cycles_sa_busy;
    j["cycles_mem_bound"] = s.cycles_mem_bound;
    j["cycles_nonlinear_stall"] = s.cycles_nonlinear_stall;
    j["cycles_other"] = s.cycles_other;
    j["dram_bytes"] = s.dram_bytes;
    j["energy_j"] = s.energy_j;
    j["op_intensity"] = s.op_intensity;
    j["attained_mac_per_s"] = s.attained_mac_per_s;
    return j;
}

inline nlohmann::ordered_json sampling_plan_to_json(const SamplingPlan& p) {
    nlohmann::ordered_json j;
    j["T"] = p.T;
    j["T_sketch"] = p.params.T_sketch;
    j["T_complete"] = p.params.T_complete;
    j["T_sparse"] = p.params.T_sparse;
    j["L_sketch"] = p.params.L_sketch;
    j["L_refine"] = p.params.L_refine;
    j["depth_schedule"] = p.depth_schedule;
    return j;
}

inline std::string report_to_json(const SimReport& r, const NetworkGraph& g) {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["model"] = r.model;
    j["defaults"] = hardware_to_json(HardwareConfig{});
    j["config"] = hardware_to_json(r.hw);
    j["switches"] = switches_to_json(r.switches);
    if (r.plan) j["plan"] = plan_to_json(*r.plan);
    auto layers = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < r.layers.size(); ++i) {
        const auto& l = g.layers[i];
        nlohmann::ordered_json jl;
        jl["layer_id"] = l.id;
        jl["name"] = l.name;
        jl["kind"] = to_string(l.kind);
        jl["block"] = to_string(l.block);
        jl.update(stats_to_json(r.layers[i]));
        layers.push_back(std::move(jl));
    }
    j["layers"] = std::move(layers);
    auto blocks = nlohmann::ordered_json::array();
    for (const auto& [b, t] : r.blocks)
        blocks.push_back({{"block", to_string(b)}, {"macs", t.macs}, {"cycles", t.cycles}, {"dram_bytes", t.dram_bytes}});
    j["blocks"] = std::move(blocks);
    j["step"] = stats_to_json(r.step);
    j["step"]["seconds"] = static_cast<double>(r.step.cycles_total) / r.hw.freq_hz;
    if (r.sampling) {
        const auto& s = *r.sampling;
        nlohmann::ordered_json js;
        js["plan"] = sampling_plan_to_json(s.plan);
        js["cycles"] = s.cycles;
        js["dram_bytes"] = s.dram_bytes;
        js["macs"] = s.macs;
        js["energy_j"] = s.energy_j;
        js["full_cycles"] = s.full_cycles;
        js["full_dram_bytes"] = s.full_dram_bytes;
        js["full_macs"] = s.full_macs;
        js["speedup"] = s.speedup;
        js["avg_intensity"] = s.avg_intensity;
        js["full_avg_intensity"] = s.full_avg_intensity;
        j["sampling"] = std::move(js);
    }
    return j.dump(1) + "\n";
}

inline std::string layers_csv(const SimReport& r) {
    std::ostringstream os;
    os << "layer_id,cycles,dram_bytes,energy_j,intensity,attained\n";
    for (std::size_t i = 0; i < r.layers.size(); ++i) {
        const auto& s = r.layers[i];
        os << i << ',' << s.cycles_total << ',' << s.dram_bytes << ',' << format_double(s.energy_j) << ','
           << format_double(s.op_intensity) << ',' << format_double(s.attained_mac_per_s) << '\n';
    }
    return os.str();
}

inline std::string roofline_csv(const SimReport& r, const HardwareConfig& hw) {
    std::ostringstream os;
    os << "layer_id,intensity,attained,bound\n";
    for (const auto& p : roofline_points(r, hw))
        os << p.layer_id << ',' << format_double(p.intensity) << ',' << format_double(p.attained) << ','
           << format_double(p.bound) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Ablation grid

struct AblationRun {
    AblationSwitches switches;
    SchedulePlan plan;
    SimReport report;
};

// The cumulative sequence base, AC, AC+AD, AC+AD+SC first, then the remaining combinations.
inline std::vector<AblationSwitches> ablation_order() {
    return {{false, false, false}, {true, false, false}, {true, true, false}, {true, true, true},
            {false, true, false},  {false, false, true}, {true, false, true}, {false, true, true}};
}

inline std::vector<AblationRun> run_ablation(const NetworkGraph& g, const HardwareConfig& hw,
                                             const SamplingPlan* sampling = nullptr) {
    std::vector<AblationRun> runs;
    runs.reserve(8);
    for (const auto& sw : ablation_order()) {
        runs.push_back({sw, {}, {}});
        auto& run = runs.back();
        run.report = simulate(g, hw, sw, sampling, run.plan);
        run.report.plan = &run.plan;
    }
    return runs;
}

inline std::uint64_t total_cycles(const SimReport& r) { return r.sampling ? r.sampling->cycles : r.step.cycles_total; }

}  // namespace sdacc
