#pragma once

#include <sdacc/common.hpp>

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace sdacc {

enum class LayerKind {
    conv3x3,
    conv1x1,
    linear,
    attention_qk,
    attention_av,
    softmax,
    layernorm,
    groupnorm,
    gelu,
    silu,
    upsample_nearest,
    downsample_conv,
    add,
    concat,
};

inline constexpr std::array<std::pair<LayerKind, std::string_view>, 14> kLayerKindNames{{
    {LayerKind::conv3x3, "conv3x3"},
    {LayerKind::conv1x1, "conv1x1"},
    {LayerKind::linear, "linear"},
    {LayerKind::attention_qk, "attention_qk"},
    {LayerKind::attention_av, "attention_av"},
    {LayerKind::softmax, "softmax"},
    {LayerKind::layernorm, "layernorm"},
    {LayerKind::groupnorm, "groupnorm"},
    {LayerKind::gelu, "gelu"},
    {LayerKind::silu, "silu"},
    {LayerKind::upsample_nearest, "upsample_nearest"},
    {LayerKind::downsample_conv, "downsample_conv"},
    {LayerKind::add, "add"},
    {LayerKind::concat, "concat"},
}};

inline std::string_view to_string(LayerKind k) {
    for (auto& [kind, name] : kLayerKindNames)
        if (kind == k) return name;
    return "?";
}

inline LayerKind parse_layer_kind(std::string_view s) {
    for (auto& [kind, name] : kLayerKindNames)
        if (name == s) return kind;
    throw ConfigError("unknown layer kind '" + std::string(s) + "'");
}

// Layers executed on the systolic array.
inline bool is_matmul(LayerKind k) {
    switch (k) {
        case LayerKind::conv3x3:
        case LayerKind::conv1x1:
        case LayerKind::linear:
        case LayerKind::attention_qk:
        case LayerKind::attention_av:
        case LayerKind::downsample_conv:
            return true;
        default:
            return false;
    }
}

inline bool is_conv(LayerKind k) {
    return k == LayerKind::conv3x3 || k == LayerKind::conv1x1 || k == LayerKind::downsample_conv;
}

// Layers with trainable weights (what a module-hook profiler counts).
inline bool is_parametric(LayerKind k) { return is_conv(k) || k == LayerKind::linear; }

inline int kernel_size(LayerKind k) {
    return (k == LayerKind::conv3x3 || k == LayerKind::downsample_conv) ? 3 : 1;
}

enum class BlockSide { down, mid, up };

struct BlockId {
    BlockSide side = BlockSide::down;
    int index = 1;

    friend auto operator<=>(const BlockId&, const BlockId&) = default;
};

inline std::string to_string(BlockId b) {
    switch (b.side) {
        case BlockSide::down: return "down" + std::to_string(b.index);
        case BlockSide::mid: return "mid";
        case BlockSide::up: return "up" + std::to_string(b.index);
    }
    return "?";
}

inline BlockId parse_block_id(std::string_view s) {
    if (s == "mid") return {BlockSide::mid, 0};
    auto num = [&](std::size_t off) {
        std::string rest(s.substr(off));
        if (rest.empty() || rest.find_first_not_of("0123456789") != std::string::npos)
            throw ConfigError("bad block id '" + std::string(s) + "'");
        return std::stoi(rest);
    };
    if (s.starts_with("down")) return {BlockSide::down, num(4)};
    if (s.starts_with("up")) return {BlockSide::up, num(2)};
    throw ConfigError("bad block id '" + std::string(s) + "'");
}

struct LayerDescriptor {
    int id = 0;
    LayerKind kind = LayerKind::conv3x3;
    std::string name;
    // Input spatial extent. Non-spatial row sets (context tokens, the time embedding) use H = 1.
    std::int64_t H = 1, W = 1;
    std::int64_t c_in = 1, c_out = 1;
    int stride = 1;
    // Attention shape; zero when unused. kv_len differs from seq_len for cross-attention.
    std::int64_t seq_len = 0, kv_len = 0;
    std::int64_t heads = 0, head_dim = 0;
    // Channels of c_in that arrive through a skip concat rather than from the preceding layer.
    std::int64_t skip_channels = 0;
    bool bias = false;
    // False for row sets that do not follow the latent grid (context tokens, time embedding).
    bool spatial = true;
    BlockId block;

    std::int64_t spatial_len() const { return H * W; }
    std::int64_t out_h() const {
        if (kind == LayerKind::downsample_conv) return (H + 1) / 2;
        if (kind == LayerKind::upsample_nearest) return 2 * H;
        return H;
    }
    std::int64_t out_w() const {
        if (kind == LayerKind::downsample_conv) return (W + 1) / 2;
        if (kind == LayerKind::upsample_nearest) return 2 * W;
        return W;
    }
    std::int64_t out_len() const { return out_h() * out_w(); }
};

enum class ModelId { sd14, sd21base, sdxl, custom };

inline std::string_view to_string(ModelId m) {
    switch (m) {
        case ModelId::sd14: return "sd14";
        case ModelId::sd21base: return "sd21base";
        case ModelId::sdxl: return "sdxl";
        case ModelId::custom: return "custom";
    }
    return "?";
}

inline ModelId parse_model_id(std::string_view s) {
    if (s == "sd14") return ModelId::sd14;
    if (s == "sd21base") return ModelId::sd21base;
    if (s == "sdxl") return ModelId::sdxl;
    if (s == "custom") return ModelId::custom;
    throw ConfigError("unknown model id '" + std::string(s) + "'");
}

struct SkipEdge {
    BlockId from;
    BlockId to;
};

struct NetworkGraph {
    ModelId model_id = ModelId::custom;
    std::vector<LayerDescriptor> layers;
    std::vector<SkipEdge> skips;
    std::int64_t latent_h = 0, latent_w = 0;
    std::int64_t context_len = 0, context_dim = 0;
    // Number of down blocks (= up blocks). 12 for the SD-v1/v2 family.
    int depth = 12;

    // Depth value meaning "whole network including the mid block".
    int full_level() const { return depth + 1; }
};

inline constexpr int kTopologySchemaVersion = 1;
inline constexpr int kMaxDepth = 12;

// ---------------------------------------------------------------------------
// Validation

inline void validate_layer(const LayerDescriptor& l) {
    auto fail = [&](const std::string& what) {
        throw ConfigError("layer " + std::to_string(l.id) + " (" + l.name + "): " + what);
    };
    if (l.c_in < 1 || l.c_out < 1) fail("c_in and c_out must be >= 1");
    if (l.H < 1 || l.W < 1) fail("H and W must be >= 1");
    if (l.stride != 1 && l.stride != 2) fail("stride must be 1 or 2");
    if (l.kind == LayerKind::conv1x1 && l.stride != 1) fail("conv1x1 must have stride 1");
    if ((l.kind == LayerKind::downsample_conv) != (l.stride == 2))
        fail("stride 2 is reserved for downsample_conv");
    if (l.kind == LayerKind::attention_qk || l.kind == LayerKind::attention_av ||
        l.kind == LayerKind::softmax) {
        if (l.seq_len < 1 || l.kv_len < 1 || l.heads < 1 || l.head_dim < 1)
            fail("attention shape fields must be >= 1");
        if (l.seq_len != l.spatial_len()) fail("seq_len must equal H*W");
        if (l.heads * l.head_dim != l.c_in) fail("heads*head_dim must equal c_in");
    }
    if (l.skip_channels < 0 || l.skip_channels >= (l.kind == LayerKind::concat ? l.c_out : l.c_in))
        fail("skip_channels out of range");
    if (l.kind == LayerKind::concat && l.c_out != l.c_in + l.skip_channels)
        fail("concat c_out must equal c_in + skip_channels");
    if (l.kind == LayerKind::upsample_nearest && l.c_in != l.c_out) fail("upsample keeps channels");
    auto bad_block = [&]() {
        switch (l.block.side) {
            case BlockSide::mid: return l.block.index != 0;
            default: return l.block.index < 1 || l.block.index > kMaxDepth;
        }
    };
    if (bad_block()) fail("block id out of range");
}

inline void validate_graph(const NetworkGraph& g) {
    if (g.depth < 1 || g.depth > kMaxDepth) throw ConfigError("depth must be in [1,12]");
    std::set<BlockId> seen;
    int mids = 0;
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const auto& l = g.layers[i];
        if (l.id != static_cast<int>(i)) throw ConfigError("layer ids must be 0..n-1 in order");
        validate_layer(l);
        if (l.block.side != BlockSide::mid && l.block.index > g.depth)
            throw ConfigError("layer " + std::to_string(l.id) + " references " + to_string(l.block) +
                              " beyond depth " + std::to_string(g.depth));
        if (seen.insert(l.block).second && l.block.side == BlockSide::mid) ++mids;
    }
    if (mids != 1) throw ConfigError("topology must contain exactly one mid block");
    for (int i = 1; i <= g.depth; ++i) {
        for (auto side : {BlockSide::down, BlockSide::up})
            if (!seen.contains(BlockId{side, i}))
                throw ConfigError("topology is missing block " + to_string(BlockId{side, i}));
    }
    for (const auto& s : g.skips) {
        if (s.from.side != BlockSide::down || s.to.side != BlockSide::up || s.from.index != s.to.index)
            throw ConfigError("skip edge " + to_string(s.from) + " -> " + to_string(s.to) +
                              " does not mirror depth");
    }
}

// ---------------------------------------------------------------------------
// Topology files

inline nlohmann::ordered_json layer_to_json(const LayerDescriptor& l) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(l.kind);
    j["name"] = l.name;
    j["H"] = l.H;
    j["W"] = l.W;
    j["L"] = l.spatial_len();
    j["c_in"] = l.c_in;
    j["c_out"] = l.c_out;
    if (l.stride != 1) j["stride"] = l.stride;
    if (l.seq_len) {
        j["seq_len"] = l.seq_len;
        j["kv_len"] = l.kv_len;
        j["heads"] = l.heads;
        j["head_dim"] = l.head_dim;
    }
    if (l.skip_channels) j["skip_channels"] = l.skip_channels;
    if (l.bias) j["bias"] = true;
    if (!l.spatial) j["spatial"] = false;
    return j;
}

inline std::string topology_to_json(const NetworkGraph& g) {
    nlohmann::ordered_json j;
    j["schema_version"] = kTopologySchemaVersion;
    j["model_id"] = to_string(g.model_id);
    j["latent_h"] = g.latent_h;
    j["latent_w"] = g.latent_w;
    j["context_len"] = g.context_len;
    j["context_dim"] = g.context_dim;
    j["depth"] = g.depth;
    auto blocks = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < g.layers.size();) {
        BlockId b = g.layers[i].block;
        nlohmann::ordered_json jb;
        jb["block"] = to_string(b);
        auto layers = nlohmann::ordered_json::array();
        for (; i < g.layers.size() && g.layers[i].block == b; ++i) layers.push_back(layer_to_json(g.layers[i]));
        jb["layers"] = std::move(layers);
        blocks.push_back(std::move(jb));
    }
    j["blocks"] = std::move(blocks);
    auto skips = nlohmann::ordered_json::array();
    for (const auto& s : g.skips) skips.push_back({to_string(s.from), to_string(s.to)});
    j["skips"] = std::move(skips);
    return j.dump(1) + "\n";
}

inline NetworkGraph topology_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed topology file: ") + e.what());
    }
    try {
        if (!j.contains("schema_version")) throw ConfigError("topology file lacks schema_version");
        if (j.at("schema_version").get<int>() != kTopologySchemaVersion)
            throw ConfigError("unsupported topology schema_version " + j.at("schema_version").dump());
        NetworkGraph g;
        g.model_id = parse_model_id(j.at("model_id").get<std::string>());
        g.latent_h = j.at("latent_h").get<std::int64_t>();
        g.latent_w = j.at("latent_w").get<std::int64_t>();
        g.context_len = j.at("context_len").get<std::int64_t>();
        g.context_dim = j.at("context_dim").get<std::int64_t>();
        g.depth = j.value("depth", 12);
        for (const auto& jb : j.at("blocks")) {
            BlockId b = parse_block_id(jb.at("block").get<std::string>());
            for (const auto& jl : jb.at("layers")) {
                LayerDescriptor l;
                l.id = static_cast<int>(g.layers.size());
                l.kind = parse_layer_kind(jl.at("kind").get<std::string>());
                l.name = jl.value("name", std::string{});
                l.H = jl.at("H").get<std::int64_t>();
                l.W = jl.at("W").get<std::int64_t>();
                l.c_in = jl.at("c_in").get<std::int64_t>();
                l.c_out = jl.at("c_out").get<std::int64_t>();
                l.stride = jl.value("stride", 1);
                l.seq_len = jl.value("seq_len", std::int64_t{0});
                l.kv_len = jl.value("kv_len", std::int64_t{0});
                l.heads = jl.value("heads", std::int64_t{0});
                l.head_dim = jl.value("head_dim", std::int64_t{0});
                l.skip_channels = jl.value("skip_channels", std::int64_t{0});
                l.bias = jl.value("bias", false);
                l.spatial = jl.value("spatial", true);
                l.block = b;
                if (jl.contains("L") && jl.at("L").get<std::int64_t>() != l.spatial_len())
                    throw ConfigError("layer " + std::to_string(l.id) + ": L != H*W");
                g.layers.push_back(std::move(l));
            }
        }
        for (const auto& js : j.at("skips"))
            g.skips.push_back({parse_block_id(js.at(0).get<std::string>()),
                               parse_block_id(js.at(1).get<std::string>())});
        validate_graph(g);
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed topology file: ") + e.what());
    }
}

inline NetworkGraph load_topology(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open topology file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return topology_from_json(ss.str());
}

inline std::filesystem::path data_dir() {
    if (const char* env = std::getenv("SDACC_DATA_DIR"); env && *env) return env;
#ifdef SDACC_DATA_DIR
    return SDACC_DATA_DIR;
#else
    return "data";
#endif
}

inline std::filesystem::path topology_path(ModelId m) {
    return data_dir() / "topologies" / (std::string(to_string(m)) + ".json");
}

inline NetworkGraph build_unet(ModelId m) {
    if (m == ModelId::custom) throw ConfigError("custom models need a topology file");
    return load_topology(topology_path(m));
}

inline NetworkGraph build_unet(const std::filesystem::path& topology_file) {
    return load_topology(topology_file);
}

// ---------------------------------------------------------------------------
// Counting

enum class MacConvention {
    all_matmuls,   // conv, linear and the attention QK/AV products
    parametric,    // conv and linear only, as a module-hook profiler reports
};

inline std::uint64_t layer_macs(const LayerDescriptor& l, MacConvention conv = MacConvention::all_matmuls) {
    auto u = [](std::int64_t v) { return static_cast<std::uint64_t>(v); };
    switch (l.kind) {
        case LayerKind::conv3x3:
        case LayerKind::conv1x1:
        case LayerKind::downsample_conv: {
            auto k = u(kernel_size(l.kind));
            return checked_mul(checked_mul(checked_mul(u(l.out_len()), u(l.c_in)), u(l.c_out)), k * k);
        }
        case LayerKind::linear:
            return checked_mul(checked_mul(u(l.spatial_len()), u(l.c_in)), u(l.c_out));
        case LayerKind::attention_qk:
        case LayerKind::attention_av:
            if (conv == MacConvention::parametric) return 0;
            return checked_mul(checked_mul(checked_mul(u(l.heads), u(l.seq_len)), u(l.kv_len)), u(l.head_dim));
        default:
            return 0;
    }
}

// Element count processed by a vector (VPU) layer.
inline std::uint64_t vector_elements(const LayerDescriptor& l) {
    auto u = [](std::int64_t v) { return static_cast<std::uint64_t>(v); };
    switch (l.kind) {
        case LayerKind::softmax:
            return checked_mul(checked_mul(u(l.heads), u(l.seq_len)), u(l.kv_len));
        case LayerKind::layernorm:
        case LayerKind::groupnorm:
        case LayerKind::gelu:
        case LayerKind::silu:
        case LayerKind::add:
            return checked_mul(u(l.spatial_len()), u(l.c_in));
        case LayerKind::upsample_nearest:
        case LayerKind::concat:
            return checked_mul(u(l.out_len()), u(l.c_out));
        default:
            return 0;
    }
}

inline std::uint64_t layer_params(const LayerDescriptor& l) {
    auto u = [](std::int64_t v) { return static_cast<std::uint64_t>(v); };
    switch (l.kind) {
        case LayerKind::conv3x3:
        case LayerKind::conv1x1:
        case LayerKind::downsample_conv: {
            auto k = u(kernel_size(l.kind));
            return k * k * u(l.c_in) * u(l.c_out) + (l.bias ? u(l.c_out) : 0);
        }
        case LayerKind::linear:
            return u(l.c_in) * u(l.c_out) + (l.bias ? u(l.c_out) : 0);
        case LayerKind::layernorm:
        case LayerKind::groupnorm:
            return 2 * u(l.c_in);
        default:
            return 0;
    }
}

struct MacBreakdown {
    std::vector<std::uint64_t> per_layer;
    std::map<BlockId, std::uint64_t> per_block;
    std::uint64_t total = 0;
};

inline MacBreakdown count_macs(const NetworkGraph& g, MacConvention conv = MacConvention::all_matmuls) {
    MacBreakdown mb;
    mb.per_layer.reserve(g.layers.size());
    for (const auto& l : g.layers) {
        auto m = layer_macs(l, conv);
        mb.per_layer.push_back(m);
        mb.per_block[l.block] = checked_add(mb.per_block[l.block], m);
        mb.total = checked_add(mb.total, m);
    }
    return mb;
}

inline std::uint64_t count_params(const NetworkGraph& g) {
    std::uint64_t p = 0;
    for (const auto& l : g.layers) p = checked_add(p, layer_params(l));
    return p;
}

// Whether block b runs when only the top l down/up blocks execute.
inline bool block_executed(BlockId b, int l, int full_level) {
    if (b.side == BlockSide::mid) return l >= full_level;
    return b.index <= l;
}

// Cumulative compute fraction of the top l down and up blocks; the mid block counts only at the
// full level. Uses the profiler convention (conv and linear only) by default.
inline double cost_function(const NetworkGraph& g, int l, MacConvention conv = MacConvention::parametric) {
    if (l < 1 || l > g.full_level())
        throw ConfigError("cost_function: l=" + std::to_string(l) + " outside [1," +
                          std::to_string(g.full_level()) + "]");
    if (l == g.full_level()) return 1.0;
    auto mb = count_macs(g, conv);
    std::uint64_t part = 0;
    for (auto& [b, m] : mb.per_block)
        if (block_executed(b, l, g.full_level())) part += m;
    return static_cast<double>(part) / static_cast<double>(mb.total);
}

// f(1..full_level), index 0 holds f(1).
inline std::vector<double> cost_curve(const NetworkGraph& g, MacConvention conv = MacConvention::parametric) {
    std::vector<double> f;
    for (int l = 1; l <= g.full_level(); ++l) f.push_back(cost_function(g, l, conv));
    return f;
}

struct LayerFootprint {
    std::uint64_t weight_bytes = 0;
    std::uint64_t act_in_bytes = 0;
    std::uint64_t act_out_bytes = 0;
};

inline LayerFootprint layer_footprint(const LayerDescriptor& l, std::uint64_t bpe) {
    auto u = [](std::int64_t v) { return static_cast<std::uint64_t>(v); };
    LayerFootprint f;
    switch (l.kind) {
        case LayerKind::conv3x3:
        case LayerKind::conv1x1:
        case LayerKind::downsample_conv: {
            auto k = u(kernel_size(l.kind));
            f.weight_bytes = k * k * u(l.c_in) * u(l.c_out) * bpe;
            f.act_in_bytes = u(l.spatial_len()) * u(l.c_in) * bpe;
            f.act_out_bytes = u(l.out_len()) * u(l.c_out) * bpe;
            break;
        }
        case LayerKind::linear:
            f.weight_bytes = u(l.c_in) * u(l.c_out) * bpe;
            f.act_in_bytes = u(l.spatial_len()) * u(l.c_in) * bpe;
            f.act_out_bytes = u(l.spatial_len()) * u(l.c_out) * bpe;
            break;
        case LayerKind::attention_qk:
            // Q and K in, scores out.
            f.act_in_bytes = (u(l.seq_len) + u(l.kv_len)) * u(l.c_in) * bpe;
            f.act_out_bytes = u(l.heads) * u(l.seq_len) * u(l.kv_len) * bpe;
            break;
        case LayerKind::attention_av:
            // Probabilities and V in, context out.
            f.act_in_bytes = (u(l.heads) * u(l.seq_len) * u(l.kv_len) + u(l.kv_len) * u(l.c_in)) * bpe;
            f.act_out_bytes = u(l.seq_len) * u(l.c_out) * bpe;
            break;
        case LayerKind::softmax:
            f.act_in_bytes = f.act_out_bytes = vector_elements(l) * bpe;
            break;
        case LayerKind::concat:
            f.act_in_bytes = f.act_out_bytes = u(l.spatial_len()) * u(l.c_out) * bpe;
            break;
        default:
            f.act_in_bytes = u(l.spatial_len()) * u(l.c_in) * bpe;
            f.act_out_bytes = u(l.out_len()) * u(l.c_out) * bpe;
            break;
    }
    return f;
}

inline std::vector<LayerFootprint> tensor_footprints(const NetworkGraph& g, std::uint64_t bpe) {
    if (bpe < 1) throw ConfigError("bytes_per_element must be >= 1");
    std::vector<LayerFootprint> out;
    out.reserve(g.layers.size());
    for (const auto& l : g.layers) out.push_back(layer_footprint(l, bpe));
    return out;
}

// Ids of the 3x3 convolutions (stride 1 and 2) in execution order.
inline std::vector<int> conv3x3_stack(const NetworkGraph& g) {
    std::vector<int> ids;
    for (const auto& l : g.layers)
        if (l.kind == LayerKind::conv3x3 || l.kind == LayerKind::downsample_conv) ids.push_back(l.id);
    return ids;
}

// Same topology with the latent grid scaled by `factor` in both directions.
inline NetworkGraph scale_latent(const NetworkGraph& g, std::int64_t factor) {
    NetworkGraph s = g;
    s.latent_h *= factor;
    s.latent_w *= factor;
    for (auto& l : s.layers) {
        if (!l.spatial) continue;
        l.H *= factor;
        l.W *= factor;
        if (l.seq_len) {
            bool self = l.kv_len == l.seq_len;
            l.seq_len = l.H * l.W;
            if (self) l.kv_len = l.seq_len;
        }
    }
    return s;
}

inline std::string macs_csv(const NetworkGraph& g, std::uint64_t bpe,
                            MacConvention conv = MacConvention::all_matmuls) {
    std::ostringstream os;
    os << "layer_id,kind,block,macs,weight_bytes,act_in_bytes,act_out_bytes\n";
    for (const auto& l : g.layers) {
        auto f = layer_footprint(l, bpe);
        os << l.id << ',' << to_string(l.kind) << ',' << to_string(l.block) << ',' << layer_macs(l, conv) << ','
           << f.weight_bytes << ',' << f.act_in_bytes << ',' << f.act_out_bytes << '\n';
    }
    return os.str();
}

}  // namespace sdacc
