#pragma once

// Expands compact U-Net hyperparameters into the layer lists stored under data/topologies/.
// The data files are the source of truth at runtime; this expander regenerates them.

#include <sdacc/workload.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace sdacc {

struct UNetRecipe {
    ModelId model = ModelId::custom;
    std::int64_t latent = 64;
    std::int64_t in_channels = 4, out_channels = 4;
    std::vector<std::int64_t> channels;          // per resolution level, top to bottom
    std::vector<int> transformer_depth;          // per level; 0 means no attention at that level
    int mid_transformer_depth = 1;
    int layers_per_block = 2;
    std::int64_t heads = 0;                      // fixed head count, or
    std::int64_t head_dim = 0;                   // fixed head width
    std::int64_t context_len = 77, context_dim = 768;
    bool linear_projection = false;              // proj_in/proj_out as linear instead of 1x1 conv
    std::int64_t time_embed_dim = 1280;
    std::int64_t addition_embed_dim = 0;         // extra conditioning MLP input (0 = none)
};

inline UNetRecipe recipe_for(ModelId m) {
    UNetRecipe r;
    r.model = m;
    switch (m) {
        case ModelId::sd14:
            r.channels = {320, 640, 1280, 1280};
            r.transformer_depth = {1, 1, 1, 0};
            r.heads = 8;
            r.context_dim = 768;
            break;
        case ModelId::sd21base:
            r.channels = {320, 640, 1280, 1280};
            r.transformer_depth = {1, 1, 1, 0};
            r.head_dim = 64;
            r.context_dim = 1024;
            r.linear_projection = true;
            break;
        case ModelId::sdxl:
            r.latent = 128;
            r.channels = {320, 640, 1280};
            r.transformer_depth = {0, 2, 10};
            r.mid_transformer_depth = 10;
            r.head_dim = 64;
            r.context_dim = 2048;
            r.linear_projection = true;
            r.addition_embed_dim = 2816;
            break;
        case ModelId::custom:
            throw ConfigError("no built-in recipe for custom models");
    }
    return r;
}

namespace detail {

class GraphBuilder {
public:
    explicit GraphBuilder(const UNetRecipe& r) : r_(r) {}

    NetworkGraph g;
    BlockId block;

    LayerDescriptor& emit(LayerKind kind, std::string name, std::int64_t H, std::int64_t W, std::int64_t cin,
                          std::int64_t cout) {
        LayerDescriptor l;
        l.id = static_cast<int>(g.layers.size());
        l.kind = kind;
        l.name = to_string(block) + "." + name;
        l.H = H;
        l.W = W;
        l.c_in = cin;
        l.c_out = cout;
        l.block = block;
        if (kind == LayerKind::downsample_conv) l.stride = 2;
        if (kind == LayerKind::conv3x3 || kind == LayerKind::conv1x1 || kind == LayerKind::downsample_conv)
            l.bias = true;
        g.layers.push_back(std::move(l));
        return g.layers.back();
    }

    LayerDescriptor& emit_rows(LayerKind kind, std::string name, std::int64_t rows, std::int64_t cin,
                               std::int64_t cout, bool bias) {
        auto& l = emit(kind, std::move(name), 1, rows, cin, cout);
        l.spatial = false;
        l.bias = bias;
        return l;
    }

    LayerDescriptor& linear(std::string name, std::int64_t H, std::int64_t W, std::int64_t cin,
                            std::int64_t cout, bool bias) {
        auto& l = emit(LayerKind::linear, std::move(name), H, W, cin, cout);
        l.bias = bias;
        return l;
    }

    void vec(LayerKind kind, std::string name, std::int64_t H, std::int64_t W, std::int64_t c) {
        emit(kind, std::move(name), H, W, c, c);
    }

    void resnet(const std::string& p, std::int64_t H, std::int64_t W, std::int64_t main, std::int64_t skip,
                std::int64_t cout) {
        std::int64_t cin = main + skip;
        if (skip) emit(LayerKind::concat, p + "concat", H, W, main, cin).skip_channels = skip;
        emit(LayerKind::groupnorm, p + "norm1", H, W, cin, cin).skip_channels = skip;
        vec(LayerKind::silu, p + "act1", H, W, cin);
        emit(LayerKind::conv3x3, p + "conv1", H, W, cin, cout).skip_channels = skip;
        emit_rows(LayerKind::silu, p + "temb_act", 1, r_.time_embed_dim, r_.time_embed_dim, false);
        emit_rows(LayerKind::linear, p + "temb_proj", 1, r_.time_embed_dim, cout, true);
        vec(LayerKind::add, p + "temb_add", H, W, cout);
        vec(LayerKind::groupnorm, p + "norm2", H, W, cout);
        vec(LayerKind::silu, p + "act2", H, W, cout);
        emit(LayerKind::conv3x3, p + "conv2", H, W, cout, cout);
        if (cin != cout) emit(LayerKind::conv1x1, p + "shortcut", H, W, cin, cout).skip_channels = skip;
        vec(LayerKind::add, p + "residual", H, W, cout);
    }

    void attention(const std::string& p, std::int64_t H, std::int64_t W, std::int64_t c, bool cross) {
        std::int64_t heads = r_.heads ? r_.heads : c / r_.head_dim;
        std::int64_t dh = c / heads;
        std::int64_t L = H * W;
        std::int64_t kv = cross ? r_.context_len : L;
        linear(p + "q", H, W, c, c, false);
        if (cross) {
            emit_rows(LayerKind::linear, p + "k", r_.context_len, r_.context_dim, c, false);
            emit_rows(LayerKind::linear, p + "v", r_.context_len, r_.context_dim, c, false);
        } else {
            linear(p + "k", H, W, c, c, false);
            linear(p + "v", H, W, c, c, false);
        }
        for (auto [kind, n] : {std::pair{LayerKind::attention_qk, "qk"}, std::pair{LayerKind::softmax, "softmax"},
                               std::pair{LayerKind::attention_av, "av"}}) {
            auto& l = emit(kind, p + n, H, W, c, c);
            l.seq_len = L;
            l.kv_len = kv;
            l.heads = heads;
            l.head_dim = dh;
        }
        linear(p + "out", H, W, c, c, true);
        vec(LayerKind::add, p + "residual", H, W, c);
    }

    void transformer(const std::string& p, std::int64_t H, std::int64_t W, std::int64_t c, int depth) {
        vec(LayerKind::groupnorm, p + "norm", H, W, c);
        if (r_.linear_projection)
            linear(p + "proj_in", H, W, c, c, true);
        else
            emit(LayerKind::conv1x1, p + "proj_in", H, W, c, c);
        for (int d = 0; d < depth; ++d) {
            std::string q = p + "tb" + std::to_string(d) + ".";
            vec(LayerKind::layernorm, q + "norm1", H, W, c);
            attention(q + "attn1.", H, W, c, false);
            vec(LayerKind::layernorm, q + "norm2", H, W, c);
            attention(q + "attn2.", H, W, c, true);
            vec(LayerKind::layernorm, q + "norm3", H, W, c);
            linear(q + "ff1", H, W, c, 8 * c, true);
            vec(LayerKind::gelu, q + "geglu", H, W, 4 * c);
            linear(q + "ff2", H, W, 4 * c, c, true);
            vec(LayerKind::add, q + "ff_residual", H, W, c);
        }
        if (r_.linear_projection)
            linear(p + "proj_out", H, W, c, c, true);
        else
            emit(LayerKind::conv1x1, p + "proj_out", H, W, c, c);
        vec(LayerKind::add, p + "residual", H, W, c);
    }

private:
    const UNetRecipe& r_;
};

}  // namespace detail

inline NetworkGraph expand_recipe(const UNetRecipe& r) {
    if (r.channels.empty() || r.channels.size() != r.transformer_depth.size())
        throw ConfigError("recipe: channels and transformer_depth must be non-empty and equal length");
    if ((r.heads == 0) == (r.head_dim == 0)) throw ConfigError("recipe: set exactly one of heads, head_dim");
    const int levels = static_cast<int>(r.channels.size());
    const int depth = 1 + levels * r.layers_per_block + (levels - 1);
    if (depth > kMaxDepth || levels * (r.layers_per_block + 1) != depth)
        throw ConfigError("recipe does not produce mirrored down/up block counts within 12");

    detail::GraphBuilder b(r);
    b.g.model_id = r.model;
    b.g.latent_h = b.g.latent_w = r.latent;
    b.g.context_len = r.context_len;
    b.g.context_dim = r.context_dim;
    b.g.depth = depth;

    std::vector<std::int64_t> skip_stack;
    int down_index = 0;
    auto next_down = [&] { b.block = {BlockSide::down, ++down_index}; };

    // Stem: input conv plus the timestep (and optional extra conditioning) embedding MLPs.
    next_down();
    std::int64_t S = r.latent;
    std::int64_t c = r.channels[0];
    b.emit(LayerKind::conv3x3, "conv_in", S, S, r.in_channels, c);
    b.emit_rows(LayerKind::linear, "time_mlp1", 1, r.channels[0], r.time_embed_dim, true);
    b.emit_rows(LayerKind::silu, "time_act", 1, r.time_embed_dim, r.time_embed_dim, false);
    b.emit_rows(LayerKind::linear, "time_mlp2", 1, r.time_embed_dim, r.time_embed_dim, true);
    if (r.addition_embed_dim) {
        b.emit_rows(LayerKind::linear, "add_mlp1", 1, r.addition_embed_dim, r.time_embed_dim, true);
        b.emit_rows(LayerKind::silu, "add_act", 1, r.time_embed_dim, r.time_embed_dim, false);
        b.emit_rows(LayerKind::linear, "add_mlp2", 1, r.time_embed_dim, r.time_embed_dim, true);
    }
    skip_stack.push_back(c);

    for (int lv = 0; lv < levels; ++lv) {
        for (int i = 0; i < r.layers_per_block; ++i) {
            next_down();
            b.resnet("res.", S, S, c, 0, r.channels[lv]);
            c = r.channels[lv];
            if (r.transformer_depth[lv]) b.transformer("xf.", S, S, c, r.transformer_depth[lv]);
            skip_stack.push_back(c);
        }
        if (lv + 1 < levels) {
            next_down();
            b.emit(LayerKind::downsample_conv, "downsample", S, S, c, c);
            S = (S + 1) / 2;
            skip_stack.push_back(c);
        }
    }

    b.block = {BlockSide::mid, 0};
    b.resnet("res0.", S, S, c, 0, c);
    b.transformer("xf.", S, S, c, r.mid_transformer_depth);
    b.resnet("res1.", S, S, c, 0, c);

    int up_index = depth + 1;
    for (int lv = levels - 1; lv >= 0; --lv) {
        for (int i = 0; i <= r.layers_per_block; ++i) {
            b.block = {BlockSide::up, --up_index};
            std::int64_t skip = skip_stack.back();
            skip_stack.pop_back();
            b.resnet("res.", S, S, c, skip, r.channels[lv]);
            c = r.channels[lv];
            if (r.transformer_depth[lv]) b.transformer("xf.", S, S, c, r.transformer_depth[lv]);
            if (i == r.layers_per_block && lv > 0) {
                b.vec(LayerKind::upsample_nearest, "upsample", S, S, c);
                S *= 2;
                b.emit(LayerKind::conv3x3, "upsample_conv", S, S, c, c);
            }
        }
    }
    b.vec(LayerKind::groupnorm, "norm_out", S, S, c);
    b.vec(LayerKind::silu, "act_out", S, S, c);
    b.emit(LayerKind::conv3x3, "conv_out", S, S, c, r.out_channels);

    for (int i = 1; i <= depth; ++i) b.g.skips.push_back({{BlockSide::down, i}, {BlockSide::up, i}});
    validate_graph(b.g);
    return b.g;
}

}  // namespace sdacc
