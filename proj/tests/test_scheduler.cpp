#include <sdacc/sdacc.hpp>

#include <catch_amalgamated.hpp>

using namespace sdacc;

namespace {

constexpr std::uint64_t KB = 1024, MB = 1024 * 1024;

const NetworkGraph& sd14() {
    static const NetworkGraph g = build_unet(ModelId::sd14);
    return g;
}

NetworkGraph conv_chain(std::vector<std::array<std::int64_t, 3>> shapes) {  // {side, c_in, c_out}
    NetworkGraph g;
    for (auto [s, ci, co] : shapes) {
        LayerDescriptor l;
        l.id = static_cast<int>(g.layers.size());
        l.kind = LayerKind::conv3x3;
        l.H = l.W = s;
        l.c_in = ci;
        l.c_out = co;
        g.layers.push_back(l);
    }
    return g;
}

ScheduleOptions base_options() {
    ScheduleOptions o;
    o.adaptive = false;
    o.fusion = false;
    return o;
}

}  // namespace

TEST_CASE("reuse choice examples", "[scheduler]") {
    const std::uint64_t B = 2 * MB;
    auto a = choose_reuse({10 * MB, 64 * KB, 64 * KB}, B);
    CHECK(a.mode == ReuseMode::input_reuse);
    auto b = choose_reuse({64 * KB, 10 * MB, 10 * MB}, B);
    CHECK(b.mode == ReuseMode::weight_reuse);
    LayerFootprint big{3 * MB, 3 * MB, 1 * MB};
    auto c = choose_reuse(big, B);
    CHECK(c.mode == ReuseMode::both_tiled);
    CHECK(c.traffic.total() > 7 * MB);
    CHECK(c.traffic.total() == 3 * MB + 3 * 3 * MB + 1 * MB);
    CHECK_THROWS_AS(choose_reuse(big, 0), ConfigError);

    // tie goes to weight_reuse
    auto t = choose_reuse({KB, KB, KB}, B);
    CHECK(t.mode == ReuseMode::weight_reuse);
}

TEST_CASE("single-layer and fused traffic", "[scheduler]") {
    auto g = conv_chain({{16, 32, 32}});
    auto plan = plan_schedule(g);
    auto fp = layer_footprint(g.layers[0], 2);
    CHECK(traffic_model(g, plan).total_bytes() == fp.weight_bytes + fp.act_in_bytes + fp.act_out_bytes);

    // two small-activation layers with large weights fuse layer by layer
    auto g2 = conv_chain({{8, 512, 512}, {8, 512, 512}});
    auto p2 = plan_schedule(g2);
    REQUIRE(p2.layers[0].fusion == FusionKind::layer_by_layer);
    CHECK(p2.layers[0].fused_out);
    CHECK(p2.layers[1].fused_in);
    auto tr = traffic_model(g2, p2);
    CHECK(tr.per_layer[0].write[kActOut] == 0);
    CHECK(tr.per_layer[1].read[kActIn] == 0);

    // layers that only fit tiled never fuse
    auto g3 = conv_chain({{64, 1280, 1280}, {64, 1280, 1280}});
    auto p3 = plan_schedule(g3);
    CHECK(p3.layers[0].mode == ReuseMode::both_tiled);
    CHECK(p3.layers[0].fusion == FusionKind::none);
    CHECK(p3.layers[1].fusion == FusionKind::none);
}

TEST_CASE("chosen mode dominates the pure modes", "[scheduler]") {
    for (auto m : {ModelId::sd14, ModelId::sdxl}) {
        auto g = build_unet(m);
        for (const auto& l : g.layers) {
            if (!is_matmul(l.kind)) continue;
            auto fp = operand_footprint(l, 2);
            auto c = choose_reuse(fp, 2 * MB);
            for (auto mode : {ReuseMode::input_reuse, ReuseMode::weight_reuse})
                if (auto e = evaluate_reuse(fp, mode, 2 * MB)) CHECK(c.traffic.total() <= e->traffic.total());
        }
    }
}

TEST_CASE("fusion never increases traffic and plans respect the buffer", "[scheduler]") {
    for (auto m : {ModelId::sd14, ModelId::sd21base, ModelId::sdxl}) {
        auto g = build_unet(m);
        for (std::uint64_t B : {256 * KB, 2 * MB, 8 * MB}) {
            ScheduleOptions o;
            o.buffer_bytes = B;
            o.fusion = false;
            auto unfused = plan_schedule(g, o);
            o.fusion = true;
            auto fused = plan_schedule(g, o);
            CHECK(traffic_model(g, fused).total_bytes() <= traffic_model(g, unfused).total_bytes());
            for (const auto* p : {&unfused, &fused})
                for (const auto& l : g.layers) CHECK(layer_residency(*p, g, l.id) <= B);
        }
    }
}

TEST_CASE("sd14 fusion layout along the conv stack", "[scheduler]") {
    const auto& g = sd14();
    auto plan = plan_schedule(g);
    auto stack = conv3x3_stack(g);
    auto index = [&](int id) { return std::find(stack.begin(), stack.end(), id) - stack.begin(); };
    bool shallow_cross = false;
    int lbl_in_middle = 0, lbl_outside = 0;
    for (const auto& grp : plan.fusion.groups) {
        if (grp.kind == FusionKind::cross_layer && index(grp.layers.front()) == 0) shallow_cross = true;
        if (grp.kind == FusionKind::layer_by_layer)
            for (int id : grp.layers) (index(id) >= 6 && index(id) <= 36 ? lbl_in_middle : lbl_outside)++;
    }
    CHECK(shallow_cross);
    CHECK(lbl_in_middle >= 20);
    CHECK(lbl_outside == 0);
}

TEST_CASE("conv stack traffic savings", "[scheduler]") {
    const auto& g = sd14();
    auto o = base_options();
    const double base = static_cast<double>(conv_stack_traffic(g, traffic_model(g, plan_schedule(g, o))));
    o.adaptive = true;
    const double reuse = static_cast<double>(conv_stack_traffic(g, traffic_model(g, plan_schedule(g, o))));
    o.fusion = true;
    const double fused = static_cast<double>(conv_stack_traffic(g, traffic_model(g, plan_schedule(g, o))));
    const double s1 = 100 * (1 - reuse / base), s2 = 100 * (1 - fused / base);
    INFO("reuse saving " << s1 << "%, with fusion " << s2 << "%");
    CHECK(std::abs(s1 - 24.3) <= 8);
    CHECK(std::abs(s2 - 30.5) <= 8);
    CHECK(fused <= reuse);
}

TEST_CASE("plans are deterministic", "[scheduler]") {
    const auto& g = sd14();
    CHECK(plan_to_json(plan_schedule(g)).dump() == plan_to_json(plan_schedule(g)).dump());
}

TEST_CASE("tile configuration", "[scheduler]") {
    const auto& g = sd14();
    auto plan = plan_schedule(g);
    for (const auto& lp : plan.layers) {
        if (!lp.on_array) continue;
        CHECK(lp.tile.Cin0 == lp.tile.Cout0);
        CHECK(lp.tile.L0 >= 1);
        CHECK(lp.tile.L0 <= 1024);
    }
}

TEST_CASE("invalid plans are rejected with the constraint named", "[scheduler]") {
    auto g = conv_chain({{64, 320, 320}, {64, 320, 320}});
    auto plan = plan_schedule(g);
    plan.layers[0].mode = ReuseMode::input_reuse;
    plan.layers[0].fusion = FusionKind::none;
    CHECK_THROWS_WITH(traffic_model(g, plan), Catch::Matchers::ContainsSubstring("input_reuse requires"));

    auto ok = plan_schedule(g);
    ok.layers.pop_back();
    CHECK_THROWS_AS(traffic_model(g, ok), InvariantError);

    auto tiny = plan_schedule(g);
    tiny.options.buffer_bytes = 1024;
    CHECK_THROWS_AS(validate_plan(g, tiny), InvariantError);
}
