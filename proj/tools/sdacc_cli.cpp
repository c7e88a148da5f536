// sdacc: workload inspection, sampling-plan search, simulation and ablation.

#include <sdacc/sdacc.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace sdacc;

namespace {

struct RunConfig {
    std::string model = "sd14";
    std::string topology;
    std::string trace;
    std::string plan_file;
    std::string out = "out";
    std::uint64_t seed = 0;

    HardwareConfig hw;
    AblationSwitches switches;

    // Sampling parameters; any of them set means "simulate with a sampling plan".
    std::optional<int> T, T_sketch, T_complete, T_sparse, L_sketch, L_refine, d_star;
    std::optional<std::set<int>> outliers;
    bool late_full_steps = false;

    SearchConstraints constraints;
    OutlierOptions outlier_opts;

    bool cfg_doubling = false;
    MacConvention cost_convention = MacConvention::parametric;

    SynthOptions synth;

    bool sampling_requested() const { return T_sketch || T_complete || T_sparse || L_sketch || L_refine; }
};

double to_double(const std::string& k, const std::string& v) {
    double d = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
    if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError("--set " + k + ": expected a number, got '" + v + "'");
    return d;
}

template <class I>
I to_int(const std::string& k, const std::string& v) {
    I x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError("--set " + k + ": expected an integer, got '" + v + "'");
    return x;
}

bool to_bool(const std::string& k, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("--set " + k + ": expected a boolean, got '" + v + "'");
}

std::set<int> to_int_set(const std::string& k, const std::string& v) {
    std::set<int> s;
    std::stringstream ss(v);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) s.insert(to_int<int>(k, item));
    return s;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        auto i64 = [](auto member) {
            return Setter([member](RunConfig& c, const std::string& k, const std::string& v) {
                c.hw.*member = to_int<std::int64_t>(k, v);
            });
        };
        auto u64 = [](auto member) {
            return Setter([member](RunConfig& c, const std::string& k, const std::string& v) {
                c.hw.*member = to_int<std::uint64_t>(k, v);
            });
        };
        auto dbl = [](auto member) {
            return Setter([member](RunConfig& c, const std::string& k, const std::string& v) {
                c.hw.*member = to_double(k, v);
            });
        };
        t["sa_h"] = i64(&HardwareConfig::sa_h);
        t["sa_w"] = i64(&HardwareConfig::sa_w);
        t["vpu_lanes"] = i64(&HardwareConfig::vpu_lanes);
        t["freq_hz"] = dbl(&HardwareConfig::freq_hz);
        t["dram_bw_bytes_per_s"] = dbl(&HardwareConfig::dram_bw_bytes_per_s);
        t["bytes_per_element"] = u64(&HardwareConfig::bytes_per_element);
        t["global_buffer_bytes"] = u64(&HardwareConfig::global_buffer_bytes);
        t["staging_buffer_bytes"] = u64(&HardwareConfig::staging_buffer_bytes);
        t["fifo_depth"] = i64(&HardwareConfig::fifo_depth);
        t["power_w"] = dbl(&HardwareConfig::power_w);
        t["dram_energy_per_byte"] = dbl(&HardwareConfig::dram_energy_per_byte);
        t["tile_latency_cycles"] = i64(&HardwareConfig::tile_latency_cycles);
        t["pipeline_latency_cycles"] = i64(&HardwareConfig::pipeline_latency_cycles);
        t["channel_reduce_width"] = i64(&HardwareConfig::channel_reduce_width);
        t["reuse_chunk_fraction"] = dbl(&HardwareConfig::reuse_chunk_fraction);
        t["im2col_overlap"] = dbl(&HardwareConfig::im2col_overlap);
        t["im2col_conversion_width"] = dbl(&HardwareConfig::im2col_conversion_width);

        auto sw = [](bool AblationSwitches::*member) {
            return Setter([member](RunConfig& c, const std::string& k, const std::string& v) {
                c.switches.*member = to_bool(k, v);
            });
        };
        t["address_centric"] = sw(&AblationSwitches::address_centric);
        t["adaptive_dataflow"] = sw(&AblationSwitches::adaptive_dataflow);
        t["streaming_nonlinear"] = sw(&AblationSwitches::streaming_nonlinear);

        auto opt_int = [](std::optional<int> RunConfig::*member) {
            return Setter([member](RunConfig& c, const std::string& k, const std::string& v) {
                c.*member = to_int<int>(k, v);
            });
        };
        t["T"] = opt_int(&RunConfig::T);
        t["T_sketch"] = opt_int(&RunConfig::T_sketch);
        t["T_complete"] = opt_int(&RunConfig::T_complete);
        t["T_sparse"] = opt_int(&RunConfig::T_sparse);
        t["L_sketch"] = opt_int(&RunConfig::L_sketch);
        t["L_refine"] = opt_int(&RunConfig::L_refine);
        t["d_star"] = opt_int(&RunConfig::d_star);
        t["outliers"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.outliers = to_int_set(k, v); };
        t["late_full_steps"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.late_full_steps = to_bool(k, v);
        };

        t["min_reduction"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.constraints.min_reduction = to_double(k, v);
        };
        t["max_reduction"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.constraints.max_reduction = to_double(k, v);
        };
        t["max_depth_budget"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.constraints.max_depth_budget = to_double(k, v);
        };
        t["min_L_refine"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.constraints.min_L_refine = to_int<int>(k, v);
        };
        t["min_T_complete"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.constraints.min_T_complete = to_int<int>(k, v);
        };
        t["max_T_sparse"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.constraints.max_T_sparse = to_int<int>(k, v);
        };
        t["late_fraction"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.outlier_opts.late_fraction = to_double(k, v);
        };
        t["outlier_threshold"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.outlier_opts.threshold = to_double(k, v);
        };

        t["cfg_doubling"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.cfg_doubling = to_bool(k, v);
        };
        t["mac_convention"] = [](RunConfig& c, const std::string&, const std::string& v) {
            if (v == "parametric") c.cost_convention = MacConvention::parametric;
            else if (v == "all") c.cost_convention = MacConvention::all_matmuls;
            else throw ConfigError("--set mac_convention: expected 'parametric' or 'all'");
        };

        t["synth_T"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.T = to_int<int>(k, v); };
        t["synth_D"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.synth.D_true = to_int<int>(k, v);
        };
        t["synth_sigma"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.synth.noise_sigma = to_double(k, v);
        };
        t["synth_images"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.synth.n_images = to_int<int>(k, v);
        };
        t["synth_outliers"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.synth.outlier_blocks = to_int_set(k, v);
        };
        t["synth_blocks"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.synth.blocks = to_int<int>(k, v);
        };
        return t;
    }();
    return table;
}

void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(c, key, value);
}

void apply_config_file(RunConfig& c, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    for (auto& [k, v] : j.items()) {
        if (k == "schema_version" || k == "defaults") continue;
        std::string s;
        if (v.is_string()) s = v.get<std::string>();
        else if (v.is_array()) {
            for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i].dump();
        } else s = v.dump();
        apply_setting(c, k, s);
    }
}

fs::path prepare_out(const RunConfig& c) {
    fs::path out(c.out);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) throw ConfigError("cannot create output directory " + out.string());
    return out;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + p.string());
    f << content;
    if (!f) throw ConfigError("failed writing " + p.string());
}

NetworkGraph load_graph(const RunConfig& c) {
    if (!c.topology.empty()) return build_unet(fs::path(c.topology));
    return build_unet(parse_model_id(c.model));
}

std::string fmt(double v) { return format_double(v); }

// ---------------------------------------------------------------------------

int cmd_workload(const RunConfig& c) {
    auto g = load_graph(c);
    auto out = prepare_out(c);
    const auto bpe = c.hw.bytes_per_element;
    write_file(out / "macs.csv", macs_csv(g, bpe));

    std::ostringstream fp;
    fp << "layer_id,kind,block,macs,weight_bytes,act_in_bytes,act_out_bytes\n";
    for (int id : conv3x3_stack(g)) {
        const auto& l = g.layers[static_cast<std::size_t>(id)];
        auto f = layer_footprint(l, bpe);
        fp << id << ',' << to_string(l.kind) << ',' << to_string(l.block) << ',' << layer_macs(l) << ','
           << f.weight_bytes << ',' << f.act_in_bytes << ',' << f.act_out_bytes << '\n';
    }
    write_file(out / "footprints.csv", fp.str());

    std::ostringstream cf;
    cf << "l,f\n";
    auto curve = cost_curve(g, c.cost_convention);
    for (std::size_t i = 0; i < curve.size(); ++i) cf << i + 1 << ',' << fmt(curve[i]) << '\n';
    write_file(out / "cost_function.csv", cf.str());

    auto all = count_macs(g, MacConvention::all_matmuls);
    auto par = count_macs(g, MacConvention::parametric);
    std::ostringstream bc;
    bc << "block,macs_all,macs_parametric\n";
    for (auto& [b, m] : all.per_block) bc << to_string(b) << ',' << m << ',' << par.per_block[b] << '\n';
    write_file(out / "blocks.csv", bc.str());

    const std::uint64_t mult = c.cfg_doubling ? 2 : 1;
    nlohmann::ordered_json s;
    s["schema_version"] = 1;
    s["model"] = to_string(g.model_id);
    s["layers"] = g.layers.size();
    s["latent"] = {g.latent_h, g.latent_w};
    s["params"] = count_params(g);
    s["cfg_doubling"] = c.cfg_doubling;
    s["macs_per_step_all"] = all.total * mult;
    s["macs_per_step_parametric"] = par.total * mult;
    s["cost_function_convention"] = c.cost_convention == MacConvention::parametric ? "parametric" : "all";
    s["cost_function"] = curve;
    write_file(out / "summary.json", s.dump(1) + "\n");

    std::cout << "model " << to_string(g.model_id) << ": " << g.layers.size() << " layers, "
              << count_params(g) << " params, " << all.total * mult << " MACs/step\n";
    return 0;
}

ScheduleContext context_from(const PhaseAnalysis& a, int full_level, bool late) {
    ScheduleContext ctx;
    ctx.D_star = a.transition.D;
    ctx.outliers = a.matrix.outliers;
    ctx.full_level = full_level;
    ctx.late_full_steps = late;
    return ctx;
}

nlohmann::ordered_json plan_json(const std::string& model, const SamplingPlan& p, const ScheduleContext& ctx,
                                 double reduction) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["model"] = model;
    j["T"] = p.T;
    j["D_star"] = ctx.D_star;
    j["outliers"] = std::vector<int>(ctx.outliers.begin(), ctx.outliers.end());
    j["T_sketch"] = p.params.T_sketch;
    j["T_complete"] = p.params.T_complete;
    j["T_sparse"] = p.params.T_sparse;
    j["L_sketch"] = p.params.L_sketch;
    j["L_refine"] = p.params.L_refine;
    j["full_level"] = p.full_level;
    j["late_full_steps"] = ctx.late_full_steps;
    j["mac_reduction"] = reduction;
    j["depth_schedule"] = p.depth_schedule;
    return j;
}

int cmd_plan(const RunConfig& c) {
    if (c.trace.empty()) throw ConfigError("plan needs --trace");
    auto g = load_graph(c);
    auto tr = load_trace(c.trace);
    auto a = analyze_trace(tr, c.outlier_opts);
    for (const auto& w : a.matrix.warnings) std::cerr << "warning: " << w << '\n';
    auto out = prepare_out(c);
    auto ctx = context_from(a, g.full_level(), c.late_full_steps);
    auto f = cost_curve(g, c.cost_convention);

    std::ostringstream sc;
    sc << "block,timestep,normalized,outlier\n";
    for (std::size_t r = 0; r < a.matrix.blocks.size(); ++r)
        for (int t = 1; t < a.matrix.T; ++t)
            sc << a.matrix.blocks[r] << ',' << t << ',' << fmt(a.matrix.normalized[r][static_cast<std::size_t>(t - 1)])
               << ',' << (a.matrix.outliers.contains(a.matrix.blocks[r]) ? 1 : 0) << '\n';
    write_file(out / "scores.csv", sc.str());

    auto ranked = search_plan(c.constraints, f, tr.T, ctx);
    std::ostringstream pc;
    pc << "rank,T_sketch,T_complete,T_sparse,L_sketch,L_refine,mac_reduction\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const auto& p = ranked[i].params;
        pc << i + 1 << ',' << p.T_sketch << ',' << p.T_complete << ',' << p.T_sparse << ',' << p.L_sketch << ','
           << p.L_refine << ',' << fmt(ranked[i].reduction) << '\n';
    }
    write_file(out / "plans.csv", pc.str());

    std::cout << "T=" << tr.T << " D*=" << ctx.D_star << " outliers={";
    for (auto it = ctx.outliers.begin(); it != ctx.outliers.end(); ++it)
        std::cout << (it == ctx.outliers.begin() ? "" : ",") << *it;
    std::cout << "}\n";

    if (ranked.empty()) {
        nlohmann::ordered_json j;
        j["schema_version"] = 1;
        j["status"] = "infeasible";
        j["reason"] = "no sampling plan satisfies the constraints";
        j["D_star"] = ctx.D_star;
        write_file(out / "plan.json", j.dump(1) + "\n");
        throw InfeasibleError("no sampling plan satisfies the constraints");
    }
    auto best = build_schedule(ranked.front().params, tr.T, ctx);
    write_file(out / "plan.json", plan_json(std::string(to_string(g.model_id)), best, ctx, ranked.front().reduction)
                                      .dump(1) + "\n");
    const auto& p = best.params;
    std::cout << ranked.size() << " feasible plans; best T_sketch=" << p.T_sketch << " T_complete=" << p.T_complete
              << " T_sparse=" << p.T_sparse << " L_sketch=" << p.L_sketch << " L_refine=" << p.L_refine
              << " reduction=" << fmt(ranked.front().reduction) << '\n';
    return 0;
}

std::optional<SamplingPlan> sampling_from(const RunConfig& c, const NetworkGraph& g) {
    if (!c.plan_file.empty()) {
        std::ifstream in(c.plan_file);
        if (!in) throw ConfigError("cannot open plan file " + c.plan_file);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
            if (j.value("status", std::string{}) == "infeasible") throw ConfigError("plan file records an infeasible search");
            ScheduleContext ctx;
            ctx.D_star = j.at("D_star").get<int>();
            for (int o : j.at("outliers")) ctx.outliers.insert(o);
            ctx.full_level = g.full_level();
            ctx.late_full_steps = j.value("late_full_steps", false);
            SamplingParams p{j.at("T_sketch").get<int>(), j.at("T_complete").get<int>(), j.at("T_sparse").get<int>(),
                             j.at("L_sketch").get<int>(), j.at("L_refine").get<int>()};
            return build_schedule(p, j.at("T").get<int>(), ctx);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("plan file " + c.plan_file + ": " + e.what());
        }
    }
    if (!c.sampling_requested()) {
        if (c.T) return full_schedule(*c.T, g.full_level());
        return std::nullopt;
    }
    ScheduleContext ctx;
    ctx.full_level = g.full_level();
    ctx.late_full_steps = c.late_full_steps;
    int T = c.T.value_or(50);
    if (!c.trace.empty()) {
        auto tr = load_trace(c.trace);
        auto a = analyze_trace(tr, c.outlier_opts);
        ctx.D_star = a.transition.D;
        ctx.outliers = a.matrix.outliers;
        if (!c.T) T = tr.T;
    } else if (c.d_star) {
        ctx.D_star = *c.d_star;
    } else {
        throw ConfigError("sampling parameters need a trace-derived D* (--trace) or an explicit d_star override");
    }
    if (c.d_star) ctx.D_star = *c.d_star;
    if (c.outliers) ctx.outliers = *c.outliers;
    SamplingParams p;
    p.T_sketch = c.T_sketch.value_or(p.T_sketch);
    p.T_complete = c.T_complete.value_or(p.T_complete);
    p.T_sparse = c.T_sparse.value_or(p.T_sparse);
    p.L_sketch = c.L_sketch.value_or(p.L_sketch);
    p.L_refine = c.L_refine.value_or(p.L_refine);
    return build_schedule(p, T, ctx);
}

void check_roofline(const SimReport& r, const HardwareConfig& hw) {
    for (const auto& p : roofline_points(r, hw))
        if (!within_roofline(p))
            throw InvariantError("layer " + std::to_string(p.layer_id) + " exceeds the roofline bound");
}

int cmd_simulate(const RunConfig& c) {
    auto g = load_graph(c);
    auto sampling = sampling_from(c, g);
    auto out = prepare_out(c);
    SchedulePlan plan;
    auto r = simulate(g, c.hw, c.switches, sampling ? &*sampling : nullptr, plan);
    check_roofline(r, c.hw);
    write_file(out / "report.json", report_to_json(r, g));
    write_file(out / "layers.csv", layers_csv(r));
    write_file(out / "roofline.csv", roofline_csv(r, c.hw));
    std::cout << "config " << c.switches.label() << ": " << r.step.cycles_total << " cycles/step ("
              << fmt(static_cast<double>(r.step.cycles_total) / c.hw.freq_hz) << " s), " << r.step.dram_bytes
              << " DRAM bytes, " << fmt(r.step.energy_j) << " J\n";
    if (r.sampling)
        std::cout << "sampling T=" << r.sampling->plan.T << ": " << r.sampling->cycles << " cycles, speedup vs full "
                  << fmt(r.sampling->speedup) << '\n';
    return 0;
}

int cmd_ablate(const RunConfig& c) {
    auto g = load_graph(c);
    auto sampling = sampling_from(c, g);
    auto out = prepare_out(c);
    auto runs = run_ablation(g, c.hw, sampling ? &*sampling : nullptr);
    const double base = static_cast<double>(total_cycles(runs.front().report));
    std::ostringstream sp;
    sp << "config,address_centric,adaptive_dataflow,streaming_nonlinear,cycles,speedup,dram_bytes,energy_j\n";
    for (const auto& run : runs) {
        check_roofline(run.report, c.hw);
        const auto label = run.switches.label();
        write_file(out / ("report_" + label + ".json"), report_to_json(run.report, g));
        const auto cyc = total_cycles(run.report);
        const auto bytes = run.report.sampling ? run.report.sampling->dram_bytes : run.report.step.dram_bytes;
        const auto energy = run.report.sampling ? run.report.sampling->energy_j : run.report.step.energy_j;
        sp << label << ',' << run.switches.address_centric << ',' << run.switches.adaptive_dataflow << ','
           << run.switches.streaming_nonlinear << ',' << cyc << ',' << fmt(base / static_cast<double>(cyc)) << ','
           << bytes << ',' << fmt(energy) << '\n';
        std::cout << label << ": speedup " << fmt(base / static_cast<double>(cyc)) << '\n';
    }
    write_file(out / "speedups.csv", sp.str());
    return 0;
}

int cmd_synth(const RunConfig& c) {
    auto o = c.synth;
    o.seed = c.seed;
    auto tr = synth_trace(o);
    auto out = prepare_out(c);
    save_trace(tr, out / "trace.csv");
    std::cout << "wrote " << (out / "trace.csv").string() << " (T=" << tr.T << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stable-Diffusion accelerator planner and simulator"};
    app.require_subcommand(1);
    RunConfig cfg;
    std::string config_file;
    std::vector<std::string> sets;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--model", cfg.model, "sd14 | sd21base | sdxl");
        sub->add_option("--topology", cfg.topology, "custom topology JSON file");
        sub->add_option("--trace", cfg.trace, "shift-score trace CSV");
        sub->add_option("--config", config_file, "JSON object of key/value settings");
        sub->add_option("--out", cfg.out, "output directory");
        sub->add_option("--seed", cfg.seed, "RNG seed");
        sub->add_option("--set", sets, "key=value override (repeatable)");
    };
    auto* workload = app.add_subcommand("workload", "MAC, parameter and footprint tables");
    auto* plan = app.add_subcommand("plan", "search sampling plans for a trace");
    auto* simulate_cmd = app.add_subcommand("simulate", "simulate one configuration");
    auto* ablate = app.add_subcommand("ablate", "simulate every switch combination");
    auto* synth = app.add_subcommand("synth-trace", "write a synthetic shift-score trace");
    for (auto* s : {workload, plan, simulate_cmd, ablate, synth}) add_common(s);
    simulate_cmd->add_option("--plan", cfg.plan_file, "plan.json from the plan command");
    ablate->add_option("--plan", cfg.plan_file, "plan.json from the plan command");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (!config_file.empty()) apply_config_file(cfg, config_file);
        for (const auto& s : sets) {
            auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
            apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
        }
        cfg.hw.validate();
        if (*workload) return cmd_workload(cfg);
        if (*plan) return cmd_plan(cfg);
        if (*simulate_cmd) return cmd_simulate(cfg);
        if (*ablate) return cmd_ablate(cfg);
        if (*synth) return cmd_synth(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return 2;
    } catch (const InvariantError& e) {
        std::cerr << "invariant violation: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 3;
    }
    return 1;
}
