#pragma once

// Phase-aware sampling: shift-score traces, transition detection and depth schedules.

#include <sdacc/common.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace sdacc {

struct TraceRecord {
    int image_id = 0;
    int block_id = 0;  // up-block index; 0 is the noise curve
    int timestep = 0;
    double shift_score = 0.0;
};

struct Trace {
    std::vector<TraceRecord> records;
    int T = 0;
    std::string scheduler_name;
};

// Shortest round-trip decimal form; stable across runs.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline const std::string kTraceHeader = "image_id,block_id,timestep,shift_score";

namespace detail {

struct TraceGrid {
    std::vector<int> images;
    std::vector<int> blocks;  // non-zero block ids, ascending
    int T = 0;
};

inline TraceGrid validate_trace(const Trace& tr) {
    TraceGrid g;
    std::set<int> images, blocks;
    std::set<std::tuple<int, int, int>> cells;
    int max_t = 0;
    for (const auto& r : tr.records) {
        if (!std::isfinite(r.shift_score) || r.shift_score < 0.0)
            throw ConfigError("trace: score at image " + std::to_string(r.image_id) + " block " +
                              std::to_string(r.block_id) + " t " + std::to_string(r.timestep) +
                              " must be finite and non-negative");
        if (r.block_id < 0) throw ConfigError("trace: negative block id");
        if (r.timestep < 1) throw ConfigError("trace: timesteps start at 1");
        if (!cells.insert({r.image_id, r.block_id, r.timestep}).second)
            throw ConfigError("trace: duplicate record (image " + std::to_string(r.image_id) + ", block " +
                              std::to_string(r.block_id) + ", t " + std::to_string(r.timestep) + ")");
        images.insert(r.image_id);
        if (r.block_id != 0) blocks.insert(r.block_id);
        max_t = std::max(max_t, r.timestep);
    }
    if (images.empty() || blocks.empty()) throw ConfigError("trace: no block records");
    g.images.assign(images.begin(), images.end());
    g.blocks.assign(blocks.begin(), blocks.end());
    g.T = max_t + 1;
    for (int img : g.images)
        for (int b : g.blocks)
            for (int t = 1; t < g.T; ++t)
                if (!cells.contains({img, b, t}))
                    throw ConfigError("trace: missing cell (image " + std::to_string(img) + ", block " +
                                      std::to_string(b) + ", t " + std::to_string(t) + ")");
    return g;
}

}  // namespace detail

inline Trace parse_trace(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("trace: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kTraceHeader) throw ConfigError("trace: header must be '" + kTraceHeader + "'");
    Trace tr;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() != 4) throw ConfigError("trace line " + std::to_string(lineno) + ": expected 4 fields");
        TraceRecord r;
        auto parse_int = [&](const std::string& s, int& out) {
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
            if (ec != std::errc{} || p != s.data() + s.size())
                throw ConfigError("trace line " + std::to_string(lineno) + ": bad integer '" + s + "'");
        };
        parse_int(f[0], r.image_id);
        parse_int(f[1], r.block_id);
        parse_int(f[2], r.timestep);
        auto [p, ec] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), r.shift_score);
        if (ec != std::errc{} || p != f[3].data() + f[3].size())
            throw ConfigError("trace line " + std::to_string(lineno) + ": bad score '" + f[3] + "'");
        tr.records.push_back(r);
    }
    tr.T = detail::validate_trace(tr).T;
    return tr;
}

inline Trace load_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open trace " + path.string());
    return parse_trace(in);
}

inline std::string trace_to_csv(const Trace& tr) {
    std::string s = kTraceHeader + "\n";
    for (const auto& r : tr.records)
        s += std::to_string(r.image_id) + "," + std::to_string(r.block_id) + "," + std::to_string(r.timestep) + "," +
             format_double(r.shift_score) + "\n";
    return s;
}

inline void save_trace(const Trace& tr, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write trace " + path.string());
    out << trace_to_csv(tr);
}

struct ScoreMatrix {
    std::vector<int> blocks;                  // row order
    int T = 0;                                // columns cover t = 1..T-1
    std::vector<std::vector<double>> normalized;  // [block row][t - 1]
    std::vector<double> mean_curve;           // over non-outlier blocks, [t - 1]
    std::set<int> outliers;
    std::vector<std::string> warnings;

    std::size_t row_of(int block) const {
        auto it = std::find(blocks.begin(), blocks.end(), block);
        if (it == blocks.end()) throw ConfigError("score matrix has no block " + std::to_string(block));
        return static_cast<std::size_t>(it - blocks.begin());
    }
};

// Mean over non-outlier blocks; over every block when all of them are outliers.
inline std::vector<double> compute_mean_curve(const ScoreMatrix& m) {
    std::vector<double> mean(static_cast<std::size_t>(m.T - 1), 0.0);
    const bool all_outliers = m.outliers.size() >= m.blocks.size();
    int n = 0;
    for (std::size_t r = 0; r < m.blocks.size(); ++r) {
        if (!all_outliers && m.outliers.contains(m.blocks[r])) continue;
        ++n;
        for (std::size_t t = 0; t < mean.size(); ++t) mean[t] += m.normalized[r][t];
    }
    if (n > 0)
        for (auto& v : mean) v /= n;
    return mean;
}

// Averages images per (block, t), then min-max scales each block to [0, 1].
inline ScoreMatrix normalize_scores(const Trace& tr) {
    auto grid = detail::validate_trace(tr);
    ScoreMatrix m;
    m.blocks = grid.blocks;
    m.T = grid.T;
    std::map<int, std::size_t> row;
    for (std::size_t i = 0; i < m.blocks.size(); ++i) row[m.blocks[i]] = i;
    m.normalized.assign(m.blocks.size(), std::vector<double>(static_cast<std::size_t>(m.T - 1), 0.0));
    for (const auto& r : tr.records)
        if (r.block_id != 0) m.normalized[row[r.block_id]][static_cast<std::size_t>(r.timestep - 1)] += r.shift_score;
    const double n_img = static_cast<double>(grid.images.size());
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        auto& v = m.normalized[i];
        for (auto& x : v) x /= n_img;
        auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        const double mn = *lo, mx = *hi;
        if (mx > mn) {
            for (auto& x : v) x = (x - mn) / (mx - mn);
        } else {
            std::fill(v.begin(), v.end(), 0.0);
            m.warnings.push_back("block " + std::to_string(m.blocks[i]) + " is constant; normalized to 0");
        }
    }
    m.mean_curve = compute_mean_curve(m);
    return m;
}

struct OutlierOptions {
    double late_fraction = 0.25;
    double threshold = 0.3;
};

inline std::set<int> detect_outliers(const ScoreMatrix& m, const OutlierOptions& o = {}) {
    const auto cols = static_cast<std::int64_t>(m.T - 1);
    const auto window = std::min<std::int64_t>(cols, static_cast<std::int64_t>(std::ceil(o.late_fraction * m.T)));
    std::set<int> out;
    if (window <= 0) return out;
    for (std::size_t r = 0; r < m.blocks.size(); ++r) {
        double s = 0.0;
        for (auto t = cols - window; t < cols; ++t) s += m.normalized[r][static_cast<std::size_t>(t)];
        if (s / static_cast<double>(window) > o.threshold) out.insert(m.blocks[r]);
    }
    return out;
}

// Marks outliers and recomputes the mean curve over the remaining blocks.
inline ScoreMatrix with_outliers(ScoreMatrix m, const OutlierOptions& o = {}) {
    m.outliers = detect_outliers(m, o);
    if (!m.blocks.empty() && m.outliers.size() == m.blocks.size())
        m.warnings.push_back("every block is an outlier; the mean curve uses all blocks");
    m.mean_curve = compute_mean_curve(m);
    return m;
}

struct Transition {
    int D = 1;
    double objective = 0.0;
};

// Two-segment SSE split of a curve indexed by t = 1..T-1 (curve[t-1]). Sketch = t <= D, refine = t > D.
inline Transition find_transition(const std::vector<double>& curve) {
    const int T = static_cast<int>(curve.size()) + 1;
    if (T < 3) throw ConfigError("find_transition: need T >= 3");
    // Prefix sums make each split O(1).
    std::vector<double> s(curve.size() + 1, 0.0), q(curve.size() + 1, 0.0);
    for (std::size_t i = 0; i < curve.size(); ++i) {
        s[i + 1] = s[i] + curve[i];
        q[i + 1] = q[i] + curve[i] * curve[i];
    }
    auto sse = [&](std::size_t a, std::size_t b) {  // elements [a, b)
        const double n = static_cast<double>(b - a);
        const double sum = s[b] - s[a];
        return std::max(0.0, (q[b] - q[a]) - sum * sum / n);
    };
    Transition best{1, std::numeric_limits<double>::infinity()};
    for (int D = 1; D <= T - 2; ++D) {
        const auto k = static_cast<std::size_t>(D);
        const double obj = sse(0, k) + sse(k, curve.size());
        if (obj < best.objective) best = {D, obj};
    }
    return best;
}

inline Transition find_transition(const ScoreMatrix& m) { return find_transition(m.mean_curve); }

struct SamplingParams {
    int T_sketch = 25;
    int T_complete = 4;
    int T_sparse = 4;
    int L_sketch = 2;
    int L_refine = 2;
};

struct SamplingPlan {
    SamplingParams params;
    int T = 50;
    int full_level = 13;
    std::vector<int> depth_schedule;  // l_t for t = 0..T-1
};

struct ScheduleContext {
    int D_star = 1;
    std::set<int> outliers;
    int full_level = 13;
    // Full steps at t = T_complete + k*T_sparse (default) or shifted one step later.
    bool late_full_steps = false;
};

inline void validate_params(const SamplingParams& p, int T, const ScheduleContext& ctx) {
    auto fail = [](const std::string& s) { throw ConfigError("sampling plan: " + s); };
    const int Lmax = ctx.full_level - 1;
    if (T < 1) fail("T must be >= 1");
    if (p.T_complete < 0 || p.T_complete > p.T_sketch) fail("requires T_complete <= T_sketch");
    if (p.T_sketch > T) fail("requires T_sketch <= T");
    if (p.T_sparse < 1) fail("requires T_sparse >= 1");
    if (p.T_sketch < ctx.D_star) fail("requires T_sketch >= D* (" + std::to_string(ctx.D_star) + ")");
    if (p.L_sketch < p.L_refine) fail("requires L_sketch >= L_refine");
    if (p.L_refine < static_cast<int>(ctx.outliers.size())) fail("requires L_refine >= number of outlier blocks");
    if (p.L_refine < 1 || p.L_sketch > Lmax) fail("requires 1 <= L_refine <= L_sketch <= " + std::to_string(Lmax));
}

inline SamplingPlan build_schedule(const SamplingParams& p, int T, const ScheduleContext& ctx = {}) {
    validate_params(p, T, ctx);
    SamplingPlan plan;
    plan.params = p;
    plan.T = T;
    plan.full_level = ctx.full_level;
    const int shift = ctx.late_full_steps ? 1 : 0;
    for (int t = 0; t < T; ++t) {
        int l;
        if (t < p.T_complete)
            l = ctx.full_level;
        else if (t < p.T_sketch)
            l = ((t - p.T_complete - shift) % p.T_sparse == 0 && t - p.T_complete >= shift) ? ctx.full_level
                                                                                              : p.L_sketch;
        else
            l = p.L_refine;
        plan.depth_schedule.push_back(l);
    }
    return plan;
}

// Every step runs the whole network.
inline SamplingPlan full_schedule(int T, int full_level = 13) {
    SamplingPlan p;
    p.params = {T, T, 1, full_level - 1, full_level - 1};
    p.T = T;
    p.full_level = full_level;
    p.depth_schedule.assign(static_cast<std::size_t>(T), full_level);
    return p;
}

// f[l-1] = f(l).
inline double mac_reduction(const SamplingPlan& plan, const std::vector<double>& f) {
    double sum = 0.0;
    for (int l : plan.depth_schedule) {
        if (l < 1 || static_cast<std::size_t>(l) > f.size())
            throw ConfigError("mac_reduction: cost function undefined at l=" + std::to_string(l));
        sum += f[static_cast<std::size_t>(l - 1)];
    }
    return static_cast<double>(plan.T) / sum;
}

struct SearchConstraints {
    std::optional<double> min_reduction;
    std::optional<double> max_reduction;
    std::optional<double> max_depth_budget;  // upper bound on sum_t f(l_t), in full-network units
    std::optional<int> min_L_refine;
    std::optional<int> min_T_complete;
    std::optional<int> max_T_sparse;

    bool empty() const {
        return !min_reduction && !max_reduction && !max_depth_budget && !min_L_refine && !min_T_complete &&
               !max_T_sparse;
    }
};

struct RankedPlan {
    SamplingParams params;
    double reduction = 1.0;
};

struct SearchSpace {
    int T_complete_max = 8;
    int T_sparse_max = 8;
};

inline std::vector<RankedPlan> search_plan(const SearchConstraints& c, const std::vector<double>& f, int T,
                                           const ScheduleContext& ctx, const SearchSpace& space = {}) {
    const int Lmax = ctx.full_level - 1;
    const int Lmin = std::max(1, static_cast<int>(ctx.outliers.size()));
    std::vector<RankedPlan> out;
    for (int tc = 1; tc <= space.T_complete_max; ++tc) {
        if (c.min_T_complete && tc < *c.min_T_complete) continue;
        for (int ts = 1; ts <= space.T_sparse_max; ++ts) {
            if (c.max_T_sparse && ts > *c.max_T_sparse) continue;
            for (int tk = std::max(ctx.D_star, tc); tk <= T; ++tk) {
                for (int lr = Lmin; lr <= Lmax; ++lr) {
                    if (c.min_L_refine && lr < *c.min_L_refine) continue;
                    for (int lk = lr; lk <= Lmax; ++lk) {
                        SamplingParams p{tk, tc, ts, lk, lr};
                        auto plan = build_schedule(p, T, ctx);
                        const double red = mac_reduction(plan, f);
                        if (c.min_reduction && red < *c.min_reduction) continue;
                        if (c.max_reduction && red > *c.max_reduction) continue;
                        if (c.max_depth_budget && static_cast<double>(T) / red > *c.max_depth_budget) continue;
                        out.push_back({p, red});
                    }
                }
            }
        }
    }
    auto key = [](const RankedPlan& r) {
        return std::tuple(-r.reduction, r.params.T_sketch, r.params.T_complete, r.params.T_sparse, r.params.L_sketch,
                          r.params.L_refine);
    };
    std::sort(out.begin(), out.end(), [&](const RankedPlan& a, const RankedPlan& b) { return key(a) < key(b); });
    return out;
}

struct SynthOptions {
    int T = 50;
    std::set<int> outlier_blocks{1, 2};
    int D_true = 20;
    double noise_sigma = 0.0;
    int n_images = 4;
    std::uint64_t seed = 0;
    int blocks = 12;
};

// Wave-shaped curves: every block rises from a low start and oscillates while t <= D_true; afterwards ordinary blocks drop to
// a low plateau while outlier blocks keep oscillating near the top. Block 0 carries a noise curve.
inline Trace synth_trace(const SynthOptions& o) {
    if (o.T < 3 || o.D_true < 1 || o.D_true > o.T - 2 || o.n_images < 1 || o.noise_sigma < 0.0 || o.blocks < 1)
        throw ConfigError("synth_trace: invalid parameters");
    std::mt19937_64 rng(o.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    constexpr double kPi = 3.14159265358979323846;
    Trace tr;
    tr.T = o.T;
    tr.scheduler_name = "synthetic";
    for (int img = 0; img < o.n_images; ++img) {
        for (int b = 0; b <= o.blocks; ++b) {
            const double scale = 0.5 + 0.1 * b;  // raw magnitude differs per block; min-max removes it
            for (int t = 1; t < o.T; ++t) {
                double v;
                if (b == 0) {
                    v = 1.0 / (1.0 + 0.05 * t);
                } else if (t <= o.D_true) {
                    const double phase = static_cast<double>(t - 1) / std::max(1, o.D_true - 1);
                    const double rise = 1.0 - 0.8 * std::exp(-(t - 1) / 2.0);
                    v = rise * (0.9 + 0.1 * std::sin(kPi * (phase + 0.1 * b)));
                } else if (o.outlier_blocks.contains(b)) {
                    v = 0.75 + 0.1 * std::sin(0.7 * t + b);
                } else {
                    const double tail = static_cast<double>(t - o.D_true) / (o.T - o.D_true);
                    v = 0.05 + 0.04 * tail * tail;
                }
                v *= scale;
                if (o.noise_sigma > 0.0) v += o.noise_sigma * scale * noise(rng);
                tr.records.push_back({img, b, t, std::max(0.0, v)});
            }
        }
    }
    return tr;
}

// Phase analysis of a trace: normalized matrix with outliers and D*.
struct PhaseAnalysis {
    ScoreMatrix matrix;
    Transition transition;
};

inline PhaseAnalysis analyze_trace(const Trace& tr, const OutlierOptions& o = {}) {
    PhaseAnalysis a;
    a.matrix = with_outliers(normalize_scores(tr), o);
    a.transition = find_transition(a.matrix);
    return a;
}

}  // namespace sdacc
