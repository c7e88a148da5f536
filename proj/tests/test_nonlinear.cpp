#include <sdacc/sdacc.hpp>

#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"

using namespace sdacc;
using Catch::Approx;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

std::vector<double> random_row(std::mt19937_64& rng, std::size_t n, double scale = 5.0) {
    std::normal_distribution<double> d(0.0, scale);
    std::vector<double> r(n);
    for (auto& x : r) x = d(rng);
    return r;
}

SoftmaxState by_partition(const std::vector<double>& row, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> len(1, kDefaultTileSize);
    SoftmaxState s;
    std::span<const double> all(row);
    for (std::size_t i = 0; i < row.size();) {
        std::size_t n = std::min(len(rng), row.size() - i);
        s = softmax_nca_update(s, all.subspan(i, n));
        i += n;
    }
    return s;
}

}  // namespace

TEST_CASE("softmax update examples", "[nonlinear]") {
    std::vector<double> z{0, 0, 0, 0};
    auto s = softmax_nca_update({}, z);
    CHECK(s.running_max == 0.0);
    CHECK(s.es == 4.0);
    CHECK(s.n1 == 4);

    std::vector<double> a{1, 2}, b{10};
    auto t = softmax_nca_update(softmax_nca_update({}, a), b);
    CHECK(t.running_max == 10.0);
    CHECK(t.es == Approx(std::exp(-9.0) + std::exp(-8.0) + 1.0).epsilon(1e-15));

    std::vector<double> same(5, 10.0);
    auto u = softmax_nca_update(t, same);
    CHECK(u.running_max == t.running_max);
    CHECK(u.es == Approx(t.es + 5).epsilon(1e-15));
    CHECK(u.n1 == t.n1 + 5);
}

TEST_CASE("softmax update rejects bad tiles", "[nonlinear]") {
    std::vector<double> empty;
    CHECK_THROWS_AS(softmax_nca_update({}, empty), ConfigError);
    std::vector<double> nan{1.0, std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(softmax_nca_update({}, nan), ConfigError);
    std::vector<double> inf{std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(softmax_nca_update({}, inf), ConfigError);
    std::vector<double> too_long(33, 0.0);
    CHECK_THROWS_AS(softmax_nca_update({}, too_long), ConfigError);
    CHECK_THROWS_AS(softmax_norm(0.0, SoftmaxState{}), InvariantError);
}

TEST_CASE("softmax norm examples", "[nonlinear]") {
    std::vector<double> c(100, 3.0);
    for (double y : softmax_streaming(c)) CHECK(y == Approx(0.01).epsilon(1e-12));
    std::vector<double> r{0.0, std::log(2.0)};
    auto y = softmax_streaming(r);
    CHECK(y[0] == Approx(1.0 / 3).epsilon(1e-12));
    CHECK(y[1] == Approx(2.0 / 3).epsilon(1e-12));
}

TEST_CASE("softmax matches the naive oracle and is partition invariant", "[nonlinear]") {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<std::size_t> len(1, 5000);
    for (int i = 0; i < 60; ++i) {
        auto row = random_row(rng, i < 5 ? static_cast<std::size_t>(31 + i) : len(rng));
        auto want = oracle::naive_softmax(row);
        auto got = softmax_streaming(row);
        double sum = 0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            CHECK(rel(got[j], want[j]) <= 1e-6);
            sum += got[j];
        }
        CHECK(sum == Approx(1.0).epsilon(1e-6));
        auto ref = softmax_stats(row);
        for (int p = 0; p < 3; ++p) {
            auto s = by_partition(row, rng);
            CHECK(s.running_max == ref.running_max);
            CHECK(rel(s.es, ref.es) <= 1e-7);
        }
    }
}

TEST_CASE("softmax shift invariance and merge", "[nonlinear]") {
    std::mt19937_64 rng(3);
    auto row = random_row(rng, 700);
    auto base = softmax_streaming(row);
    for (double c : {-100.0, -3.5, 42.0, 100.0}) {
        auto shifted = row;
        for (auto& x : shifted) x += c;
        auto y = softmax_streaming(shifted);
        for (std::size_t j = 0; j < y.size(); ++j) CHECK(rel(y[j], base[j]) <= 1e-6);
    }
    std::span<const double> all(row);
    auto left = softmax_stats({all.begin(), all.begin() + 300});
    auto right = softmax_stats({all.begin() + 300, all.end()});
    auto m = softmax_merge(left, right);
    auto whole = softmax_stats(row);
    CHECK(m.running_max == whole.running_max);
    CHECK(rel(m.es, whole.es) <= 1e-12);
    CHECK(m.n1 == 700);
}

TEST_CASE("layernorm moments", "[nonlinear]") {
    std::vector<double> c(10, 7.0);
    auto m = layernorm_finalize(layernorm_nca_update({}, c));
    CHECK(m.mean == 7.0);
    CHECK(m.var == 0.0);
    std::vector<double> v{1, 2, 3, 4};
    auto m2 = layernorm_finalize(layernorm_nca_update({}, v));
    CHECK(m2.mean == 2.5);
    CHECK(m2.var == 1.25);
    CHECK_THROWS_AS(layernorm_finalize({}), ConfigError);

    // var clamp under cancellation
    std::vector<double> big(32, 1e8 + 0.1);
    CHECK(layernorm_finalize(layernorm_nca_update({}, big)).var >= 0.0);

    std::mt19937_64 rng(8);
    for (int i = 0; i < 50; ++i) {
        auto row = random_row(rng, 768, 2.0);
        for (auto& x : row) x += 0.5;
        MomentState s;
        std::span<const double> all(row);
        for (std::size_t k = 0; k < row.size(); k += 32) s = layernorm_nca_update(s, all.subspan(k, 32));
        auto got = layernorm_finalize(s);
        auto want = oracle::welford(row);
        CHECK(rel(got.mean, want.mean) <= 1e-6);
        CHECK(rel(got.var, want.var) <= 1e-6);
    }
}

TEST_CASE("moment merge", "[nonlinear]") {
    std::vector<double> a{1, 2, 3}, b{4, 5, 6, 7};
    std::vector<double> ab{1, 2, 3, 4, 5, 6, 7};
    auto m = moment_merge(layernorm_nca_update({}, a), layernorm_nca_update({}, b));
    auto w = layernorm_nca_update({}, ab);
    CHECK(m.sum == w.sum);
    CHECK(m.sqsum == w.sqsum);
    CHECK(m.n == w.n);
}

TEST_CASE("layernorm output", "[nonlinear]") {
    std::vector<double> c(40, -2.0);
    for (double y : layernorm_streaming(c, 1.5, 0.25)) CHECK(y == Approx(0.25).epsilon(1e-12));
    std::mt19937_64 rng(4);
    auto row = random_row(rng, 1000, 3.0);
    auto y = layernorm_streaming(row, 1.0, 0.0, 1e-12);
    auto mv = oracle::welford(y);
    CHECK(std::abs(mv.mean) <= 1e-6);
    CHECK(mv.var == Approx(1.0).epsilon(1e-6));
    CHECK_THROWS_AS(layernorm_norm(1.0, 0.0, -1.0), ConfigError);
    CHECK_THROWS_AS(layernorm_norm(1.0, 0.0, 1.0, 1.0, 0.0, 0.0), ConfigError);
}

TEST_CASE("sigmoid GELU", "[nonlinear]") {
    CHECK(gelu_sigmoid(0.0) == 0.0);
    CHECK(gelu_sigmoid(10.0) >= 9.999);
    CHECK(gelu_sigmoid(10.0) <= 10.0);
    double worst = 0;
    for (int i = -10000; i <= 10000; ++i) {
        double x = i * 1e-3;
        worst = std::max(worst, std::abs(gelu_sigmoid(x) - oracle::gelu_erf(x)));
    }
    CHECK(worst <= 0.021);
}
