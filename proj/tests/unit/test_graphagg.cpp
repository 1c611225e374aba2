#include <cmath>
#include <vector>

#include "doctest.h"
#include "pfl/errors.hpp"
#include "pfl/graphagg/graphagg.hpp"
#include "pfl/rng.hpp"

using namespace pfl;
using namespace pfl::graphagg;

namespace {

ParamSet scalar_set(double v) {
    ParamSet s;
    s.add("x", num::Tensor::scalar(v));
    return s;
}

ParamSet random_set(Rng& rng) {
    ParamSet s;
    num::Tensor a = num::Tensor::matrix(3, 2);
    num::Tensor b = num::Tensor::matrix(4, 1);
    for (double& v : a.values()) v = rng.normal();
    for (double& v : b.values()) v = rng.normal();
    s.add("a", a);
    s.add("b", b);
    return s;
}

Matrix uniform(std::size_t n) { return Matrix(n, std::vector<double>(n, 1.0 / static_cast<double>(n))); }

Matrix identity(std::size_t n) {
    Matrix m(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
    return m;
}

}  // namespace

TEST_CASE("graph generation") {
    std::vector<std::vector<double>> same(3, {1.0, 2.0});
    auto a = graph_generate(same, 0.5);
    for (const auto& row : a)
        for (double v : row) CHECK(v == 1.0);

    auto ortho = graph_generate({{1, 0}, {0, 1}}, 0.5);
    CHECK(ortho == identity(2));
    CHECK(graph_generate({{3, 4}}, 0.5) == Matrix{{1.0}});

    auto zero = graph_generate({{0, 0}, {0, 0}}, 0.0);
    CHECK(zero[0][1] == 1.0);  // cosine 0 meets a threshold of 0
    CHECK(graph_generate({{0, 0}, {0, 0}}, 0.5) == identity(2));
    CHECK_THROWS_AS(graph_generate({{1, 0}, {1}}, 0.5), ContractError);
}

TEST_CASE("attention weights") {
    std::vector<std::vector<double>> same(4, {1.0, -1.0});
    auto att = attention_weights(graph_generate(same, 0.5), same);
    for (const auto& row : att)
        for (double v : row) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

    std::vector<std::vector<double>> ortho{{1, 0}, {0, 1}};
    CHECK(attention_weights(identity(2), ortho) == identity(2));

    // Two clients whose cosine is 0.6.
    std::vector<std::vector<double>> pair{{1, 0}, {0.6, 0.8}};
    auto hand = attention_weights(graph_generate(pair, 0.5), pair);
    const double e1 = std::exp(1.0), e06 = std::exp(0.6);
    CHECK(hand[0][0] == doctest::Approx(e1 / (e1 + e06)).epsilon(1e-14));
    CHECK(hand[0][1] == doctest::Approx(0.4013).epsilon(1e-4));
    CHECK(hand[0][0] == doctest::Approx(0.5987).epsilon(1e-4));

    Rng rng(1);
    std::vector<std::vector<double>> vs;
    for (int i = 0; i < 6; ++i) vs.push_back({rng.normal(), rng.normal(), rng.normal()});
    auto adj = graph_generate(vs, 0.1);
    auto w = attention_weights(adj, vs);
    for (std::size_t i = 0; i < 6; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            total += w[i][j];
            if (adj[i][j] == 0.0) CHECK(w[i][j] == 0.0);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("smoothing") {
    auto out = gcn_smooth(uniform(2), {scalar_set(0), scalar_set(2)}, 0.5, 1);
    CHECK(out[0].at("x").value[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(out[1].at("x").value[0] == doctest::Approx(1.5).epsilon(1e-15));

    Rng rng(2);
    std::vector<ParamSet> stacks{random_set(rng), random_set(rng), random_set(rng)};
    auto fixed = gcn_smooth(identity(3), stacks, 0.7, 3);
    auto still = gcn_smooth(uniform(3), stacks, 0.0, 2);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(num::squared_distance(fixed[i], stacks[i]) == 0.0);
        CHECK(num::squared_distance(still[i], stacks[i]) == 0.0);
    }
    CHECK_THROWS_AS(gcn_smooth(uniform(3), stacks, 0.5, 0), ConfigError);
}

TEST_CASE("smoothing contracts toward the mean") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<ParamSet> stacks;
        std::vector<std::vector<double>> vs;
        for (int i = 0; i < 5; ++i) {
            stacks.push_back(random_set(rng));
            vs.push_back(num::flatten(stacks.back()));
        }
        const double alpha = rng.uniform();
        auto att = attention_weights(graph_generate(vs, rng.uniform(-1, 1)), vs);
        auto mean = global_average(stacks, {}, true);
        auto out = gcn_smooth(att, stacks, alpha, 1 + rng.below(3));
        double before = 0.0, after = 0.0;
        for (int i = 0; i < 5; ++i) {
            before = std::max(before, std::sqrt(num::squared_distance(stacks[i], mean)));
            after = std::max(after, std::sqrt(num::squared_distance(out[i], mean)));
        }
        CHECK(after <= before + 1e-12);
    }
}

TEST_CASE("global average") {
    CHECK(global_average({scalar_set(5)}, {}, true).at("x").value[0] == 5.0);
    CHECK(global_average({scalar_set(1), scalar_set(3)}, {}, true).at("x").value[0] == 2.0);
    CHECK(global_average({scalar_set(0), scalar_set(3), scalar_set(6)}, {}, true).at("x").value[0] == 3.0);
    CHECK(global_average({scalar_set(1), scalar_set(3)}, {1, 3}, false).at("x").value[0] == 2.5);
    CHECK_THROWS_AS(global_average({}, {}, true), AggregationError);
}

TEST_CASE("graph regulariser") {
    CHECK(graph_regularizer(uniform(2), {{1, 1}, {1, 1}}) == 0.0);
    CHECK(graph_regularizer(identity(2), {{0}, {2}}) == 0.0);
    CHECK(graph_regularizer(uniform(2), {{0}, {2}}) == 4.0);
}

TEST_CASE("pipeline fixed point and fedavg reduction") {
    Rng rng(4);
    ParamSet one = random_set(rng);
    std::vector<ParamSet> same(4, one);
    SmoothingConfig cfg;
    auto agg = graph_aggregate(same, {1, 2, 3, 4}, cfg);
    for (const auto& s : agg.smoothed) CHECK(num::squared_distance(s, one) == 0.0);
    CHECK(num::squared_distance(agg.global, one) == 0.0);
    CHECK(agg.regularizer == 0.0);

    // A complete graph with alpha 1 and one step collapses to the mean.
    std::vector<ParamSet> stacks;
    for (int i = 0; i < 3; ++i) {
        ParamSet s = one;
        for (auto& p : s.items())
            for (double& v : p.value.values()) v += 0.01 * rng.normal();
        stacks.push_back(s);
    }
    SmoothingConfig full;
    full.alpha = 1.0;
    full.steps = 1;
    full.threshold = -1.0;
    auto reduced = graph_aggregate(stacks, {1, 1, 1}, full);
    auto mean = global_average(stacks, {1, 1, 1}, false);
    // The stacks are nearly parallel, so A' is close to but not exactly uniform;
    // with exactly uniform attention the reduction is exact.
    auto exact = gcn_smooth(uniform(3), stacks, 1.0, 1);
    auto exact_global = global_average(exact, {}, true);
    for (std::size_t t = 0; t < mean.size(); ++t)
        for (std::size_t e = 0; e < mean.items()[t].size(); ++e)
            CHECK(std::abs(exact_global.items()[t].value[e] - mean.items()[t].value[e]) < 1e-12);
    CHECK(reduced.global.same_layout(mean));

    auto single = graph_aggregate({one}, {7}, cfg);
    CHECK(num::squared_distance(single.global, one) == 0.0);
    CHECK(num::squared_distance(single.smoothed[0], one) == 0.0);
}
