#include "pfl/graphagg/graphagg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pfl/errors.hpp"

namespace pfl::graphagg {

namespace {

void check_vectors(const std::vector<std::vector<double>>& vectors) {
    if (vectors.empty()) {
        throw ContractError("graph: no prompt vectors");
    }
    for (const auto& v : vectors) {
        if (v.size() != vectors.front().size()) {
            throw ContractError("graph: prompt vectors differ in length (" + std::to_string(v.size()) + " vs " +
                                std::to_string(vectors.front().size()) + ")");
        }
    }
}

void check_square(const Matrix& m, std::size_t n) {
    if (m.size() != n) {
        throw ContractError("graph: matrix has " + std::to_string(m.size()) + " rows for " + std::to_string(n) +
                            " clients");
    }
    for (const auto& row : m) {
        if (row.size() != n) {
            throw ContractError("graph: matrix is not square");
        }
    }
}

double leaky_relu(double x) { return x >= 0.0 ? x : 0.2 * x; }

}  // namespace

void SmoothingConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError("graph: alpha must lie in [0, 1]");
    }
    if (steps < 1) {
        throw ConfigError("graph: smoothing steps must be at least 1");
    }
    if (!(threshold >= -1.0 && threshold <= 1.0)) {
        throw ConfigError("graph: threshold must lie in [-1, 1]");
    }
    if (tau < 0.0) {
        throw ConfigError("graph: tau must be non-negative");
    }
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw ContractError("cosine: length mismatch");
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

Matrix graph_generate(const std::vector<std::vector<double>>& vectors, double threshold) {
    check_vectors(vectors);
    const std::size_t n = vectors.size();
    Matrix a(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        a[i][i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            if (cosine(vectors[i], vectors[j]) >= threshold) {
                a[i][j] = a[j][i] = 1.0;
            }
        }
    }
    return a;
}

Matrix attention_weights(const Matrix& adjacency, const std::vector<std::vector<double>>& vectors) {
    check_vectors(vectors);
    const std::size_t n = vectors.size();
    check_square(adjacency, n);
    Matrix att(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> logits(n, 0.0);
        double top = -1e300;
        for (std::size_t j = 0; j < n; ++j) {
            if (adjacency[i][j] != 0.0) {
                // A zero vector has cosine 0 even with itself.
                logits[j] = leaky_relu(i == j && cosine(vectors[i], vectors[i]) == 0.0 ? 0.0
                                                                                        : cosine(vectors[i], vectors[j]));
                top = std::max(top, logits[j]);
            }
        }
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (adjacency[i][j] != 0.0) {
                att[i][j] = std::exp(logits[j] - top);
                total += att[i][j];
            }
        }
        if (total > 0.0) {
            for (double& v : att[i]) {
                v /= total;
            }
        }
    }
    return att;
}

std::vector<ParamSet> gcn_smooth(const Matrix& attention, std::vector<ParamSet> stacks, double alpha,
                                 std::size_t steps) {
    if (stacks.empty()) {
        throw AggregationError("gcn_smooth: no client stacks");
    }
    if (steps < 1) {
        throw ConfigError("gcn_smooth: steps must be at least 1");
    }
    const std::size_t n = stacks.size();
    check_square(attention, n);
    for (const ParamSet& s : stacks) {
        if (!s.same_layout(stacks.front())) {
            throw ContractError("gcn_smooth: client prompt layouts differ");
        }
    }
    for (std::size_t step = 0; step < steps; ++step) {
        std::vector<ParamSet> next = stacks;
        for (std::size_t t = 0; t < stacks.front().size(); ++t) {
            const std::size_t len = stacks.front().items()[t].size();
            for (std::size_t i = 0; i < n; ++i) {
                auto& out = next[i].items()[t].value;
                for (std::size_t e = 0; e < len; ++e) {
                    // Same as alpha*A'P + (1-alpha)*P for stochastic rows, but
                    // written as a correction so consensus is an exact fixed point.
                    const double own = stacks[i].items()[t].value[e];
                    double pull = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        if (attention[i][j] != 0.0 && j != i) {
                            pull += attention[i][j] * (stacks[j].items()[t].value[e] - own);
                        }
                    }
                    out[e] = own + alpha * pull;
                }
            }
        }
        stacks = std::move(next);
    }
    return stacks;
}

ParamSet global_average(const std::vector<ParamSet>& stacks, const std::vector<double>& weights, bool uniform) {
    if (stacks.empty()) {
        throw AggregationError("global_average: no client stacks");
    }
    const std::size_t n = stacks.size();
    std::vector<double> w(n, 1.0 / static_cast<double>(n));
    if (!uniform) {
        if (weights.size() != n) {
            throw ContractError("global_average: weight count does not match stacks");
        }
        double total = 0.0;
        for (double v : weights) {
            if (!(v >= 0.0)) {
                throw AggregationError("global_average: negative weight");
            }
            total += v;
        }
        if (total <= 0.0) {
            throw AggregationError("global_average: weights sum to zero");
        }
        for (std::size_t i = 0; i < n; ++i) {
            w[i] = weights[i] / total;
        }
    }
    if (n == 1) {
        return stacks.front();
    }
    ParamSet out = stacks.front();
    for (std::size_t t = 0; t < out.size(); ++t) {
        auto& dst = out.items()[t].value;
        for (std::size_t e = 0; e < dst.size(); ++e) {
            const double base = stacks[0].items()[t].value[e];
            double shift = 0.0;
            for (std::size_t i = 1; i < n; ++i) {
                shift += w[i] * (stacks[i].items()[t].value[e] - base);
            }
            dst[e] = base + shift;
        }
    }
    return out;
}

double graph_regularizer(const Matrix& attention, const std::vector<std::vector<double>>& vectors) {
    check_vectors(vectors);
    const std::size_t n = vectors.size();
    check_square(attention, n);
    double g = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (attention[i][j] == 0.0 || i == j) {
                continue;
            }
            double d2 = 0.0;
            for (std::size_t e = 0; e < vectors[i].size(); ++e) {
                const double d = vectors[i][e] - vectors[j][e];
                d2 += d * d;
            }
            g += attention[i][j] * d2;
        }
    }
    return g;
}

GraphAggregate graph_aggregate(const std::vector<ParamSet>& stacks, const std::vector<double>& weights,
                               const SmoothingConfig& cfg, const std::vector<std::string>& similarity_exclude) {
    cfg.validate();
    if (stacks.empty()) {
        throw AggregationError("graph_aggregate: no uploads");
    }
    std::vector<std::vector<double>> vectors;
    vectors.reserve(stacks.size());
    for (const ParamSet& s : stacks) {
        vectors.push_back(num::flatten(s, similarity_exclude));
    }
    GraphAggregate out;
    out.adjacency = graph_generate(vectors, cfg.threshold);
    out.attention = attention_weights(out.adjacency, vectors);
    out.regularizer = graph_regularizer(out.attention, vectors);
    out.smoothed = gcn_smooth(out.attention, stacks, cfg.alpha, cfg.steps);
    out.global = global_average(out.smoothed, weights, cfg.uniform_avg);
    return out;
}

}  // namespace pfl::graphagg
