#pragma once

#include <cstddef>
#include <vector>

#include "pfl/numerics/param_set.hpp"

namespace pfl::graphagg {

using num::ParamSet;
using Matrix = std::vector<std::vector<double>>;

struct SmoothingConfig {
    double alpha = 0.5;
    std::size_t steps = 2;   // r
    double threshold = 0.5;  // theta
    double tau = 0.0;        // weight of G(A) in the monitored server objective
    bool uniform_avg = true;

    void validate() const;
};

// cos(a, b); 0 when either vector is zero.
double cosine(const std::vector<double>& a, const std::vector<double>& b);

// A[i][j] = 1 iff cos >= theta or i == j.
Matrix graph_generate(const std::vector<std::vector<double>>& vectors, double threshold);

// Row softmax of LeakyReLU(0.2) cosine logits over each row's neighbours.
Matrix attention_weights(const Matrix& adjacency, const std::vector<std::vector<double>>& vectors);

// r rounds of P <- alpha * A'P + (1 - alpha) * P applied entry-wise to every
// tensor of the stacks.
std::vector<ParamSet> gcn_smooth(const Matrix& attention, std::vector<ParamSet> stacks, double alpha,
                                 std::size_t steps);

// Weighted mean (weights normalised to sum 1) or the plain mean.
ParamSet global_average(const std::vector<ParamSet>& stacks, const std::vector<double>& weights, bool uniform);

// sum_ij A'_ij ||P_i - P_j||^2 over the given flattened vectors.
double graph_regularizer(const Matrix& attention, const std::vector<std::vector<double>>& vectors);

struct GraphAggregate {
    Matrix adjacency;
    Matrix attention;
    std::vector<ParamSet> smoothed;  // P^s per input stack
    ParamSet global;                 // P^g
    double regularizer = 0.0;
};

// Full server step. Similarity uses the trainable entries in declared order
// minus names starting with any prefix in `similarity_exclude`.
GraphAggregate graph_aggregate(const std::vector<ParamSet>& stacks, const std::vector<double>& weights,
                               const SmoothingConfig& cfg, const std::vector<std::string>& similarity_exclude = {});

}  // namespace pfl::graphagg
