#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pfl/numerics/ops.hpp"
#include "pfl/numerics/parameter.hpp"

namespace pfl::fm {

using num::Parameter;
using num::Tape;
using num::Tensor;
using num::Var;

struct FMConfig {
    std::size_t n_vars = 12;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 3;
    std::size_t d_ff = 128;
    std::size_t max_seq_len = 48;
    std::uint64_t seed = 0;

    std::size_t head_dim() const { return d_model / n_heads; }
    // Throws ConfigError on zero extents, indivisible heads, or a position
    // table shorter than `min_seq_len`.
    void validate(std::size_t min_seq_len = 1) const;

    friend bool operator==(const FMConfig&, const FMConfig&) = default;
};

struct EncoderLayer {
    Parameter norm1_gain, norm1_bias;
    Parameter query_w, query_b, key_w, key_b, value_w, value_b, out_w, out_b;
    Parameter norm2_gain, norm2_bias;
    Parameter ff1_w, ff1_b, ff2_w, ff2_b;
};

// Pre-norm encoder-only transformer over rows of n_vars variables. The
// declared order of parameters() is the checkpoint and ledger order.
struct FMWeights {
    FMConfig config;
    Parameter input_w, input_b;
    Parameter position;  // max_seq_len x d_model
    std::vector<EncoderLayer> layers;
    Parameter final_gain, final_bias;
    Parameter recon_w, recon_b;        // d_model -> n_vars
    Parameter forecast_w, forecast_b;  // d_model -> 1

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    std::size_t parameter_count() const;
    void set_trainable(bool trainable);
};

// Xavier-uniform weights seeded from config.seed; norms start at gain 1,
// bias 0; linear biases at 0.
FMWeights init_fm(const FMConfig& config);

struct FMOutputs {
    Var hidden;    // L x d_model
    Var recon;     // L x n_vars
    Var forecast;  // L x 1
};

// Forward map of an L x n_vars input under an explicit L x d_model position
// encoding. Frozen weights enter the tape as constants, so only gradients
// with respect to x, pos and trainable weights are formed.
FMOutputs fm_forward(Tape& tape, const FMWeights& fm, Var x, Var pos);

struct FMTensors {
    Tensor hidden;
    Tensor recon;
    Tensor forecast;
};
FMTensors fm_forward(const FMWeights& fm, const Tensor& x, const Tensor& pos);

// First `rows` rows of the position table.
Tensor position_rows(const FMWeights& fm, std::size_t rows);

}  // namespace pfl::fm
