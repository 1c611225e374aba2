#pragma once

#include <span>

#include "pfl/numerics/parameter.hpp"

namespace pfl::num {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam update of every trainable parameter from its grad.
// `step` is the 1-based update count. Frozen parameters are skipped; a
// non-finite gradient raises NumericError before anything is modified.
void adam_step(std::span<Parameter* const> params, const AdamConfig& config, long step);

}  // namespace pfl::num
