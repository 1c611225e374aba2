#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pfl/numerics/parameter.hpp"
#include "pfl/numerics/tape.hpp"

namespace pfl::num {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t coordinates = 0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// |a - n| / max(|a|, |n|, 1e-12)
double relative_error(double analytic, double numeric);

// Compares analytic gradients with central differences over every coordinate
// of every trainable parameter. The fourth-order stencil
//   D(h) = (f(x-2h) - 8 f(x-h) + 8 f(x+h) - f(x+2h)) / 12h,  h = step * max(1, |x|)
// is Richardson-extrapolated as (16 D(h/2) - D(h)) / 15, which keeps strongly
// curved objectives (iterated prompt loops) within reach of a 1e-5 tolerance.
// `value` must be a deterministic function of the parameters' current values. Values are
// restored after each probe. Non-finite function output raises NumericError.
GradCheckResult finite_diff_check(const std::function<double()>& value, std::span<Parameter* const> params,
                                  std::span<const Tensor> analytic, double step);

// Convenience: `build` records the scalar loss on a fresh tape; analytic
// gradients come from one backward pass.
GradCheckResult finite_diff_check(const std::function<Var(Tape&)>& build, std::span<Parameter* const> params,
                                  double step = 1e-3);

}  // namespace pfl::num
