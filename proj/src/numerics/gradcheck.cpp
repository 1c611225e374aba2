#include "pfl/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "pfl/errors.hpp"

namespace pfl::num {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    return std::abs(analytic - numeric) / denom;
}

GradCheckResult finite_diff_check(const std::function<double()>& value, std::span<Parameter* const> params,
                                  std::span<const Tensor> analytic, double step) {
    if (!(step > 0.0)) {
        throw ContractError("finite_diff_check: step must be positive");
    }
    if (analytic.size() != params.size()) {
        throw ContractError("finite_diff_check: one analytic gradient per parameter required");
    }
    auto probe = [&value]() {
        const double v = value();
        if (!std::isfinite(v)) {
            throw NumericError("finite_diff_check: function returned a non-finite value");
        }
        return v;
    };
    GradCheckResult result;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Parameter& p = *params[k];
        if (!p.trainable) {
            continue;
        }
        if (!analytic[k].same_shape(p.value)) {
            throw DimensionError("finite_diff_check: analytic gradient shape mismatch for '" + p.name + "'");
        }
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double x0 = p.value[i];
            const double h = step * std::max(1.0, std::abs(x0));
            auto at = [&](double offset) {
                p.value[i] = x0 + offset;
                return probe();
            };
            const double fm2 = at(-2.0 * h), fm1 = at(-h), fmh = at(-0.5 * h);
            const double fph = at(0.5 * h), fp1 = at(h), fp2 = at(2.0 * h);
            p.value[i] = x0;
            const double coarse = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h);
            const double fine = (fm1 - 8.0 * fmh + 8.0 * fph - fp1) / (6.0 * h);
            const double numeric = (16.0 * fine - coarse) / 15.0;
            const double err = relative_error(analytic[k][i], numeric);
            ++result.coordinates;
            if (err > result.max_rel_error || result.worst_parameter.empty()) {
                result.max_rel_error = std::max(result.max_rel_error, err);
                result.worst_parameter = p.name;
                result.worst_index = i;
                result.worst_analytic = analytic[k][i];
                result.worst_numeric = numeric;
            }
        }
    }
    return result;
}

GradCheckResult finite_diff_check(const std::function<Var(Tape&)>& build, std::span<Parameter* const> params,
                                  double step) {
    std::vector<Tensor> analytic;
    {
        Tape tape;
        const Var loss = build(tape);
        tape.backward(loss);
        for (const Parameter* p : params) {
            const Tensor* g = tape.gradient(*p);
            analytic.push_back(g != nullptr ? *g : Tensor(p->value.shape(), 0.0));
        }
    }
    auto value = [&build]() {
        Tape tape;
        return build(tape).value().item();
    };
    return finite_diff_check(value, params, analytic, step);
}

}  // namespace pfl::num
