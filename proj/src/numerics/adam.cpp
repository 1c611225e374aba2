#include "pfl/numerics/adam.hpp"

#include <cmath>
#include <string>

#include "pfl/errors.hpp"

namespace pfl::num {

void adam_step(std::span<Parameter* const> params, const AdamConfig& config, long step) {
    if (step < 1) {
        throw ContractError("adam_step: step must be >= 1, got " + std::to_string(step));
    }
    for (const Parameter* p : params) {
        if (!p->trainable || p->grad.empty()) {
            continue;
        }
        if (!p->grad.same_shape(p->value)) {
            throw DimensionError("adam_step: gradient shape " + p->grad.shape_str() + " != value shape " +
                                 p->value.shape_str() + " for '" + p->name + "'");
        }
        if (!p->grad.all_finite()) {
            throw NumericError("adam_step: non-finite gradient for parameter '" + p->name + "'");
        }
    }
    const double t = static_cast<double>(step);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    for (Parameter* p : params) {
        if (!p->trainable || p->grad.empty()) {
            continue;
        }
        if (!p->first_moment.same_shape(p->value)) {
            p->first_moment = Tensor(p->value.shape(), 0.0);
            p->second_moment = Tensor(p->value.shape(), 0.0);
        }
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad[i];
            double& m = p->first_moment[i];
            double& v = p->second_moment[i];
            m = config.beta1 * m + (1.0 - config.beta1) * g;
            v = config.beta2 * v + (1.0 - config.beta2) * g * g;
            const double m_hat = m / correction1;
            const double v_hat = v / correction2;
            p->value[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
        }
    }
}

}  // namespace pfl::num
