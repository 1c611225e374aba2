#pragma once

#include <cstddef>
#include <memory>

#include "pfl/fm/checkpoint.hpp"
#include "pfl/numerics/param_set.hpp"
#include "pfl/stp/stp.hpp"

namespace pfl::fed {

using num::ParamSet;
using num::Tensor;

// How a client adapts the shared model. Implementations are stateless and
// may be called from several threads at once.
class Learner {
public:
    virtual ~Learner() = default;

    // Fresh trainable parameters (round-0 initialisation).
    virtual ParamSet initial_params() const = 0;
    // Forward and backward for one window; adds weight * gradient into the
    // grad slot of each entry of `params`. `anchor` enables the prox term.
    // Returns the unweighted loss.
    virtual double accumulate(ParamSet& params, const Tensor& window, const ParamSet* anchor, double lambda,
                              std::size_t epoch, double weight) const = 0;
    // Normalised forecast of the target over the horizon (Q x 1).
    virtual Tensor predict(const ParamSet& params, const Tensor& window) const = 0;
    // Scalars this mode adds on top of the base model.
    virtual std::size_t extra_params() const = 0;
    // Entries left out of the similarity vectors used by graph aggregation.
    virtual std::vector<std::string> similarity_exclude() const { return {}; }
};

enum class Mode { stp, promptfl, finetune, regular, frozen };

struct LearnerConfig {
    stp::StpConfig stp;
    std::size_t prompt_len = 0;  // promptfl prompt rows; 0 means Q
};

std::unique_ptr<Learner> make_learner(Mode mode, const fm::FrozenFM& fm, const LearnerConfig& cfg);

}  // namespace pfl::fed
