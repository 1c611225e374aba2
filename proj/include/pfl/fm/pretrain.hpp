#pragma once

#include <cstdint>
#include <vector>

#include "pfl/fm/transformer.hpp"

namespace pfl::fm {

enum class PretrainObjective { masked, onestep };

struct PretrainConfig {
    std::size_t epochs = 5;
    std::size_t batch = 16;
    double lr = 1e-3;
    double mask_fraction = 0.15;
    // Probability that a window masks its trailing `horizon` rows instead of
    // random rows, so the forecast head sees forecasting-shaped inputs.
    double horizon_mask_prob = 0.5;
    std::size_t horizon = 15;
    std::size_t target_var = 0;
    PretrainObjective objective = PretrainObjective::masked;
    std::uint64_t seed = 0;
};

struct PretrainResult {
    std::vector<double> epoch_train_loss;
    double final_val_loss = 0.0;
};

// Row masks (1 = hidden) for each window, drawn from `seed`.
std::vector<std::vector<char>> draw_masks(const std::vector<Tensor>& windows, const PretrainConfig& cfg,
                                          std::uint64_t seed);

// Mean masked loss over windows under fixed masks; no parameter updates.
double masked_loss(const FMWeights& fm, const std::vector<Tensor>& windows,
                   const std::vector<std::vector<char>>& masks, const PretrainConfig& cfg);

// Masked-reconstruction training with Adam on all FM parameters, including
// the position table. Windows are full m x n blocks.
PretrainResult pretrain(FMWeights& fm, const std::vector<Tensor>& train, const std::vector<Tensor>& val,
                        const PretrainConfig& cfg);

}  // namespace pfl::fm
