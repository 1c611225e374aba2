#pragma once

#include <string>

#include "pfl/numerics/tensor.hpp"

namespace pfl::num {

// A named tensor with gradient accumulator and Adam moment slots.
// Non-trainable parameters are read as constants by the tape and are never
// touched by the optimizer.
struct Parameter {
    Parameter() = default;
    Parameter(std::string name, Tensor value, bool trainable = true);

    std::string name;
    Tensor value;
    bool trainable = true;
    Tensor grad;
    Tensor first_moment;
    Tensor second_moment;

    void zero_grad();
    // Drops optimizer moments (but not the value).
    void reset_optimizer();
    std::size_t size() const noexcept { return value.size(); }
};

}  // namespace pfl::num
