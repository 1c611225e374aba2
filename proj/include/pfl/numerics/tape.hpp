#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pfl/numerics/parameter.hpp"
#include "pfl/numerics/tensor.hpp"

namespace pfl::num {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    const Tensor& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    bool needs_grad() const;

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

// Define-by-run record of tensor operations for reverse-mode differentiation.
// Nodes are appended in evaluation order, which is a topological order, and
// backward() visits each of them once in reverse. A tape is single-threaded;
// distinct tapes may share read-only leaves (frozen weights) across threads.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf owning its value; never receives gradient.
    Var constant(Tensor value);
    // Leaf borrowing an external tensor that must outlive the tape.
    Var constant_ref(const Tensor& value);
    // Leaf bound to a parameter. Trainable parameters get gradients; frozen
    // ones behave like constant_ref. Repeated calls return the same node.
    Var param(const Parameter& p);

    // Records an op output. The backward rule is kept only when some input
    // needs a gradient. Non-finite outputs raise NumericError naming `op`.
    Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
    Var record(std::string_view op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

    const Tensor& value(std::size_t id) const;
    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

    // Gradient buffer of a node, allocated as zeros on first use.
    Tensor& grad_buffer(std::size_t id);
    // Gradient of a node after backward(); nullptr if none flowed.
    const Tensor* grad(std::size_t id) const;
    const Tensor* grad(Var v) const { return grad(v.id()); }
    // Gradient accumulated for a parameter leaf; nullptr if unused or frozen.
    const Tensor* gradient(const Parameter& p) const;

    // Reverse pass from a 1x1 loss. Throws ContractError for non-scalars.
    void backward(Var loss);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor owned;
        const Tensor* ref = nullptr;
        Tensor grad;
        bool needs_grad = false;
        BackwardFn backward;
    };

    std::size_t push_node(Node node);

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> param_leaves_;
    bool backward_done_ = false;
};

// Adds the tape's gradient for each parameter into Parameter::grad.
void accumulate_gradients(const Tape& tape, std::span<Parameter* const> params);

}  // namespace pfl::num
