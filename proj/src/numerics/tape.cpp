#include "pfl/numerics/tape.hpp"

#include <string>

#include "pfl/errors.hpp"

namespace pfl::num {

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::needs_grad() const { return tape_->needs_grad(id_); }

Parameter::Parameter(std::string n, Tensor v, bool t)
    : name(std::move(n)), value(std::move(v)), trainable(t) {}

void Parameter::zero_grad() {
    if (grad.same_shape(value)) {
        grad.fill(0.0);
    } else {
        grad = Tensor(value.shape(), 0.0);
    }
}

void Parameter::reset_optimizer() {
    first_moment = Tensor();
    second_moment = Tensor();
}

std::size_t Tape::push_node(Node node) {
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
}

Var Tape::constant(Tensor value) {
    Node node;
    node.owned = std::move(value);
    return Var(this, push_node(std::move(node)));
}

Var Tape::constant_ref(const Tensor& value) {
    Node node;
    node.ref = &value;
    return Var(this, push_node(std::move(node)));
}

Var Tape::param(const Parameter& p) {
    if (auto it = param_leaves_.find(&p); it != param_leaves_.end()) {
        return Var(this, it->second);
    }
    Node node;
    node.ref = &p.value;
    node.needs_grad = p.trainable;
    const std::size_t id = push_node(std::move(node));
    param_leaves_.emplace(&p, id);
    return Var(this, id);
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool any = false;
    for (const Var& v : inputs) {
        any = any || nodes_[v.id()].needs_grad;
    }
    if (!value.all_finite()) {
        throw NumericError("non-finite value produced by op '" + std::string(op) + "' with shape " +
                           value.shape_str());
    }
    Node node;
    node.owned = std::move(value);
    node.needs_grad = any;
    if (any) {
        node.backward = std::move(fn);
    }
    return Var(this, push_node(std::move(node)));
}

Var Tape::record(std::string_view op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
    bool any = false;
    for (const Var& v : inputs) {
        any = any || nodes_[v.id()].needs_grad;
    }
    if (!value.all_finite()) {
        throw NumericError("non-finite value produced by op '" + std::string(op) + "' with shape " +
                           value.shape_str());
    }
    Node node;
    node.owned = std::move(value);
    node.needs_grad = any;
    if (any) {
        node.backward = std::move(fn);
    }
    return Var(this, push_node(std::move(node)));
}

const Tensor& Tape::value(std::size_t id) const {
    const Node& node = nodes_[id];
    return node.ref != nullptr ? *node.ref : node.owned;
}

Tensor& Tape::grad_buffer(std::size_t id) {
    Node& node = nodes_[id];
    if (node.grad.empty()) {
        node.grad = Tensor(value(id).shape(), 0.0);
    }
    return node.grad;
}

const Tensor* Tape::grad(std::size_t id) const {
    const Node& node = nodes_[id];
    return node.grad.empty() ? nullptr : &node.grad;
}

const Tensor* Tape::gradient(const Parameter& p) const {
    auto it = param_leaves_.find(&p);
    if (it == param_leaves_.end()) {
        return nullptr;
    }
    return grad(it->second);
}

void Tape::backward(Var loss) {
    if (loss.value().size() != 1) {
        throw ContractError("backward: loss must be a scalar, got shape " + loss.value().shape_str());
    }
    if (backward_done_) {
        throw ContractError("backward: tape already differentiated");
    }
    backward_done_ = true;
    if (!nodes_[loss.id()].needs_grad) {
        return;
    }
    grad_buffer(loss.id())[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (node.backward && !node.grad.empty()) {
            node.backward(*this, i);
        }
    }
}

void accumulate_gradients(const Tape& tape, std::span<Parameter* const> params) {
    for (Parameter* p : params) {
        if (!p->trainable) {
            continue;
        }
        const Tensor* g = tape.gradient(*p);
        if (g == nullptr) {
            continue;
        }
        if (!p->grad.same_shape(p->value)) {
            p->zero_grad();
        }
        for (std::size_t i = 0; i < g->size(); ++i) {
            p->grad[i] += (*g)[i];
        }
    }
}

}  // namespace pfl::num
