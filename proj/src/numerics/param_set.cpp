#include "pfl/numerics/param_set.hpp"

#include "pfl/errors.hpp"

namespace pfl::num {

namespace {

bool excluded(const std::string& name, const std::vector<std::string>& exclude) {
    for (const std::string& prefix : exclude) {
        if (name.compare(0, prefix.size(), prefix) == 0) {
            return true;
        }
    }
    return false;
}

}  // namespace

Parameter& ParamSet::add(std::string name, Tensor value, bool trainable) {
    if (contains(name)) {
        throw ContractError("param set: duplicate entry " + name);
    }
    items_.emplace_back(std::move(name), std::move(value), trainable);
    return items_.back();
}

Parameter* ParamSet::find(std::string_view name) {
    for (Parameter& p : items_) {
        if (p.name == name) {
            return &p;
        }
    }
    return nullptr;
}

const Parameter* ParamSet::find(std::string_view name) const {
    return const_cast<ParamSet*>(this)->find(name);
}

Parameter& ParamSet::at(std::string_view name) {
    Parameter* p = find(name);
    if (p == nullptr) {
        throw ContractError("param set: no entry named " + std::string(name));
    }
    return *p;
}

const Parameter& ParamSet::at(std::string_view name) const { return const_cast<ParamSet*>(this)->at(name); }

std::vector<Parameter*> ParamSet::pointers() {
    std::vector<Parameter*> out;
    out.reserve(items_.size());
    for (Parameter& p : items_) {
        out.push_back(&p);
    }
    return out;
}

std::size_t ParamSet::trainable_scalars() const {
    std::size_t n = 0;
    for (const Parameter& p : items_) {
        if (p.trainable) {
            n += p.size();
        }
    }
    return n;
}

std::size_t ParamSet::total_scalars() const {
    std::size_t n = 0;
    for (const Parameter& p : items_) {
        n += p.size();
    }
    return n;
}

void ParamSet::zero_grad() {
    for (Parameter& p : items_) {
        p.zero_grad();
    }
}

void ParamSet::reset_optimizer() {
    for (Parameter& p : items_) {
        p.reset_optimizer();
    }
}

bool ParamSet::same_layout(const ParamSet& other) const {
    if (items_.size() != other.items_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < items_.size(); ++i) {
        if (items_[i].name != other.items_[i].name || !items_[i].value.same_shape(other.items_[i].value)) {
            return false;
        }
    }
    return true;
}

std::vector<double> flatten(const ParamSet& set, const std::vector<std::string>& exclude) {
    std::vector<double> out;
    for (const Parameter& p : set.items()) {
        if (p.trainable && !excluded(p.name, exclude)) {
            out.insert(out.end(), p.value.values().begin(), p.value.values().end());
        }
    }
    return out;
}

void unflatten(ParamSet& set, const std::vector<double>& values, const std::vector<std::string>& exclude) {
    std::size_t offset = 0;
    for (Parameter& p : set.items()) {
        if (!p.trainable || excluded(p.name, exclude)) {
            continue;
        }
        if (offset + p.size() > values.size()) {
            throw DimensionError("unflatten: vector too short for " + p.name);
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            p.value[i] = values[offset + i];
        }
        offset += p.size();
    }
    if (offset != values.size()) {
        throw DimensionError("unflatten: " + std::to_string(values.size() - offset) + " values left over");
    }
}

double squared_distance(const ParamSet& a, const ParamSet& b) {
    if (!a.same_layout(b)) {
        throw DimensionError("squared_distance: parameter sets differ in layout");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += squared_distance(a.items()[i].value, b.items()[i].value);
    }
    return acc;
}

}  // namespace pfl::num
