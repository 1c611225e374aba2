#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "pfl/numerics/parameter.hpp"

namespace pfl::num {

// Ordered, named collection of parameters. The insertion order is the
// flattening order used for upload, similarity and aggregation. Parameters
// are addressed by pointer on tapes, so do not add after binding.
class ParamSet {
public:
    Parameter& add(std::string name, Tensor value, bool trainable = true);

    Parameter* find(std::string_view name);
    const Parameter* find(std::string_view name) const;
    Parameter& at(std::string_view name);
    const Parameter& at(std::string_view name) const;
    bool contains(std::string_view name) const { return find(name) != nullptr; }

    std::vector<Parameter>& items() noexcept { return items_; }
    const std::vector<Parameter>& items() const noexcept { return items_; }
    std::size_t size() const noexcept { return items_.size(); }
    bool empty() const noexcept { return items_.empty(); }

    std::vector<Parameter*> pointers();
    // Scalars in trainable entries.
    std::size_t trainable_scalars() const;
    std::size_t total_scalars() const;
    void zero_grad();
    void reset_optimizer();

    // True when names and shapes agree entry by entry.
    bool same_layout(const ParamSet& other) const;

private:
    std::vector<Parameter> items_;
};

// Values of the trainable entries concatenated in declared order, skipping
// entries whose name starts with any prefix in `exclude`.
std::vector<double> flatten(const ParamSet& set, const std::vector<std::string>& exclude = {});
// Inverse of flatten over the same selection.
void unflatten(ParamSet& set, const std::vector<double>& values, const std::vector<std::string>& exclude = {});

// Sum over entries of squared value differences; layouts must agree.
double squared_distance(const ParamSet& a, const ParamSet& b);

}  // namespace pfl::num
