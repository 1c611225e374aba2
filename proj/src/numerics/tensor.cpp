#include "pfl/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "pfl/errors.hpp"

namespace pfl::num {

namespace {

std::size_t checked_volume(const Shape& shape) {
    if (shape.empty()) {
        throw DimensionError("tensor: shape must have at least one extent");
    }
    std::size_t volume = 1;
    for (std::size_t extent : shape) {
        if (extent == 0) {
            throw DimensionError("tensor: zero extent in shape " + shape_str(shape));
        }
        volume *= extent;
    }
    return volume;
}

}  // namespace

std::string shape_str(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out += "x";
        }
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    data_.assign(checked_volume(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (checked_volume(shape_) != data_.size()) {
        throw DimensionError("tensor: " + std::to_string(data_.size()) +
                             " values do not fill shape " + num::shape_str(shape_));
    }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
    return Tensor({rows, cols}, fill);
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw DimensionError("tensor: ragged rows in from_rows");
        }
        values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(values));
}

Tensor Tensor::column(std::span<const double> values) {
    return Tensor({values.size(), 1}, std::vector<double>(values.begin(), values.end()));
}

std::size_t Tensor::rows() const {
    if (shape_.size() != 2) {
        throw DimensionError("tensor: expected a matrix, got shape " + num::shape_str(shape_));
    }
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (shape_.size() != 2) {
        throw DimensionError("tensor: expected a matrix, got shape " + num::shape_str(shape_));
    }
    return shape_[1];
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw DimensionError("tensor: item() on shape " + num::shape_str(shape_));
    }
    return data_[0];
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

std::string Tensor::shape_str() const { return num::shape_str(shape_); }

double squared_distance(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw DimensionError("squared_distance: " + a.shape_str() + " vs " + b.shape_str());
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double squared_norm(const Tensor& a) {
    return std::inner_product(a.data(), a.data() + a.size(), a.data(), 0.0);
}

}  // namespace pfl::num
