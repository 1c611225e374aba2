#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace pfl::num {

using Shape = std::vector<std::size_t>;

// Dense row-major array of doubles. Every extent is positive and the data
// length always equals the product of the extents.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor column(std::span<const double> values);
    static Tensor scalar(double value) { return matrix(1, 1, value); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    // Matrix view; throws DimensionError unless rank is 2.
    std::size_t rows() const;
    std::size_t cols() const;

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }

    // Value of a 1x1 tensor.
    double item() const;

    bool all_finite() const noexcept;
    void fill(double value) noexcept;
    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    std::string shape_str() const;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

std::string shape_str(const Shape& shape);

// Sum of squared differences; shapes must match.
double squared_distance(const Tensor& a, const Tensor& b);
double squared_norm(const Tensor& a);

}  // namespace pfl::num
