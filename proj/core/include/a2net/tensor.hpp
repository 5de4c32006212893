#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace a2net {

/// Dense row-major tensor of doubles. Shapes are immutable after
/// construction; values are mutable through data().
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<long> shape);
    Tensor(std::vector<long> shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor full(std::vector<long> shape, double v);

    const std::vector<long>& shape() const { return shape_; }
    long dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t rank() const { return shape_.size(); }
    long numel() const { return static_cast<long>(values_.size()); }
    bool empty() const { return values_.empty(); }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double item() const;  // requires numel() == 1

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    void fill(double v);

    std::string shape_str() const;

private:
    std::vector<long> shape_;
    std::vector<double> values_;
};

long shape_numel(const std::vector<long>& shape);

}  // namespace a2net
