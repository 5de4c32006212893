#include "a2net/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace a2net {

long shape_numel(const std::vector<long>& shape) {
    long n = 1;
    for (long d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<long> shape)
    : shape_(std::move(shape)), values_(static_cast<std::size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<long> shape, std::vector<double> values) : shape_(std::move(shape)) {
    if (shape_numel(shape_) != static_cast<long>(values.size())) {
        throw std::invalid_argument("tensor value count does not match shape");
    }
    values_ = std::move(values);
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(std::vector<long> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

double Tensor::item() const {
    if (values_.size() != 1) {
        throw std::invalid_argument("item() requires a single-element tensor, got shape " + shape_str());
    }
    return values_[0];
}

bool Tensor::all_finite() const {
    for (double v : values_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(double v) {
    for (double& x : values_) x = v;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ", ";
        os << shape_[i];
    }
    os << "]";
    return os.str();
}

}  // namespace a2net
