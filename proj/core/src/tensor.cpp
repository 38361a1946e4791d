#include "fedcaug/tensor.hpp"

#include <cmath>
#include <numeric>

#include "fedcaug/error.hpp"

namespace fedcaug::nn {

namespace {

std::size_t element_count(const std::vector<int>& dims) {
    std::size_t n = 1;
    for (int d : dims) {
        if (d <= 0) {
            throw ArgumentError("tensor dims must be positive, got " + shape_string(dims));
        }
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> dims) : shape(std::move(dims)), data(element_count(shape), 0.0) {}

Tensor::Tensor(std::vector<int> dims, std::vector<double> values)
    : shape(std::move(dims)), data(std::move(values)) {
    if (data.size() != element_count(shape)) {
        throw ShapeError("tensor construction", shape_string(shape),
                         std::to_string(data.size()) + " values");
    }
}

std::string shape_string(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    s += "]";
    return s;
}

bool same_shape(const Tensor& a, const Tensor& b) noexcept { return a.shape == b.shape; }

bool all_finite(const Tensor& t) noexcept {
    for (double v : t.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void require_shape(const Tensor& t, const std::vector<int>& expected, const std::string& context) {
    if (t.shape != expected) {
        throw ShapeError(context, shape_string(expected), shape_string(t.shape));
    }
}

}  // namespace fedcaug::nn
