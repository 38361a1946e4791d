#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fedcaug::nn {

// Dense row-major tensor of doubles. Shape dims are positive; data length
// always equals the product of the dims.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> dims);  // zero-filled
    Tensor(std::vector<int> dims, std::vector<double> values);

    std::size_t size() const noexcept { return data.size(); }

    double& operator[](std::size_t i) noexcept { return data[i]; }
    double operator[](std::size_t i) const noexcept { return data[i]; }

    // Unchecked 2-D access for [rows, cols] tensors.
    double& at2(int r, int c) noexcept {
        return data[static_cast<std::size_t>(r) * shape[1] + c];
    }
    double at2(int r, int c) const noexcept {
        return data[static_cast<std::size_t>(r) * shape[1] + c];
    }
};

std::string shape_string(const std::vector<int>& shape);

bool same_shape(const Tensor& a, const Tensor& b) noexcept;
bool all_finite(const Tensor& t) noexcept;

// Throws ShapeError naming `context` when the shapes differ.
void require_shape(const Tensor& t, const std::vector<int>& expected, const std::string& context);

}  // namespace fedcaug::nn
