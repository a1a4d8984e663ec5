#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace shmlab::nn {

/// Dense row-major tensor of doubles. Rank-3 tensors are laid out
/// (height, width, channels); rank-1 tensors are plain vectors.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> dims);
    Tensor(std::initializer_list<std::int64_t> dims) : Tensor(std::vector<std::int64_t>(dims)) {}

    static Tensor zeros(std::vector<std::int64_t> dims) { return Tensor(std::move(dims)); }

    std::int64_t numel() const;
    std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    double& at3(std::int64_t i, std::int64_t j, std::int64_t c) {
        return data[static_cast<std::size_t>((i * shape[1] + j) * shape[2] + c)];
    }
    double at3(std::int64_t i, std::int64_t j, std::int64_t c) const {
        return data[static_cast<std::size_t>((i * shape[1] + j) * shape[2] + c)];
    }

    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    /// Reinterprets the buffer under new dims; total size must match.
    Tensor reshaped(std::vector<std::int64_t> dims) const;
};

std::int64_t shape_numel(const std::vector<std::int64_t>& dims);
std::string shape_string(const std::vector<std::int64_t>& dims);

} // namespace shmlab::nn
