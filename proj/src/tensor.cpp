#include "shmlab/tensor.hpp"

#include "shmlab/errors.hpp"

#include <cmath>
#include <string>

namespace shmlab::nn {

std::int64_t shape_numel(const std::vector<std::int64_t>& dims) {
    std::int64_t n = 1;
    for (std::int64_t d : dims) {
        if (d < 0) {
            throw ConfigError("negative tensor dimension");
        }
        n *= d;
    }
    return n;
}

std::string shape_string(const std::vector<std::int64_t>& dims) {
    std::string s = "(";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) {
            s += ", ";
        }
        s += std::to_string(dims[i]);
    }
    return s + ")";
}

Tensor::Tensor(std::vector<std::int64_t> dims)
    : shape(std::move(dims)), data(static_cast<std::size_t>(shape_numel(shape)), 0.0) {}

std::int64_t Tensor::numel() const {
    return static_cast<std::int64_t>(data.size());
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

Tensor Tensor::reshaped(std::vector<std::int64_t> dims) const {
    if (shape_numel(dims) != numel()) {
        throw ConfigError("reshape " + shape_string(shape) + " -> " + shape_string(dims) +
                          " changes element count");
    }
    Tensor t;
    t.shape = std::move(dims);
    t.data = data;
    return t;
}

} // namespace shmlab::nn
