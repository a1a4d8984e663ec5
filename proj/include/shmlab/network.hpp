#pragma once

#include "shmlab/layers.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <vector>

namespace shmlab::nn {

/// Feed-forward chain of layers.
class Sequential {
public:
    Sequential() = default;
    Sequential(Sequential&&) = default;
    Sequential& operator=(Sequential&&) = default;

    void add(std::unique_ptr<Layer> layer);

    Tensor forward(const Tensor& input);
    /// Returns the gradient with respect to the network input.
    Tensor backward(const Tensor& upstream);

    std::vector<ParamRef> params();
    void zero_grads();
    std::int64_t param_count();

    /// Shapes after each layer, starting with the input shape.
    std::vector<std::vector<std::int64_t>> shape_trace(std::vector<std::int64_t> input_shape) const;

    nlohmann::json architecture() const;

    std::size_t layer_count() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

/// Rebuilds a layer from its describe() record (weights zeroed).
std::unique_ptr<Layer> make_layer(const nlohmann::json& description);

/// Writes `header` (augmented with the architecture) to <stem>.json and the
/// parameters, in params() order, as a little-endian float32 blob
/// <stem>.f32.
void save_network(Sequential& net, const std::filesystem::path& stem, nlohmann::json header);

struct LoadedNetwork {
    Sequential net;
    nlohmann::json header;
};

LoadedNetwork load_network(const std::filesystem::path& stem);

struct FiniteDifferenceReport {
    double max_rel_error = 0.0;
    std::int64_t checked_parameters = 0;
    bool pass = false;
};

/// Compares analytic parameter and input gradients of 0.5*||f(x)||^2 with
/// central differences. Refuses networks above 10^4 parameters.
FiniteDifferenceReport finite_difference_check(Sequential& net, const Tensor& input,
                                               double tolerance);

} // namespace shmlab::nn
