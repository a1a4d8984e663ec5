#pragma once

#include "shmlab/rng.hpp"
#include "shmlab/tensor.hpp"

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include <memory>
#include <string>
#include <vector>

namespace shmlab::nn {

/// Convolution hyperparameters. `padding` is zero-fill per side, so the
/// output width is (W - F + 2*padding)/stride + 1.
struct ConvSpec {
    int filters = 1;
    int extent = 3;
    int stride = 1;
    int padding = 0;

    void validate() const;
};

/// Output size along one spatial axis; throws ConfigError naming `axis`
/// when the division is not exact.
int conv_output_dim(int input, int extent, int stride, int padding, const std::string& axis);
int pool_output_dim(int input, int extent, int stride, const std::string& axis);

// ---------------------------------------------------------------------------
// Functional core. Inputs are (H, W, C) tensors; kernels are stored as a
// (F*F*Cin) x K matrix whose row index runs over (fi, fj, c) of the patch,
// so conv reduces to one im2col GEMM per call.
// ---------------------------------------------------------------------------

Tensor conv2d_forward(const Tensor& input, const Eigen::MatrixXd& kernel,
                      const Eigen::VectorXd& bias, const ConvSpec& spec);

struct Conv2dGrads {
    Tensor input_grad;
    Eigen::MatrixXd kernel_grad;
    Eigen::VectorXd bias_grad;
};

Conv2dGrads conv2d_backward(const Tensor& upstream, const Tensor& input,
                            const Eigen::MatrixXd& kernel, const ConvSpec& spec);

struct MaxPoolResult {
    Tensor output;
    std::vector<std::int64_t> argmax; // flat input index feeding each output cell
};

/// Ties route to the first (row-major) maximum in the window.
MaxPoolResult maxpool2d_forward(const Tensor& input, int extent, int stride);
Tensor maxpool2d_backward(const Tensor& upstream, const std::vector<std::int64_t>& argmax,
                          const std::vector<std::int64_t>& input_shape);

/// Per-channel spatial mean: (H, W, C) -> (C).
Tensor global_average_pool(const Tensor& input);
Tensor global_average_pool_backward(const Tensor& upstream,
                                    const std::vector<std::int64_t>& input_shape);

Tensor dense_forward(const Tensor& input, const Eigen::MatrixXd& weights,
                     const Eigen::VectorXd& bias);

struct DenseGrads {
    Tensor input_grad;
    Eigen::MatrixXd weight_grad;
    Eigen::VectorXd bias_grad;
};

DenseGrads dense_backward(const Tensor& upstream, const Tensor& input,
                          const Eigen::MatrixXd& weights);

Tensor relu_forward(const Tensor& input);
/// Subgradient at exactly zero is zero.
Tensor relu_backward(const Tensor& upstream, const Tensor& input);

// ---------------------------------------------------------------------------
// Layer objects: stateful forward/backward pairs for network composition.
// ---------------------------------------------------------------------------

struct ParamRef {
    double* value;
    double* grad;
    std::int64_t size;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& input) = 0;
    virtual Tensor backward(const Tensor& upstream) = 0;
    virtual std::vector<ParamRef> params() { return {}; }
    virtual std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& input) const = 0;
    virtual nlohmann::json describe() const = 0;
    virtual std::string kind() const = 0;
};

class Conv2dLayer : public Layer {
public:
    Conv2dLayer(int in_channels, const ConvSpec& spec);

    Tensor forward(const Tensor& input) override;
    Tensor backward(const Tensor& upstream) override;
    std::vector<ParamRef> params() override;
    std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& input) const override;
    nlohmann::json describe() const override;
    std::string kind() const override { return "conv2d"; }

    void init_he_uniform(Rng& rng);

    ConvSpec spec;
    int in_channels;
    Eigen::MatrixXd kernel, kernel_grad; // (F*F*Cin) x K
    Eigen::VectorXd bias, bias_grad;     // K

private:
    Tensor cached_input_;
};

class ReluLayer : public Layer {
public:
    Tensor forward(const Tensor& input) override;
    Tensor backward(const Tensor& upstream) override;
    std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& input) const override {
        return input;
    }
    nlohmann::json describe() const override;
    std::string kind() const override { return "relu"; }

private:
    Tensor cached_input_;
};

class MaxPool2dLayer : public Layer {
public:
    MaxPool2dLayer(int extent, int stride);

    Tensor forward(const Tensor& input) override;
    Tensor backward(const Tensor& upstream) override;
    std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& input) const override;
    nlohmann::json describe() const override;
    std::string kind() const override { return "maxpool2d"; }

    int extent, stride;

private:
    std::vector<std::int64_t> argmax_;
    std::vector<std::int64_t> input_shape_;
};

class GlobalAveragePoolLayer : public Layer {
public:
    Tensor forward(const Tensor& input) override;
    Tensor backward(const Tensor& upstream) override;
    std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& input) const override;
    nlohmann::json describe() const override;
    std::string kind() const override { return "global_average_pool"; }

private:
    std::vector<std::int64_t> input_shape_;
};

class DenseLayer : public Layer {
public:
    DenseLayer(int inputs, int outputs);

    Tensor forward(const Tensor& input) override;
    Tensor backward(const Tensor& upstream) override;
    std::vector<ParamRef> params() override;
    std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& input) const override;
    nlohmann::json describe() const override;
    std::string kind() const override { return "dense"; }

    void init_glorot_uniform(Rng& rng);

    Eigen::MatrixXd weights, weight_grad; // out x in
    Eigen::VectorXd bias, bias_grad;

private:
    Tensor cached_input_;
};

/// Flattens any input to rank 1; backward restores the original shape.
class FlattenLayer : public Layer {
public:
    Tensor forward(const Tensor& input) override;
    Tensor backward(const Tensor& upstream) override;
    std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& input) const override;
    nlohmann::json describe() const override;
    std::string kind() const override { return "flatten"; }

private:
    std::vector<std::int64_t> input_shape_;
};

} // namespace shmlab::nn
