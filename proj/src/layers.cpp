#include "shmlab/layers.hpp"

#include "shmlab/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>

namespace shmlab::nn {

using nlohmann::json;

void ConvSpec::validate() const {
    if (filters < 1 || extent < 1 || stride < 1 || padding < 0) {
        throw ConfigError("conv spec requires filters >= 1, extent >= 1, stride >= 1, padding >= 0");
    }
}

int conv_output_dim(int input, int extent, int stride, int padding, const std::string& axis) {
    const int span = input - extent + 2 * padding;
    if (span < 0 || span % stride != 0) {
        throw ConfigError("conv output along " + axis + " is not integral: (" +
                          std::to_string(input) + " - " + std::to_string(extent) + " + 2*" +
                          std::to_string(padding) + ") / " + std::to_string(stride));
    }
    return span / stride + 1;
}

int pool_output_dim(int input, int extent, int stride, const std::string& axis) {
    const int span = input - extent;
    if (span < 0 || span % stride != 0) {
        throw ConfigError("pool output along " + axis + " is not integral: (" +
                          std::to_string(input) + " - " + std::to_string(extent) + ") / " +
                          std::to_string(stride));
    }
    return span / stride + 1;
}

namespace {

void require_rank3(const Tensor& t, const char* what) {
    if (t.rank() != 3) {
        throw ConfigError(std::string(what) + " expects an (H, W, C) tensor, got " +
                          shape_string(t.shape));
    }
}

// Gathers padded patches: rows index output positions (row-major), columns
// index (fi, fj, c) within the receptive field.
Eigen::MatrixXd im2col(const Tensor& input, int extent, int stride, int padding, int out_h,
                       int out_w) {
    const std::int64_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
    Eigen::MatrixXd patches(static_cast<std::int64_t>(out_h) * out_w,
                            static_cast<std::int64_t>(extent) * extent * c);
    patches.setZero();
    for (int oi = 0; oi < out_h; ++oi) {
        for (int oj = 0; oj < out_w; ++oj) {
            const std::int64_t row = static_cast<std::int64_t>(oi) * out_w + oj;
            for (int fi = 0; fi < extent; ++fi) {
                const std::int64_t ii = static_cast<std::int64_t>(oi) * stride + fi - padding;
                if (ii < 0 || ii >= h) {
                    continue;
                }
                for (int fj = 0; fj < extent; ++fj) {
                    const std::int64_t jj = static_cast<std::int64_t>(oj) * stride + fj - padding;
                    if (jj < 0 || jj >= w) {
                        continue;
                    }
                    const double* src = input.data.data() + (ii * w + jj) * c;
                    for (std::int64_t ch = 0; ch < c; ++ch) {
                        patches(row, (static_cast<std::int64_t>(fi) * extent + fj) * c + ch) =
                            src[ch];
                    }
                }
            }
        }
    }
    return patches;
}

} // namespace

Tensor conv2d_forward(const Tensor& input, const Eigen::MatrixXd& kernel,
                      const Eigen::VectorXd& bias, const ConvSpec& spec) {
    spec.validate();
    require_rank3(input, "conv2d");
    const std::int64_t c = input.dim(2);
    if (kernel.rows() != static_cast<std::int64_t>(spec.extent) * spec.extent * c ||
        kernel.cols() != spec.filters || bias.size() != spec.filters) {
        throw ConfigError("conv2d kernel/bias shapes disagree with spec");
    }
    const int out_h = conv_output_dim(static_cast<int>(input.dim(0)), spec.extent, spec.stride,
                                      spec.padding, "height");
    const int out_w = conv_output_dim(static_cast<int>(input.dim(1)), spec.extent, spec.stride,
                                      spec.padding, "width");

    const Eigen::MatrixXd patches = im2col(input, spec.extent, spec.stride, spec.padding, out_h, out_w);
    Eigen::MatrixXd out = patches * kernel; // (positions) x K
    out.rowwise() += bias.transpose();

    Tensor result({out_h, out_w, spec.filters});
    // positions are row-major over (oi, oj), so the GEMM output maps straight
    // onto the (H, W, C) layout.
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        result.data.data(), out.rows(), out.cols()) = out;
    return result;
}

Conv2dGrads conv2d_backward(const Tensor& upstream, const Tensor& input,
                            const Eigen::MatrixXd& kernel, const ConvSpec& spec) {
    spec.validate();
    require_rank3(input, "conv2d backward");
    require_rank3(upstream, "conv2d backward");
    const std::int64_t c = input.dim(2);
    const int out_h = conv_output_dim(static_cast<int>(input.dim(0)), spec.extent, spec.stride,
                                      spec.padding, "height");
    const int out_w = conv_output_dim(static_cast<int>(input.dim(1)), spec.extent, spec.stride,
                                      spec.padding, "width");
    if (upstream.dim(0) != out_h || upstream.dim(1) != out_w || upstream.dim(2) != spec.filters) {
        throw ConfigError("conv2d upstream gradient has shape " + shape_string(upstream.shape) +
                          ", expected (" + std::to_string(out_h) + ", " + std::to_string(out_w) +
                          ", " + std::to_string(spec.filters) + ")");
    }

    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        upstream_mat(upstream.data.data(), static_cast<std::int64_t>(out_h) * out_w, spec.filters);

    const Eigen::MatrixXd patches = im2col(input, spec.extent, spec.stride, spec.padding, out_h, out_w);

    Conv2dGrads grads;
    grads.kernel_grad.noalias() = patches.transpose() * upstream_mat;
    grads.bias_grad = upstream_mat.colwise().sum().transpose();

    // dPatches = dOut * K^T, then scatter-add back through the im2col map.
    const Eigen::MatrixXd dpatches = upstream_mat * kernel.transpose();
    grads.input_grad = Tensor(input.shape);
    const std::int64_t h = input.dim(0), w = input.dim(1);
    for (int oi = 0; oi < out_h; ++oi) {
        for (int oj = 0; oj < out_w; ++oj) {
            const std::int64_t row = static_cast<std::int64_t>(oi) * out_w + oj;
            for (int fi = 0; fi < spec.extent; ++fi) {
                const std::int64_t ii = static_cast<std::int64_t>(oi) * spec.stride + fi - spec.padding;
                if (ii < 0 || ii >= h) {
                    continue;
                }
                for (int fj = 0; fj < spec.extent; ++fj) {
                    const std::int64_t jj =
                        static_cast<std::int64_t>(oj) * spec.stride + fj - spec.padding;
                    if (jj < 0 || jj >= w) {
                        continue;
                    }
                    double* dst = grads.input_grad.data.data() + (ii * w + jj) * c;
                    for (std::int64_t ch = 0; ch < c; ++ch) {
                        dst[ch] += dpatches(row, (static_cast<std::int64_t>(fi) * spec.extent + fj) * c + ch);
                    }
                }
            }
        }
    }
    return grads;
}

MaxPoolResult maxpool2d_forward(const Tensor& input, int extent, int stride) {
    require_rank3(input, "maxpool2d");
    if (extent < 1 || stride < 1) {
        throw ConfigError("maxpool2d requires extent >= 1 and stride >= 1");
    }
    const int out_h = pool_output_dim(static_cast<int>(input.dim(0)), extent, stride, "height");
    const int out_w = pool_output_dim(static_cast<int>(input.dim(1)), extent, stride, "width");
    const std::int64_t w = input.dim(1), c = input.dim(2);

    MaxPoolResult result{Tensor({out_h, out_w, c}), {}};
    result.argmax.resize(result.output.data.size());
    for (int oi = 0; oi < out_h; ++oi) {
        for (int oj = 0; oj < out_w; ++oj) {
            for (std::int64_t ch = 0; ch < c; ++ch) {
                double best = -std::numeric_limits<double>::infinity();
                std::int64_t best_index = -1;
                for (int fi = 0; fi < extent; ++fi) {
                    for (int fj = 0; fj < extent; ++fj) {
                        const std::int64_t ii = static_cast<std::int64_t>(oi) * stride + fi;
                        const std::int64_t jj = static_cast<std::int64_t>(oj) * stride + fj;
                        const std::int64_t flat = (ii * w + jj) * c + ch;
                        if (input.data[static_cast<std::size_t>(flat)] > best) {
                            best = input.data[static_cast<std::size_t>(flat)];
                            best_index = flat;
                        }
                    }
                }
                const std::int64_t out_flat = (static_cast<std::int64_t>(oi) * out_w + oj) * c + ch;
                result.output.data[static_cast<std::size_t>(out_flat)] = best;
                result.argmax[static_cast<std::size_t>(out_flat)] = best_index;
            }
        }
    }
    return result;
}

Tensor maxpool2d_backward(const Tensor& upstream, const std::vector<std::int64_t>& argmax,
                          const std::vector<std::int64_t>& input_shape) {
    if (upstream.data.size() != argmax.size()) {
        throw ConfigError("maxpool2d backward: upstream size does not match argmax cache");
    }
    Tensor grad(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        grad.data[static_cast<std::size_t>(argmax[i])] += upstream.data[i];
    }
    return grad;
}

Tensor global_average_pool(const Tensor& input) {
    require_rank3(input, "global_average_pool");
    const std::int64_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
    Tensor out({c});
    for (std::int64_t i = 0; i < h * w; ++i) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            out.data[static_cast<std::size_t>(ch)] += input.data[static_cast<std::size_t>(i * c + ch)];
        }
    }
    const double inv = 1.0 / static_cast<double>(h * w);
    for (double& v : out.data) {
        v *= inv;
    }
    return out;
}

Tensor global_average_pool_backward(const Tensor& upstream,
                                    const std::vector<std::int64_t>& input_shape) {
    if (input_shape.size() != 3 || upstream.numel() != input_shape[2]) {
        throw ConfigError("global_average_pool backward shape mismatch");
    }
    Tensor grad(input_shape);
    const double inv = 1.0 / static_cast<double>(input_shape[0] * input_shape[1]);
    const std::int64_t c = input_shape[2];
    for (std::int64_t i = 0; i < input_shape[0] * input_shape[1]; ++i) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            grad.data[static_cast<std::size_t>(i * c + ch)] =
                upstream.data[static_cast<std::size_t>(ch)] * inv;
        }
    }
    return grad;
}

Tensor dense_forward(const Tensor& input, const Eigen::MatrixXd& weights,
                     const Eigen::VectorXd& bias) {
    if (input.rank() != 1 || input.numel() != weights.cols() || bias.size() != weights.rows()) {
        throw ConfigError("dense shape mismatch: input " + shape_string(input.shape) +
                          " vs weights " + std::to_string(weights.rows()) + "x" +
                          std::to_string(weights.cols()));
    }
    const Eigen::Map<const Eigen::VectorXd> x(input.data.data(), input.numel());
    Tensor out({weights.rows()});
    Eigen::Map<Eigen::VectorXd>(out.data.data(), out.numel()) = weights * x + bias;
    return out;
}

DenseGrads dense_backward(const Tensor& upstream, const Tensor& input,
                          const Eigen::MatrixXd& weights) {
    if (upstream.numel() != weights.rows() || input.numel() != weights.cols()) {
        throw ConfigError("dense backward shape mismatch");
    }
    const Eigen::Map<const Eigen::VectorXd> dy(upstream.data.data(), upstream.numel());
    const Eigen::Map<const Eigen::VectorXd> x(input.data.data(), input.numel());

    DenseGrads grads;
    grads.weight_grad.noalias() = dy * x.transpose();
    grads.bias_grad = dy;
    grads.input_grad = Tensor(input.shape);
    Eigen::Map<Eigen::VectorXd>(grads.input_grad.data.data(), input.numel()).noalias() =
        weights.transpose() * dy;
    return grads;
}

Tensor relu_forward(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.data) {
        v = v > 0.0 ? v : 0.0;
    }
    return out;
}

Tensor relu_backward(const Tensor& upstream, const Tensor& input) {
    if (!upstream.same_shape(input)) {
        throw ConfigError("relu backward shape mismatch");
    }
    Tensor grad = upstream;
    for (std::size_t i = 0; i < grad.data.size(); ++i) {
        if (!(input.data[i] > 0.0)) {
            grad.data[i] = 0.0;
        }
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Layer objects
// ---------------------------------------------------------------------------

Conv2dLayer::Conv2dLayer(int in_channels_, const ConvSpec& spec_) : spec(spec_), in_channels(in_channels_) {
    spec.validate();
    if (in_channels < 1) {
        throw ConfigError("conv2d needs at least one input channel");
    }
    const std::int64_t rows = static_cast<std::int64_t>(spec.extent) * spec.extent * in_channels;
    kernel = Eigen::MatrixXd::Zero(rows, spec.filters);
    kernel_grad = Eigen::MatrixXd::Zero(rows, spec.filters);
    bias = Eigen::VectorXd::Zero(spec.filters);
    bias_grad = Eigen::VectorXd::Zero(spec.filters);
}

void Conv2dLayer::init_he_uniform(Rng& rng) {
    const double fan_in = static_cast<double>(kernel.rows());
    const double limit = std::sqrt(6.0 / fan_in);
    for (std::int64_t i = 0; i < kernel.size(); ++i) {
        kernel.data()[i] = rng.uniform(-limit, limit);
    }
    bias.setZero();
}

Tensor Conv2dLayer::forward(const Tensor& input) {
    cached_input_ = input;
    return conv2d_forward(input, kernel, bias, spec);
}

Tensor Conv2dLayer::backward(const Tensor& upstream) {
    Conv2dGrads grads = conv2d_backward(upstream, cached_input_, kernel, spec);
    kernel_grad += grads.kernel_grad;
    bias_grad += grads.bias_grad;
    return std::move(grads.input_grad);
}

std::vector<ParamRef> Conv2dLayer::params() {
    return {
        {kernel.data(), kernel_grad.data(), kernel.size()},
        {bias.data(), bias_grad.data(), bias.size()},
    };
}

std::vector<std::int64_t> Conv2dLayer::output_shape(const std::vector<std::int64_t>& input) const {
    if (input.size() != 3 || input[2] != in_channels) {
        throw ConfigError("conv2d expects (H, W, " + std::to_string(in_channels) + "), got " +
                          shape_string(input));
    }
    return {conv_output_dim(static_cast<int>(input[0]), spec.extent, spec.stride, spec.padding, "height"),
            conv_output_dim(static_cast<int>(input[1]), spec.extent, spec.stride, spec.padding, "width"),
            spec.filters};
}

json Conv2dLayer::describe() const {
    return json{{"kind", kind()},         {"in_channels", in_channels}, {"filters", spec.filters},
                {"extent", spec.extent},  {"stride", spec.stride},      {"padding", spec.padding}};
}

Tensor ReluLayer::forward(const Tensor& input) {
    cached_input_ = input;
    return relu_forward(input);
}

Tensor ReluLayer::backward(const Tensor& upstream) {
    return relu_backward(upstream, cached_input_);
}

json ReluLayer::describe() const {
    return json{{"kind", kind()}};
}

MaxPool2dLayer::MaxPool2dLayer(int extent_, int stride_) : extent(extent_), stride(stride_) {
    if (extent < 1 || stride < 1) {
        throw ConfigError("maxpool2d requires extent >= 1 and stride >= 1");
    }
}

Tensor MaxPool2dLayer::forward(const Tensor& input) {
    input_shape_ = input.shape;
    MaxPoolResult result = maxpool2d_forward(input, extent, stride);
    argmax_ = std::move(result.argmax);
    return std::move(result.output);
}

Tensor MaxPool2dLayer::backward(const Tensor& upstream) {
    return maxpool2d_backward(upstream, argmax_, input_shape_);
}

std::vector<std::int64_t> MaxPool2dLayer::output_shape(const std::vector<std::int64_t>& input) const {
    if (input.size() != 3) {
        throw ConfigError("maxpool2d expects (H, W, C), got " + shape_string(input));
    }
    return {pool_output_dim(static_cast<int>(input[0]), extent, stride, "height"),
            pool_output_dim(static_cast<int>(input[1]), extent, stride, "width"), input[2]};
}

json MaxPool2dLayer::describe() const {
    return json{{"kind", kind()}, {"extent", extent}, {"stride", stride}};
}

Tensor GlobalAveragePoolLayer::forward(const Tensor& input) {
    input_shape_ = input.shape;
    return global_average_pool(input);
}

Tensor GlobalAveragePoolLayer::backward(const Tensor& upstream) {
    return global_average_pool_backward(upstream, input_shape_);
}

std::vector<std::int64_t> GlobalAveragePoolLayer::output_shape(
    const std::vector<std::int64_t>& input) const {
    if (input.size() != 3) {
        throw ConfigError("global_average_pool expects (H, W, C), got " + shape_string(input));
    }
    return {input[2]};
}

json GlobalAveragePoolLayer::describe() const {
    return json{{"kind", kind()}};
}

DenseLayer::DenseLayer(int inputs, int outputs) {
    if (inputs < 1 || outputs < 1) {
        throw ConfigError("dense layer needs positive dimensions");
    }
    weights = Eigen::MatrixXd::Zero(outputs, inputs);
    weight_grad = Eigen::MatrixXd::Zero(outputs, inputs);
    bias = Eigen::VectorXd::Zero(outputs);
    bias_grad = Eigen::VectorXd::Zero(outputs);
}

void DenseLayer::init_glorot_uniform(Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(weights.rows() + weights.cols()));
    for (std::int64_t i = 0; i < weights.size(); ++i) {
        weights.data()[i] = rng.uniform(-limit, limit);
    }
    bias.setZero();
}

Tensor DenseLayer::forward(const Tensor& input) {
    cached_input_ = input;
    return dense_forward(input, weights, bias);
}

Tensor DenseLayer::backward(const Tensor& upstream) {
    DenseGrads grads = dense_backward(upstream, cached_input_, weights);
    weight_grad += grads.weight_grad;
    bias_grad += grads.bias_grad;
    return std::move(grads.input_grad);
}

std::vector<ParamRef> DenseLayer::params() {
    return {
        {weights.data(), weight_grad.data(), weights.size()},
        {bias.data(), bias_grad.data(), bias.size()},
    };
}

std::vector<std::int64_t> DenseLayer::output_shape(const std::vector<std::int64_t>& input) const {
    if (shape_numel(input) != weights.cols()) {
        throw ConfigError("dense expects " + std::to_string(weights.cols()) + " inputs, got " +
                          shape_string(input));
    }
    return {weights.rows()};
}

json DenseLayer::describe() const {
    return json{{"kind", kind()}, {"inputs", weights.cols()}, {"outputs", weights.rows()}};
}

Tensor FlattenLayer::forward(const Tensor& input) {
    input_shape_ = input.shape;
    return input.reshaped({input.numel()});
}

Tensor FlattenLayer::backward(const Tensor& upstream) {
    return upstream.reshaped(input_shape_);
}

std::vector<std::int64_t> FlattenLayer::output_shape(const std::vector<std::int64_t>& input) const {
    return {shape_numel(input)};
}

json FlattenLayer::describe() const {
    return json{{"kind", kind()}};
}

} // namespace shmlab::nn
