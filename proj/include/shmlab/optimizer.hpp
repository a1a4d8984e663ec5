#pragma once

#include "shmlab/layers.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace shmlab::nn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Moment accumulators for one parameter tensor.
struct AdamState {
    AdamConfig config;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::int64_t step_count = 0;
};

/// One bias-corrected Adam update. Returns false (and leaves parameters
/// and state untouched) if any gradient is non-finite.
bool adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

/// Drives one AdamState per parameter tensor of a model.
class Adam {
public:
    Adam(std::vector<ParamRef> refs, const AdamConfig& config);

    /// Applies one step across all tensors; false if rejected (non-finite
    /// gradients anywhere, nothing is modified).
    bool step();
    std::int64_t step_count() const { return step_count_; }

private:
    std::vector<ParamRef> refs_;
    std::vector<AdamState> states_;
    std::int64_t step_count_ = 0;
};

struct MseResult {
    double value;
    Eigen::VectorXd grad; // d(mean squared error)/d(pred) = 2 (pred - target) / n
};

MseResult mse_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target);

} // namespace shmlab::nn
