#include "shmlab/optimizer.hpp"

#include "shmlab/errors.hpp"

#include <cmath>

namespace shmlab::nn {

bool adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
    if (params.size() != grads.size()) {
        throw ConfigError("adam_step: parameter/gradient size mismatch");
    }
    if (state.first_moment.empty()) {
        state.first_moment.assign(params.size(), 0.0);
        state.second_moment.assign(params.size(), 0.0);
    }
    if (state.first_moment.size() != params.size()) {
        throw ConfigError("adam_step: state size does not mirror parameters");
    }
    for (double g : grads) {
        if (!std::isfinite(g)) {
            return false;
        }
    }

    const auto& cfg = state.config;
    const std::int64_t t = state.step_count + 1;
    const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grads[i];
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grads[i] * grads[i];
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
    state.step_count = t;
    return true;
}

Adam::Adam(std::vector<ParamRef> refs, const AdamConfig& config) : refs_(std::move(refs)) {
    states_.resize(refs_.size());
    for (std::size_t i = 0; i < refs_.size(); ++i) {
        states_[i].config = config;
        states_[i].first_moment.assign(static_cast<std::size_t>(refs_[i].size), 0.0);
        states_[i].second_moment.assign(static_cast<std::size_t>(refs_[i].size), 0.0);
    }
}

bool Adam::step() {
    // validate every gradient before touching anything, so a rejected step
    // leaves parameters and moments fully unchanged
    for (const auto& ref : refs_) {
        for (std::int64_t i = 0; i < ref.size; ++i) {
            if (!std::isfinite(ref.grad[i])) {
                return false;
            }
        }
    }
    for (std::size_t r = 0; r < refs_.size(); ++r) {
        auto& ref = refs_[r];
        adam_step(std::span<double>(ref.value, static_cast<std::size_t>(ref.size)),
                  std::span<const double>(ref.grad, static_cast<std::size_t>(ref.size)),
                  states_[r]);
    }
    ++step_count_;
    return true;
}

MseResult mse_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target) {
    if (pred.size() != target.size() || pred.size() == 0) {
        throw ConfigError("mse_loss requires equal, non-empty lengths");
    }
    const Eigen::VectorXd diff = pred - target;
    MseResult result;
    result.value = diff.squaredNorm() / static_cast<double>(pred.size());
    result.grad = 2.0 * diff / static_cast<double>(pred.size());
    return result;
}

} // namespace shmlab::nn
