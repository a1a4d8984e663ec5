#pragma once

#include "shmlab/layers.hpp"
#include "shmlab/rng.hpp"

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include <vector>

namespace shmlab::nn {

/// One LSTM layer's parameters, shared across time steps.
/// Gate order throughout: candidate a, input i, forget f, output o.
struct LstmParams {
    Eigen::MatrixXd wa, wi, wf, wo; // hidden x input
    Eigen::MatrixXd ua, ui, uf, uo; // hidden x hidden
    Eigen::VectorXd ba, bi, bf, bo; // hidden

    static LstmParams zeros(int input_dim, int hidden);
    void init_glorot_uniform(Rng& rng);

    int hidden() const { return static_cast<int>(wa.rows()); }
    int input_dim() const { return static_cast<int>(wa.cols()); }
};

/// Forward-pass intermediates needed by backpropagation through time.
struct LstmCache {
    Eigen::MatrixXd inputs;                   // T x d
    Eigen::MatrixXd h, c;                     // (T+1) x k, row 0 is the zero state
    Eigen::MatrixXd cand, gate_i, gate_f, gate_o; // T x k activations
};

/// Runs the gate recursions
///   a_t = tanh(W_a x_t + U_a h_{t-1} + b_a)
///   i_t = sigma(...), f_t = sigma(...), o_t = sigma(...)
///   c_t = f_t . c_{t-1} + i_t . a_t,   h_t = o_t . tanh(c_t)
/// from h_0 = c_0 = 0 and returns all hidden states (T x k).
Eigen::MatrixXd lstm_forward(const LstmParams& params, const Eigen::MatrixXd& sequence,
                             LstmCache* cache = nullptr);

struct LstmGrads {
    LstmParams params;        // gradient wrt every parameter
    Eigen::MatrixXd inputs;   // T x d gradient wrt the input sequence
};

/// Exact reverse-mode gradients given dLoss/dh_t for every step (T x k).
LstmGrads lstm_backward(const LstmParams& params, const LstmCache& cache,
                        const Eigen::MatrixXd& upstream_h);

/// Stacked LSTM regressor: hidden sequences feed upward, the top layer's
/// final hidden state passes through a linear readout.
class LstmStack {
public:
    LstmStack(int input_dim, std::vector<int> hidden_sizes, int output_dim);

    void init(Rng& rng);

    Eigen::VectorXd forward(const Eigen::MatrixXd& sequence);
    /// Accumulates parameter gradients; returns the input-sequence gradient.
    Eigen::MatrixXd backward(const Eigen::VectorXd& output_grad);

    std::vector<ParamRef> params();
    void zero_grads();

    nlohmann::json describe() const;

    int input_dim() const { return input_dim_; }
    int output_dim() const { return static_cast<int>(readout_weights.rows()); }
    const std::vector<int>& hidden_sizes() const { return hidden_sizes_; }

    std::vector<LstmParams> layers;
    std::vector<LstmParams> layer_grads;
    Eigen::MatrixXd readout_weights, readout_weight_grad; // out x k_top
    Eigen::VectorXd readout_bias, readout_bias_grad;

private:
    int input_dim_;
    std::vector<int> hidden_sizes_;
    std::vector<LstmCache> caches_;
    int steps_ = 0;
};

} // namespace shmlab::nn
