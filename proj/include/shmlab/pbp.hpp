#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace shmlab::pbp {

/// Factorized Gaussian posterior over one layer's weights. Column n_in
/// (the last one) holds the bias. Entry (j, k) is weight k of unit j.
struct GaussianLayer {
    Eigen::MatrixXd mean;     // n_out x (n_in + 1)
    Eigen::MatrixXd variance; // n_out x (n_in + 1)

    int fan_in() const { return static_cast<int>(mean.cols()) - 1; }
    int fan_out() const { return static_cast<int>(mean.rows()); }
    void validate(bool strictly_positive = true) const;
};

/// Gamma(alpha, beta) posterior over a precision.
struct GammaPosterior {
    double alpha = 6.0;
    double beta = 6.0;

    double expectation() const { return alpha / beta; }
    /// Noise/prior variance implied by the expected precision.
    double expected_variance() const { return beta / alpha; }
};

/// Bayesian MLP with per-weight Gaussian posteriors, a Gamma posterior on
/// the observation noise precision (gamma) and on the weight prior
/// precision (lambda). Hidden layers are rectified; the output is linear
/// and scalar.
struct PbpNetwork {
    std::vector<GaussianLayer> layers;
    GammaPosterior gamma;  // noise precision
    GammaPosterior lambda; // weight prior precision

    /// sizes = {inputs, hidden..., 1}. Means ~ N(0, 1/(fan_in+1)),
    /// variances = 1/E[lambda].
    static PbpNetwork make(const std::vector<int>& sizes, std::uint64_t seed);

    int input_dim() const { return layers.front().fan_in(); }
    void validate() const;
};

/// Marginal mean/variance of a layer's post-activation units.
struct ActivationMoments {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
};

/// Mean and variance of max(0, X) for X ~ N(m, v).
std::pair<double, double> relu_moments(double m, double v);

/// Moment propagation through every layer:
///   m_a = M [z; 1] / sqrt(n+1)
///   v_a = ((M.M) [v_z; 0] + V ([z;1].[z;1]) + V [v_z; 0]) / (n+1)
/// with rectifier moment matching between hidden layers. The input is
/// treated as a zero-variance vector. Returns post-activation moments per
/// layer; the last entry is the (linear) network output.
std::vector<ActivationMoments> forward_moments(const PbpNetwork& net, const Eigen::VectorXd& x);

/// log N(y | m, v + 1/noise_precision).
double log_marginal(double y, double m, double v, double noise_precision);

/// d(logZ)/d(mean) and d(logZ)/d(variance) for every weight, computed by
/// reverse-mode differentiation of the moment forward pass.
struct LogMarginalGradients {
    std::vector<Eigen::MatrixXd> mean_grad;
    std::vector<Eigen::MatrixXd> variance_grad;
    double log_z = 0.0;
    double output_mean = 0.0;
    double output_variance = 0.0;
};

LogMarginalGradients log_marginal_gradients(const PbpNetwork& net, const Eigen::VectorXd& x,
                                            double y);

/// One assumed-density-filtering step on a single observation:
///   m <- m + v * dlogZ/dm
///   v <- v - v^2 * ((dlogZ/dm)^2 - 2 dlogZ/dv)
/// followed by a moment-matched Gamma update of the noise precision.
/// Returns false (network untouched) when a non-finite gradient appears.
bool pbp_update(PbpNetwork& net, const Eigen::VectorXd& x, double y);

/// Re-incorporates the N(w | 0, 1/lambda) prior factor into every weight
/// marginal and moment-matches the Gamma posterior on lambda.
void refine_prior(PbpNetwork& net);

struct FitTrace {
    std::vector<double> mean_log_z; // one entry per epoch
    std::int64_t rejected_updates = 0;
};

/// `epochs` shuffled ADF passes (seeded) with a prior refinement after
/// each. Features must already be standardized.
FitTrace fit(PbpNetwork& net, const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
             int epochs, std::uint64_t seed);

struct PredictiveDistribution {
    double mean;
    double variance; // includes the 1/E[gamma] noise term
};

PredictiveDistribution predict(const PbpNetwork& net, const Eigen::VectorXd& x);

/// Input/target transform stored with every checkpoint.
///
/// Features go through an optional per-sample stage -- log10(|x| + floor)
/// followed by centering/scaling against the sample's own mean and spread
/// -- and then a per-feature z-score fitted on the training split. Targets
/// map through y_model = (y - target_offset) * target_scale.
struct Standardizer {
    double log_floor = 0.0;          // 0 disables the log-magnitude stage
    bool per_sample_normalize = false;
    Eigen::VectorXd feature_mean;
    Eigen::VectorXd feature_scale;   // 1/std, zero for constant features
    double target_offset = 0.0;
    double target_scale = 100.0;

    /// Fits the per-feature statistics (after the per-sample stage).
    static Standardizer fit_features(const Eigen::MatrixXd& raw_features, double log_floor,
                                     bool per_sample_normalize);

    Eigen::VectorXd transform(const Eigen::VectorXd& raw) const;
    /// Pulls a gradient w.r.t. the transformed features back to raw ones.
    Eigen::VectorXd gradient_to_raw(const Eigen::VectorXd& raw,
                                    const Eigen::VectorXd& transformed_grad) const;

    double scale_target(double y) const { return (y - target_offset) * target_scale; }
    double unscale_target(double y_model) const { return y_model / target_scale + target_offset; }
};

/// Trained PBP regressor for one output in original units.
struct PbpModel {
    PbpNetwork net;
    Standardizer scaler;

    PredictiveDistribution predict_raw(const Eigen::VectorXd& raw_features) const;
    /// d(predicted mean)/d(raw feature), for saliency reports.
    Eigen::VectorXd input_gradient(const Eigen::VectorXd& raw_features) const;
};

/// JSON header (hyper-posteriors, scaler layout, caller fields) next to a
/// little-endian float64 blob: per layer M then V, then scaler arrays.
void save_pbp_model(const PbpModel& model, const std::filesystem::path& stem,
                    nlohmann::json header);

struct LoadedPbpModel {
    PbpModel model;
    nlohmann::json header;
};

LoadedPbpModel load_pbp_model(const std::filesystem::path& stem);

} // namespace shmlab::pbp
