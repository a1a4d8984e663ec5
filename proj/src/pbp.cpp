#include "shmlab/pbp.hpp"

#include "shmlab/blob_io.hpp"
#include "shmlab/errors.hpp"
#include "shmlab/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

namespace shmlab::pbp {

using nlohmann::json;

namespace {

constexpr double kVarianceFloor = 1e-12;
constexpr double kAlphaCutoff = 30.0; // |m/sqrt(v)| beyond which the rectifier is saturated

double std_normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double std_normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double log_normal_pdf(double y, double mean, double variance) {
    return -0.5 * std::log(2.0 * std::numbers::pi * variance) -
           0.5 * (y - mean) * (y - mean) / variance;
}

/// Derivatives of the rectifier output moments with respect to the input
/// moments, evaluated consistently with relu_moments.
struct ReluPartials {
    double dm_dm, dm_dv, dv_dm, dv_dv;
};

ReluPartials relu_moment_partials(double m, double v) {
    if (v <= 0.0) {
        // deterministic input: plain ReLU derivative, zero at the kink
        return m > 0.0 ? ReluPartials{1.0, 0.0, 0.0, 1.0} : ReluPartials{0.0, 0.0, 0.0, 0.0};
    }
    const double s = std::sqrt(v);
    const double alpha = m / s;
    if (alpha > kAlphaCutoff) {
        return {1.0, 0.0, 0.0, 1.0};
    }
    if (alpha < -kAlphaCutoff) {
        return {0.0, 0.0, 0.0, 0.0};
    }
    const double phi = std_normal_pdf(alpha);
    const double cdf = std_normal_cdf(alpha);
    const double m_out = m * cdf + s * phi;
    return ReluPartials{
        .dm_dm = cdf,
        .dm_dv = phi / (2.0 * s),
        .dv_dm = 2.0 * cdf * (m - m_out) + 2.0 * s * phi,
        .dv_dv = cdf - m_out * phi / s,
    };
}

struct ForwardCache {
    // per layer: biased input moments, pre-activation moments
    std::vector<Eigen::VectorXd> in_mean, in_var;   // with appended (1, 0) entry
    std::vector<Eigen::VectorXd> pre_mean, pre_var; // before the rectifier
    double out_mean = 0.0, out_var = 0.0;
};

void forward_internal(const PbpNetwork& net, const Eigen::VectorXd& x, ForwardCache& cache,
                      std::vector<ActivationMoments>* moments_out) {
    if (x.size() != net.input_dim()) {
        throw ConfigError("pbp input has " + std::to_string(x.size()) + " features, expected " +
                          std::to_string(net.input_dim()));
    }
    const std::size_t n_layers = net.layers.size();
    cache.in_mean.resize(n_layers);
    cache.in_var.resize(n_layers);
    cache.pre_mean.resize(n_layers);
    cache.pre_var.resize(n_layers);
    if (moments_out) {
        moments_out->clear();
        moments_out->reserve(n_layers);
    }

    Eigen::VectorXd mz = x;
    Eigen::VectorXd vz = Eigen::VectorXd::Zero(x.size());
    for (std::size_t l = 0; l < n_layers; ++l) {
        const GaussianLayer& layer = net.layers[l];
        if (mz.size() != layer.fan_in()) {
            throw ConfigError("pbp layer " + std::to_string(l) + " expects " +
                              std::to_string(layer.fan_in()) + " inputs, got " +
                              std::to_string(mz.size()));
        }
        Eigen::VectorXd zb(mz.size() + 1), vb(vz.size() + 1);
        zb << mz, 1.0;
        vb << vz, 0.0;
        cache.in_mean[l] = zb;
        cache.in_var[l] = vb;

        const double inv_n = 1.0 / static_cast<double>(zb.size());
        const double inv_sqrt_n = std::sqrt(inv_n);

        Eigen::VectorXd ma = (layer.mean * zb) * inv_sqrt_n;
        Eigen::VectorXd va =
            (layer.mean.cwiseProduct(layer.mean) * vb +
             layer.variance * (zb.cwiseProduct(zb) + vb)) *
            inv_n;
        cache.pre_mean[l] = ma;
        cache.pre_var[l] = va;

        if (l + 1 < n_layers) {
            mz.resize(ma.size());
            vz.resize(va.size());
            for (Eigen::Index j = 0; j < ma.size(); ++j) {
                const auto [m_post, v_post] = relu_moments(ma(j), va(j));
                mz(j) = m_post;
                vz(j) = v_post;
            }
        } else {
            mz = ma;
            vz = va;
        }
        if (moments_out) {
            moments_out->push_back(ActivationMoments{mz, vz});
        }
    }
    cache.out_mean = mz(0);
    cache.out_var = vz(0);
}

struct BackwardResult {
    std::vector<Eigen::MatrixXd> mean_grad, variance_grad;
    Eigen::VectorXd input_mean_grad;
};

/// Reverse-mode pass seeded with d/d(out_mean), d/d(out_variance).
BackwardResult backward_internal(const PbpNetwork& net, const ForwardCache& cache, double dm_out,
                                 double dv_out, bool want_input_grad) {
    const int n_layers = static_cast<int>(net.layers.size());
    BackwardResult result;
    result.mean_grad.resize(static_cast<std::size_t>(n_layers));
    result.variance_grad.resize(static_cast<std::size_t>(n_layers));

    Eigen::VectorXd dma = Eigen::VectorXd::Constant(1, dm_out);
    Eigen::VectorXd dva = Eigen::VectorXd::Constant(1, dv_out);

    for (int l = n_layers - 1; l >= 0; --l) {
        const GaussianLayer& layer = net.layers[static_cast<std::size_t>(l)];
        const Eigen::VectorXd& zb = cache.in_mean[static_cast<std::size_t>(l)];
        const Eigen::VectorXd& vb = cache.in_var[static_cast<std::size_t>(l)];
        const double inv_n = 1.0 / static_cast<double>(zb.size());
        const double inv_sqrt_n = std::sqrt(inv_n);

        // m_a = M zb / sqrt(n);  v_a = ((M.M) vb + V (zb.zb + vb)) / n
        Eigen::MatrixXd& dmean = result.mean_grad[static_cast<std::size_t>(l)];
        Eigen::MatrixXd& dvar = result.variance_grad[static_cast<std::size_t>(l)];
        dmean.noalias() = inv_sqrt_n * dma * zb.transpose();
        dmean.noalias() += (2.0 * inv_n) * (dva * vb.transpose()).cwiseProduct(layer.mean);
        dvar.noalias() = inv_n * dva * (zb.cwiseProduct(zb) + vb).transpose();

        const bool need_upstream = l > 0 || want_input_grad;
        if (!need_upstream) {
            continue;
        }
        Eigen::VectorXd dzb = inv_sqrt_n * (layer.mean.transpose() * dma);
        dzb.noalias() +=
            (2.0 * inv_n) * (layer.variance.transpose() * dva).cwiseProduct(zb);
        if (l == 0) {
            if (want_input_grad) {
                result.input_mean_grad = dzb.head(zb.size() - 1);
            }
            break;
        }
        Eigen::VectorXd dvb =
            inv_n * (layer.mean.cwiseProduct(layer.mean).transpose() * dva +
                     layer.variance.transpose() * dva);

        // strip the bias entry, then pull back through the rectifier
        const Eigen::VectorXd& pre_mean = cache.pre_mean[static_cast<std::size_t>(l - 1)];
        const Eigen::VectorXd& pre_var = cache.pre_var[static_cast<std::size_t>(l - 1)];
        const Eigen::Index width = pre_mean.size();
        Eigen::VectorXd next_dma(width), next_dva(width);
        for (Eigen::Index j = 0; j < width; ++j) {
            const ReluPartials p = relu_moment_partials(pre_mean(j), pre_var(j));
            next_dma(j) = dzb(j) * p.dm_dm + dvb(j) * p.dv_dm;
            next_dva(j) = dzb(j) * p.dm_dv + dvb(j) * p.dv_dv;
        }
        dma = std::move(next_dma);
        dva = std::move(next_dva);
    }
    return result;
}

bool all_finite(const Eigen::MatrixXd& m) {
    return m.allFinite();
}

/// Moment-matched Gamma(alpha, beta) update given the three normalizers
/// logZ(alpha, beta), logZ(alpha+1, beta), logZ(alpha+2, beta).
bool gamma_moment_match(GammaPosterior& g, double log_z0, double log_z1, double log_z2) {
    const double alpha = g.alpha, beta = g.beta;
    const double new_alpha =
        1.0 / (std::exp(log_z2 - 2.0 * log_z1 + log_z0) * (alpha + 1.0) / alpha - 1.0);
    const double new_beta = 1.0 / (std::exp(log_z2 - log_z1) * (alpha + 1.0) / beta -
                                   std::exp(log_z1 - log_z0) * alpha / beta);
    if (!std::isfinite(new_alpha) || !std::isfinite(new_beta) || new_alpha <= 0.0 ||
        new_beta <= 0.0) {
        return false;
    }
    g.alpha = new_alpha;
    g.beta = new_beta;
    return true;
}

} // namespace

void GaussianLayer::validate(bool strictly_positive) const {
    if (mean.rows() != variance.rows() || mean.cols() != variance.cols()) {
        throw ConfigError("GaussianLayer mean/variance shapes differ");
    }
    const double floor = strictly_positive ? 0.0 : -0.0;
    for (Eigen::Index i = 0; i < variance.size(); ++i) {
        const double v = variance.data()[i];
        if (!std::isfinite(v) || (strictly_positive ? !(v > floor) : v < 0.0)) {
            throw NumericError("GaussianLayer variance out of range");
        }
    }
    if (!mean.allFinite()) {
        throw NumericError("GaussianLayer mean not finite");
    }
}

PbpNetwork PbpNetwork::make(const std::vector<int>& sizes, std::uint64_t seed) {
    if (sizes.size() < 2) {
        throw ConfigError("PbpNetwork needs at least input and output sizes");
    }
    if (sizes.back() != 1) {
        throw ConfigError("PbpNetwork output layer must be scalar");
    }
    PbpNetwork net;
    Rng rng(seed);
    const double init_variance = net.lambda.expected_variance(); // 1/E[lambda]
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        if (sizes[l] < 1 || sizes[l + 1] < 1) {
            throw ConfigError("PbpNetwork layer sizes must be positive");
        }
        GaussianLayer layer;
        const int rows = sizes[l + 1];
        const int cols = sizes[l] + 1;
        layer.mean.resize(rows, cols);
        // Hidden means are drawn at the prior scale so the mean channel
        // carries O(1) signal regardless of fan-in; the narrow output-layer
        // init keeps the propagated hidden variance from swamping the
        // residual early in training.
        const bool is_output = (l + 2 == sizes.size());
        const double stddev = is_output ? 1.0 / std::sqrt(static_cast<double>(cols)) : 1.0;
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                layer.mean(r, c) = rng.normal(0.0, stddev);
            }
        }
        layer.variance = Eigen::MatrixXd::Constant(rows, cols, init_variance);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

void PbpNetwork::validate() const {
    if (layers.empty()) {
        throw ConfigError("PbpNetwork has no layers");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].validate();
        if (l > 0 && layers[l].fan_in() != layers[l - 1].fan_out()) {
            throw ConfigError("PbpNetwork layer shapes do not chain at layer " + std::to_string(l));
        }
    }
    if (!(gamma.alpha > 0.0) || !(gamma.beta > 0.0) || !(lambda.alpha > 0.0) ||
        !(lambda.beta > 0.0)) {
        throw ConfigError("Gamma posterior parameters must be positive");
    }
}

std::pair<double, double> relu_moments(double m, double v) {
    if (v < 0.0) {
        throw NumericError("relu_moments: negative variance " + std::to_string(v));
    }
    if (v == 0.0) {
        return {m > 0.0 ? m : 0.0, 0.0};
    }
    const double s = std::sqrt(v);
    const double alpha = m / s;
    if (alpha > kAlphaCutoff) {
        return {m, v};
    }
    if (alpha < -kAlphaCutoff) {
        return {0.0, 0.0};
    }
    const double phi = std_normal_pdf(alpha);
    const double cdf = std_normal_cdf(alpha);
    const double mean = m * cdf + s * phi;
    const double second_moment = (m * m + v) * cdf + m * s * phi;
    const double variance = std::max(0.0, second_moment - mean * mean);
    return {mean, variance};
}

std::vector<ActivationMoments> forward_moments(const PbpNetwork& net, const Eigen::VectorXd& x) {
    ForwardCache cache;
    std::vector<ActivationMoments> moments;
    forward_internal(net, x, cache, &moments);
    return moments;
}

double log_marginal(double y, double m, double v, double noise_precision) {
    if (v < 0.0 || !(noise_precision > 0.0)) {
        throw NumericError("log_marginal: needs v >= 0 and positive noise precision");
    }
    const double total_variance = v + 1.0 / noise_precision;
    if (!(total_variance > 0.0) || !std::isfinite(total_variance)) {
        throw NumericError("log_marginal: non-positive total variance");
    }
    return log_normal_pdf(y, m, total_variance);
}

LogMarginalGradients log_marginal_gradients(const PbpNetwork& net, const Eigen::VectorXd& x,
                                            double y) {
    ForwardCache cache;
    forward_internal(net, x, cache, nullptr);

    const double noise_variance = net.gamma.expected_variance();
    const double vt = cache.out_var + noise_variance;
    if (!(vt > 0.0)) {
        throw NumericError("non-positive predictive variance in log marginal");
    }
    const double residual = y - cache.out_mean;
    const double dm_out = residual / vt;
    const double dv_out = -0.5 / vt + 0.5 * residual * residual / (vt * vt);

    BackwardResult back = backward_internal(net, cache, dm_out, dv_out, false);
    LogMarginalGradients grads;
    grads.mean_grad = std::move(back.mean_grad);
    grads.variance_grad = std::move(back.variance_grad);
    grads.log_z = log_normal_pdf(y, cache.out_mean, vt);
    grads.output_mean = cache.out_mean;
    grads.output_variance = cache.out_var;
    return grads;
}

namespace {

bool pbp_update_impl(PbpNetwork& net, const Eigen::VectorXd& x, double y, double* log_z_out) {
    LogMarginalGradients grads;
    try {
        grads = log_marginal_gradients(net, x, y);
    } catch (const NumericError&) {
        return false;
    }
    if (!std::isfinite(grads.log_z)) {
        return false;
    }

    // stage the ADF update, committing only if everything stays finite
    std::vector<Eigen::MatrixXd> new_mean(net.layers.size()), new_variance(net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        const auto& dm = grads.mean_grad[l];
        const auto& dv = grads.variance_grad[l];
        if (!all_finite(dm) || !all_finite(dv)) {
            return false;
        }
        new_mean[l] = layer.mean + layer.variance.cwiseProduct(dm);
        new_variance[l] =
            layer.variance - layer.variance.cwiseProduct(layer.variance)
                                 .cwiseProduct(dm.cwiseProduct(dm) - 2.0 * dv);
        if (!all_finite(new_mean[l]) || !all_finite(new_variance[l])) {
            return false;
        }
        new_variance[l] = new_variance[l].cwiseMax(kVarianceFloor);
    }
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        net.layers[l].mean = std::move(new_mean[l]);
        net.layers[l].variance = std::move(new_variance[l]);
    }

    // noise precision: match Gamma moments through the three normalizers
    const double m = grads.output_mean, v = grads.output_variance;
    const auto& g = net.gamma;
    const double z0 = log_normal_pdf(y, m, v + g.beta / g.alpha);
    const double z1 = log_normal_pdf(y, m, v + g.beta / (g.alpha + 1.0));
    const double z2 = log_normal_pdf(y, m, v + g.beta / (g.alpha + 2.0));
    gamma_moment_match(net.gamma, z0, z1, z2);

    if (log_z_out) {
        *log_z_out = grads.log_z;
    }
    return true;
}

} // namespace

bool pbp_update(PbpNetwork& net, const Eigen::VectorXd& x, double y) {
    return pbp_update_impl(net, x, y, nullptr);
}

void refine_prior(PbpNetwork& net) {
    // The N(w | 0, 1/lambda) factors are folded into the weight marginals
    // once, at initialization (variances start at 1/E[lambda]); this pass
    // only refreshes the Gamma posterior on lambda by moment matching.
    // Re-incorporating the factors into the weights every epoch overcounts
    // the prior and collapses wide networks toward zero.
    for (const auto& layer : net.layers) {
        for (Eigen::Index i = 0; i < layer.mean.size(); ++i) {
            const double m = layer.mean.data()[i];
            const double v = layer.variance.data()[i];
            const auto& lam = net.lambda;
            const double z0 = log_normal_pdf(m, 0.0, v + lam.beta / lam.alpha);
            const double z1 = log_normal_pdf(m, 0.0, v + lam.beta / (lam.alpha + 1.0));
            const double z2 = log_normal_pdf(m, 0.0, v + lam.beta / (lam.alpha + 2.0));
            gamma_moment_match(net.lambda, z0, z1, z2);
        }
    }
}

FitTrace fit(PbpNetwork& net, const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
             int epochs, std::uint64_t seed) {
    if (features.rows() != targets.size()) {
        throw ConfigError("fit: feature/target row counts differ");
    }
    if (features.rows() == 0) {
        throw ConfigError("fit: empty training set");
    }
    if (epochs < 0) {
        throw ConfigError("fit: negative epoch count");
    }

    FitTrace trace;
    Rng rng(seed);
    std::vector<std::int64_t> order(static_cast<std::size_t>(features.rows()));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        double log_z_sum = 0.0;
        std::int64_t accepted = 0;
        for (std::int64_t idx : order) {
            double log_z = 0.0;
            if (pbp_update_impl(net, features.row(idx).transpose(), targets(idx), &log_z)) {
                log_z_sum += log_z;
                ++accepted;
            } else {
                ++trace.rejected_updates;
            }
        }
        refine_prior(net);
        trace.mean_log_z.push_back(accepted > 0 ? log_z_sum / static_cast<double>(accepted)
                                                : -std::numeric_limits<double>::infinity());
    }
    return trace;
}

PredictiveDistribution predict(const PbpNetwork& net, const Eigen::VectorXd& x) {
    ForwardCache cache;
    forward_internal(net, x, cache, nullptr);
    return PredictiveDistribution{
        .mean = cache.out_mean,
        .variance = cache.out_var + net.gamma.expected_variance(),
    };
}

namespace {

// log-magnitude stage followed by per-sample centering/scaling
Eigen::VectorXd per_sample_stage(const Eigen::VectorXd& raw, double log_floor,
                                 bool per_sample_normalize) {
    Eigen::VectorXd w = raw;
    if (log_floor > 0.0) {
        w = w.unaryExpr([log_floor](double v) { return std::log10(std::abs(v) + log_floor); });
    }
    if (per_sample_normalize) {
        const double mean = w.mean();
        const double sd = std::sqrt((w.array() - mean).square().mean());
        if (!(sd > 0.0)) {
            throw NumericError("constant sample; cannot per-sample normalize");
        }
        w = (w.array() - mean) / sd;
    }
    return w;
}

} // namespace

Standardizer Standardizer::fit_features(const Eigen::MatrixXd& raw_features, double log_floor,
                                        bool per_sample_normalize) {
    if (raw_features.rows() < 2) {
        throw ConfigError("standardizer needs at least 2 rows");
    }
    Standardizer s;
    s.log_floor = log_floor;
    s.per_sample_normalize = per_sample_normalize;

    Eigen::MatrixXd staged(raw_features.rows(), raw_features.cols());
    for (Eigen::Index i = 0; i < raw_features.rows(); ++i) {
        staged.row(i) =
            per_sample_stage(raw_features.row(i).transpose(), log_floor, per_sample_normalize)
                .transpose();
    }
    s.feature_mean = staged.colwise().mean();
    s.feature_scale.resize(staged.cols());
    for (Eigen::Index j = 0; j < staged.cols(); ++j) {
        const double var = (staged.col(j).array() - s.feature_mean(j)).square().mean();
        const double sd = std::sqrt(var);
        s.feature_scale(j) = sd > 1e-12 ? 1.0 / sd : 0.0;
    }
    return s;
}

Eigen::VectorXd Standardizer::transform(const Eigen::VectorXd& raw) const {
    if (raw.size() != feature_mean.size()) {
        throw ConfigError("standardizer input width mismatch");
    }
    const Eigen::VectorXd staged = per_sample_stage(raw, log_floor, per_sample_normalize);
    return (staged - feature_mean).cwiseProduct(feature_scale);
}

Eigen::VectorXd Standardizer::gradient_to_raw(const Eigen::VectorXd& raw,
                                              const Eigen::VectorXd& transformed_grad) const {
    // z_j = (w~_j - mu_j) s_j with w~ the per-sample stage of w = log10(|x|+c)
    Eigen::VectorXd g = transformed_grad.cwiseProduct(feature_scale); // d/dw~
    if (per_sample_normalize) {
        Eigen::VectorXd w = raw;
        if (log_floor > 0.0) {
            w = w.unaryExpr([this](double v) { return std::log10(std::abs(v) + log_floor); });
        }
        const double n = static_cast<double>(w.size());
        const double mean = w.mean();
        const double sd = std::sqrt((w.array() - mean).square().mean());
        const Eigen::VectorXd centered = (w.array() - mean).matrix() / sd;
        // d w~_j / d w_i = ((delta_ij - 1/n) - w~_j w~_i / n) / sd
        const double g_mean = g.mean();
        const double g_dot = g.dot(centered) / n;
        g = ((g.array() - g_mean) - g_dot * centered.array()).matrix() / sd;
    }
    if (log_floor > 0.0) {
        constexpr double kLn10 = 2.302585092994045684;
        for (Eigen::Index i = 0; i < g.size(); ++i) {
            const double sign = raw(i) < 0.0 ? -1.0 : 1.0;
            g(i) *= sign / ((std::abs(raw(i)) + log_floor) * kLn10);
        }
    }
    return g;
}

PredictiveDistribution PbpModel::predict_raw(const Eigen::VectorXd& raw_features) const {
    const PredictiveDistribution p = predict(net, scaler.transform(raw_features));
    const double ts = scaler.target_scale;
    return PredictiveDistribution{.mean = scaler.unscale_target(p.mean),
                                  .variance = p.variance / (ts * ts)};
}

Eigen::VectorXd PbpModel::input_gradient(const Eigen::VectorXd& raw_features) const {
    ForwardCache cache;
    forward_internal(net, scaler.transform(raw_features), cache, nullptr);
    const BackwardResult back = backward_internal(net, cache, 1.0, 0.0, true);
    return scaler.gradient_to_raw(raw_features, back.input_mean_grad) / scaler.target_scale;
}

void save_pbp_model(const PbpModel& model, const std::filesystem::path& stem, json header) {
    std::vector<int> sizes{model.net.input_dim()};
    for (const auto& layer : model.net.layers) {
        sizes.push_back(layer.fan_out());
    }
    header["format_version"] = 1;
    header["kind"] = "pbp";
    header["layer_sizes"] = sizes;
    header["gamma"] = {{"alpha", model.net.gamma.alpha}, {"beta", model.net.gamma.beta}};
    header["lambda"] = {{"alpha", model.net.lambda.alpha}, {"beta", model.net.lambda.beta}};
    header["target_scale"] = model.scaler.target_scale;
    header["target_offset"] = model.scaler.target_offset;
    header["log_floor"] = model.scaler.log_floor;
    header["per_sample_normalize"] = model.scaler.per_sample_normalize;
    header["blob_layout"] = "per layer: mean then variance, column-major; then feature mean, feature scale";

    std::vector<double> blob;
    for (const auto& layer : model.net.layers) {
        blob.insert(blob.end(), layer.mean.data(), layer.mean.data() + layer.mean.size());
        blob.insert(blob.end(), layer.variance.data(),
                    layer.variance.data() + layer.variance.size());
    }
    blob.insert(blob.end(), model.scaler.feature_mean.data(),
                model.scaler.feature_mean.data() + model.scaler.feature_mean.size());
    blob.insert(blob.end(), model.scaler.feature_scale.data(),
                model.scaler.feature_scale.data() + model.scaler.feature_scale.size());

    std::filesystem::create_directories(stem.parent_path());
    std::ofstream out(stem.string() + ".json");
    if (!out) {
        throw IoError("cannot write checkpoint header " + stem.string() + ".json");
    }
    out << header.dump(2) << "\n";
    write_f64_blob(stem.string() + ".f64", blob.data(), blob.size());
}

LoadedPbpModel load_pbp_model(const std::filesystem::path& stem) {
    std::ifstream in(stem.string() + ".json");
    if (!in) {
        throw IoError("missing checkpoint " + stem.string() + ".json");
    }
    LoadedPbpModel loaded;
    try {
        in >> loaded.header;
    } catch (const json::exception& e) {
        throw IoError("malformed checkpoint header: " + std::string(e.what()));
    }
    const auto sizes = loaded.header.at("layer_sizes").get<std::vector<int>>();
    if (sizes.size() < 2) {
        throw IoError("pbp checkpoint has no layers");
    }

    PbpModel& model = loaded.model;
    model.net.gamma.alpha = loaded.header.at("gamma").at("alpha").get<double>();
    model.net.gamma.beta = loaded.header.at("gamma").at("beta").get<double>();
    model.net.lambda.alpha = loaded.header.at("lambda").at("alpha").get<double>();
    model.net.lambda.beta = loaded.header.at("lambda").at("beta").get<double>();
    model.scaler.target_scale = loaded.header.at("target_scale").get<double>();
    model.scaler.target_offset = loaded.header.at("target_offset").get<double>();
    model.scaler.log_floor = loaded.header.at("log_floor").get<double>();
    model.scaler.per_sample_normalize = loaded.header.at("per_sample_normalize").get<bool>();

    const std::vector<double> blob = read_f64_blob(stem.string() + ".f64");
    std::size_t offset = 0;
    auto take = [&blob, &offset, &stem](double* dst, std::size_t n) {
        if (offset + n > blob.size()) {
            throw IoError("pbp checkpoint blob too short: " + stem.string());
        }
        std::copy(blob.begin() + static_cast<std::ptrdiff_t>(offset),
                  blob.begin() + static_cast<std::ptrdiff_t>(offset + n), dst);
        offset += n;
    };
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        GaussianLayer layer;
        layer.mean.resize(sizes[l + 1], sizes[l] + 1);
        layer.variance.resize(sizes[l + 1], sizes[l] + 1);
        take(layer.mean.data(), static_cast<std::size_t>(layer.mean.size()));
        take(layer.variance.data(), static_cast<std::size_t>(layer.variance.size()));
        model.net.layers.push_back(std::move(layer));
    }
    model.scaler.feature_mean.resize(sizes.front());
    model.scaler.feature_scale.resize(sizes.front());
    take(model.scaler.feature_mean.data(), static_cast<std::size_t>(sizes.front()));
    take(model.scaler.feature_scale.data(), static_cast<std::size_t>(sizes.front()));
    if (offset != blob.size()) {
        throw IoError("pbp checkpoint blob has trailing data: " + stem.string());
    }
    model.net.validate();
    return loaded;
}

} // namespace shmlab::pbp
