#include "shmlab/lstm.hpp"

#include "shmlab/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace shmlab::nn {

using nlohmann::json;

namespace {

double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& x) {
    return x.unaryExpr([](double v) { return sigmoid(v); });
}

Eigen::VectorXd tanhv(const Eigen::VectorXd& x) {
    return x.array().tanh().matrix();
}

} // namespace

LstmParams LstmParams::zeros(int input_dim, int hidden) {
    if (input_dim < 1 || hidden < 1) {
        throw ConfigError("lstm layer needs positive dimensions");
    }
    LstmParams p;
    p.wa = p.wi = p.wf = p.wo = Eigen::MatrixXd::Zero(hidden, input_dim);
    p.ua = p.ui = p.uf = p.uo = Eigen::MatrixXd::Zero(hidden, hidden);
    p.ba = p.bi = p.bf = p.bo = Eigen::VectorXd::Zero(hidden);
    return p;
}

void LstmParams::init_glorot_uniform(Rng& rng) {
    auto fill = [&rng](Eigen::MatrixXd& m) {
        const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = rng.uniform(-limit, limit);
        }
    };
    fill(wa);
    fill(wi);
    fill(wf);
    fill(wo);
    fill(ua);
    fill(ui);
    fill(uf);
    fill(uo);
    ba.setZero();
    bi.setZero();
    bf.setZero();
    bo.setZero();
}

Eigen::MatrixXd lstm_forward(const LstmParams& params, const Eigen::MatrixXd& sequence,
                             LstmCache* cache) {
    const int steps = static_cast<int>(sequence.rows());
    const int k = params.hidden();
    if (sequence.cols() != params.input_dim()) {
        throw ConfigError("lstm input width " + std::to_string(sequence.cols()) +
                          " does not match parameter input dim " +
                          std::to_string(params.input_dim()));
    }

    Eigen::MatrixXd h_all(steps, k);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(k);

    if (cache) {
        cache->inputs = sequence;
        cache->h.setZero(steps + 1, k);
        cache->c.setZero(steps + 1, k);
        cache->cand.resize(steps, k);
        cache->gate_i.resize(steps, k);
        cache->gate_f.resize(steps, k);
        cache->gate_o.resize(steps, k);
    }

    for (int t = 0; t < steps; ++t) {
        const Eigen::VectorXd x = sequence.row(t).transpose();
        const Eigen::VectorXd a = tanhv(params.wa * x + params.ua * h + params.ba);
        const Eigen::VectorXd i = sigmoid(params.wi * x + params.ui * h + params.bi);
        const Eigen::VectorXd f = sigmoid(params.wf * x + params.uf * h + params.bf);
        const Eigen::VectorXd o = sigmoid(params.wo * x + params.uo * h + params.bo);
        c = f.cwiseProduct(c) + i.cwiseProduct(a);
        h = o.cwiseProduct(tanhv(c));
        h_all.row(t) = h.transpose();
        if (cache) {
            cache->cand.row(t) = a.transpose();
            cache->gate_i.row(t) = i.transpose();
            cache->gate_f.row(t) = f.transpose();
            cache->gate_o.row(t) = o.transpose();
            cache->c.row(t + 1) = c.transpose();
            cache->h.row(t + 1) = h.transpose();
        }
    }
    return h_all;
}

LstmGrads lstm_backward(const LstmParams& params, const LstmCache& cache,
                        const Eigen::MatrixXd& upstream_h) {
    const int steps = static_cast<int>(cache.inputs.rows());
    const int k = params.hidden();
    if (upstream_h.rows() != steps || upstream_h.cols() != k) {
        throw ConfigError("lstm upstream gradient shape mismatch");
    }

    LstmGrads grads;
    grads.params = LstmParams::zeros(params.input_dim(), k);
    grads.inputs.setZero(steps, params.input_dim());

    Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(k);

    for (int t = steps - 1; t >= 0; --t) {
        const Eigen::VectorXd x = cache.inputs.row(t).transpose();
        const Eigen::VectorXd h_prev = cache.h.row(t).transpose();
        const Eigen::VectorXd c_prev = cache.c.row(t).transpose();
        const Eigen::VectorXd c_t = cache.c.row(t + 1).transpose();
        const Eigen::VectorXd a = cache.cand.row(t).transpose();
        const Eigen::VectorXd i = cache.gate_i.row(t).transpose();
        const Eigen::VectorXd f = cache.gate_f.row(t).transpose();
        const Eigen::VectorXd o = cache.gate_o.row(t).transpose();
        const Eigen::VectorXd tanh_c = tanhv(c_t);

        const Eigen::VectorXd dh = upstream_h.row(t).transpose() + dh_next;
        const Eigen::VectorXd dc =
            dh.cwiseProduct(o).cwiseProduct(Eigen::VectorXd::Ones(k) - tanh_c.cwiseProduct(tanh_c)) +
            dc_next;

        const Eigen::VectorXd do_pre =
            dh.cwiseProduct(tanh_c).cwiseProduct(o).cwiseProduct(Eigen::VectorXd::Ones(k) - o);
        const Eigen::VectorXd df_pre =
            dc.cwiseProduct(c_prev).cwiseProduct(f).cwiseProduct(Eigen::VectorXd::Ones(k) - f);
        const Eigen::VectorXd di_pre =
            dc.cwiseProduct(a).cwiseProduct(i).cwiseProduct(Eigen::VectorXd::Ones(k) - i);
        const Eigen::VectorXd da_pre =
            dc.cwiseProduct(i).cwiseProduct(Eigen::VectorXd::Ones(k) - a.cwiseProduct(a));

        grads.params.wa.noalias() += da_pre * x.transpose();
        grads.params.wi.noalias() += di_pre * x.transpose();
        grads.params.wf.noalias() += df_pre * x.transpose();
        grads.params.wo.noalias() += do_pre * x.transpose();
        grads.params.ua.noalias() += da_pre * h_prev.transpose();
        grads.params.ui.noalias() += di_pre * h_prev.transpose();
        grads.params.uf.noalias() += df_pre * h_prev.transpose();
        grads.params.uo.noalias() += do_pre * h_prev.transpose();
        grads.params.ba += da_pre;
        grads.params.bi += di_pre;
        grads.params.bf += df_pre;
        grads.params.bo += do_pre;

        grads.inputs.row(t) = (params.wa.transpose() * da_pre + params.wi.transpose() * di_pre +
                               params.wf.transpose() * df_pre + params.wo.transpose() * do_pre)
                                  .transpose();
        dh_next = params.ua.transpose() * da_pre + params.ui.transpose() * di_pre +
                  params.uf.transpose() * df_pre + params.uo.transpose() * do_pre;
        dc_next = dc.cwiseProduct(f);
    }
    return grads;
}

LstmStack::LstmStack(int input_dim, std::vector<int> hidden_sizes, int output_dim)
    : input_dim_(input_dim), hidden_sizes_(std::move(hidden_sizes)) {
    if (hidden_sizes_.empty()) {
        throw ConfigError("lstm stack needs at least one layer");
    }
    int d = input_dim_;
    for (int k : hidden_sizes_) {
        layers.push_back(LstmParams::zeros(d, k));
        layer_grads.push_back(LstmParams::zeros(d, k));
        d = k;
    }
    readout_weights = Eigen::MatrixXd::Zero(output_dim, d);
    readout_weight_grad = Eigen::MatrixXd::Zero(output_dim, d);
    readout_bias = Eigen::VectorXd::Zero(output_dim);
    readout_bias_grad = Eigen::VectorXd::Zero(output_dim);
    caches_.resize(layers.size());
}

void LstmStack::init(Rng& rng) {
    for (auto& layer : layers) {
        layer.init_glorot_uniform(rng);
    }
    const double limit =
        std::sqrt(6.0 / static_cast<double>(readout_weights.rows() + readout_weights.cols()));
    for (Eigen::Index i = 0; i < readout_weights.size(); ++i) {
        readout_weights.data()[i] = rng.uniform(-limit, limit);
    }
    readout_bias.setZero();
}

Eigen::VectorXd LstmStack::forward(const Eigen::MatrixXd& sequence) {
    steps_ = static_cast<int>(sequence.rows());
    Eigen::MatrixXd h = sequence;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        h = lstm_forward(layers[l], h, &caches_[l]);
    }
    return readout_weights * h.row(steps_ - 1).transpose() + readout_bias;
}

Eigen::MatrixXd LstmStack::backward(const Eigen::VectorXd& output_grad) {
    if (steps_ == 0) {
        throw ConfigError("lstm backward called before forward");
    }
    const Eigen::VectorXd h_top = caches_.back().h.row(steps_).transpose();
    readout_weight_grad.noalias() += output_grad * h_top.transpose();
    readout_bias_grad += output_grad;

    // Only the final step of the top layer feeds the readout.
    Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(steps_, layers.back().hidden());
    upstream.row(steps_ - 1) = (readout_weights.transpose() * output_grad).transpose();

    for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
        LstmGrads grads = lstm_backward(layers[static_cast<std::size_t>(l)],
                                        caches_[static_cast<std::size_t>(l)], upstream);
        auto& acc = layer_grads[static_cast<std::size_t>(l)];
        acc.wa += grads.params.wa;
        acc.wi += grads.params.wi;
        acc.wf += grads.params.wf;
        acc.wo += grads.params.wo;
        acc.ua += grads.params.ua;
        acc.ui += grads.params.ui;
        acc.uf += grads.params.uf;
        acc.uo += grads.params.uo;
        acc.ba += grads.params.ba;
        acc.bi += grads.params.bi;
        acc.bf += grads.params.bf;
        acc.bo += grads.params.bo;
        upstream = std::move(grads.inputs);
    }
    return upstream;
}

std::vector<ParamRef> LstmStack::params() {
    std::vector<ParamRef> refs;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& p = layers[l];
        auto& g = layer_grads[l];
        auto add = [&refs](Eigen::MatrixXd& value, Eigen::MatrixXd& grad) {
            refs.push_back({value.data(), grad.data(), value.size()});
        };
        auto addv = [&refs](Eigen::VectorXd& value, Eigen::VectorXd& grad) {
            refs.push_back({value.data(), grad.data(), value.size()});
        };
        add(p.wa, g.wa);
        add(p.wi, g.wi);
        add(p.wf, g.wf);
        add(p.wo, g.wo);
        add(p.ua, g.ua);
        add(p.ui, g.ui);
        add(p.uf, g.uf);
        add(p.uo, g.uo);
        addv(p.ba, g.ba);
        addv(p.bi, g.bi);
        addv(p.bf, g.bf);
        addv(p.bo, g.bo);
    }
    refs.push_back({readout_weights.data(), readout_weight_grad.data(), readout_weights.size()});
    refs.push_back({readout_bias.data(), readout_bias_grad.data(), readout_bias.size()});
    return refs;
}

void LstmStack::zero_grads() {
    for (auto& g : layer_grads) {
        g.wa.setZero();
        g.wi.setZero();
        g.wf.setZero();
        g.wo.setZero();
        g.ua.setZero();
        g.ui.setZero();
        g.uf.setZero();
        g.uo.setZero();
        g.ba.setZero();
        g.bi.setZero();
        g.bf.setZero();
        g.bo.setZero();
    }
    readout_weight_grad.setZero();
    readout_bias_grad.setZero();
}

json LstmStack::describe() const {
    return json{{"kind", "lstm_stack"},
                {"input_dim", input_dim_},
                {"hidden_sizes", hidden_sizes_},
                {"output_dim", output_dim()}};
}

} // namespace shmlab::nn
