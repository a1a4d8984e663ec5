#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "shmlab/lstm.hpp"
#include "shmlab/rng.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace shmlab;
using namespace shmlab::nn;

namespace {

double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

} // namespace

TEST_CASE("all-zero parameters keep the state at rest") {
    LstmParams params = LstmParams::zeros(3, 4);
    Eigen::MatrixXd sequence = Eigen::MatrixXd::Random(5, 3);
    LstmCache cache;
    const Eigen::MatrixXd h = lstm_forward(params, sequence, &cache);
    CHECK(h.norm() == 0.0);
    CHECK(cache.c.norm() == 0.0);
}

TEST_CASE("scalar single-step cell matches the gate equations") {
    // W_a = W_i = W_f = W_o = 1, U = 0, b = 0, x = 1:
    //   i = f = o = sigma(1), a = tanh(1), c1 = i * a, h1 = o * tanh(c1)
    LstmParams params = LstmParams::zeros(1, 1);
    params.wa(0, 0) = params.wi(0, 0) = params.wf(0, 0) = params.wo(0, 0) = 1.0;
    Eigen::MatrixXd sequence(1, 1);
    sequence << 1.0;

    LstmCache cache;
    const Eigen::MatrixXd h = lstm_forward(params, sequence, &cache);

    const double gate = sigmoid(1.0);
    const double c1 = gate * std::tanh(1.0);
    const double h1 = gate * std::tanh(c1);
    CHECK(gate == doctest::Approx(0.73106).epsilon(1e-4));
    CHECK(c1 == doctest::Approx(0.55677).epsilon(1e-4));
    CHECK(cache.c(1, 0) == doctest::Approx(c1).epsilon(1e-12));
    CHECK(h(0, 0) == doctest::Approx(h1).epsilon(1e-12));
}

TEST_CASE("gradients through three time steps match finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const int d = 1 + static_cast<int>(rng.below(3));
        const int k = 1 + static_cast<int>(rng.below(3));
        LstmParams params = LstmParams::zeros(d, k);
        params.init_glorot_uniform(rng);

        Eigen::MatrixXd sequence(3, d);
        for (Eigen::Index i = 0; i < sequence.size(); ++i) {
            sequence.data()[i] = rng.uniform(-1.0, 1.0);
        }

        auto loss = [&]() {
            const Eigen::MatrixXd h = lstm_forward(params, sequence, nullptr);
            return 0.5 * h.squaredNorm();
        };

        LstmCache cache;
        const Eigen::MatrixXd h = lstm_forward(params, sequence, &cache);
        const LstmGrads grads = lstm_backward(params, cache, h);

        auto check_matrix = [&](Eigen::MatrixXd& values, const Eigen::MatrixXd& analytic) {
            for (Eigen::Index i = 0; i < values.size(); ++i) {
                double* slot = values.data() + i;
                const double saved = *slot;
                const double step = 1e-6 * std::max(1.0, std::abs(saved));
                *slot = saved + step;
                const double plus = loss();
                *slot = saved - step;
                const double minus = loss();
                *slot = saved;
                const double numeric = (plus - minus) / (2.0 * step);
                CHECK(oracle::relative_error(analytic.data()[i], numeric) <= 1e-5);
            }
        };
        check_matrix(params.wa, grads.params.wa);
        check_matrix(params.wi, grads.params.wi);
        check_matrix(params.wf, grads.params.wf);
        check_matrix(params.wo, grads.params.wo);
        check_matrix(params.ua, grads.params.ua);
        check_matrix(params.ui, grads.params.ui);
        check_matrix(params.uf, grads.params.uf);
        check_matrix(params.uo, grads.params.uo);
        check_matrix(sequence, grads.inputs);
    }
}

TEST_CASE("stacked model readout sees only the final hidden state") {
    Rng rng(2);
    LstmStack model(4, {3, 2}, 2);
    model.init(rng);

    Eigen::MatrixXd sequence(4, 4);
    for (Eigen::Index i = 0; i < sequence.size(); ++i) {
        sequence.data()[i] = rng.uniform(-1.0, 1.0);
    }

    const Eigen::VectorXd out = model.forward(sequence);
    CHECK(out.size() == 2);

    // full-stack finite differences, parameters and inputs
    auto loss = [&]() {
        const Eigen::VectorXd y = model.forward(sequence);
        return 0.5 * y.squaredNorm();
    };
    model.zero_grads();
    const Eigen::VectorXd y = model.forward(sequence);
    const Eigen::MatrixXd input_grad = model.backward(y);

    for (const auto& ref : model.params()) {
        for (std::int64_t i = 0; i < ref.size; ++i) {
            const double saved = ref.value[i];
            const double step = 1e-6 * std::max(1.0, std::abs(saved));
            ref.value[i] = saved + step;
            const double plus = loss();
            ref.value[i] = saved - step;
            const double minus = loss();
            ref.value[i] = saved;
            CHECK(oracle::relative_error(ref.grad[i], (plus - minus) / (2.0 * step)) <= 1e-5);
        }
    }
    for (Eigen::Index i = 0; i < sequence.size(); ++i) {
        double* slot = sequence.data() + i;
        const double saved = *slot;
        const double step = 1e-6;
        *slot = saved + step;
        const double plus = loss();
        *slot = saved - step;
        const double minus = loss();
        *slot = saved;
        CHECK(oracle::relative_error(input_grad.data()[i], (plus - minus) / (2.0 * step)) <= 1e-5);
    }
}

TEST_CASE("identical seeds build identical stacks") {
    auto build = [] {
        Rng rng(77);
        LstmStack model(6, {4, 3}, 2);
        model.init(rng);
        Eigen::MatrixXd sequence = Eigen::MatrixXd::Constant(4, 6, 0.25);
        return model.forward(sequence);
    };
    const Eigen::VectorXd a = build();
    const Eigen::VectorXd b = build();
    CHECK(a == b);
}
