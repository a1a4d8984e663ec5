// Acceptance suite: each criterion prints exactly one PASS/FAIL line and the
// process exits nonzero if any requested criterion fails.
//
//   acceptance <n>     run criterion n (1..9)
//   acceptance all     run every criterion in order

#include "shmlab/blob_io.hpp"
#include "shmlab/commands.hpp"
#include "shmlab/config.hpp"
#include "shmlab/dataset.hpp"
#include "shmlab/experiments.hpp"
#include "shmlab/lstm.hpp"
#include "shmlab/network.hpp"
#include "shmlab/optimizer.hpp"
#include "shmlab/pbp.hpp"
#include "shmlab/rng.hpp"

#include "test_support.hpp"

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace shmlab;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    int id;
    std::string summary;
    std::function<void(std::ostringstream&)> run; // throws on failure
};

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool condition, const std::string& what) {
    if (!condition) {
        throw Failure(what);
    }
}

double seconds_since(const std::chrono::steady_clock::time_point& start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name)
        : path(fs::temp_directory_path() / ("shmlab-acceptance-" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

fem::FrfDataset desk_dataset() {
    const cli::RunConfig cfg = cli::RunConfig::make_preset("desk");
    return fem::generate_dataset(cfg.dataset);
}

// ---------------------------------------------------------------------------
// 1. FEM validity
// ---------------------------------------------------------------------------
void criterion_fem(std::ostringstream& detail) {
    const auto start = std::chrono::steady_clock::now();

    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const double ei = std::exp(rng.uniform(-2.0, 6.0));
        const double rho_a = std::exp(rng.uniform(-3.0, 3.0));
        const double l = std::exp(rng.uniform(-2.0, 1.0));
        const fem::ElementMatrices em = fem::element_matrices(ei, rho_a, l);
        const Eigen::Vector4d translation(1.0, 0.0, 1.0, 0.0);
        const Eigen::Vector4d rotation(-l / 2.0, 1.0, l / 2.0, 1.0);
        require((em.stiffness * translation).norm() <= 1e-10 * em.stiffness.norm(),
                "rigid translation not annihilated");
        require((em.stiffness * rotation).norm() <= 1e-10 * em.stiffness.norm(),
                "rigid rotation not annihilated");
    }

    fem::BeamModel model; // uniform steel, d = 0.01, L = 1
    const std::vector<double> omegas = fem::natural_frequencies(fem::assemble(model));
    const fem::SectionProperties sect = fem::section_properties(0.01);
    const double ei = model.material.youngs_modulus * sect.second_moment;
    const double rho_a = model.material.density * sect.area;
    const double beta_l_squared[3] = {3.5160, 22.034, 61.697};
    const double tolerance[3] = {0.02, 0.02, 0.06};
    for (int mode = 0; mode < 3; ++mode) {
        const double analytic = oracle::analytic_cantilever_omega(beta_l_squared[mode], ei, rho_a,
                                                                  model.length_total);
        const double error = std::abs(omegas[static_cast<std::size_t>(mode)] - analytic) / analytic;
        require(error <= tolerance[mode], "mode " + std::to_string(mode + 1) + " off by " +
                                              std::to_string(100.0 * error) + "%");
        if (mode == 0) {
            detail << "mode1 " << omegas[0] << " rad/s vs analytic " << analytic << "; ";
        }
    }

    const double elapsed = seconds_since(start);
    require(elapsed < 1.0, "FEM checks took " + std::to_string(elapsed) + " s");
    detail << "runtime " << elapsed << " s";
}

// ---------------------------------------------------------------------------
// 2. Full-preset dataset shape + generation time
// ---------------------------------------------------------------------------
void criterion_full_dataset(std::ostringstream& detail) {
    TempDir dir("full-dataset");
    cli::RunConfig cfg = cli::RunConfig::make_preset("full-paper");

    const auto start = std::chrono::steady_clock::now();
    const fem::DatasetManifest manifest =
        fem::generate_dataset_files(cfg.dataset, dir.path, fem::default_workers());
    const double elapsed = seconds_since(start);

    require(manifest.n_samples == 14641, "expected 14641 samples");
    require(manifest.feature_length == 40000, "expected 40000 features");
    require(manifest.config.sweep.response_nodes == std::vector<int>{5, 4, 3, 2},
            "node order must be 5,4,3,2");
    require(file_size_bytes(dir.path / "features.f32") ==
                14641ull * 40000ull * sizeof(float),
            "feature blob size mismatch");
    require(file_size_bytes(dir.path / "targets.f32") == 14641ull * 4ull * sizeof(float),
            "target blob size mismatch");

    // spot-check one stored row against a direct rebuild of that sample
    const std::int64_t probe = 7777;
    fem::BeamModel model;
    model.material = cfg.dataset.material;
    model.diameters = fem::sample_diameters(cfg.dataset, probe);
    const fem::FrfSample sample =
        fem::build_sample(model, cfg.dataset.sweep, cfg.dataset.normalization);
    std::ifstream blob(dir.path / "features.f32", std::ios::binary);
    blob.seekg(static_cast<std::streamoff>(probe * 40000 * sizeof(float)));
    std::vector<float> row(40000);
    blob.read(reinterpret_cast<char*>(row.data()), 40000 * sizeof(float));
    require(static_cast<bool>(blob), "failed to read probe row");
    for (int i = 0; i < 40000; ++i) {
        require(row[static_cast<std::size_t>(i)] == static_cast<float>(sample.features[static_cast<std::size_t>(i)]),
                "row 7777 differs from a direct rebuild");
    }

    require(elapsed < 900.0, "generation took " + std::to_string(elapsed) + " s (budget 900)");
    detail << "14641 x 40000 in " << elapsed << " s";
}

// ---------------------------------------------------------------------------
// 3. PBP correctness oracles
// ---------------------------------------------------------------------------
void criterion_pbp_correctness(std::ostringstream& detail) {
    // forward moments against Monte Carlo on 20 random single-hidden nets
    Rng rng(11);
    for (int net_id = 0; net_id < 20; ++net_id) {
        const int inputs = 1 + static_cast<int>(rng.below(4));
        const int hidden = 1 + static_cast<int>(rng.below(4));
        pbp::PbpNetwork net = pbp::PbpNetwork::make({inputs, hidden, 1}, rng.next_u64());
        for (auto& layer : net.layers) {
            for (Eigen::Index i = 0; i < layer.variance.size(); ++i) {
                layer.variance.data()[i] = rng.uniform(0.05, 1.0);
            }
        }
        Eigen::VectorXd x(inputs);
        for (int i = 0; i < inputs; ++i) {
            x(i) = rng.uniform(-1.5, 1.5);
        }
        const auto moments = pbp::forward_moments(net, x);
        const double analytic_mean = moments.back().mean(0);
        const double analytic_var = moments.back().variance(0);

        const int draws = 100000;
        Rng sampler(500 + static_cast<std::uint64_t>(net_id));
        std::vector<double> outputs(draws);
        double sum = 0.0;
        for (int d = 0; d < draws; ++d) {
            Eigen::VectorXd z = x;
            for (std::size_t l = 0; l < net.layers.size(); ++l) {
                const auto& layer = net.layers[l];
                Eigen::VectorXd biased(z.size() + 1);
                biased << z, 1.0;
                Eigen::VectorXd pre(layer.fan_out());
                for (int r = 0; r < layer.fan_out(); ++r) {
                    double acc = 0.0;
                    for (int col = 0; col < layer.fan_in() + 1; ++col) {
                        acc += sampler.normal(layer.mean(r, col), std::sqrt(layer.variance(r, col))) *
                               biased(col);
                    }
                    pre(r) = acc / std::sqrt(static_cast<double>(layer.fan_in() + 1));
                }
                z = l + 1 < net.layers.size() ? pre.cwiseMax(0.0).eval() : pre;
            }
            outputs[static_cast<std::size_t>(d)] = z(0);
            sum += z(0);
        }
        const double mc_mean = sum / draws;
        double sum_sq = 0.0, sum_4 = 0.0;
        for (double v : outputs) {
            const double centered = v - mc_mean;
            sum_sq += centered * centered;
            sum_4 += centered * centered * centered * centered;
        }
        const double mc_var = sum_sq / (draws - 1);
        const double se_mean = std::sqrt(mc_var / draws);
        const double se_var = std::sqrt(std::max(0.0, sum_4 / draws - mc_var * mc_var) / draws);
        require(std::abs(analytic_mean - mc_mean) <= 3.0 * se_mean,
                "net " + std::to_string(net_id) + ": mean off by " +
                    std::to_string(std::abs(analytic_mean - mc_mean) / se_mean) + " SE");
        require(std::abs(analytic_var - mc_var) <= 3.0 * se_var,
                "net " + std::to_string(net_id) + ": variance off by " +
                    std::to_string(std::abs(analytic_var - mc_var) / se_var) + " SE");
    }

    // logZ gradients against central differences on <=3-unit nets
    Rng fd_rng(13);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int inputs = 1 + static_cast<int>(fd_rng.below(3));
        const int hidden = 1 + static_cast<int>(fd_rng.below(3));
        pbp::PbpNetwork net = pbp::PbpNetwork::make({inputs, hidden, 1}, fd_rng.next_u64());
        for (auto& layer : net.layers) {
            for (Eigen::Index i = 0; i < layer.variance.size(); ++i) {
                layer.variance.data()[i] = fd_rng.uniform(0.05, 1.0);
            }
        }
        Eigen::VectorXd x(inputs);
        for (int i = 0; i < inputs; ++i) {
            x(i) = fd_rng.uniform(-1.0, 1.0);
        }
        const double y = fd_rng.uniform(-1.0, 1.0);
        const double gamma = net.gamma.expectation();
        const pbp::LogMarginalGradients grads = pbp::log_marginal_gradients(net, x, y);

        auto log_z_now = [&]() {
            const auto moments = pbp::forward_moments(net, x);
            return pbp::log_marginal(y, moments.back().mean(0), moments.back().variance(0), gamma);
        };
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            auto check = [&](Eigen::MatrixXd& values, const Eigen::MatrixXd& analytic) {
                for (Eigen::Index i = 0; i < values.size(); ++i) {
                    double* slot = values.data() + i;
                    const double saved = *slot;
                    const double step = 1e-6 * std::max(0.01, std::abs(saved));
                    *slot = saved + step;
                    const double plus = log_z_now();
                    *slot = saved - step;
                    const double minus = log_z_now();
                    *slot = saved;
                    const double numeric = (plus - minus) / (2.0 * step);
                    const double err = oracle::relative_error(analytic.data()[i], numeric);
                    worst = std::max(worst, err);
                    require(err <= 1e-4, "logZ gradient error " + std::to_string(err));
                }
            };
            check(net.layers[l].mean, grads.mean_grad[l]);
            check(net.layers[l].variance, grads.variance_grad[l]);
        }
    }

    // posterior variances stay positive through 1e4 random updates
    Rng update_rng(17);
    pbp::PbpNetwork net = pbp::PbpNetwork::make({4, 8, 1}, 3);
    for (int step = 0; step < 10000; ++step) {
        Eigen::VectorXd x(4);
        for (int i = 0; i < 4; ++i) {
            x(i) = update_rng.uniform(-2.0, 2.0);
        }
        pbp::pbp_update(net, x, update_rng.uniform(-2.0, 2.0));
        for (const auto& layer : net.layers) {
            require(layer.variance.minCoeff() > 0.0, "variance hit zero at step " +
                                                         std::to_string(step));
            require(layer.mean.allFinite(), "mean became non-finite");
        }
    }
    detail << "MC 20 nets within 3 SE; max logZ-grad err " << worst
           << "; variances positive after 1e4 updates";
}

// ---------------------------------------------------------------------------
// 4. PBP desk-scale performance
// ---------------------------------------------------------------------------
void criterion_pbp_desk(std::ostringstream& detail) {
    TempDir dir("pbp-desk");
    const cli::RunConfig cfg = cli::RunConfig::make_preset("desk");
    const fem::FrfDataset dataset = desk_dataset();
    require(dataset.manifest.n_samples == 625 && dataset.manifest.feature_length == 2000,
            "desk preset must be 625 x 2000");

    const auto start = std::chrono::steady_clock::now();
    const experiments::TrainingReport report = experiments::train_model(
        experiments::ModelKind::PbpMlp, dataset,
        experiments::SplitSpec{cfg.pbp_test_fraction, 0.0, cfg.seed}, cfg.cnn, cfg.pbp, cfg.seed,
        dir.path, cfg.hash());
    const double elapsed = seconds_since(start);

    require(cfg.pbp.hidden_units == 64 && cfg.pbp.epochs == 10,
            "desk PBP must run 64 hidden units for 10 epochs");
    require(elapsed <= 600.0, "PBP took " + std::to_string(elapsed) + " s (budget 600)");
    require(report.r2_mean >= 0.95,
            "held-out mean R2 " + std::to_string(report.r2_mean) + " < 0.95");
    detail << "held-out mean R2 " << report.r2_mean << " in " << elapsed << " s";
}

// ---------------------------------------------------------------------------
// 5. nn-engine correctness
// ---------------------------------------------------------------------------
void criterion_engine(std::ostringstream& detail) {
    // conv forward against the quadruple-loop reference
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = 4 + static_cast<int>(rng.below(5));
        const int w = 4 + static_cast<int>(rng.below(5));
        const int c = 1 + static_cast<int>(rng.below(3));
        const int k = 1 + static_cast<int>(rng.below(4));
        nn::Tensor input({h, w, c});
        for (double& v : input.data) {
            v = rng.uniform(-1.0, 1.0);
        }
        Eigen::MatrixXd kernel(9 * c, k);
        for (Eigen::Index i = 0; i < kernel.size(); ++i) {
            kernel.data()[i] = rng.uniform(-1.0, 1.0);
        }
        Eigen::VectorXd bias(k);
        for (int i = 0; i < k; ++i) {
            bias(i) = rng.uniform(-1.0, 1.0);
        }
        const nn::ConvSpec spec{k, 3, 1, 1};
        const nn::Tensor fast = nn::conv2d_forward(input, kernel, bias, spec);
        const nn::Tensor slow = oracle::reference_conv2d(input, kernel, bias, 3, 1, 1);
        for (std::size_t i = 0; i < fast.data.size(); ++i) {
            require(std::abs(fast.data[i] - slow.data[i]) <=
                        1e-12 * std::max(1.0, std::abs(slow.data[i])),
                    "conv mismatch vs reference");
        }
    }

    // finite differences across every layer kind, 20 seeds each
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        nn::Sequential net;
        Rng init(seed);
        auto conv = std::make_unique<nn::Conv2dLayer>(1, nn::ConvSpec{2, 3, 1, 1});
        conv->init_he_uniform(init);
        net.add(std::move(conv));
        net.add(std::make_unique<nn::ReluLayer>());
        net.add(std::make_unique<nn::MaxPool2dLayer>(2, 2));
        net.add(std::make_unique<nn::GlobalAveragePoolLayer>());
        auto head = std::make_unique<nn::DenseLayer>(2, 2);
        head->init_glorot_uniform(init);
        net.add(std::move(head));

        nn::Tensor input({6, 6, 1});
        Rng data(seed + 100);
        for (double& v : input.data) {
            v = data.uniform(-1.0, 1.0);
        }
        const nn::FiniteDifferenceReport report = nn::finite_difference_check(net, input, 1e-6);
        worst = std::max(worst, report.max_rel_error);
        require(report.pass, "CNN finite differences failed at seed " + std::to_string(seed) +
                                 " (" + std::to_string(report.max_rel_error) + ")");
    }
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng init(seed + 40);
        nn::LstmParams params = nn::LstmParams::zeros(2, 2);
        params.init_glorot_uniform(init);
        Eigen::MatrixXd sequence(3, 2);
        for (Eigen::Index i = 0; i < sequence.size(); ++i) {
            sequence.data()[i] = init.uniform(-1.0, 1.0);
        }
        auto loss = [&]() {
            return 0.5 * nn::lstm_forward(params, sequence, nullptr).squaredNorm();
        };
        nn::LstmCache cache;
        const Eigen::MatrixXd h = nn::lstm_forward(params, sequence, &cache);
        const nn::LstmGrads grads = nn::lstm_backward(params, cache, h);
        auto check = [&](Eigen::MatrixXd& values, const Eigen::MatrixXd& analytic) {
            for (Eigen::Index i = 0; i < values.size(); ++i) {
                double* slot = values.data() + i;
                const double saved = *slot;
                const double step = 1e-6 * std::max(1.0, std::abs(saved));
                *slot = saved + step;
                const double plus = loss();
                *slot = saved - step;
                const double minus = loss();
                *slot = saved;
                const double err =
                    oracle::relative_error(analytic.data()[i], (plus - minus) / (2.0 * step));
                worst = std::max(worst, err * 0.1); // lstm tolerance is 1e-5
                require(err <= 1e-5, "LSTM finite differences failed");
            }
        };
        check(params.wa, grads.params.wa);
        check(params.ua, grads.params.ua);
        check(params.wf, grads.params.wf);
        check(params.uo, grads.params.uo);
    }

    // Table-1 shape traces
    const auto e2_trace = experiments::cnn_shape_trace(experiments::build_cnn(1, {200, 200}));
    std::vector<std::int64_t> spatial;
    for (const auto& shape : e2_trace) {
        spatial.push_back(shape[0]);
    }
    require(spatial == std::vector<std::int64_t>{200, 200, 50, 48, 24, 22},
            "E2 trace is not 200/200/50/48/24/22");
    require(experiments::cnn_shape_trace(experiments::build_cnn(0, {200, 200})).back() ==
                std::vector<std::int64_t>{9, 9, 8},
            "E1 must end at 9x9x8");
    require(experiments::cnn_shape_trace(experiments::build_cnn(3, {200, 200})).back() ==
                std::vector<std::int64_t>{49, 49, 32},
            "E4 must end at 49x49x32");
    detail << "conv matches reference to 1e-12; gradient checks over 20 seeds pass; traces ok";
}

// ---------------------------------------------------------------------------
// 6. CNN + LSTM desk-scale performance
// ---------------------------------------------------------------------------
void criterion_engine_desk(std::ostringstream& detail) {
    TempDir dir("engine-desk");
    const cli::RunConfig cfg = cli::RunConfig::make_preset("desk");
    const fem::FrfDataset dataset = desk_dataset();

    const auto lstm_start = std::chrono::steady_clock::now();
    const experiments::TrainingReport lstm = experiments::train_model(
        experiments::ModelKind::LstmStack, dataset, experiments::SplitSpec{0.3, 0.3, cfg.seed},
        cfg.lstm, cfg.pbp, cfg.seed, dir.path / "lstm", cfg.hash());
    const double lstm_elapsed = seconds_since(lstm_start);
    require(lstm_elapsed <= 1800.0, "LSTM took " + std::to_string(lstm_elapsed) + " s");
    require(lstm.r2_mean >= 0.90, "LSTM held-out mean R2 " + std::to_string(lstm.r2_mean));

    const auto cnn_start = std::chrono::steady_clock::now();
    const experiments::TrainingReport cnn = experiments::train_model(
        experiments::ModelKind::CnnPerElement, dataset, experiments::SplitSpec{0.3, 0.3, cfg.seed},
        cfg.cnn, cfg.pbp, cfg.seed, dir.path / "cnn", cfg.hash());
    const double cnn_elapsed = seconds_since(cnn_start);
    require(cnn_elapsed <= 1800.0, "CNN took " + std::to_string(cnn_elapsed) + " s");
    require(cnn.r2_mean >= 0.90, "CNN held-out mean R2 " + std::to_string(cnn.r2_mean));

    detail << "LSTM R2 " << lstm.r2_mean << " in " << lstm_elapsed << " s; CNN R2 " << cnn.r2_mean
           << " in " << cnn_elapsed << " s";
}

// ---------------------------------------------------------------------------
// 7. R^2 metric hand cases
// ---------------------------------------------------------------------------
void criterion_r_squared(std::ostringstream& detail) {
    Eigen::MatrixXd actual(3, 1);
    actual << 1.0, 2.0, 3.0;
    require(experiments::r_squared(actual, actual).mean == 1.0, "perfect fit must give exactly 1");

    Eigen::MatrixXd mean_pred = Eigen::MatrixXd::Constant(3, 1, 2.0);
    require(experiments::r_squared(mean_pred, actual).mean == 0.0,
            "mean predictor must give exactly 0");

    Eigen::MatrixXd half(3, 1);
    half << 1.0, 2.0, 2.0;
    require(std::abs(experiments::r_squared(half, actual).mean - 0.5) < 1e-15,
            "hand case must give 0.5");
    detail << "1.0 / 0.0 / 0.5 exact";
}

// ---------------------------------------------------------------------------
// 8. Saliency contract
// ---------------------------------------------------------------------------
void criterion_saliency(std::ostringstream& detail) {
    // the raw input gradient of a pure linear model is its weight vector
    nn::Sequential linear;
    auto dense = std::make_unique<nn::DenseLayer>(6, 1);
    Rng rng(5);
    dense->init_glorot_uniform(rng);
    const Eigen::MatrixXd weights = dense->weights;
    linear.add(std::move(dense));

    nn::Tensor x({6});
    for (double& v : x.data) {
        v = rng.uniform(-1.0, 1.0);
    }
    linear.forward(x);
    nn::Tensor upstream({1});
    upstream.data[0] = 1.0;
    const nn::Tensor gradient = linear.backward(upstream);
    for (int i = 0; i < 6; ++i) {
        require(gradient.data[static_cast<std::size_t>(i)] == weights(0, i),
                "linear-surrogate gradient must equal the weights exactly");
    }

    // per-element reports: exactly 10 unique, in-range indices
    TempDir dir("saliency");
    fem::GenerationConfig config;
    config.grid = fem::DiameterGrid{3, 0.005, 0.015};
    config.sweep.n_points = 64;
    config.material.loss_factor = 0.4;
    config.cnn_reshape = {16, 16};
    const fem::FrfDataset dataset = fem::generate_dataset(config);

    experiments::OptimizerConfig opt;
    opt.max_epochs = 0;
    experiments::train_model(experiments::ModelKind::CnnPerElement, dataset,
                             experiments::SplitSpec{0.3, 0.3, 2}, opt, experiments::PbpConfig{8, 0},
                             2, dir.path, "hash");
    for (int element = 0; element < 4; ++element) {
        const experiments::SaliencyReport report = experiments::saliency(
            experiments::ModelKind::CnnPerElement, dir.path, dataset, 11, element, 10);
        require(report.top.size() == 10, "report must carry exactly 10 entries");
        std::set<std::int64_t> unique;
        for (const auto& entry : report.top) {
            require(entry.index >= 0 && entry.index < dataset.manifest.feature_length,
                    "index out of range");
            require(unique.insert(entry.index).second, "duplicate index in top-10");
            require(entry.category == "increase" || entry.category == "decrease" ||
                        entry.category == "maintain",
                    "unknown category");
        }
        const std::string table = report.prediction_table();
        require(table.find("actual") != std::string::npos &&
                    table.find("predicted") != std::string::npos &&
                    table.find("E1") != std::string::npos &&
                    table.find("E4") != std::string::npos,
                "actual-vs-predicted block missing");
    }
    detail << "linear gradient exact; 4 x top-10 unique in-range; prediction table present";
}

// ---------------------------------------------------------------------------
// 9. Determinism of datasets, checkpoints and reports
// ---------------------------------------------------------------------------
void criterion_determinism(std::ostringstream& detail) {
    TempDir dir("determinism");
    cli::RunConfig cfg = cli::RunConfig::make_preset("desk");
    cfg.dataset.grid.levels = 3; // keep the double run quick; the machinery is identical
    cfg.dataset.sweep.n_points = 64;
    cfg.dataset.cnn_reshape = {16, 16};
    cfg.cnn.max_epochs = 3;
    cfg.lstm.max_epochs = 3;
    cfg.pbp.epochs = 2;
    cfg.pbp.hidden_units = 8;

    for (const char* side : {"a", "b"}) {
        cfg.out_dir = (dir.path / side).string();
        // keep the per-criterion output to one line
        std::ostringstream sink;
        std::streambuf* saved = std::cout.rdbuf(sink.rdbuf());
        try {
            cli::cmd_generate(cfg, false);
            cli::cmd_train(cfg, "cnn");
            cli::cmd_train(cfg, "lstm");
            cli::cmd_train(cfg, "pbp");
            cli::cmd_evaluate(cfg);
        } catch (...) {
            std::cout.rdbuf(saved);
            throw;
        }
        std::cout.rdbuf(saved);
    }

    const fs::path a = dir.path / "a", b = dir.path / "b";
    const std::string hash = cfg.hash();
    const std::vector<fs::path> artifacts = {
        fs::path("dataset") / "features.f32",
        fs::path("dataset") / "targets.f32",
        fs::path("dataset") / "manifest.json",
        fs::path("runs") / ("cnn-" + hash) / "cnn-E1.f32",
        fs::path("runs") / ("cnn-" + hash) / "cnn-E4.f32",
        fs::path("runs") / ("cnn-" + hash) / "report.json",
        fs::path("runs") / ("lstm-" + hash) / "lstm.f32",
        fs::path("runs") / ("lstm-" + hash) / "report.json",
        fs::path("runs") / ("pbp-" + hash) / "pbp-E1.f64",
        fs::path("runs") / ("pbp-" + hash) / "report.json",
        fs::path("evaluation-" + hash + ".json"),
        fs::path("evaluation-" + hash + ".csv"),
    };
    for (const auto& artifact : artifacts) {
        require(files_identical(a / artifact, b / artifact),
                "artifact differs between runs: " + artifact.string());
    }
    detail << artifacts.size() << " artifacts byte-identical across independent runs";
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria = {
        {1, "FEM validity (analytic frequencies, rigid-body nulls, <1 s)", criterion_fem},
        {2, "full preset dataset shape 14641 x 40000 in <15 min", criterion_full_dataset},
        {3, "PBP forward moments vs MC, logZ gradients vs FD, variance positivity",
         criterion_pbp_correctness},
        {4, "PBP desk-scale held-out mean R2 >= 0.95 in <=10 min", criterion_pbp_desk},
        {5, "nn-engine gradient checks, conv reference, Table-1 traces", criterion_engine},
        {6, "CNN/LSTM desk-scale held-out mean R2 >= 0.90 in <=30 min each",
         criterion_engine_desk},
        {7, "R^2 metric exact on 1.0 / 0.0 / 0.5 hand cases", criterion_r_squared},
        {8, "saliency: linear gradient exact, top-10 contract, prediction table",
         criterion_saliency},
        {9, "bit-identical datasets, checkpoints and reports across reruns",
         criterion_determinism},
    };

    std::vector<int> selected;
    if (argc < 2 || std::strcmp(argv[1], "all") == 0) {
        for (const auto& criterion : criteria) {
            selected.push_back(criterion.id);
        }
    } else {
        const int id = std::atoi(argv[1]);
        if (id < 1 || id > static_cast<int>(criteria.size())) {
            std::cerr << "usage: acceptance <1.." << criteria.size() << "|all>\n";
            return 2;
        }
        selected.push_back(id);
    }

    int failures = 0;
    for (int id : selected) {
        const Criterion& criterion = criteria[static_cast<std::size_t>(id - 1)];
        std::ostringstream detail;
        try {
            criterion.run(detail);
            std::cout << "PASS criterion " << criterion.id << ": " << criterion.summary << " ["
                      << detail.str() << "]\n";
        } catch (const std::exception& e) {
            ++failures;
            std::cout << "FAIL criterion " << criterion.id << ": " << criterion.summary << " ("
                      << e.what() << ")\n";
        }
    }
    return failures == 0 ? 0 : 1;
}
