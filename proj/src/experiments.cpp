#include "shmlab/experiments.hpp"

#include "shmlab/blob_io.hpp"
#include "shmlab/errors.hpp"
#include "shmlab/lstm.hpp"
#include "shmlab/optimizer.hpp"
#include "shmlab/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace shmlab::experiments {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

void SplitSpec::validate() const {
    if (!(test_fraction > 0.0) || !(test_fraction < 1.0)) {
        throw ConfigError("test_fraction must lie in (0, 1)");
    }
    if (!(validation_fraction >= 0.0) || !(validation_fraction < 1.0)) {
        throw ConfigError("validation_fraction must lie in [0, 1)");
    }
}

SplitIndices split_dataset(std::int64_t n_samples, const SplitSpec& spec) {
    spec.validate();
    if (n_samples <= 0) {
        throw ConfigError("split_dataset: empty dataset");
    }
    std::vector<std::int64_t> order(static_cast<std::size_t>(n_samples));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(spec.seed);
    rng.shuffle(order);

    const auto n_test = static_cast<std::int64_t>(
        std::floor(spec.test_fraction * static_cast<double>(n_samples)));
    const std::int64_t n_rest = n_samples - n_test;
    const auto n_val = static_cast<std::int64_t>(
        std::floor(spec.validation_fraction * static_cast<double>(n_rest)));

    SplitIndices split;
    split.test.assign(order.begin(), order.begin() + n_test);
    split.validation.assign(order.begin() + n_test, order.begin() + n_test + n_val);
    split.train.assign(order.begin() + n_test + n_val, order.end());
    if (split.train.empty() || split.test.empty()) {
        throw ConfigError("split produced an empty train or test partition");
    }
    return split;
}

// ---------------------------------------------------------------------------
// Architectures
// ---------------------------------------------------------------------------

std::string to_string(ModelKind kind) {
    switch (kind) {
    case ModelKind::PbpMlp:
        return "pbp";
    case ModelKind::CnnPerElement:
        return "cnn";
    case ModelKind::LstmStack:
        return "lstm";
    }
    throw ConfigError("unknown model kind");
}

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "pbp") {
        return ModelKind::PbpMlp;
    }
    if (name == "cnn") {
        return ModelKind::CnnPerElement;
    }
    if (name == "lstm") {
        return ModelKind::LstmStack;
    }
    throw ConfigError("unknown model kind: " + name + " (expected pbp, cnn or lstm)");
}

namespace {

// Reference per-element tables for the 200x200 grid. Block = conv filters,
// kernel extent, trailing pool extent (0 = none).
const std::vector<CnnBlock> kFullTables[4] = {
    {{32, 3, 4}, {32, 3, 2}, {32, 3, 2}, {8, 3, 0}},
    {{64, 5, 4}, {32, 3, 2}, {32, 3, 0}},
    {{64, 5, 4}, {32, 3, 2}, {16, 3, 0}},
    {{16, 3, 2}, {32, 3, 2}},
};

// Compact chain for reduced grids (e.g. 20x100 at 2000 features); the full
// tables need at least a 72x72 grid to keep every pool divisible.
const std::vector<CnnBlock> kCompactTable = {{16, 3, 2}, {16, 3, 2}, {16, 3, 0}};

} // namespace

ArchitectureSpec build_cnn(int element, std::array<int, 2> input_dims) {
    if (element < 0 || element > 3) {
        throw ConfigError("element index must be 0..3, got " + std::to_string(element));
    }
    ArchitectureSpec spec;
    spec.kind = ModelKind::CnnPerElement;
    spec.element = element;
    spec.input_dims = input_dims;
    spec.feature_length = static_cast<std::int64_t>(input_dims[0]) * input_dims[1];
    spec.blocks = (input_dims == std::array<int, 2>{200, 200})
                      ? kFullTables[element]
                      : kCompactTable;
    cnn_shape_trace(spec); // validates the chain against the grid
    return spec;
}

ArchitectureSpec build_lstm(std::int64_t feature_length) {
    ArchitectureSpec spec;
    spec.kind = ModelKind::LstmStack;
    spec.feature_length = feature_length;
    if (feature_length <= 0 || feature_length % spec.lstm_steps != 0) {
        throw ConfigError("feature length " + std::to_string(feature_length) +
                          " is not divisible into " + std::to_string(spec.lstm_steps) +
                          " time steps");
    }
    spec.lstm_input_dim = static_cast<int>(feature_length / spec.lstm_steps);
    return spec;
}

nn::Sequential make_cnn_network(const ArchitectureSpec& spec, std::uint64_t seed) {
    nn::Sequential net;
    Rng rng(seed);
    int channels = 1;
    for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
        const CnnBlock& block = spec.blocks[b];
        nn::ConvSpec conv;
        conv.filters = block.filters;
        conv.extent = block.extent;
        conv.stride = 1;
        conv.padding = b == 0 ? (block.extent - 1) / 2 : 0; // same-pad the first conv only
        auto layer = std::make_unique<nn::Conv2dLayer>(channels, conv);
        layer->init_he_uniform(rng);
        net.add(std::move(layer));
        net.add(std::make_unique<nn::ReluLayer>());
        if (block.pool_extent > 0) {
            net.add(std::make_unique<nn::MaxPool2dLayer>(block.pool_extent, block.pool_extent));
        }
        channels = block.filters;
    }
    net.add(std::make_unique<nn::GlobalAveragePoolLayer>());
    auto head = std::make_unique<nn::DenseLayer>(channels, 1);
    head->init_glorot_uniform(rng);
    net.add(std::move(head));
    return net;
}

std::vector<std::vector<std::int64_t>> cnn_shape_trace(const ArchitectureSpec& spec) {
    nn::Sequential net;
    int channels = 1;
    for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
        const CnnBlock& block = spec.blocks[b];
        nn::ConvSpec conv{block.filters, block.extent, 1, b == 0 ? (block.extent - 1) / 2 : 0};
        net.add(std::make_unique<nn::Conv2dLayer>(channels, conv));
        if (block.pool_extent > 0) {
            net.add(std::make_unique<nn::MaxPool2dLayer>(block.pool_extent, block.pool_extent));
        }
        channels = block.filters;
    }
    try {
        return net.shape_trace({spec.input_dims[0], spec.input_dims[1], 1});
    } catch (const ConfigError& e) {
        throw ConfigError("E" + std::to_string(spec.element + 1) + " on " +
                          std::to_string(spec.input_dims[0]) + "x" +
                          std::to_string(spec.input_dims[1]) + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

RSquared r_squared(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& actuals) {
    if (predictions.rows() != actuals.rows() || predictions.cols() != actuals.cols()) {
        throw ConfigError("r_squared: prediction/actual shapes differ");
    }
    if (predictions.rows() < 2) {
        throw ConfigError("r_squared needs at least 2 samples");
    }
    RSquared result;
    result.per_output.reserve(static_cast<std::size_t>(predictions.cols()));
    for (Eigen::Index j = 0; j < predictions.cols(); ++j) {
        const double mean = actuals.col(j).mean();
        const double sse = (actuals.col(j) - predictions.col(j)).squaredNorm();
        const double sst = (actuals.col(j).array() - mean).matrix().squaredNorm();
        if (sst == 0.0) {
            throw NumericError("R^2 undefined: actuals in output " + std::to_string(j) +
                               " are all identical");
        }
        result.per_output.push_back(1.0 - sse / sst);
    }
    result.mean = std::accumulate(result.per_output.begin(), result.per_output.end(), 0.0) /
                  static_cast<double>(result.per_output.size());
    return result;
}

// ---------------------------------------------------------------------------
// Sample views
// ---------------------------------------------------------------------------

nn::Tensor cnn_input(const fem::FrfDataset& dataset, std::int64_t sample) {
    const auto dims = dataset.manifest.config.cnn_reshape;
    nn::Tensor x({dims[0], dims[1], 1});
    const auto row = dataset.feature_row(sample);
    for (std::size_t i = 0; i < row.size(); ++i) {
        x.data[i] = row[i];
    }
    return x;
}

Eigen::MatrixXd lstm_input(const fem::FrfDataset& dataset, std::int64_t sample, int steps) {
    const std::int64_t len = dataset.manifest.feature_length;
    if (len % steps != 0) {
        throw ConfigError("feature length not divisible by sequence steps");
    }
    const std::int64_t width = len / steps;
    const auto row = dataset.feature_row(sample);
    Eigen::MatrixXd seq(steps, width);
    for (int t = 0; t < steps; ++t) {
        for (std::int64_t j = 0; j < width; ++j) {
            seq(t, j) = row[static_cast<std::size_t>(t * width + j)];
        }
    }
    return seq;
}

namespace {

Eigen::MatrixXd feature_matrix(const fem::FrfDataset& dataset,
                               const std::vector<std::int64_t>& indices) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(indices.size()), dataset.manifest.feature_length);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto row = dataset.feature_row(indices[r]);
        for (std::size_t j = 0; j < row.size(); ++j) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = row[j];
        }
    }
    return m;
}

Eigen::MatrixXd target_matrix(const fem::FrfDataset& dataset,
                              const std::vector<std::int64_t>& indices) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(indices.size()), 4);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto t = dataset.target_row(indices[r]);
        for (int k = 0; k < 4; ++k) {
            m(static_cast<Eigen::Index>(r), k) = t[static_cast<std::size_t>(k)];
        }
    }
    return m;
}

TargetScaler fit_target_scaler(const Eigen::VectorXd& values) {
    TargetScaler s;
    s.mean = values.mean();
    const double var = (values.array() - s.mean).square().mean();
    s.std = std::sqrt(var);
    if (!(s.std > 1e-12)) {
        throw NumericError("target column is constant; cannot standardize");
    }
    return s;
}

std::vector<double> snapshot_params(const std::vector<nn::ParamRef>& refs) {
    std::vector<double> snap;
    for (const auto& ref : refs) {
        snap.insert(snap.end(), ref.value, ref.value + ref.size);
    }
    return snap;
}

void restore_params(const std::vector<nn::ParamRef>& refs, const std::vector<double>& snap) {
    std::size_t offset = 0;
    for (const auto& ref : refs) {
        std::copy(snap.begin() + static_cast<std::ptrdiff_t>(offset),
                  snap.begin() + static_cast<std::ptrdiff_t>(offset + ref.size), ref.value);
        offset += static_cast<std::size_t>(ref.size);
    }
}

struct EpochDriver {
    // shared early-stopping bookkeeping for the gradient-trained models
    double best_val = std::numeric_limits<double>::infinity();
    int stall = 0;
    std::vector<double> best_snapshot;

    bool update(double val_loss, const std::vector<nn::ParamRef>& refs, int patience) {
        if (val_loss < best_val) {
            best_val = val_loss;
            best_snapshot = snapshot_params(refs);
            stall = 0;
        } else {
            ++stall;
        }
        return stall > patience; // true = stop
    }
};

} // namespace

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

json TrainingReport::to_json() const {
    json traces_json = json::array();
    for (const auto& trace : traces) {
        traces_json.push_back(json{{"label", trace.label},
                                   {"loss_kind", trace.loss_kind},
                                   {"train_loss", trace.train_loss},
                                   {"val_loss", trace.val_loss}});
    }
    return json{{"model", model},
                {"seed", seed},
                {"config_hash", config_hash},
                {"r2_per_element", r2_per_element},
                {"r2_mean", r2_mean},
                {"traces", traces_json}};
}

namespace {

struct CnnElementResult {
    ElementTrace trace;
    Eigen::VectorXd test_predictions; // original units
};

CnnElementResult train_cnn_element(const fem::FrfDataset& dataset, const SplitIndices& split,
                                   const OptimizerConfig& opt, int element, std::uint64_t seed,
                                   const std::filesystem::path& run_dir,
                                   const std::string& config_hash) {
    const ArchitectureSpec arch = build_cnn(element, dataset.manifest.config.cnn_reshape);
    nn::Sequential net = make_cnn_network(arch, seed);

    Eigen::VectorXd train_targets(static_cast<Eigen::Index>(split.train.size()));
    for (std::size_t i = 0; i < split.train.size(); ++i) {
        train_targets(static_cast<Eigen::Index>(i)) =
            dataset.target_row(split.train[i])[static_cast<std::size_t>(element)];
    }
    const TargetScaler scaler = fit_target_scaler(train_targets);
    auto standardized = [&scaler](double y) { return (y - scaler.mean) / scaler.std; };

    auto refs = net.params();
    nn::Adam adam(refs, nn::AdamConfig{.learning_rate = opt.learning_rate});
    Rng shuffle_rng(seed ^ 0x5eedULL);

    auto sample_loss = [&](std::int64_t idx, bool with_grad, double inv_batch) {
        const nn::Tensor x = cnn_input(dataset, idx);
        const nn::Tensor out = net.forward(x);
        const double target =
            standardized(dataset.target_row(idx)[static_cast<std::size_t>(element)]);
        const double diff = out.data[0] - target;
        if (with_grad) {
            nn::Tensor upstream({1});
            upstream.data[0] = 2.0 * diff * inv_batch;
            net.backward(upstream);
        }
        return diff * diff;
    };

    ElementTrace trace{"E" + std::to_string(element + 1), "mse", {}, {}};
    EpochDriver driver;
    driver.best_snapshot = snapshot_params(refs);
    std::vector<std::int64_t> order = split.train;

    for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double train_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t end = std::min(order.size(), start + opt.batch_size);
            net.zero_grads();
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            for (std::size_t i = start; i < end; ++i) {
                train_loss += sample_loss(order[i], true, inv_batch);
            }
            if (!adam.step()) {
                throw NumericError("E" + std::to_string(element + 1) +
                                   " training diverged (non-finite gradient) at epoch " +
                                   std::to_string(epoch));
            }
        }
        train_loss /= static_cast<double>(order.size());
        if (!std::isfinite(train_loss)) {
            throw NumericError("E" + std::to_string(element + 1) +
                               " training diverged at epoch " + std::to_string(epoch));
        }

        double val_loss = 0.0;
        for (std::int64_t idx : split.validation) {
            val_loss += sample_loss(idx, false, 0.0);
        }
        val_loss /= std::max<std::size_t>(1, split.validation.size());

        trace.train_loss.push_back(train_loss);
        trace.val_loss.push_back(val_loss);
        if (driver.update(val_loss, refs, opt.patience)) {
            break;
        }
    }
    restore_params(refs, driver.best_snapshot);

    json header{{"kind", "cnn"},
                {"element", element + 1},
                {"input_dims", arch.input_dims},
                {"target_scaler", {{"mean", scaler.mean}, {"std", scaler.std}}},
                {"seed", seed},
                {"config_hash", config_hash}};
    nn::save_network(net, run_dir / ("cnn-E" + std::to_string(element + 1)), header);

    CnnElementResult result;
    result.trace = std::move(trace);
    result.test_predictions.resize(static_cast<Eigen::Index>(split.test.size()));
    for (std::size_t i = 0; i < split.test.size(); ++i) {
        const nn::Tensor out = net.forward(cnn_input(dataset, split.test[i]));
        result.test_predictions(static_cast<Eigen::Index>(i)) =
            out.data[0] * scaler.std + scaler.mean;
    }
    return result;
}

struct LstmResult {
    ElementTrace trace;
    Eigen::MatrixXd test_predictions; // original units, n x 4
};

void save_lstm_model(nn::LstmStack& model, const std::array<TargetScaler, 4>& scalers,
                     const std::filesystem::path& stem, json header) {
    header["format_version"] = 1;
    header["kind"] = "lstm";
    header["input_dim"] = model.input_dim();
    header["hidden_sizes"] = model.hidden_sizes();
    header["output_dim"] = model.output_dim();
    json scaler_json = json::array();
    for (const auto& s : scalers) {
        scaler_json.push_back(json{{"mean", s.mean}, {"std", s.std}});
    }
    header["target_scalers"] = scaler_json;

    std::vector<float> blob;
    for (const auto& ref : model.params()) {
        for (std::int64_t i = 0; i < ref.size; ++i) {
            blob.push_back(static_cast<float>(ref.value[i]));
        }
    }
    std::filesystem::create_directories(stem.parent_path());
    std::ofstream out(stem.string() + ".json");
    if (!out) {
        throw IoError("cannot write checkpoint header " + stem.string() + ".json");
    }
    out << header.dump(2) << "\n";
    write_f32_blob(stem.string() + ".f32", blob.data(), blob.size());
}

struct LoadedLstm {
    nn::LstmStack model;
    std::array<TargetScaler, 4> scalers;
    json header;
};

LoadedLstm load_lstm_model(const std::filesystem::path& stem) {
    std::ifstream in(stem.string() + ".json");
    if (!in) {
        throw IoError("missing checkpoint " + stem.string() + ".json");
    }
    json header;
    try {
        in >> header;
    } catch (const json::exception& e) {
        throw IoError("malformed checkpoint header: " + std::string(e.what()));
    }
    LoadedLstm loaded{nn::LstmStack(header.at("input_dim").get<int>(),
                                    header.at("hidden_sizes").get<std::vector<int>>(),
                                    header.at("output_dim").get<int>()),
                      {},
                      header};
    const auto scaler_json = header.at("target_scalers");
    for (std::size_t k = 0; k < 4; ++k) {
        loaded.scalers[k].mean = scaler_json.at(k).at("mean").get<double>();
        loaded.scalers[k].std = scaler_json.at(k).at("std").get<double>();
    }
    const std::vector<float> blob = read_f32_blob(stem.string() + ".f32");
    std::size_t offset = 0;
    for (const auto& ref : loaded.model.params()) {
        if (offset + static_cast<std::size_t>(ref.size) > blob.size()) {
            throw IoError("checkpoint blob too short: " + stem.string());
        }
        for (std::int64_t i = 0; i < ref.size; ++i) {
            ref.value[i] = blob[offset++];
        }
    }
    if (offset != blob.size()) {
        throw IoError("checkpoint blob has trailing data: " + stem.string());
    }
    return loaded;
}

LstmResult train_lstm_stack(const fem::FrfDataset& dataset, const SplitIndices& split,
                            const OptimizerConfig& opt, std::uint64_t seed,
                            const std::filesystem::path& run_dir,
                            const std::string& config_hash) {
    const ArchitectureSpec arch = build_lstm(dataset.manifest.feature_length);
    nn::LstmStack model(arch.lstm_input_dim, arch.lstm_hidden, 4);
    Rng init_rng(seed);
    model.init(init_rng);

    std::array<TargetScaler, 4> scalers;
    for (int k = 0; k < 4; ++k) {
        Eigen::VectorXd col(static_cast<Eigen::Index>(split.train.size()));
        for (std::size_t i = 0; i < split.train.size(); ++i) {
            col(static_cast<Eigen::Index>(i)) =
                dataset.target_row(split.train[i])[static_cast<std::size_t>(k)];
        }
        scalers[static_cast<std::size_t>(k)] = fit_target_scaler(col);
    }
    auto standardized_targets = [&](std::int64_t idx) {
        Eigen::VectorXd t(4);
        const auto raw = dataset.target_row(idx);
        for (int k = 0; k < 4; ++k) {
            t(k) = (raw[static_cast<std::size_t>(k)] - scalers[static_cast<std::size_t>(k)].mean) /
                   scalers[static_cast<std::size_t>(k)].std;
        }
        return t;
    };

    auto refs = model.params();
    nn::Adam adam(refs, nn::AdamConfig{.learning_rate = opt.learning_rate});
    Rng shuffle_rng(seed ^ 0x5eedULL);

    auto sample_loss = [&](std::int64_t idx, bool with_grad, double inv_batch) {
        const Eigen::MatrixXd seq = lstm_input(dataset, idx, arch.lstm_steps);
        const Eigen::VectorXd out = model.forward(seq);
        const nn::MseResult mse = nn::mse_loss(out, standardized_targets(idx));
        if (with_grad) {
            model.backward(mse.grad * inv_batch);
        }
        return mse.value;
    };

    ElementTrace trace{"all", "mse", {}, {}};
    EpochDriver driver;
    driver.best_snapshot = snapshot_params(refs);
    std::vector<std::int64_t> order = split.train;

    for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double train_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t end = std::min(order.size(), start + opt.batch_size);
            model.zero_grads();
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            for (std::size_t i = start; i < end; ++i) {
                train_loss += sample_loss(order[i], true, inv_batch);
            }
            if (!adam.step()) {
                throw NumericError("lstm training diverged (non-finite gradient) at epoch " +
                                   std::to_string(epoch));
            }
        }
        train_loss /= static_cast<double>(order.size());
        if (!std::isfinite(train_loss)) {
            throw NumericError("lstm training diverged at epoch " + std::to_string(epoch));
        }

        double val_loss = 0.0;
        for (std::int64_t idx : split.validation) {
            val_loss += sample_loss(idx, false, 0.0);
        }
        val_loss /= std::max<std::size_t>(1, split.validation.size());

        trace.train_loss.push_back(train_loss);
        trace.val_loss.push_back(val_loss);
        if (driver.update(val_loss, refs, opt.patience)) {
            break;
        }
    }
    restore_params(refs, driver.best_snapshot);

    save_lstm_model(model, scalers, run_dir / "lstm",
                    json{{"seed", seed}, {"config_hash", config_hash}});

    LstmResult result;
    result.trace = std::move(trace);
    result.test_predictions.resize(static_cast<Eigen::Index>(split.test.size()), 4);
    for (std::size_t i = 0; i < split.test.size(); ++i) {
        const Eigen::VectorXd out = model.forward(lstm_input(dataset, split.test[i], arch.lstm_steps));
        for (int k = 0; k < 4; ++k) {
            result.test_predictions(static_cast<Eigen::Index>(i), k) =
                out(k) * scalers[static_cast<std::size_t>(k)].std +
                scalers[static_cast<std::size_t>(k)].mean;
        }
    }
    return result;
}

struct PbpElementResult {
    ElementTrace trace;
    Eigen::VectorXd test_predictions;
};

PbpElementResult train_pbp_element(const fem::FrfDataset& dataset, const SplitIndices& split,
                                   const Eigen::MatrixXd& train_features_std,
                                   pbp::Standardizer scaler, const PbpConfig& cfg,
                                   int element, std::uint64_t seed,
                                   const std::filesystem::path& run_dir,
                                   const std::string& config_hash) {
    const int input_dim = static_cast<int>(dataset.manifest.feature_length);
    pbp::PbpNetwork net =
        pbp::PbpNetwork::make({input_dim, cfg.hidden_units, 1}, seed);

    Eigen::VectorXd raw_targets(static_cast<Eigen::Index>(split.train.size()));
    for (std::size_t i = 0; i < split.train.size(); ++i) {
        raw_targets(static_cast<Eigen::Index>(i)) =
            dataset.target_row(split.train[i])[static_cast<std::size_t>(element)];
    }
    scaler.target_offset = raw_targets.mean();
    const double target_sd =
        std::sqrt((raw_targets.array() - scaler.target_offset).square().mean());
    if (!(target_sd > 1e-12)) {
        throw NumericError("target column is constant; cannot standardize");
    }
    scaler.target_scale = 1.0 / target_sd;
    Eigen::VectorXd targets(raw_targets.size());
    for (Eigen::Index i = 0; i < raw_targets.size(); ++i) {
        targets(i) = scaler.scale_target(raw_targets(i));
    }

    const pbp::FitTrace fit_trace =
        pbp::fit(net, train_features_std, targets, cfg.epochs, seed ^ 0x1157ULL);

    pbp::PbpModel model{std::move(net), std::move(scaler)};
    save_pbp_model(model, run_dir / ("pbp-E" + std::to_string(element + 1)),
                   json{{"element", element + 1}, {"seed", seed}, {"config_hash", config_hash}});

    PbpElementResult result;
    result.trace.label = "E" + std::to_string(element + 1);
    result.trace.loss_kind = "mean_log_z";
    result.trace.train_loss = fit_trace.mean_log_z;

    result.test_predictions.resize(static_cast<Eigen::Index>(split.test.size()));
    for (std::size_t i = 0; i < split.test.size(); ++i) {
        const auto row = dataset.feature_row(split.test[i]);
        Eigen::VectorXd raw(static_cast<Eigen::Index>(row.size()));
        for (std::size_t j = 0; j < row.size(); ++j) {
            raw(static_cast<Eigen::Index>(j)) = row[j];
        }
        result.test_predictions(static_cast<Eigen::Index>(i)) = model.predict_raw(raw).mean;
    }
    return result;
}

} // namespace

TrainingReport train_model(ModelKind kind, const fem::FrfDataset& dataset, const SplitSpec& split,
                           const OptimizerConfig& optimizer, const PbpConfig& pbp_cfg,
                           std::uint64_t seed, const std::filesystem::path& run_dir,
                           const std::string& config_hash, int element) {
    const auto t0 = std::chrono::steady_clock::now();
    std::filesystem::create_directories(run_dir);

    SplitSpec effective = split;
    effective.seed = seed;
    const SplitIndices indices = split_dataset(dataset.manifest.n_samples, effective);
    const Eigen::MatrixXd test_actuals = target_matrix(dataset, indices.test);

    TrainingReport report;
    report.model = to_string(kind);
    report.seed = seed;
    report.config_hash = config_hash;

    std::vector<int> elements;
    if (element >= 0) {
        elements.push_back(element);
    } else {
        elements = {0, 1, 2, 3};
    }

    switch (kind) {
    case ModelKind::CnnPerElement: {
        Eigen::MatrixXd predictions(test_actuals.rows(), static_cast<Eigen::Index>(elements.size()));
        Eigen::MatrixXd actuals(test_actuals.rows(), static_cast<Eigen::Index>(elements.size()));
        for (std::size_t i = 0; i < elements.size(); ++i) {
            const int e = elements[i];
            CnnElementResult result = train_cnn_element(dataset, indices, optimizer, e,
                                                        seed + 17 * static_cast<std::uint64_t>(e),
                                                        run_dir, config_hash);
            predictions.col(static_cast<Eigen::Index>(i)) = result.test_predictions;
            actuals.col(static_cast<Eigen::Index>(i)) = test_actuals.col(e);
            report.traces.push_back(std::move(result.trace));
        }
        const RSquared r2 = r_squared(predictions, actuals);
        report.r2_per_element = r2.per_output;
        report.r2_mean = r2.mean;
        break;
    }
    case ModelKind::LstmStack: {
        LstmResult result = train_lstm_stack(dataset, indices, optimizer, seed, run_dir, config_hash);
        const RSquared r2 = r_squared(result.test_predictions, test_actuals);
        report.traces.push_back(std::move(result.trace));
        report.r2_per_element = r2.per_output;
        report.r2_mean = r2.mean;
        break;
    }
    case ModelKind::PbpMlp: {
        Eigen::MatrixXd train_features = feature_matrix(dataset, indices.train);
        // log-magnitude features, per-sample normalized: the FRF spans
        // decades, and the raw per-sample peak division leaves a rank-one
        // shift that per-feature statistics cannot remove
        const pbp::Standardizer scaler =
            pbp::Standardizer::fit_features(train_features, 1e-3, true);
        for (Eigen::Index r = 0; r < train_features.rows(); ++r) {
            train_features.row(r) = scaler.transform(train_features.row(r).transpose()).transpose();
        }
        Eigen::MatrixXd predictions(test_actuals.rows(), static_cast<Eigen::Index>(elements.size()));
        Eigen::MatrixXd actuals(test_actuals.rows(), static_cast<Eigen::Index>(elements.size()));
        for (std::size_t i = 0; i < elements.size(); ++i) {
            const int e = elements[i];
            PbpElementResult result = train_pbp_element(
                dataset, indices, train_features, scaler, pbp_cfg, e,
                seed + 17 * static_cast<std::uint64_t>(e), run_dir, config_hash);
            predictions.col(static_cast<Eigen::Index>(i)) = result.test_predictions;
            actuals.col(static_cast<Eigen::Index>(i)) = test_actuals.col(e);
            report.traces.push_back(std::move(result.trace));
        }
        const RSquared r2 = r_squared(predictions, actuals);
        report.r2_per_element = r2.per_output;
        report.r2_mean = r2.mean;
        break;
    }
    }

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

void write_training_report(const TrainingReport& report, const std::filesystem::path& run_dir) {
    std::filesystem::create_directories(run_dir);
    std::ofstream out(run_dir / "report.json");
    if (!out) {
        throw IoError("cannot write " + (run_dir / "report.json").string());
    }
    out << report.to_json().dump(2) << "\n";

    for (const auto& trace : report.traces) {
        std::ofstream csv(run_dir / ("loss-" + trace.label + ".csv"));
        if (!csv) {
            throw IoError("cannot write loss CSV for " + trace.label);
        }
        csv.precision(17);
        if (trace.loss_kind == "mean_log_z") {
            csv << "epoch,mean_log_z\n";
            for (std::size_t i = 0; i < trace.train_loss.size(); ++i) {
                csv << i << "," << trace.train_loss[i] << "\n";
            }
        } else {
            csv << "epoch,train_loss,val_loss\n";
            for (std::size_t i = 0; i < trace.train_loss.size(); ++i) {
                csv << i << "," << trace.train_loss[i] << ","
                    << (i < trace.val_loss.size() ? trace.val_loss[i] : 0.0) << "\n";
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

Eigen::MatrixXd predict_model(ModelKind kind, const std::filesystem::path& run_dir,
                              const fem::FrfDataset& dataset,
                              const std::vector<std::int64_t>& indices) {
    Eigen::MatrixXd predictions(static_cast<Eigen::Index>(indices.size()), 4);
    switch (kind) {
    case ModelKind::CnnPerElement: {
        for (int e = 0; e < 4; ++e) {
            nn::LoadedNetwork loaded =
                nn::load_network(run_dir / ("cnn-E" + std::to_string(e + 1)));
            const double mean = loaded.header.at("target_scaler").at("mean").get<double>();
            const double std = loaded.header.at("target_scaler").at("std").get<double>();
            for (std::size_t i = 0; i < indices.size(); ++i) {
                const nn::Tensor out = loaded.net.forward(cnn_input(dataset, indices[i]));
                predictions(static_cast<Eigen::Index>(i), e) = out.data[0] * std + mean;
            }
        }
        break;
    }
    case ModelKind::LstmStack: {
        LoadedLstm loaded = load_lstm_model(run_dir / "lstm");
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const Eigen::VectorXd out = loaded.model.forward(lstm_input(dataset, indices[i]));
            for (int k = 0; k < 4; ++k) {
                predictions(static_cast<Eigen::Index>(i), k) =
                    out(k) * loaded.scalers[static_cast<std::size_t>(k)].std +
                    loaded.scalers[static_cast<std::size_t>(k)].mean;
            }
        }
        break;
    }
    case ModelKind::PbpMlp: {
        for (int e = 0; e < 4; ++e) {
            const pbp::LoadedPbpModel loaded =
                pbp::load_pbp_model(run_dir / ("pbp-E" + std::to_string(e + 1)));
            for (std::size_t i = 0; i < indices.size(); ++i) {
                const auto row = dataset.feature_row(indices[i]);
                Eigen::VectorXd raw(static_cast<Eigen::Index>(row.size()));
                for (std::size_t j = 0; j < row.size(); ++j) {
                    raw(static_cast<Eigen::Index>(j)) = row[j];
                }
                predictions(static_cast<Eigen::Index>(i), e) =
                    loaded.model.predict_raw(raw).mean;
            }
        }
        break;
    }
    }
    return predictions;
}

std::vector<EvaluationRow> evaluate_all(const fem::FrfDataset& dataset, const SplitSpec& split,
                                        double pbp_test_fraction,
                                        const std::filesystem::path& cnn_dir,
                                        const std::filesystem::path& lstm_dir,
                                        const std::filesystem::path& pbp_dir) {
    std::vector<EvaluationRow> rows;

    const SplitIndices engine_split = split_dataset(dataset.manifest.n_samples, split);
    const Eigen::MatrixXd engine_actuals = target_matrix(dataset, engine_split.test);

    SplitSpec pbp_split = split;
    pbp_split.test_fraction = pbp_test_fraction;
    pbp_split.validation_fraction = 0.0;
    const SplitIndices pbp_indices = split_dataset(dataset.manifest.n_samples, pbp_split);
    const Eigen::MatrixXd pbp_actuals = target_matrix(dataset, pbp_indices.test);

    {
        const RSquared r2 = r_squared(
            predict_model(ModelKind::PbpMlp, pbp_dir, dataset, pbp_indices.test), pbp_actuals);
        rows.push_back({"PBP", r2.mean, r2.per_output});
    }
    {
        const RSquared r2 = r_squared(
            predict_model(ModelKind::LstmStack, lstm_dir, dataset, engine_split.test),
            engine_actuals);
        rows.push_back({"LSTM", r2.mean, r2.per_output});
    }
    {
        const RSquared r2 = r_squared(
            predict_model(ModelKind::CnnPerElement, cnn_dir, dataset, engine_split.test),
            engine_actuals);
        rows.push_back({"2D-CNN", r2.mean, r2.per_output});
    }

    std::sort(rows.begin(), rows.end(),
              [](const EvaluationRow& a, const EvaluationRow& b) { return a.r2_mean > b.r2_mean; });
    return rows;
}

void write_evaluation(const std::vector<EvaluationRow>& rows, const std::filesystem::path& stem) {
    json out = json::array();
    for (const auto& row : rows) {
        out.push_back(json{{"algorithm", row.algorithm},
                           {"r2_mean", row.r2_mean},
                           {"r2_per_element", row.r2_per_element}});
    }
    std::filesystem::create_directories(stem.parent_path());
    std::ofstream js(stem.string() + ".json");
    if (!js) {
        throw IoError("cannot write " + stem.string() + ".json");
    }
    js << out.dump(2) << "\n";

    std::ofstream csv(stem.string() + ".csv");
    if (!csv) {
        throw IoError("cannot write " + stem.string() + ".csv");
    }
    csv.precision(17);
    csv << "algorithm,r2_mean,r2_E1,r2_E2,r2_E3,r2_E4\n";
    for (const auto& row : rows) {
        csv << row.algorithm << "," << row.r2_mean;
        for (double v : row.r2_per_element) {
            csv << "," << v;
        }
        csv << "\n";
    }
}

// ---------------------------------------------------------------------------
// Saliency
// ---------------------------------------------------------------------------

std::vector<SaliencyEntry> top_k_inverse_gradients(const Eigen::VectorXd& raw_gradient, int k,
                                                   double epsilon) {
    const auto n = raw_gradient.size();
    if (k < 1 || k > n) {
        throw ConfigError("top-k of " + std::to_string(k) + " outside feature range " +
                          std::to_string(n));
    }
    std::vector<std::int64_t> indices(static_cast<std::size_t>(n));
    std::iota(indices.begin(), indices.end(), 0);
    auto score_of = [&](std::int64_t i) {
        const double a = std::abs(raw_gradient(i));
        return a < epsilon ? 1.0 / epsilon : 1.0 / a;
    };
    // descending score; ties resolved toward the lower index
    std::partial_sort(indices.begin(), indices.begin() + k, indices.end(),
                      [&](std::int64_t a, std::int64_t b) {
                          const double sa = score_of(a), sb = score_of(b);
                          return sa != sb ? sa > sb : a < b;
                      });
    indices.resize(static_cast<std::size_t>(k));

    // category threshold: 25th-percentile |gradient| of the selected set
    // (lower nearest rank)
    std::vector<double> magnitudes;
    magnitudes.reserve(indices.size());
    for (std::int64_t i : indices) {
        magnitudes.push_back(std::abs(raw_gradient(i)));
    }
    std::vector<double> sorted = magnitudes;
    std::sort(sorted.begin(), sorted.end());
    const double theta = sorted[static_cast<std::size_t>((k - 1) / 4)];

    std::vector<SaliencyEntry> entries;
    entries.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const std::int64_t i = indices[r];
        const double g = raw_gradient(i);
        std::string category;
        if (std::abs(g) < epsilon) {
            category = "maintain";
        } else if (g > theta) {
            category = "increase";
        } else if (g < -theta) {
            category = "decrease";
        } else {
            category = "maintain";
        }
        entries.push_back(SaliencyEntry{i, g, score_of(i), category});
    }
    return entries;
}

Eigen::VectorXd input_gradient(ModelKind kind, const std::filesystem::path& run_dir, int element,
                               const fem::FrfDataset& dataset, std::int64_t sample_id) {
    if (element < 0 || element > 3) {
        throw ConfigError("element index must be 0..3");
    }
    const std::int64_t len = dataset.manifest.feature_length;
    Eigen::VectorXd gradient(len);

    switch (kind) {
    case ModelKind::CnnPerElement: {
        nn::LoadedNetwork loaded =
            nn::load_network(run_dir / ("cnn-E" + std::to_string(element + 1)));
        const double std = loaded.header.at("target_scaler").at("std").get<double>();
        loaded.net.forward(cnn_input(dataset, sample_id));
        nn::Tensor upstream({1});
        upstream.data[0] = 1.0;
        const nn::Tensor g = loaded.net.backward(upstream);
        for (std::int64_t i = 0; i < len; ++i) {
            gradient(i) = g.data[static_cast<std::size_t>(i)] * std;
        }
        break;
    }
    case ModelKind::LstmStack: {
        LoadedLstm loaded = load_lstm_model(run_dir / "lstm");
        loaded.model.zero_grads();
        loaded.model.forward(lstm_input(dataset, sample_id));
        Eigen::VectorXd seed_grad = Eigen::VectorXd::Zero(4);
        seed_grad(element) = loaded.scalers[static_cast<std::size_t>(element)].std;
        const Eigen::MatrixXd g = loaded.model.backward(seed_grad);
        for (Eigen::Index t = 0; t < g.rows(); ++t) {
            for (Eigen::Index j = 0; j < g.cols(); ++j) {
                gradient(t * g.cols() + j) = g(t, j);
            }
        }
        break;
    }
    case ModelKind::PbpMlp: {
        const pbp::LoadedPbpModel loaded =
            pbp::load_pbp_model(run_dir / ("pbp-E" + std::to_string(element + 1)));
        const auto row = dataset.feature_row(sample_id);
        Eigen::VectorXd raw(static_cast<Eigen::Index>(row.size()));
        for (std::size_t j = 0; j < row.size(); ++j) {
            raw(static_cast<Eigen::Index>(j)) = row[j];
        }
        gradient = loaded.model.input_gradient(raw);
        break;
    }
    }
    return gradient;
}

SaliencyReport saliency(ModelKind kind, const std::filesystem::path& run_dir,
                        const fem::FrfDataset& dataset, std::int64_t sample_id, int element,
                        int k) {
    if (sample_id < 0 || sample_id >= dataset.manifest.n_samples) {
        throw ConfigError("sample-id " + std::to_string(sample_id) + " outside dataset of " +
                          std::to_string(dataset.manifest.n_samples) + " samples");
    }
    SaliencyReport report;
    report.element = element;
    report.sample_id = sample_id;
    report.top_k = k;
    report.model = to_string(kind);
    report.top = top_k_inverse_gradients(input_gradient(kind, run_dir, element, dataset, sample_id), k);
    report.actual = dataset.target_row(sample_id);
    const Eigen::MatrixXd predicted = predict_model(kind, run_dir, dataset, {sample_id});
    for (int i = 0; i < 4; ++i) {
        report.predicted[static_cast<std::size_t>(i)] = predicted(0, i);
    }
    return report;
}

json SaliencyReport::to_json() const {
    json entries = json::array();
    for (const auto& e : top) {
        entries.push_back(json{{"index", e.index},
                               {"raw_gradient", e.raw_gradient},
                               {"score", e.score},
                               {"category", e.category}});
    }
    return json{{"model", model},
                {"element", element + 1},
                {"sample_id", sample_id},
                {"top_k", top_k},
                {"entries", entries},
                {"actual_diameters", actual},
                {"predicted_diameters", predicted}};
}

std::string SaliencyReport::prediction_table() const {
    std::ostringstream out;
    out.precision(8);
    out << "                E1              E2              E3              E4\n";
    out << "actual    ";
    for (double v : actual) {
        out << "  " << std::scientific << v;
    }
    out << "\npredicted ";
    for (double v : predicted) {
        out << "  " << std::scientific << v;
    }
    out << "\n";
    return out.str();
}

void write_saliency_report(const SaliencyReport& report, const std::filesystem::path& stem) {
    std::filesystem::create_directories(stem.parent_path());
    std::ofstream js(stem.string() + ".json");
    if (!js) {
        throw IoError("cannot write " + stem.string() + ".json");
    }
    js << report.to_json().dump(2) << "\n";

    std::ofstream csv(stem.string() + ".csv");
    if (!csv) {
        throw IoError("cannot write " + stem.string() + ".csv");
    }
    csv.precision(17);
    csv << "index,raw_gradient,score,category\n";
    for (const auto& e : report.top) {
        csv << e.index << "," << e.raw_gradient << "," << e.score << "," << e.category << "\n";
    }
}

} // namespace shmlab::experiments
