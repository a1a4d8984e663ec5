#pragma once

#include "shmlab/dataset.hpp"
#include "shmlab/network.hpp"
#include "shmlab/pbp.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace shmlab::experiments {

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitSpec {
    double test_fraction = 0.30;
    /// Fraction of the remaining training pool; 0 disables the validation set.
    double validation_fraction = 0.30;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SplitIndices {
    std::vector<std::int64_t> train, validation, test;
};

/// Seeded permutation split: test = floor(test_fraction * N) samples,
/// validation = floor(validation_fraction * (N - test)) of the rest.
SplitIndices split_dataset(std::int64_t n_samples, const SplitSpec& spec);

// ---------------------------------------------------------------------------
// Architectures
// ---------------------------------------------------------------------------

enum class ModelKind { PbpMlp, CnnPerElement, LstmStack };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// One convolution block of the per-element tables; pool_extent 0 means no
/// pooling after the convolution.
struct CnnBlock {
    int filters;
    int extent;
    int pool_extent;
};

struct ArchitectureSpec {
    ModelKind kind = ModelKind::CnnPerElement;
    int element = 0;                   // 0-based element id for per-element models
    std::array<int, 2> input_dims{0, 0}; // CNN reshape (rows, cols)
    std::vector<CnnBlock> blocks;      // CNN conv/pool chain, conv1 same-padded
    std::int64_t feature_length = 0;
    int lstm_steps = 4;
    int lstm_input_dim = 0;
    std::vector<int> lstm_hidden{32, 16, 4};
    int pbp_hidden = 64;
};

/// Per-element CNN chain for the given input grid, ending in global average
/// pooling and a single-neuron dense head. The 200x200 grid uses the
/// four-element reference tables; smaller grids use a compact chain that
/// keeps the same block structure.
ArchitectureSpec build_cnn(int element, std::array<int, 2> input_dims);

/// Sequence (4, feature_length/4) into stacked LSTM layers 32/16/4 with a
/// linear readout to the four diameters.
ArchitectureSpec build_lstm(std::int64_t feature_length);

/// Instantiates and seeds the CNN described by `spec`.
nn::Sequential make_cnn_network(const ArchitectureSpec& spec, std::uint64_t seed);

/// Spatial trace (input shape first) of the CNN chain; throws ConfigError
/// naming the offending layer when the shape algebra fails.
std::vector<std::vector<std::int64_t>> cnn_shape_trace(const ArchitectureSpec& spec);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct RSquared {
    std::vector<double> per_output;
    double mean = 0.0;
};

/// R^2 = 1 - SSE/SST per output column plus the unweighted mean.
RSquared r_squared(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& actuals);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct OptimizerConfig {
    double learning_rate = 1e-3;
    int batch_size = 32;
    int max_epochs = 200;
    int patience = 10; // epochs without validation improvement before stopping
};

struct PbpConfig {
    int hidden_units = 64;
    int epochs = 10;
};

/// Loss curves for one trained network ("element" for per-element models).
struct ElementTrace {
    std::string label;             // E1..E4 or "all"
    std::string loss_kind;         // "mse" or "mean_log_z"
    std::vector<double> train_loss;
    std::vector<double> val_loss;  // empty when no validation split exists
};

struct TrainingReport {
    std::string model;
    std::vector<ElementTrace> traces;
    std::vector<double> r2_per_element; // held-out, original units
    double r2_mean = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;
    double wall_seconds = 0.0; // log-only; excluded from to_json()

    nlohmann::json to_json() const;
};

/// Trains the requested model kind, writes checkpoints under `run_dir`, and
/// scores the held-out split. `element` restricts per-element models to one
/// element (-1 trains all four).
TrainingReport train_model(ModelKind kind, const fem::FrfDataset& dataset,
                           const SplitSpec& split, const OptimizerConfig& optimizer,
                           const PbpConfig& pbp, std::uint64_t seed,
                           const std::filesystem::path& run_dir, const std::string& config_hash,
                           int element = -1);

void write_training_report(const TrainingReport& report, const std::filesystem::path& run_dir);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvaluationRow {
    std::string algorithm; // PBP | LSTM | 2D-CNN
    double r2_mean;
    std::vector<double> r2_per_element;
};

/// Held-out scores for every trained model kind found under `run_dirs`
/// (model kind -> run directory), sorted descending by score.
std::vector<EvaluationRow> evaluate_all(const fem::FrfDataset& dataset,
                                        const SplitSpec& split, double pbp_test_fraction,
                                        const std::filesystem::path& cnn_dir,
                                        const std::filesystem::path& lstm_dir,
                                        const std::filesystem::path& pbp_dir);

void write_evaluation(const std::vector<EvaluationRow>& rows, const std::filesystem::path& stem);

// ---------------------------------------------------------------------------
// Saliency
// ---------------------------------------------------------------------------

struct SaliencyEntry {
    std::int64_t index;
    double raw_gradient;
    double score; // abs(1/gradient), capped at 1/epsilon
    std::string category; // increase | decrease | maintain
};

struct SaliencyReport {
    int element = 0; // 0-based
    std::int64_t sample_id = 0;
    int top_k = 10;
    std::string model;
    std::vector<SaliencyEntry> top; // sorted descending by score
    std::array<double, 4> actual{};
    std::array<double, 4> predicted{};

    nlohmann::json to_json() const;
    /// Two-row actual/predicted block across E1..E4.
    std::string prediction_table() const;
};

/// abs(1/g) scoring: gradients below `epsilon` in magnitude are capped (and
/// always categorized as maintain). The category threshold is the
/// 25th-percentile |gradient| within the selected top-k set.
std::vector<SaliencyEntry> top_k_inverse_gradients(const Eigen::VectorXd& raw_gradient, int k,
                                                   double epsilon = 1e-12);

/// Gradient of one trained model's predicted diameter w.r.t. the raw input
/// features. For the CNN/PBP this is the per-element model; for the LSTM the
/// gradient of output `element`.
Eigen::VectorXd input_gradient(ModelKind kind, const std::filesystem::path& run_dir, int element,
                               const fem::FrfDataset& dataset, std::int64_t sample_id);

SaliencyReport saliency(ModelKind kind, const std::filesystem::path& run_dir,
                        const fem::FrfDataset& dataset, std::int64_t sample_id, int element,
                        int k = 10);

void write_saliency_report(const SaliencyReport& report, const std::filesystem::path& stem);

// ---------------------------------------------------------------------------
// Model I/O helpers shared by training, evaluation and saliency
// ---------------------------------------------------------------------------

struct TargetScaler {
    double mean = 0.0;
    double std = 1.0;
};

/// Predictions (original units) of a trained model over the given sample
/// indices, one row per sample, four columns.
Eigen::MatrixXd predict_model(ModelKind kind, const std::filesystem::path& run_dir,
                              const fem::FrfDataset& dataset,
                              const std::vector<std::int64_t>& indices);

/// (H, W, 1) tensor view of one sample under the manifest reshape.
nn::Tensor cnn_input(const fem::FrfDataset& dataset, std::int64_t sample);

/// (steps, feature_length/steps) sequence view of one sample.
Eigen::MatrixXd lstm_input(const fem::FrfDataset& dataset, std::int64_t sample, int steps = 4);

} // namespace shmlab::experiments
