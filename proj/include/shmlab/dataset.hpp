#pragma once

#include "shmlab/frf.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace shmlab::fem {

/// Equally spaced damage levels applied per element diameter.
struct DiameterGrid {
    int levels = 11;
    double d_min = 0.005; // m
    double d_max = 0.015; // m

    void validate() const;
    std::vector<double> values() const;
};

/// Everything needed to regenerate a dataset bit-identically.
struct GenerationConfig {
    DiameterGrid grid;
    SweepConfig sweep;
    Material material;
    double length_total = 1.0;
    Normalization normalization = Normalization::MaxAbs;
    std::uint64_t seed = 0;
    std::array<int, 2> cnn_reshape{200, 200};

    void validate() const;
    std::int64_t n_samples() const;
    std::int64_t feature_length() const;
};

struct DatasetManifest {
    int format_version = 1;
    std::int64_t n_samples = 0;
    std::int64_t feature_length = 0;
    GenerationConfig config;
    std::string features_file = "features.f32";
    std::string targets_file = "targets.f32";

    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j);
};

/// In-memory dataset: row-major float32 features and 4-wide targets.
struct FrfDataset {
    DatasetManifest manifest;
    std::vector<float> features; // n_samples x feature_length
    std::vector<float> targets;  // n_samples x 4

    std::span<const float> feature_row(std::int64_t i) const;
    std::array<double, 4> target_row(std::int64_t i) const;
};

/// Diameters of sample `index` under lexicographic ordering (element 1
/// varies slowest).
std::array<double, 4> sample_diameters(const GenerationConfig& config, std::int64_t index);

/// Generates the full Cartesian-product dataset in memory.
FrfDataset generate_dataset(const GenerationConfig& config, int workers = 0);

/// Streaming variant for large presets: rows are written straight to
/// `dir/features.f32` without holding the matrix in memory. Produces the
/// same bytes as generate_dataset + write_dataset.
DatasetManifest generate_dataset_files(const GenerationConfig& config,
                                       const std::filesystem::path& dir, int workers = 0,
                                       bool force = false);

void write_dataset(const FrfDataset& dataset, const std::filesystem::path& dir,
                   bool force = false);
FrfDataset load_dataset(const std::filesystem::path& dir);
DatasetManifest load_manifest(const std::filesystem::path& dir);

/// Dumps up to `limit` samples as CSV (sample id, targets, features).
void export_csv(const FrfDataset& dataset, const std::filesystem::path& csv_path,
                std::int64_t limit = 16);

/// Streaming variant reading rows straight from the dataset files, so large
/// presets need not fit in memory.
void export_csv(const std::filesystem::path& dataset_dir, const std::filesystem::path& csv_path,
                std::int64_t limit = 16);

/// Worker count from SHMLAB_WORKERS, else hardware concurrency.
int default_workers();

} // namespace shmlab::fem
