#pragma once

#include "shmlab/dataset.hpp"
#include "shmlab/experiments.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace shmlab::cli {

/// Declarative run settings: preset defaults, overridden by a JSON config
/// file, overridden by command-line flags.
struct RunConfig {
    std::string preset = "desk"; // desk | full-paper
    std::string out_dir;         // defaults to out/<preset>
    std::uint64_t seed = 42;

    fem::GenerationConfig dataset;
    experiments::SplitSpec split; // engine models: 70:30 test, then 70:30 validation
    double pbp_test_fraction = 0.5;
    experiments::PbpConfig pbp;
    experiments::OptimizerConfig cnn;
    experiments::OptimizerConfig lstm;

    static RunConfig make_preset(const std::string& preset);

    /// Applies the keys present in `overrides` on top of current values.
    void apply_json(const nlohmann::json& overrides);

    /// Propagates the master seed into dataset/split blocks and validates.
    void finalize();

    /// Canonical form hashed for run directories; excludes out_dir.
    nlohmann::json to_json() const;
    std::string hash() const;

    std::filesystem::path dataset_dir() const;
    std::filesystem::path run_dir(const std::string& model) const;
};

/// preset/file/flag resolution used by the CLI and tests.
struct CliOverrides {
    std::string config_path;
    std::string preset;
    std::string out_dir;
    bool has_seed = false;
    std::uint64_t seed = 0;
};

RunConfig resolve_config(const CliOverrides& overrides);

} // namespace shmlab::cli
