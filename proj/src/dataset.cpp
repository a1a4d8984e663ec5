#include "shmlab/dataset.hpp"

#include "shmlab/blob_io.hpp"
#include "shmlab/errors.hpp"

#include <nlohmann/json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

namespace shmlab::fem {

using nlohmann::json;

void DiameterGrid::validate() const {
    if (levels < 2) {
        throw ConfigError("diameter grid needs at least 2 levels");
    }
    if (!(d_min > 0.0) || !(d_max > d_min)) {
        throw ConfigError("diameter grid requires 0 < d_min < d_max");
    }
}

std::vector<double> DiameterGrid::values() const {
    validate();
    std::vector<double> v(levels);
    const double step = (d_max - d_min) / (levels - 1);
    for (int i = 0; i < levels; ++i) {
        v[i] = d_min + step * i;
    }
    v.back() = d_max;
    return v;
}

void GenerationConfig::validate() const {
    grid.validate();
    sweep.validate();
    material.validate();
    if (!(length_total > 0.0)) {
        throw ConfigError("length_total must be positive");
    }
    if (cnn_reshape[0] < 1 || cnn_reshape[1] < 1) {
        throw ConfigError("cnn_reshape dims must be positive");
    }
    if (static_cast<std::int64_t>(cnn_reshape[0]) * cnn_reshape[1] != feature_length()) {
        throw ConfigError("cnn_reshape dims must multiply to the feature length");
    }
}

std::int64_t GenerationConfig::n_samples() const {
    std::int64_t n = 1;
    for (int e = 0; e < BeamModel::kElements; ++e) {
        n *= grid.levels;
    }
    return n;
}

std::int64_t GenerationConfig::feature_length() const {
    return static_cast<std::int64_t>(sweep.n_points) * sweep.response_nodes.size();
}

json DatasetManifest::to_json() const {
    return json{
        {"format_version", format_version},
        {"n_samples", n_samples},
        {"feature_length", feature_length},
        {"grid",
         {{"levels", config.grid.levels}, {"d_min", config.grid.d_min}, {"d_max", config.grid.d_max}}},
        {"sweep",
         {{"omega_min", config.sweep.omega_min},
          {"omega_max", config.sweep.omega_max},
          {"n_points", config.sweep.n_points},
          {"spacing", to_string(config.sweep.spacing)},
          {"excitation_node", config.sweep.excitation_node},
          {"excitation_amplitude", config.sweep.excitation_amplitude}}},
        {"node_order", config.sweep.response_nodes},
        {"material",
         {{"youngs_modulus", config.material.youngs_modulus},
          {"density", config.material.density},
          {"loss_factor", config.material.loss_factor}}},
        {"length_total", config.length_total},
        {"normalization", to_string(config.normalization)},
        {"sample_order", "lexicographic"},
        {"seed", config.seed},
        {"cnn_reshape", config.cnn_reshape},
        {"features_file", features_file},
        {"targets_file", targets_file},
    };
}

DatasetManifest DatasetManifest::from_json(const json& j) {
    DatasetManifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != 1) {
        throw IoError("unsupported dataset format_version " + std::to_string(m.format_version));
    }
    m.n_samples = j.at("n_samples").get<std::int64_t>();
    m.feature_length = j.at("feature_length").get<std::int64_t>();
    m.config.grid.levels = j.at("grid").at("levels").get<int>();
    m.config.grid.d_min = j.at("grid").at("d_min").get<double>();
    m.config.grid.d_max = j.at("grid").at("d_max").get<double>();
    m.config.sweep.omega_min = j.at("sweep").at("omega_min").get<double>();
    m.config.sweep.omega_max = j.at("sweep").at("omega_max").get<double>();
    m.config.sweep.n_points = j.at("sweep").at("n_points").get<int>();
    m.config.sweep.spacing = grid_spacing_from_string(j.at("sweep").at("spacing").get<std::string>());
    m.config.sweep.excitation_node = j.at("sweep").at("excitation_node").get<int>();
    m.config.sweep.excitation_amplitude = j.at("sweep").at("excitation_amplitude").get<double>();
    m.config.sweep.response_nodes = j.at("node_order").get<std::vector<int>>();
    m.config.material.youngs_modulus = j.at("material").at("youngs_modulus").get<double>();
    m.config.material.density = j.at("material").at("density").get<double>();
    m.config.material.loss_factor = j.at("material").at("loss_factor").get<double>();
    m.config.length_total = j.at("length_total").get<double>();
    m.config.normalization = normalization_from_string(j.at("normalization").get<std::string>());
    m.config.seed = j.at("seed").get<std::uint64_t>();
    m.config.cnn_reshape = j.at("cnn_reshape").get<std::array<int, 2>>();
    m.features_file = j.at("features_file").get<std::string>();
    m.targets_file = j.at("targets_file").get<std::string>();
    return m;
}

std::span<const float> FrfDataset::feature_row(std::int64_t i) const {
    return std::span<const float>(features.data() + i * manifest.feature_length,
                                  static_cast<std::size_t>(manifest.feature_length));
}

std::array<double, 4> FrfDataset::target_row(std::int64_t i) const {
    std::array<double, 4> t;
    for (int k = 0; k < 4; ++k) {
        t[k] = targets[i * 4 + k];
    }
    return t;
}

std::array<double, 4> sample_diameters(const GenerationConfig& config, std::int64_t index) {
    const std::vector<double> levels = config.grid.values();
    const auto n = static_cast<std::int64_t>(levels.size());
    std::array<double, 4> d{};
    for (int e = BeamModel::kElements - 1; e >= 0; --e) {
        d[e] = levels[static_cast<std::size_t>(index % n)];
        index /= n;
    }
    return d;
}

int default_workers() {
    if (const char* env = std::getenv("SHMLAB_WORKERS")) {
        const int n = std::atoi(env);
        if (n >= 1) {
            return n;
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

DatasetManifest make_manifest(const GenerationConfig& config) {
    config.validate();
    DatasetManifest m;
    m.config = config;
    m.n_samples = config.n_samples();
    m.feature_length = config.feature_length();
    return m;
}

// Computes sample `index` into `row` (feature_length floats).
void compute_row(const GenerationConfig& config, std::int64_t index, float* row,
                 float* target_out) {
    BeamModel model;
    model.length_total = config.length_total;
    model.material = config.material;
    model.diameters = sample_diameters(config, index);
    const FrfSample sample = build_sample(model, config.sweep, config.normalization);
    for (std::size_t i = 0; i < sample.features.size(); ++i) {
        row[i] = static_cast<float>(sample.features[i]);
    }
    for (int k = 0; k < 4; ++k) {
        target_out[k] = static_cast<float>(sample.targets[k]);
    }
}

// Runs fn(sample_index) across a worker pool; each index is processed
// exactly once. Output slots are disjoint per index, so scheduling order
// cannot affect the result.
template <typename Fn>
void parallel_for_samples(std::int64_t n, int workers, Fn&& fn) {
    if (workers <= 1) {
        for (std::int64_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            try {
                while (true) {
                    const std::int64_t i = next.fetch_add(1);
                    if (i >= n) {
                        break;
                    }
                    fn(i);
                }
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
                next.store(n);
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

void ensure_absent_or_force(const std::filesystem::path& dir, bool force) {
    const auto manifest_path = dir / "manifest.json";
    if (std::filesystem::exists(manifest_path) && !force) {
        throw IoError("dataset already exists at " + dir.string() + "; pass --force to overwrite");
    }
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& dir) {
    std::ofstream out(dir / "manifest.json");
    if (!out) {
        throw IoError("cannot write manifest in " + dir.string());
    }
    out << manifest.to_json().dump(2) << "\n";
}

} // namespace

FrfDataset generate_dataset(const GenerationConfig& config, int workers) {
    FrfDataset dataset;
    dataset.manifest = make_manifest(config);
    const std::int64_t n = dataset.manifest.n_samples;
    const std::int64_t len = dataset.manifest.feature_length;
    dataset.features.resize(static_cast<std::size_t>(n * len));
    dataset.targets.resize(static_cast<std::size_t>(n * 4));

    if (workers <= 0) {
        workers = default_workers();
    }
    parallel_for_samples(n, workers, [&](std::int64_t i) {
        compute_row(config, i, dataset.features.data() + i * len, dataset.targets.data() + i * 4);
    });
    return dataset;
}

DatasetManifest generate_dataset_files(const GenerationConfig& config,
                                       const std::filesystem::path& dir, int workers,
                                       bool force) {
    const DatasetManifest manifest = make_manifest(config);
    ensure_absent_or_force(dir, force);
    std::filesystem::create_directories(dir);

    if (workers <= 0) {
        workers = default_workers();
    }
    const std::int64_t n = manifest.n_samples;
    const std::int64_t len = manifest.feature_length;
    const auto features_path = dir / manifest.features_file;

    const int fd = ::open(features_path.c_str(), O_CREAT | O_WRONLY | O_TRUNC, 0644);
    if (fd < 0) {
        throw IoError("cannot open " + features_path.string());
    }
    if (::ftruncate(fd, static_cast<off_t>(n * len * sizeof(float))) != 0) {
        ::close(fd);
        throw IoError("cannot size " + features_path.string());
    }

    std::vector<float> targets(static_cast<std::size_t>(n * 4));
    try {
        parallel_for_samples(n, workers, [&](std::int64_t i) {
            std::vector<float> row(static_cast<std::size_t>(len));
            compute_row(config, i, row.data(), targets.data() + i * 4);
            const auto bytes = static_cast<std::size_t>(len) * sizeof(float);
            const auto offset = static_cast<off_t>(i * len * sizeof(float));
            if (::pwrite(fd, row.data(), bytes, offset) != static_cast<ssize_t>(bytes)) {
                throw IoError("short write in " + features_path.string());
            }
        });
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);

    write_f32_blob(dir / manifest.targets_file, targets.data(), targets.size());
    write_manifest(manifest, dir);
    return manifest;
}

void write_dataset(const FrfDataset& dataset, const std::filesystem::path& dir, bool force) {
    ensure_absent_or_force(dir, force);
    std::filesystem::create_directories(dir);
    write_f32_blob(dir / dataset.manifest.features_file, dataset.features.data(),
                   dataset.features.size());
    write_f32_blob(dir / dataset.manifest.targets_file, dataset.targets.data(),
                   dataset.targets.size());
    write_manifest(dataset.manifest, dir);
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) {
        throw IoError("no dataset manifest at " + (dir / "manifest.json").string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("malformed manifest: " + std::string(e.what()));
    }
    return DatasetManifest::from_json(j);
}

FrfDataset load_dataset(const std::filesystem::path& dir) {
    FrfDataset dataset;
    dataset.manifest = load_manifest(dir);
    dataset.features = read_f32_blob(dir / dataset.manifest.features_file);
    dataset.targets = read_f32_blob(dir / dataset.manifest.targets_file);
    const auto expect_features =
        static_cast<std::size_t>(dataset.manifest.n_samples * dataset.manifest.feature_length);
    const auto expect_targets = static_cast<std::size_t>(dataset.manifest.n_samples * 4);
    if (dataset.features.size() != expect_features || dataset.targets.size() != expect_targets) {
        throw IoError("dataset blobs disagree with manifest dimensions in " + dir.string());
    }
    return dataset;
}

void export_csv(const FrfDataset& dataset, const std::filesystem::path& csv_path,
                std::int64_t limit) {
    std::ofstream out(csv_path);
    if (!out) {
        throw IoError("cannot write " + csv_path.string());
    }
    out << "sample,d1,d2,d3,d4";
    for (std::int64_t f = 0; f < dataset.manifest.feature_length; ++f) {
        out << ",f" << f;
    }
    out << "\n";
    const std::int64_t n = std::min<std::int64_t>(limit, dataset.manifest.n_samples);
    out.precision(9);
    for (std::int64_t i = 0; i < n; ++i) {
        out << i;
        for (int k = 0; k < 4; ++k) {
            out << "," << dataset.targets[i * 4 + k];
        }
        for (float v : dataset.feature_row(i)) {
            out << "," << v;
        }
        out << "\n";
    }
    if (!out) {
        throw IoError("short write: " + csv_path.string());
    }
}

void export_csv(const std::filesystem::path& dataset_dir, const std::filesystem::path& csv_path,
                std::int64_t limit) {
    const DatasetManifest manifest = load_manifest(dataset_dir);
    std::ifstream features(dataset_dir / manifest.features_file, std::ios::binary);
    std::ifstream targets(dataset_dir / manifest.targets_file, std::ios::binary);
    if (!features || !targets) {
        throw IoError("dataset blobs missing in " + dataset_dir.string());
    }
    std::ofstream out(csv_path);
    if (!out) {
        throw IoError("cannot write " + csv_path.string());
    }
    out << "sample,d1,d2,d3,d4";
    for (std::int64_t f = 0; f < manifest.feature_length; ++f) {
        out << ",f" << f;
    }
    out << "\n";
    out.precision(9);

    const std::int64_t n = std::min<std::int64_t>(limit, manifest.n_samples);
    std::vector<float> row(static_cast<std::size_t>(manifest.feature_length));
    float target[4];
    for (std::int64_t i = 0; i < n; ++i) {
        features.read(reinterpret_cast<char*>(row.data()),
                      static_cast<std::streamsize>(row.size() * sizeof(float)));
        targets.read(reinterpret_cast<char*>(target), sizeof(target));
        if (!features || !targets) {
            throw IoError("dataset blobs shorter than manifest row count");
        }
        out << i;
        for (float t : target) {
            out << "," << t;
        }
        for (float v : row) {
            out << "," << v;
        }
        out << "\n";
    }
    if (!out) {
        throw IoError("short write: " + csv_path.string());
    }
}

} // namespace shmlab::fem
