#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "shmlab/blob_io.hpp"
#include "shmlab/dataset.hpp"
#include "shmlab/errors.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

using namespace shmlab;
using namespace shmlab::fem;

namespace {

GenerationConfig tiny_config() {
    GenerationConfig config;
    config.grid = DiameterGrid{2, 0.008, 0.012};
    config.sweep.n_points = 16;
    config.cnn_reshape = {8, 8};
    config.seed = 3;
    return config;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / ("shmlab-test-" + name)) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

} // namespace

TEST_CASE("diameter grid spans the damage range") {
    DiameterGrid grid; // 11 levels, 0.005 .. 0.015
    const std::vector<double> values = grid.values();
    REQUIRE(values.size() == 11);
    CHECK(values.front() == 0.005);
    CHECK(values.back() == 0.015);
    CHECK(values[1] - values[0] == doctest::Approx(0.001).epsilon(1e-12));

    DiameterGrid bad{1, 0.005, 0.015};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("sample counts follow the Cartesian product") {
    GenerationConfig config;
    config.grid.levels = 11;
    config.cnn_reshape = {200, 200};
    CHECK(config.n_samples() == 14641);
    CHECK(config.feature_length() == 40000);

    config.grid.levels = 5;
    config.sweep.n_points = 500;
    config.cnn_reshape = {20, 100};
    CHECK(config.n_samples() == 625);
    CHECK(config.feature_length() == 2000);
}

TEST_CASE("lexicographic sample ordering varies the last element fastest") {
    const GenerationConfig config = tiny_config();
    const auto first = sample_diameters(config, 0);
    CHECK(first == std::array<double, 4>{0.008, 0.008, 0.008, 0.008});
    const auto second = sample_diameters(config, 1);
    CHECK(second == std::array<double, 4>{0.008, 0.008, 0.008, 0.012});
    const auto last = sample_diameters(config, config.n_samples() - 1);
    CHECK(last == std::array<double, 4>{0.012, 0.012, 0.012, 0.012});
}

TEST_CASE("cnn reshape must factor the feature length") {
    GenerationConfig config = tiny_config();
    config.cnn_reshape = {7, 9};
    CHECK_THROWS_AS(config.validate(), ConfigError);
}

TEST_CASE("generation is deterministic and worker-count independent") {
    const GenerationConfig config = tiny_config();
    const FrfDataset one = generate_dataset(config, 1);
    const FrfDataset again = generate_dataset(config, 1);
    const FrfDataset parallel = generate_dataset(config, 3);

    CHECK(one.manifest.n_samples == 16);
    CHECK(one.manifest.feature_length == 64);
    CHECK(one.features == again.features);
    CHECK(one.features == parallel.features);
    CHECK(one.targets == parallel.targets);

    // every row is a real sample: spot-check against a direct build
    BeamModel model;
    model.material = config.material;
    model.diameters = sample_diameters(config, 5);
    const FrfSample direct = build_sample(model, config.sweep, config.normalization);
    const auto row = one.feature_row(5);
    for (std::size_t i = 0; i < row.size(); ++i) {
        CHECK(row[i] == static_cast<float>(direct.features[i]));
    }
}

TEST_CASE("manifest round-trips through JSON") {
    const GenerationConfig config = tiny_config();
    DatasetManifest manifest;
    manifest.config = config;
    manifest.n_samples = config.n_samples();
    manifest.feature_length = config.feature_length();

    const DatasetManifest parsed = DatasetManifest::from_json(manifest.to_json());
    CHECK(parsed.to_json() == manifest.to_json());
}

TEST_CASE("streaming and in-memory writers produce identical bytes") {
    const GenerationConfig config = tiny_config();
    TempDir dir_a("stream"), dir_b("memory");

    generate_dataset_files(config, dir_a.path, 2);
    write_dataset(generate_dataset(config), dir_b.path);

    CHECK(files_identical(dir_a.path / "features.f32", dir_b.path / "features.f32"));
    CHECK(files_identical(dir_a.path / "targets.f32", dir_b.path / "targets.f32"));
    CHECK(files_identical(dir_a.path / "manifest.json", dir_b.path / "manifest.json"));

    const FrfDataset loaded = load_dataset(dir_a.path);
    CHECK(loaded.manifest.n_samples == 16);
    CHECK(loaded.features.size() == 16u * 64u);
    CHECK(loaded.targets.size() == 64u);
}

TEST_CASE("regeneration from the same manifest is byte-identical") {
    const GenerationConfig config = tiny_config();
    TempDir dir_a("regen-a"), dir_b("regen-b");
    generate_dataset_files(config, dir_a.path, 2);

    const DatasetManifest manifest = load_manifest(dir_a.path);
    generate_dataset_files(manifest.config, dir_b.path, 1);
    CHECK(files_identical(dir_a.path / "features.f32", dir_b.path / "features.f32"));
    CHECK(files_identical(dir_a.path / "targets.f32", dir_b.path / "targets.f32"));
    CHECK(files_identical(dir_a.path / "manifest.json", dir_b.path / "manifest.json"));
}

TEST_CASE("existing datasets are not overwritten without force") {
    const GenerationConfig config = tiny_config();
    TempDir dir("force");
    generate_dataset_files(config, dir.path, 1);
    CHECK_THROWS_AS(generate_dataset_files(config, dir.path, 1), IoError);
    CHECK_NOTHROW(generate_dataset_files(config, dir.path, 1, true));
}

TEST_CASE("csv export matches between streaming and in-memory variants") {
    const GenerationConfig config = tiny_config();
    TempDir dir("csv");
    const FrfDataset dataset = generate_dataset(config);
    write_dataset(dataset, dir.path);

    export_csv(dataset, dir.path / "mem.csv", 3);
    export_csv(dir.path, dir.path / "stream.csv", 3);
    CHECK(files_identical(dir.path / "mem.csv", dir.path / "stream.csv"));

    std::ifstream csv(dir.path / "mem.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header.rfind("sample,d1,d2,d3,d4,f0,", 0) == 0);
}
