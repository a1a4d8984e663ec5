#include "shmlab/commands.hpp"

#include "shmlab/errors.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>

namespace shmlab::cli {

using nlohmann::json;

namespace {

// Timestamps are confined to the log file so that every other artifact is
// byte-reproducible.
void append_log(const std::filesystem::path& dir, const std::string& line) {
    std::filesystem::create_directories(dir);
    std::ofstream log(dir / "run.log", std::ios::app);
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%F %T", std::gmtime(&t));
    log << stamp << " " << line << "\n";
}

void require_manifest_matches(const fem::DatasetManifest& manifest, const RunConfig& config) {
    const json on_disk = manifest.to_json();
    fem::DatasetManifest expected;
    expected.config = config.dataset;
    expected.n_samples = config.dataset.n_samples();
    expected.feature_length = config.dataset.feature_length();
    const json wanted = expected.to_json();
    if (on_disk == wanted) {
        return;
    }
    std::string diff;
    for (const auto& [key, value] : wanted.items()) {
        if (!on_disk.contains(key) || on_disk.at(key) != value) {
            diff += "\n  " + key + ": dataset has " +
                    (on_disk.contains(key) ? on_disk.at(key).dump() : "<missing>") +
                    ", config wants " + value.dump();
        }
    }
    throw ConfigError("dataset manifest does not match the configuration:" + diff +
                      "\nregenerate with `shmlab generate --force` or adjust the config");
}

fem::FrfDataset load_matching_dataset(const RunConfig& config) {
    fem::DatasetManifest manifest;
    try {
        manifest = fem::load_manifest(config.dataset_dir());
    } catch (const IoError&) {
        throw IoError("no dataset at " + config.dataset_dir().string() +
                      "; run `shmlab generate` first");
    }
    require_manifest_matches(manifest, config);
    return fem::load_dataset(config.dataset_dir());
}

experiments::SplitSpec split_for(const RunConfig& config, experiments::ModelKind kind) {
    experiments::SplitSpec split = config.split;
    if (kind == experiments::ModelKind::PbpMlp) {
        split.test_fraction = config.pbp_test_fraction;
        split.validation_fraction = 0.0;
    }
    split.seed = config.seed;
    return split;
}

void write_config_echo(const RunConfig& config, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "config.json");
    json echoed = config.to_json();
    echoed["config_hash"] = config.hash();
    out << echoed.dump(2) << "\n";
}

} // namespace

int parse_element(const std::string& element) {
    if (element.empty()) {
        return -1;
    }
    std::string digits = element;
    if (digits.size() == 2 && (digits[0] == 'E' || digits[0] == 'e')) {
        digits = digits.substr(1);
    }
    if (digits.size() == 1 && digits[0] >= '1' && digits[0] <= '4') {
        return digits[0] - '1';
    }
    throw ConfigError("element must be E1..E4, got '" + element + "'");
}

void cmd_generate(const RunConfig& config, bool force) {
    const auto t0 = std::chrono::steady_clock::now();
    const fem::DatasetManifest manifest =
        fem::generate_dataset_files(config.dataset, config.dataset_dir(), 0, force);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    append_log(config.dataset_dir(), "generate completed in " + std::to_string(seconds) + " s");
    std::cout << manifest.n_samples << " samples x " << manifest.feature_length
              << " features -> " << config.dataset_dir().string() << "\n";
}

void cmd_train(const RunConfig& config, const std::string& model, int element) {
    const experiments::ModelKind kind = experiments::model_kind_from_string(model);
    const fem::FrfDataset dataset = load_matching_dataset(config);
    const auto run_dir = config.run_dir(model);

    const experiments::TrainingReport report =
        experiments::train_model(kind, dataset, split_for(config, kind),
                                 kind == experiments::ModelKind::LstmStack ? config.lstm
                                                                           : config.cnn,
                                 config.pbp, config.seed, run_dir, config.hash(), element);
    experiments::write_training_report(report, run_dir);
    write_config_echo(config, run_dir);
    append_log(run_dir,
               "train " + model + " finished in " + std::to_string(report.wall_seconds) + " s");

    std::cout << "trained " << model << " (run " << run_dir.string() << ")\n";
    for (std::size_t i = 0; i < report.r2_per_element.size(); ++i) {
        const std::string label = i < report.traces.size() && report.traces.size() > 1
                                      ? report.traces[i].label
                                      : "E" + std::to_string(i + 1);
        std::cout << "  R2[" << label << "] = " << report.r2_per_element[i] << "\n";
    }
    std::cout << "  R2 mean = " << report.r2_mean << "\n";
}

void cmd_evaluate(const RunConfig& config) {
    const fem::FrfDataset dataset = load_matching_dataset(config);
    const auto cnn_dir = config.run_dir("cnn");
    const auto lstm_dir = config.run_dir("lstm");
    const auto pbp_dir = config.run_dir("pbp");
    for (const auto& [model, dir] :
         {std::pair{"cnn", cnn_dir}, {"lstm", lstm_dir}, {"pbp", pbp_dir}}) {
        if (!std::filesystem::exists(dir)) {
            throw IoError(std::string("no trained ") + model + " checkpoint for this config; run `shmlab train --model " +
                          model + "` first");
        }
    }

    const auto rows = experiments::evaluate_all(dataset, split_for(config, experiments::ModelKind::CnnPerElement),
                                                config.pbp_test_fraction, cnn_dir, lstm_dir, pbp_dir);
    const auto stem = std::filesystem::path(config.out_dir) / ("evaluation-" + config.hash());
    experiments::write_evaluation(rows, stem);

    std::cout << "algorithm    test R2\n";
    for (const auto& row : rows) {
        std::cout << row.algorithm;
        for (std::size_t i = row.algorithm.size(); i < 13; ++i) {
            std::cout << ' ';
        }
        std::cout << row.r2_mean << "\n";
    }
    std::cout << "written to " << stem.string() << ".{json,csv}\n";
}

void cmd_saliency(const RunConfig& config, const std::string& model, std::int64_t sample_id,
                  int element, int top_k) {
    const experiments::ModelKind kind = experiments::model_kind_from_string(model);
    const fem::FrfDataset dataset = load_matching_dataset(config);
    const auto run_dir = config.run_dir(model);
    if (!std::filesystem::exists(run_dir)) {
        throw IoError("no trained " + model + " checkpoint for this config; run `shmlab train --model " +
                      model + "` first");
    }

    std::vector<int> elements;
    if (element >= 0) {
        elements.push_back(element);
    } else {
        elements = {0, 1, 2, 3};
    }
    for (int e : elements) {
        const experiments::SaliencyReport report =
            experiments::saliency(kind, run_dir, dataset, sample_id, e, top_k);
        const auto stem = run_dir / ("saliency-E" + std::to_string(e + 1) + "-sample" +
                                     std::to_string(sample_id));
        experiments::write_saliency_report(report, stem);
        std::cout << "E" << e + 1 << " top-" << top_k << " indices:";
        for (const auto& entry : report.top) {
            std::cout << " " << entry.index;
        }
        std::cout << "\n";
        if (e == elements.back()) {
            std::cout << report.prediction_table();
        }
    }
}

void cmd_inspect(const RunConfig& config, const std::string& csv_path, std::int64_t limit) {
    const fem::DatasetManifest manifest = fem::load_manifest(config.dataset_dir());
    std::cout << manifest.to_json().dump(2) << "\n";
    if (!csv_path.empty()) {
        fem::export_csv(config.dataset_dir(), csv_path, limit);
        std::cout << "wrote " << std::min<std::int64_t>(limit, manifest.n_samples)
                  << " samples to " << csv_path << "\n";
    }
}

} // namespace shmlab::cli
