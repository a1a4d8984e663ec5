#include "shmlab/commands.hpp"
#include "shmlab/errors.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

// exit codes: 0 ok, 2 configuration, 3 I/O, 4 numeric, 1 anything else
constexpr int kConfigExit = 2;
constexpr int kIoExit = 3;
constexpr int kNumericExit = 4;

struct CommonFlags {
    shmlab::cli::CliOverrides overrides;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.overrides.config_path, "JSON config file");
    cmd->add_option("--preset", flags.overrides.preset, "desk or full-paper");
    cmd->add_option("--out-dir", flags.overrides.out_dir, "output directory (default out/<preset>)");
    cmd->add_option_function<std::uint64_t>(
        "--seed",
        [&flags](std::uint64_t value) {
            flags.overrides.has_seed = true;
            flags.overrides.seed = value;
        },
        "master seed");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cantilever-beam frequency-response damage lab"};
    app.require_subcommand(1);

    CommonFlags flags;

    auto* generate = app.add_subcommand("generate", "simulate the damage dataset");
    bool force = false;
    add_common(generate, flags);
    generate->add_flag("--force", force, "overwrite an existing dataset");

    auto* train = app.add_subcommand("train", "train one model kind");
    std::string model = "cnn";
    std::string element;
    add_common(train, flags);
    train->add_option("--model", model, "pbp | cnn | lstm")->required();
    train->add_option("--element", element, "restrict per-element models to E1..E4");

    auto* evaluate = app.add_subcommand("evaluate", "score all trained models");
    add_common(evaluate, flags);

    auto* saliency = app.add_subcommand("saliency", "input-gradient attribution for one sample");
    std::string saliency_model = "cnn";
    std::string saliency_element;
    std::int64_t sample_id = 0;
    int top_k = 10;
    add_common(saliency, flags);
    saliency->add_option("--model", saliency_model, "pbp | cnn | lstm");
    saliency->add_option("--sample-id", sample_id, "dataset sample index")->required();
    saliency->add_option("--element", saliency_element, "E1..E4 (default: all)");
    saliency->add_option("--top-k", top_k, "number of reported gradients");

    auto* inspect = app.add_subcommand("inspect", "print the dataset manifest");
    std::string csv_path;
    std::int64_t csv_limit = 16;
    add_common(inspect, flags);
    inspect->add_option("--csv", csv_path, "export the first samples as CSV");
    inspect->add_option("--limit", csv_limit, "CSV sample count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigExit;
    }

    try {
        const shmlab::cli::RunConfig config = shmlab::cli::resolve_config(flags.overrides);
        if (generate->parsed()) {
            shmlab::cli::cmd_generate(config, force);
        } else if (train->parsed()) {
            shmlab::cli::cmd_train(config, model, shmlab::cli::parse_element(element));
        } else if (evaluate->parsed()) {
            shmlab::cli::cmd_evaluate(config);
        } else if (saliency->parsed()) {
            shmlab::cli::cmd_saliency(config, saliency_model, sample_id,
                                      shmlab::cli::parse_element(saliency_element), top_k);
        } else if (inspect->parsed()) {
            shmlab::cli::cmd_inspect(config, csv_path, csv_limit);
        }
    } catch (const shmlab::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kIoExit;
    } catch (const shmlab::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumericExit;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigExit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
