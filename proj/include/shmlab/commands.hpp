#pragma once

#include "shmlab/config.hpp"

#include <cstdint>
#include <string>

namespace shmlab::cli {

/// Generates the dataset files for the configured preset. Refuses to
/// overwrite an existing dataset unless `force` is set.
void cmd_generate(const RunConfig& config, bool force);

/// Trains `model` (pbp | cnn | lstm); `element` of -1 trains all four
/// networks of per-element models. Writes checkpoints, report.json and
/// loss CSVs into the content-addressed run directory.
void cmd_train(const RunConfig& config, const std::string& model, int element = -1);

/// Scores every trained model on its held-out split and writes the summary
/// table (JSON + CSV), sorted by descending score.
void cmd_evaluate(const RunConfig& config);

/// Input-gradient attribution for one sample; `element` of -1 covers all
/// four elements. Emits per-element CSV/JSON plus an actual-vs-predicted
/// block on stdout.
void cmd_saliency(const RunConfig& config, const std::string& model, std::int64_t sample_id,
                  int element = -1, int top_k = 10);

/// Prints the dataset manifest; optionally exports the first `limit`
/// samples as CSV.
void cmd_inspect(const RunConfig& config, const std::string& csv_path = "",
                 std::int64_t limit = 16);

/// "E1".."E4" (or plain 1..4) to 0-based index; -1 for the empty string.
int parse_element(const std::string& element);

} // namespace shmlab::cli
