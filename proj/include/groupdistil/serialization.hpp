// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats: model checkpoints (JSON), per-run step logs (CSV) and
// final metrics (JSON). Floating-point values in checkpoints and logs are
// written with 17 significant digits so they round-trip exactly.

#pragma once

#include "groupdistil/mlp.hpp"
#include "groupdistil/trainers.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

namespace gdistil {

inline constexpr int kCheckpointFormatVersion = 1;

/// {format_version, dims, hidden_activation, layers: [{weight, bias}]}
std::string checkpoint_to_json(const MlpParams& model);
/// Rejects unknown format_version and malformed layer shapes.
MlpParams checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const MlpParams& model);
MlpParams load_checkpoint(const std::filesystem::path& path);

/// Header "step,domain,loss,w_0,...,w_{D-1}".
void write_run_csv(std::ostream& out, const RunRecord& record, std::size_t num_domains);
void save_run_csv(const std::filesystem::path& path, const RunRecord& record, std::size_t num_domains);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
/// Missing keys keep the values already in `base`; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base, const std::string& where);

/// Config echo, seed and every metric field.
std::string metrics_to_json(const RunRecord& record);
void save_metrics_json(const std::filesystem::path& path, const RunRecord& record);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace gdistil
