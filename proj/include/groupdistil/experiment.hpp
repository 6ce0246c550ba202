// SPDX-License-Identifier: Apache-2.0
//
// Multi-seed comparison: per seed, a teacher is trained with group DRO, then
// three students (vanilla KD, GroupDistil, group DRO from scratch) start from
// the same initialization. Results are summarized as mean and sample standard
// deviation across seeds.

#pragma once

#include "groupdistil/data_synth.hpp"
#include "groupdistil/trainers.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace gdistil {

struct ModelSpec {
    std::vector<std::size_t> hidden;
    Activation activation = Activation::tanh;

    /// {F, hidden..., C}
    std::vector<std::size_t> dims(std::size_t feature_dim, std::size_t num_classes) const;
};

struct ExperimentConfig {
    GroupShiftSpec data;
    ModelSpec teacher_model;
    ModelSpec student_model;
    TrainConfig teacher;
    TrainConfig kd;
    TrainConfig group_distil;
    TrainConfig dro_student;
    std::vector<std::uint64_t> seeds;
    std::string output_dir = "out";

    /// Throws ConfigError naming the failing field.
    void validate() const;
};

ExperimentConfig default_experiment_config();

/// Missing keys fall back to the defaults; unknown keys are rejected.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Seeds derived from one experiment seed.
struct SeedPlan {
    std::uint64_t teacher_init;
    std::uint64_t teacher_train;
    std::uint64_t student_init;
    std::uint64_t student_train;
};
SeedPlan seed_plan(std::uint64_t experiment_seed);

enum class Arm { kd, group_distil, dro_student };
inline constexpr Arm kStudentArms[] = {Arm::kd, Arm::group_distil, Arm::dro_student};
std::string_view to_string(Arm arm);

struct RunOutcome {
    std::uint64_t seed = 0;
    std::string arm;
    Metrics metrics;
};

struct SummaryRow {
    std::string arm;
    std::size_t num_seeds = 0;
    double worst_group_mean = 0.0;
    double worst_group_std = 0.0;
    double adjusted_average_mean = 0.0;
    double adjusted_average_std = 0.0;
    double average_mean = 0.0;
    double average_std = 0.0;
};

struct ExperimentResult {
    std::vector<RunOutcome> teachers;
    std::vector<RunOutcome> students;
    /// Student arms sorted by mean worst-group accuracy, best first.
    std::vector<SummaryRow> summary;
};

double sample_mean(std::span<const double> xs);
/// (n - 1) normalization; requires n >= 2.
double sample_stddev(std::span<const double> xs);

std::vector<SummaryRow> summarize(std::span<const RunOutcome> students);
std::string summary_to_csv(std::span<const SummaryRow> rows);
/// Aligned table in percent, "mean ± std".
std::string summary_to_text(std::span<const SummaryRow> rows);

struct ExperimentOptions {
    std::size_t jobs = 1;
    /// Directory for per-run artifacts and the summary files; nothing is
    /// written when empty.
    std::filesystem::path output_dir;
    std::ostream* progress = nullptr;
};

/// Writes partial results before rethrowing if any run fails.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentOptions& options);

}  // namespace gdistil
