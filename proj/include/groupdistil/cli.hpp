// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the `groupdistil` executable. Each returns
// a process exit code: 0 success, 2 usage or configuration, 3 numeric
// failure during training, 4 I/O.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace gdistil {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;

int cmd_gen_data(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
                 std::ostream& out, std::ostream& err);

struct TrainCommand {
    std::filesystem::path config_path;
    std::string method;
    std::optional<std::filesystem::path> teacher_checkpoint;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir;
    /// "student" or "teacher": which architecture and train settings to use.
    std::string role = "student";
    /// Directory holding train.csv / test.csv; generated from the config when unset.
    std::optional<std::filesystem::path> data_dir;
};

int cmd_train(const TrainCommand& command, std::ostream& out, std::ostream& err);

int cmd_experiment(const std::filesystem::path& config_path, std::optional<std::size_t> jobs,
                   std::optional<std::filesystem::path> out_dir, std::ostream& out, std::ostream& err);

int cmd_print_config(std::ostream& out);

/// Parses argv and dispatches to the commands above.
int run_cli(int argc, char** argv);

}  // namespace gdistil
