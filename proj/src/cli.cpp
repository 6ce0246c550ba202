// SPDX-License-Identifier: Apache-2.0

#include "groupdistil/cli.hpp"

#include "groupdistil/data_synth.hpp"
#include "groupdistil/error.hpp"
#include "groupdistil/experiment.hpp"
#include "groupdistil/rng.hpp"
#include "groupdistil/serialization.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>

namespace gdistil {

namespace fs = std::filesystem;

namespace {

/// Runs body and maps exception families onto exit codes.
template <class Body>
int guarded(std::ostream& err, Body&& body) {
    try {
        return body();
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}

void print_counts(std::ostream& out, const char* name, const Dataset& data) {
    out << name << " group counts:";
    for (std::size_t c : data.group_counts()) {
        out << ' ' << c;
    }
    out << '\n';
}

}  // namespace

int cmd_gen_data(const fs::path& config_path, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const ExperimentConfig cfg = load_experiment_config(config_path);
        const DataSplits splits = generate(cfg.data);
        fs::create_directories(out_dir);
        save_dataset(out_dir / "train.csv", splits.train);
        save_dataset(out_dir / "test.csv", splits.test);
        print_counts(out, "train", splits.train);
        print_counts(out, "test", splits.test);
        return kExitOk;
    });
}

int cmd_train(const TrainCommand& command, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() -> int {
        const Method method = method_from_string(command.method);
        if (method == Method::erm) {
            throw ConfigError("--method must be group_dro, kd or group_distil");
        }
        const bool distil = method == Method::kd || method == Method::group_distil;
        if (distil && !command.teacher_checkpoint) {
            err << "usage error: --method " << command.method << " requires --teacher\n";
            return kExitUsage;
        }
        if (!distil && command.teacher_checkpoint) {
            err << "usage error: --method group_dro does not take --teacher\n";
            return kExitUsage;
        }
        if (command.role != "student" && command.role != "teacher") {
            err << "usage error: --role must be student or teacher\n";
            return kExitUsage;
        }
        const bool as_teacher = command.role == "teacher";
        if (as_teacher && distil) {
            err << "usage error: a teacher is trained with --method group_dro\n";
            return kExitUsage;
        }

        const ExperimentConfig cfg = load_experiment_config(command.config_path);
        DataSplits data = command.data_dir
                              ? DataSplits{load_dataset(*command.data_dir / "train.csv"),
                                           load_dataset(*command.data_dir / "test.csv")}
                              : generate(cfg.data);

        TrainConfig tc = as_teacher                       ? cfg.teacher
                         : method == Method::kd           ? cfg.kd
                         : method == Method::group_distil ? cfg.group_distil
                                                          : cfg.dro_student;
        const ModelSpec& spec = as_teacher ? cfg.teacher_model : cfg.student_model;
        const SeedPlan plan = seed_plan(command.seed);
        tc.seed = as_teacher ? plan.teacher_train : plan.student_train;
        Rng init_rng(as_teacher ? plan.teacher_init : plan.student_init);
        const MlpParams init = init_mlp(spec.dims(data.train.features.cols(), data.train.num_classes),
                                        spec.activation, init_rng);

        TrainResult result = [&] {
            if (!distil) {
                return train_group_dro(init, data.train, tc);
            }
            const MlpParams teacher = load_checkpoint(*command.teacher_checkpoint);
            if (teacher.input_dim() != init.input_dim() || teacher.output_dim() != init.output_dim()) {
                throw ConfigError("teacher checkpoint dims (" + std::to_string(teacher.input_dim()) + " -> " +
                                  std::to_string(teacher.output_dim()) + ") do not match the student (" +
                                  std::to_string(init.input_dim()) + " -> " + std::to_string(init.output_dim()) +
                                  ")");
            }
            return method == Method::kd ? train_kd(init, teacher, data.train, tc)
                                        : train_group_distil(init, teacher, data.train, tc);
        }();
        result.record.metrics = evaluate(result.params, data.test, cfg.data.train_group_proportions);

        fs::create_directories(command.out_dir);
        save_checkpoint(command.out_dir / "checkpoint.json", result.params);
        save_run_csv(command.out_dir / "run.csv", result.record, data.train.num_domains());
        save_metrics_json(command.out_dir / "metrics.json", result.record);
        const Metrics& m = *result.record.metrics;
        out << command.method << " seed " << command.seed << ": worst-group " << m.worst_group_accuracy
            << ", average " << m.average_accuracy << ", adjusted average " << m.adjusted_average_accuracy << '\n';
        return kExitOk;
    });
}

int cmd_experiment(const fs::path& config_path, std::optional<std::size_t> jobs, std::optional<fs::path> out_dir,
                   std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const ExperimentConfig cfg = load_experiment_config(config_path);
        ExperimentOptions options;
        options.output_dir = out_dir ? *out_dir : fs::path(cfg.output_dir);
        options.progress = &err;
        options.jobs = 1;
        if (jobs) {
            options.jobs = *jobs;
        } else if (const char* env = std::getenv("GROUPDISTIL_JOBS")) {
            try {
                options.jobs = std::stoul(env);
            } catch (const std::exception&) {
                throw ConfigError("GROUPDISTIL_JOBS must be a positive integer");
            }
        }
        if (options.jobs == 0) {
            throw ConfigError("--jobs must be positive");
        }
        const ExperimentResult result = run_experiment(cfg, options);
        out << summary_to_text(result.summary);
        return kExitOk;
    });
}

int cmd_print_config(std::ostream& out) {
    out << experiment_config_to_json(default_experiment_config()).dump(2) << '\n';
    return kExitOk;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Group-robust knowledge distillation on a synthetic sub-population shift benchmark"};
    app.require_subcommand(1);

    std::string config;
    std::string out_dir;

    auto* gen = app.add_subcommand("gen-data", "Generate train.csv and test.csv from a config");
    gen->add_option("config", config, "Experiment config (JSON)")->required();
    gen->add_option("--out", out_dir, "Output directory")->required();

    TrainCommand train_cmd;
    std::string teacher;
    std::string data_dir;
    auto* train = app.add_subcommand("train", "Train one model and write checkpoint, run log and metrics");
    train->add_option("config", config, "Experiment config (JSON)")->required();
    train->add_option("--method", train_cmd.method, "group_dro | kd | group_distil")->required();
    train->add_option("--teacher", teacher, "Teacher checkpoint (kd, group_distil)");
    train->add_option("--seed", train_cmd.seed, "Run seed");
    train->add_option("--out", out_dir, "Output directory")->required();
    train->add_option("--role", train_cmd.role, "student | teacher (architecture and settings)");
    train->add_option("--data", data_dir, "Directory with train.csv/test.csv instead of generating");

    std::size_t jobs = 0;
    auto* experiment = app.add_subcommand("experiment", "Run the multi-seed comparison");
    experiment->add_option("config", config, "Experiment config (JSON)")->required();
    auto* jobs_opt = experiment->add_option("--jobs", jobs, "Parallel runs (overrides GROUPDISTIL_JOBS)");
    auto* exp_out = experiment->add_option("--out", out_dir, "Output directory (overrides output_dir)");

    app.add_subcommand("print-config", "Print the default experiment config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (gen->parsed()) {
        return cmd_gen_data(config, out_dir, std::cout, std::cerr);
    }
    if (train->parsed()) {
        train_cmd.config_path = config;
        train_cmd.out_dir = out_dir;
        if (!teacher.empty()) {
            train_cmd.teacher_checkpoint = teacher;
        }
        if (!data_dir.empty()) {
            train_cmd.data_dir = data_dir;
        }
        return cmd_train(train_cmd, std::cout, std::cerr);
    }
    if (experiment->parsed()) {
        return cmd_experiment(config, *jobs_opt ? std::optional<std::size_t>(jobs) : std::nullopt,
                              *exp_out ? std::optional<fs::path>(out_dir) : std::nullopt, std::cout, std::cerr);
    }
    return cmd_print_config(std::cout);
}

}  // namespace gdistil
