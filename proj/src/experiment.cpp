// SPDX-License-Identifier: Apache-2.0

#include "groupdistil/experiment.hpp"

#include "format.hpp"
#include "groupdistil/error.hpp"
#include "groupdistil/rng.hpp"
#include "groupdistil/serialization.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace gdistil {

using nlohmann::json;

std::vector<std::size_t> ModelSpec::dims(std::size_t feature_dim, std::size_t num_classes) const {
    std::vector<std::size_t> d{feature_dim};
    d.insert(d.end(), hidden.begin(), hidden.end());
    d.push_back(num_classes);
    return d;
}

std::string_view to_string(Arm arm) {
    switch (arm) {
        case Arm::kd: return "kd";
        case Arm::group_distil: return "group_distil";
        case Arm::dro_student: return "dro_student";
    }
    return "unknown";
}

namespace {

const TrainConfig& arm_config(const ExperimentConfig& cfg, Arm arm) {
    switch (arm) {
        case Arm::kd: return cfg.kd;
        case Arm::group_distil: return cfg.group_distil;
        case Arm::dro_student: return cfg.dro_student;
    }
    throw ConfigError("unknown arm");
}

void validate_arm(const TrainConfig& t, Method expected, const std::string& name) {
    if (t.method != expected) {
        throw ConfigError(name + ".method must be " + std::string(to_string(expected)));
    }
    try {
        t.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(name + ": " + e.what());
    }
}

}  // namespace

void ExperimentConfig::validate() const {
    data.validate();
    for (const auto* m : {&teacher_model, &student_model}) {
        for (std::size_t h : m->hidden) {
            if (h == 0) {
                throw ConfigError(std::string(m == &teacher_model ? "teacher_model" : "student_model") +
                                  ".hidden sizes must be positive");
            }
        }
    }
    validate_arm(teacher, Method::group_dro, "teacher");
    validate_arm(kd, Method::kd, "kd");
    validate_arm(group_distil, Method::group_distil, "group_distil");
    validate_arm(dro_student, Method::group_dro, "dro_student");
    if (seeds.size() < 2) {
        throw ConfigError("seeds: at least 2 seeds are needed for a standard deviation");
    }
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
        throw ConfigError("seeds must be distinct");
    }
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig cfg;
    // Small students on a 30-epoch budget: long enough to fit the majority
    // groups, short enough that pooled distillation still leans on the
    // spurious feature.
    cfg.teacher_model = {{32}, Activation::tanh};
    cfg.student_model = {{8}, Activation::tanh};

    TrainConfig base;
    base.batch_size = 128;
    base.kd = {0.9, 4.0};
    base.eg = {0.01};
    base.opt = OptConfig{OptimizerKind::adam, 5e-4, 0.9, 0.999, 1e-8};
    base.log_every = 10;

    cfg.teacher = base;
    cfg.teacher.method = Method::group_dro;
    cfg.teacher.steps = 6000;
    cfg.teacher.opt.eta_theta = 2e-4;

    base.steps = steps_for_epochs(30, cfg.data.n_train, base.batch_size);
    cfg.kd = base;
    cfg.kd.method = Method::kd;
    cfg.group_distil = base;
    cfg.group_distil.method = Method::group_distil;
    cfg.dro_student = base;
    cfg.dro_student.method = Method::group_dro;

    cfg.seeds = {1, 2, 3, 4, 5};
    cfg.output_dir = "out";
    return cfg;
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) {
        throw ConfigError(where + " must be an object");
    }
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) {
            throw ConfigError((where.empty() ? key : where + "." + key) + ": unknown key");
        }
    }
}

template <class T>
void read_field(const json& j, const char* key, T& target, const std::string& where) {
    if (!j.contains(key)) {
        return;
    }
    try {
        j.at(key).get_to(target);
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

GroupShiftSpec data_from_json(const json& j, GroupShiftSpec spec) {
    reject_unknown(j,
                   {"num_classes", "num_spurious", "feature_dim", "core_margin", "spurious_margin", "noise_std",
                    "train_group_proportions", "n_train", "n_test_per_group", "seed"},
                   "data");
    read_field(j, "num_classes", spec.num_classes, "data");
    read_field(j, "num_spurious", spec.num_spurious, "data");
    read_field(j, "feature_dim", spec.feature_dim, "data");
    read_field(j, "core_margin", spec.core_margin, "data");
    read_field(j, "spurious_margin", spec.spurious_margin, "data");
    read_field(j, "noise_std", spec.noise_std, "data");
    read_field(j, "train_group_proportions", spec.train_group_proportions, "data");
    read_field(j, "n_train", spec.n_train, "data");
    read_field(j, "n_test_per_group", spec.n_test_per_group, "data");
    read_field(j, "seed", spec.seed, "data");
    return spec;
}

json data_to_json(const GroupShiftSpec& s) {
    return json{{"num_classes", s.num_classes},
                {"num_spurious", s.num_spurious},
                {"feature_dim", s.feature_dim},
                {"core_margin", s.core_margin},
                {"spurious_margin", s.spurious_margin},
                {"noise_std", s.noise_std},
                {"train_group_proportions", s.train_group_proportions},
                {"n_train", s.n_train},
                {"n_test_per_group", s.n_test_per_group},
                {"seed", s.seed}};
}

ModelSpec model_from_json(const json& j, ModelSpec m, const std::string& where) {
    reject_unknown(j, {"hidden", "activation"}, where);
    read_field(j, "hidden", m.hidden, where);
    if (j.contains("activation")) {
        std::string name;
        read_field(j, "activation", name, where);
        try {
            m.activation = activation_from_string(name);
        } catch (const ConfigError& e) {
            throw ConfigError(where + ".activation: " + e.what());
        }
    }
    return m;
}

json model_to_json(const ModelSpec& m) {
    return json{{"hidden", m.hidden}, {"activation", std::string(to_string(m.activation))}};
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& j) {
    reject_unknown(j,
                   {"data", "teacher_model", "student_model", "teacher", "kd", "group_distil", "dro_student", "seeds",
                    "output_dir"},
                   "");
    ExperimentConfig cfg = default_experiment_config();
    if (j.contains("data")) {
        cfg.data = data_from_json(j.at("data"), cfg.data);
    }
    if (j.contains("teacher_model")) {
        cfg.teacher_model = model_from_json(j.at("teacher_model"), cfg.teacher_model, "teacher_model");
    }
    if (j.contains("student_model")) {
        cfg.student_model = model_from_json(j.at("student_model"), cfg.student_model, "student_model");
    }
    for (auto [key, target] : {std::pair{"teacher", &cfg.teacher}, std::pair{"kd", &cfg.kd},
                               std::pair{"group_distil", &cfg.group_distil}, std::pair{"dro_student", &cfg.dro_student}}) {
        if (j.contains(key)) {
            *target = train_config_from_json(j.at(key), *target, key);
        }
    }
    read_field(j, "seeds", cfg.seeds, "config");
    read_field(j, "output_dir", cfg.output_dir, "config");
    cfg.validate();
    return cfg;
}

json experiment_config_to_json(const ExperimentConfig& cfg) {
    return json{{"data", data_to_json(cfg.data)},
                {"teacher_model", model_to_json(cfg.teacher_model)},
                {"student_model", model_to_json(cfg.student_model)},
                {"teacher", train_config_to_json(cfg.teacher)},
                {"kd", train_config_to_json(cfg.kd)},
                {"group_distil", train_config_to_json(cfg.group_distil)},
                {"dro_student", train_config_to_json(cfg.dro_student)},
                {"seeds", cfg.seeds},
                {"output_dir", cfg.output_dir}};
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
    return experiment_config_from_json(j);
}

SeedPlan seed_plan(std::uint64_t experiment_seed) {
    return {derive_seed(experiment_seed, 1), derive_seed(experiment_seed, 2), derive_seed(experiment_seed, 3),
            derive_seed(experiment_seed, 4)};
}

double sample_mean(std::span<const double> xs) {
    if (xs.empty()) {
        throw MetricError("mean of an empty sample");
    }
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_stddev(std::span<const double> xs) {
    if (xs.size() < 2) {
        throw MetricError("sample standard deviation needs at least 2 values");
    }
    const double mean = sample_mean(xs);
    double ss = 0.0;
    for (double x : xs) {
        ss += (x - mean) * (x - mean);
    }
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

std::vector<SummaryRow> summarize(std::span<const RunOutcome> students) {
    std::vector<std::string> arms;
    for (const auto& r : students) {
        if (std::find(arms.begin(), arms.end(), r.arm) == arms.end()) {
            arms.push_back(r.arm);
        }
    }
    std::vector<SummaryRow> rows;
    for (const auto& arm : arms) {
        std::vector<double> worst, adjusted, average;
        for (const auto& r : students) {
            if (r.arm == arm) {
                worst.push_back(r.metrics.worst_group_accuracy);
                adjusted.push_back(r.metrics.adjusted_average_accuracy);
                average.push_back(r.metrics.average_accuracy);
            }
        }
        rows.push_back({arm, worst.size(), sample_mean(worst), sample_stddev(worst), sample_mean(adjusted),
                        sample_stddev(adjusted), sample_mean(average), sample_stddev(average)});
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const SummaryRow& a, const SummaryRow& b) { return a.worst_group_mean > b.worst_group_mean; });
    return rows;
}

std::string summary_to_csv(std::span<const SummaryRow> rows) {
    std::ostringstream out;
    out << "arm,n_seeds,worst_group_mean,worst_group_std,adjusted_average_mean,adjusted_average_std,"
           "average_mean,average_std\n";
    for (const auto& r : rows) {
        out << r.arm << ',' << r.num_seeds << ',' << detail::format_double(r.worst_group_mean) << ','
            << detail::format_double(r.worst_group_std) << ',' << detail::format_double(r.adjusted_average_mean) << ','
            << detail::format_double(r.adjusted_average_std) << ',' << detail::format_double(r.average_mean) << ','
            << detail::format_double(r.average_std) << '\n';
    }
    return out.str();
}

std::string summary_to_text(std::span<const SummaryRow> rows) {
    const auto pm = [](double mean, double stddev) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(1) << 100.0 * mean << " ± " << 100.0 * stddev;
        return s.str();
    };
    std::ostringstream out;
    out << std::left << std::setw(14) << "setup" << std::setw(24) << "worst-group acc. (%)" << std::setw(26)
        << "adjusted avg acc. (%)"
        << "average acc. (%)\n";
    for (const auto& r : rows) {
        // "±" is two bytes in UTF-8; pad by display width
        const std::string w = pm(r.worst_group_mean, r.worst_group_std);
        const std::string a = pm(r.adjusted_average_mean, r.adjusted_average_std);
        out << std::left << std::setw(14) << r.arm << w << std::string(w.size() < 25 ? 25 - w.size() : 1, ' ') << a
            << std::string(a.size() < 27 ? 27 - a.size() : 1, ' ') << pm(r.average_mean, r.average_std) << '\n';
    }
    return out.str();
}

namespace {

struct Job {
    std::size_t seed_index;
    std::optional<Arm> arm;  // empty for the teacher
};

struct JobOutput {
    std::optional<MlpParams> params;
    RunRecord record;
    bool done = false;
};

/// Runs fn(i) for i in [0, count) on up to `jobs` threads. The first
/// exception is rethrown after all workers stop; remaining jobs are skipped.
template <class Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn&& fn) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::atomic<bool> failed{false};
    const auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count || failed.load()) {
                return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                failed.store(true);
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, count));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

std::string partial_results_csv(const ExperimentConfig& cfg, std::span<const JobOutput> teachers,
                                std::span<const JobOutput> students) {
    std::ostringstream out;
    out << "seed,arm,status,worst_group_accuracy,adjusted_average_accuracy,average_accuracy\n";
    const auto line = [&](std::uint64_t seed, std::string_view arm, const JobOutput& o) {
        out << seed << ',' << arm << ',';
        if (o.done && o.record.metrics) {
            const Metrics& m = *o.record.metrics;
            out << "done," << detail::format_double(m.worst_group_accuracy) << ','
                << detail::format_double(m.adjusted_average_accuracy) << ','
                << detail::format_double(m.average_accuracy) << '\n';
        } else {
            out << "incomplete,,,\n";
        }
    };
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
        line(cfg.seeds[s], "teacher", teachers[s]);
        for (std::size_t a = 0; a < std::size(kStudentArms); ++a) {
            line(cfg.seeds[s], to_string(kStudentArms[a]), students[s * std::size(kStudentArms) + a]);
        }
    }
    return out.str();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentOptions& options) {
    cfg.validate();
    const DataSplits data = generate(cfg.data);
    const auto teacher_dims = cfg.teacher_model.dims(cfg.data.feature_dim, cfg.data.num_classes);
    const auto student_dims = cfg.student_model.dims(cfg.data.feature_dim, cfg.data.num_classes);
    const auto& proportions = cfg.data.train_group_proportions;
    const std::size_t num_seeds = cfg.seeds.size();
    constexpr std::size_t num_arms = std::size(kStudentArms);

    std::mutex io_mutex;
    const auto report = [&](const std::string& line) {
        if (options.progress != nullptr) {
            std::lock_guard lock(io_mutex);
            *options.progress << line << '\n' << std::flush;
        }
    };
    const bool write_files = !options.output_dir.empty();
    const auto run_dir = [&](std::uint64_t seed, std::string_view name) {
        return options.output_dir / ("seed_" + std::to_string(seed)) / std::string(name);
    };
    const auto persist = [&](const std::filesystem::path& dir, const MlpParams& params, const RunRecord& record) {
        std::filesystem::create_directories(dir);
        save_checkpoint(dir / "checkpoint.json", params);
        save_run_csv(dir / "run.csv", record, cfg.data.num_classes * cfg.data.num_spurious);
        save_metrics_json(dir / "metrics.json", record);
    };

    std::vector<JobOutput> teachers(num_seeds);
    std::vector<JobOutput> students(num_seeds * num_arms);

    try {
        parallel_for(num_seeds, options.jobs, [&](std::size_t s) {
            const std::uint64_t seed = cfg.seeds[s];
            const SeedPlan plan = seed_plan(seed);
            Rng init_rng(plan.teacher_init);
            const MlpParams init = init_mlp(teacher_dims, cfg.teacher_model.activation, init_rng);
            TrainConfig tc = cfg.teacher;
            tc.seed = plan.teacher_train;
            TrainResult result = train_group_dro(init, data.train, tc);
            result.record.metrics = evaluate(result.params, data.test, proportions);
            if (write_files) {
                persist(run_dir(seed, "teacher"), result.params, result.record);
            }
            report("seed " + std::to_string(seed) + " teacher: worst-group " +
                   detail::format_double(result.record.metrics->worst_group_accuracy));
            teachers[s] = {std::move(result.params), std::move(result.record), true};
        });

        parallel_for(num_seeds * num_arms, options.jobs, [&](std::size_t job) {
            const std::size_t s = job / num_arms;
            const Arm arm = kStudentArms[job % num_arms];
            const std::uint64_t seed = cfg.seeds[s];
            const SeedPlan plan = seed_plan(seed);
            Rng init_rng(plan.student_init);
            const MlpParams init = init_mlp(student_dims, cfg.student_model.activation, init_rng);
            TrainConfig tc = arm_config(cfg, arm);
            tc.seed = plan.student_train;
            const MlpParams& teacher = *teachers[s].params;
            TrainResult result = arm == Arm::kd             ? train_kd(init, teacher, data.train, tc)
                                 : arm == Arm::group_distil ? train_group_distil(init, teacher, data.train, tc)
                                                            : train_group_dro(init, data.train, tc);
            result.record.metrics = evaluate(result.params, data.test, proportions);
            if (write_files) {
                persist(run_dir(seed, to_string(arm)), result.params, result.record);
            }
            report("seed " + std::to_string(seed) + " " + std::string(to_string(arm)) + ": worst-group " +
                   detail::format_double(result.record.metrics->worst_group_accuracy));
            students[job] = {std::move(result.params), std::move(result.record), true};
        });
    } catch (...) {
        if (write_files) {
            try {
                std::filesystem::create_directories(options.output_dir);
                write_text_file(options.output_dir / "summary_partial.csv",
                                partial_results_csv(cfg, teachers, students));
            } catch (const std::exception& e) {
                report(std::string("could not write partial results: ") + e.what());
            }
        }
        throw;
    }

    ExperimentResult result;
    for (std::size_t s = 0; s < num_seeds; ++s) {
        result.teachers.push_back({cfg.seeds[s], "teacher", *teachers[s].record.metrics});
        for (std::size_t a = 0; a < num_arms; ++a) {
            result.students.push_back(
                {cfg.seeds[s], std::string(to_string(kStudentArms[a])), *students[s * num_arms + a].record.metrics});
        }
    }
    result.summary = summarize(result.students);
    if (write_files) {
        std::filesystem::create_directories(options.output_dir);
        write_text_file(options.output_dir / "summary.csv", summary_to_csv(result.summary));
        write_text_file(options.output_dir / "summary.txt", summary_to_text(result.summary));
    }
    return result;
}

}  // namespace gdistil
