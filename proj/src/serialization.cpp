// SPDX-License-Identifier: Apache-2.0

#include "groupdistil/serialization.hpp"

#include "format.hpp"
#include "groupdistil/error.hpp"

#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

namespace gdistil {

using nlohmann::json;

namespace {

void write_row(std::ostringstream& out, std::span<const double> values) {
    out << '[';
    for (std::size_t i = 0; i < values.size(); ++i) {
        out << (i ? ", " : "") << detail::format_double(values[i]);
    }
    out << ']';
}

}  // namespace

std::string checkpoint_to_json(const MlpParams& model) {
    std::ostringstream out;
    out << "{\n  \"format_version\": " << kCheckpointFormatVersion << ",\n  \"dims\": [";
    const auto dims = model.dims();
    for (std::size_t i = 0; i < dims.size(); ++i) {
        out << (i ? ", " : "") << dims[i];
    }
    out << "],\n  \"hidden_activation\": \"" << to_string(model.hidden_activation()) << "\",\n  \"layers\": [\n";
    for (std::size_t k = 0; k < model.num_layers(); ++k) {
        const auto& layer = model.layer(k);
        out << "    {\n      \"weight\": [\n";
        for (std::size_t r = 0; r < layer.weight.rows(); ++r) {
            out << "        ";
            write_row(out, layer.weight.row(r));
            out << (r + 1 < layer.weight.rows() ? ",\n" : "\n");
        }
        out << "      ],\n      \"bias\": ";
        write_row(out, layer.bias.row(0));
        out << "\n    }" << (k + 1 < model.num_layers() ? ",\n" : "\n");
    }
    out << "  ]\n}\n";
    return out.str();
}

MlpParams checkpoint_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kCheckpointFormatVersion) {
            throw ConfigError("unsupported checkpoint format_version " + std::to_string(version));
        }
        const auto dims = j.at("dims").get<std::vector<std::size_t>>();
        const Activation act = activation_from_string(j.at("hidden_activation").get<std::string>());
        const auto& layers_json = j.at("layers");
        if (dims.size() < 2 || layers_json.size() != dims.size() - 1) {
            throw ConfigError("checkpoint dims and layers disagree");
        }
        std::vector<DenseLayer> layers;
        for (std::size_t k = 0; k < layers_json.size(); ++k) {
            const auto rows = layers_json[k].at("weight").get<std::vector<std::vector<double>>>();
            const auto bias = layers_json[k].at("bias").get<std::vector<double>>();
            if (rows.size() != dims[k] || bias.size() != dims[k + 1]) {
                throw ConfigError("checkpoint layer " + std::to_string(k) + " does not match dims");
            }
            std::vector<double> flat;
            flat.reserve(dims[k] * dims[k + 1]);
            for (const auto& r : rows) {
                if (r.size() != dims[k + 1]) {
                    throw ConfigError("checkpoint layer " + std::to_string(k) + " has a ragged weight row");
                }
                flat.insert(flat.end(), r.begin(), r.end());
            }
            layers.push_back({Matrix(dims[k], dims[k + 1], std::move(flat)), Matrix(1, dims[k + 1], bias)});
        }
        return MlpParams(std::move(layers), act);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed checkpoint: ") + e.what());
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << text;
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

void save_checkpoint(const std::filesystem::path& path, const MlpParams& model) {
    write_text_file(path, checkpoint_to_json(model));
}

MlpParams load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_text_file(path)); }

void write_run_csv(std::ostream& out, const RunRecord& record, std::size_t num_domains) {
    out << "step,domain,loss";
    for (std::size_t d = 0; d < num_domains; ++d) {
        out << ",w_" << d;
    }
    out << '\n';
    for (const auto& row : record.rows) {
        out << row.step << ',' << row.domain << ',' << detail::format_double(row.loss);
        for (double w : row.weights) {
            out << ',' << detail::format_double(w);
        }
        out << '\n';
    }
}

void save_run_csv(const std::filesystem::path& path, const RunRecord& record, std::size_t num_domains) {
    std::ostringstream ss;
    write_run_csv(ss, record, num_domains);
    write_text_file(path, ss.str());
}

json train_config_to_json(const TrainConfig& cfg) {
    return json{
        {"method", std::string(to_string(cfg.method))},
        {"steps", cfg.steps},
        {"batch_size", cfg.batch_size},
        {"alpha", cfg.kd.alpha},
        {"tau", cfg.kd.tau},
        {"eta_w", cfg.eg.eta_w},
        {"optimizer", std::string(to_string(cfg.opt.kind))},
        {"eta_theta", cfg.opt.eta_theta},
        {"beta1", cfg.opt.beta1},
        {"beta2", cfg.opt.beta2},
        {"adam_eps", cfg.opt.eps},
        {"seed", cfg.seed},
        {"log_every", cfg.log_every},
    };
}

TrainConfig train_config_from_json(const json& j, TrainConfig base, const std::string& where) {
    if (!j.is_object()) {
        throw ConfigError(where + " must be an object");
    }
    static const std::set<std::string> known = {"method", "steps",  "batch_size", "alpha", "tau",
                                                "eta_w",  "optimizer", "eta_theta", "beta1", "beta2",
                                                "adam_eps", "seed", "log_every"};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) {
            throw ConfigError(where + "." + key + ": unknown key");
        }
    }
    const auto field = [&](const char* key, auto& target) {
        if (!j.contains(key)) {
            return;
        }
        try {
            j.at(key).get_to(target);
        } catch (const json::exception&) {
            throw ConfigError(where + "." + key + ": wrong type");
        }
    };
    try {
        if (j.contains("method")) {
            base.method = method_from_string(j.at("method").get<std::string>());
        }
        if (j.contains("optimizer")) {
            base.opt.kind = optimizer_from_string(j.at("optimizer").get<std::string>());
        }
    } catch (const json::exception&) {
        throw ConfigError(where + ": method and optimizer must be strings");
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    }
    field("steps", base.steps);
    field("batch_size", base.batch_size);
    field("alpha", base.kd.alpha);
    field("tau", base.kd.tau);
    field("eta_w", base.eg.eta_w);
    field("eta_theta", base.opt.eta_theta);
    field("beta1", base.opt.beta1);
    field("beta2", base.opt.beta2);
    field("adam_eps", base.opt.eps);
    field("seed", base.seed);
    field("log_every", base.log_every);
    try {
        base.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return base;
}

std::string metrics_to_json(const RunRecord& record) {
    if (!record.metrics) {
        throw ContractError("run record has no metrics");
    }
    const Metrics& m = *record.metrics;
    const json j{
        {"config", train_config_to_json(record.config)},
        {"seed", record.seed},
        {"per_group_accuracy", m.per_group_accuracy},
        {"worst_group_accuracy", m.worst_group_accuracy},
        {"average_accuracy", m.average_accuracy},
        {"adjusted_average_accuracy", m.adjusted_average_accuracy},
    };
    return j.dump(2) + "\n";
}

void save_metrics_json(const std::filesystem::path& path, const RunRecord& record) {
    write_text_file(path, metrics_to_json(record));
}

}  // namespace gdistil
