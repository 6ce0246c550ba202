// SPDX-License-Identifier: Apache-2.0

#include "groupdistil/mlp.hpp"

#include "groupdistil/error.hpp"
#include "groupdistil/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace gdistil {

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
    }
    return "unknown";
}

Activation activation_from_string(std::string_view name) {
    if (name == "tanh") {
        return Activation::tanh;
    }
    if (name == "relu") {
        return Activation::relu;
    }
    throw ConfigError("unknown hidden_activation '" + std::string(name) + "' (expected tanh or relu)");
}

MlpParams::MlpParams(std::vector<DenseLayer> layers, Activation hidden_activation)
    : layers_(std::move(layers)), activation_(hidden_activation) {
    if (layers_.empty()) {
        throw ShapeError("model needs at least one layer");
    }
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const auto& l = layers_[k];
        const std::string name = "layer " + std::to_string(k);
        if (l.weight.rows() == 0 || l.weight.cols() == 0) {
            throw ShapeError(name + ": empty weight " + l.weight.shape_string());
        }
        if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols()) {
            throw ShapeError(name + ": bias " + l.bias.shape_string() + " does not match weight " +
                             l.weight.shape_string());
        }
        if (k > 0 && layers_[k - 1].weight.cols() != l.weight.rows()) {
            throw ShapeError(name + ": expects " + std::to_string(l.weight.rows()) + " inputs but layer " +
                             std::to_string(k - 1) + " produces " + std::to_string(layers_[k - 1].weight.cols()));
        }
    }
}

MlpParams MlpParams::zeros(std::span<const std::size_t> dims, Activation hidden_activation) {
    if (dims.size() < 2) {
        throw ShapeError("dims must list at least input and output sizes");
    }
    std::vector<DenseLayer> layers;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        layers.push_back({Matrix(dims[k], dims[k + 1]), Matrix(1, dims[k + 1])});
    }
    return MlpParams(std::move(layers), hidden_activation);
}

std::vector<std::size_t> MlpParams::dims() const {
    std::vector<std::size_t> d{input_dim()};
    for (const auto& l : layers_) {
        d.push_back(l.weight.cols());
    }
    return d;
}

std::size_t MlpParams::num_parameters() const {
    std::size_t n = 0;
    for (const auto& l : layers_) {
        n += l.weight.size() + l.bias.size();
    }
    return n;
}

namespace {

template <class Layers>
auto collect_blocks(Layers& layers) {
    using Span = decltype(layers.front().weight.values());
    std::vector<Span> out;
    out.reserve(layers.size() * 2);
    for (auto& l : layers) {
        out.push_back(l.weight.values());
        out.push_back(l.bias.values());
    }
    return out;
}

void apply_activation(Matrix& m, Activation a) {
    for (double& v : m.values()) {
        v = a == Activation::tanh ? std::tanh(v) : (v > 0.0 ? v : 0.0);
    }
}

}  // namespace

std::vector<std::span<double>> MlpParams::blocks() { return collect_blocks(layers_); }
std::vector<std::span<const double>> MlpParams::blocks() const { return collect_blocks(layers_); }

ParamGrads ParamGrads::zeros_like(const MlpParams& model) {
    ParamGrads g;
    for (std::size_t k = 0; k < model.num_layers(); ++k) {
        const auto& l = model.layer(k);
        g.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()), Matrix(1, l.bias.cols())});
    }
    return g;
}

std::vector<std::span<double>> ParamGrads::blocks() { return collect_blocks(layers); }
std::vector<std::span<const double>> ParamGrads::blocks() const { return collect_blocks(layers); }

bool ParamGrads::all_finite() const {
    for (const auto& l : layers) {
        if (!l.weight.all_finite() || !l.bias.all_finite()) {
            return false;
        }
    }
    return true;
}

namespace {

void check_input(const MlpParams& model, const Matrix& features) {
    if (features.rows() == 0) {
        throw ShapeError("layer 0: empty batch");
    }
    if (features.cols() != model.input_dim()) {
        throw ShapeError("layer 0: expects " + std::to_string(model.input_dim()) + " input features, got " +
                         std::to_string(features.cols()));
    }
}

Matrix affine(const DenseLayer& layer, const Matrix& input) {
    Matrix out = matmul(input, layer.weight);
    add_row_inplace(out, layer.bias);
    return out;
}

}  // namespace

Matrix predict_logits(const MlpParams& model, const Matrix& features) {
    check_input(model, features);
    Matrix h = affine(model.layer(0), features);
    for (std::size_t k = 1; k < model.num_layers(); ++k) {
        apply_activation(h, model.hidden_activation());
        h = affine(model.layer(k), h);
    }
    if (!h.all_finite()) {
        throw NumericError("forward produced non-finite logits");
    }
    return h;
}

ForwardResult forward(const MlpParams& model, const Matrix& features) {
    check_input(model, features);
    ForwardResult result;
    auto& cache = result.cache;
    cache.model_fingerprint = checksum(model);
    cache.inputs.reserve(model.num_layers());
    cache.pre.reserve(model.num_layers());

    cache.inputs.push_back(features);
    for (std::size_t k = 0; k < model.num_layers(); ++k) {
        cache.pre.push_back(affine(model.layer(k), cache.inputs.back()));
        if (k + 1 < model.num_layers()) {
            Matrix act = cache.pre.back();
            apply_activation(act, model.hidden_activation());
            cache.inputs.push_back(std::move(act));
        }
    }
    result.logits = cache.pre.back();
    if (!result.logits.all_finite()) {
        throw NumericError("forward produced non-finite logits");
    }
    return result;
}

ParamGrads backward(const MlpParams& model, const ForwardCache& cache, const Matrix& dloss_dlogits) {
    const std::size_t num_layers = model.num_layers();
    if (cache.inputs.size() != num_layers || cache.pre.size() != num_layers) {
        throw ContractError("forward cache holds " + std::to_string(cache.pre.size()) + " layers, model has " +
                            std::to_string(num_layers));
    }
    if (cache.model_fingerprint != checksum(model)) {
        throw ContractError("forward cache was produced by different parameters");
    }
    const std::size_t n = cache.inputs.front().rows();
    if (dloss_dlogits.rows() != n || dloss_dlogits.cols() != model.output_dim()) {
        throw ShapeError("upstream gradient " + dloss_dlogits.shape_string() + " does not match logits " +
                         std::to_string(n) + "x" + std::to_string(model.output_dim()));
    }

    ParamGrads grads;
    grads.layers.resize(num_layers);
    Matrix delta = dloss_dlogits;
    for (std::size_t k = num_layers; k-- > 0;) {
        const Matrix& input = cache.inputs[k];
        grads.layers[k].weight = matmul_tn(input, delta);
        grads.layers[k].bias = column_sums(delta);
        if (k == 0) {
            break;
        }
        Matrix upstream = matmul_nt(delta, model.layer(k).weight);
        // input is the activation of layer k - 1
        auto up = upstream.values();
        if (model.hidden_activation() == Activation::tanh) {
            auto act = input.values();
            for (std::size_t i = 0; i < up.size(); ++i) {
                up[i] *= 1.0 - act[i] * act[i];
            }
        } else {
            auto pre = cache.pre[k - 1].values();
            for (std::size_t i = 0; i < up.size(); ++i) {
                up[i] = pre[i] > 0.0 ? up[i] : 0.0;
            }
        }
        delta = std::move(upstream);
    }
    return grads;
}

MlpParams init_mlp(std::span<const std::size_t> dims, Activation hidden_activation, Rng& rng) {
    MlpParams model = MlpParams::zeros(dims, hidden_activation);
    auto blocks = model.blocks();
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        const double limit = std::sqrt(6.0 / static_cast<double>(dims[k] + dims[k + 1]));
        for (double& w : blocks[2 * k]) {
            w = (2.0 * rng.uniform01() - 1.0) * limit;
        }
    }
    return model;
}

std::uint64_t checksum(const MlpParams& model) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto block : model.blocks()) {
        for (double v : block) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof(double));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 0x100000001b3ULL;
            }
        }
    }
    return h;
}

ParamGrads finite_difference_grads(const MlpParams& model, const LogitLossFn& loss_fn, const Matrix& features,
                                   double eps) {
    MlpParams probe = model;
    ParamGrads numeric = ParamGrads::zeros_like(model);
    auto probe_blocks = probe.blocks();
    auto out_blocks = numeric.blocks();

    const auto eval = [&] {
        const double loss = loss_fn(predict_logits(probe, features)).loss;
        if (!std::isfinite(loss)) {
            throw NumericError("non-finite loss while probing finite differences");
        }
        return loss;
    };

    for (std::size_t b = 0; b < probe_blocks.size(); ++b) {
        for (std::size_t i = 0; i < probe_blocks[b].size(); ++i) {
            double& theta = probe_blocks[b][i];
            const double saved = theta;
            theta = saved + eps;
            const double plus = eval();
            theta = saved - eps;
            const double minus = eval();
            theta = saved;
            out_blocks[b][i] = (plus - minus) / (2.0 * eps);
        }
    }
    return numeric;
}

double max_relative_error(const ParamGrads& analytic, const ParamGrads& numeric) {
    const auto a = analytic.blocks();
    const auto b = numeric.blocks();
    if (a.size() != b.size()) {
        throw ShapeError("gradient block counts differ");
    }
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k].size() != b[k].size()) {
            throw ShapeError("gradient block " + std::to_string(k) + " sizes differ");
        }
        for (std::size_t i = 0; i < a[k].size(); ++i) {
            const double denom = std::max(1e-12, std::abs(a[k][i]) + std::abs(b[k][i]));
            worst = std::max(worst, std::abs(a[k][i] - b[k][i]) / denom);
        }
    }
    return worst;
}

double grad_check(const MlpParams& model, const LogitLossFn& loss_fn, const Matrix& features, double eps) {
    if (!(eps > 0.0 && eps <= 1e-3)) {
        throw ConfigError("grad_check eps must lie in (0, 1e-3]");
    }
    const ForwardResult fwd = forward(model, features);
    const LossAndGrad lg = loss_fn(fwd.logits);
    if (!std::isfinite(lg.loss)) {
        throw NumericError("non-finite loss at the evaluation point");
    }
    const ParamGrads analytic = backward(model, fwd.cache, lg.grad);
    const ParamGrads numeric = finite_difference_grads(model, loss_fn, features, eps);
    return max_relative_error(analytic, numeric);
}

}  // namespace gdistil
