// SPDX-License-Identifier: Apache-2.0
//
// Feedforward classifiers: affine layers with a shared hidden nonlinearity
// and raw logits on the last layer. Forward caches what backward needs;
// backward applies the explicit per-layer formulas for affine, tanh and relu.

#pragma once

#include "groupdistil/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gdistil {

class Rng;

enum class Activation { tanh, relu };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

/// weight is [in x out], bias is [1 x out].
struct DenseLayer {
    Matrix weight;
    Matrix bias;

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

class MlpParams {
public:
    /// Rejects empty layer lists, non-row biases and broken dimension chains.
    MlpParams(std::vector<DenseLayer> layers, Activation hidden_activation);

    /// All-zero parameters for dims = {F, hidden..., C}.
    static MlpParams zeros(std::span<const std::size_t> dims, Activation hidden_activation);

    std::size_t num_layers() const { return layers_.size(); }
    const DenseLayer& layer(std::size_t k) const { return layers_.at(k); }
    Activation hidden_activation() const { return activation_; }

    std::size_t input_dim() const { return layers_.front().weight.rows(); }
    std::size_t output_dim() const { return layers_.back().weight.cols(); }
    /// {F, hidden..., C}
    std::vector<std::size_t> dims() const;
    std::size_t num_parameters() const;

    /// Parameter blocks in layer order, weight before bias. Shapes are fixed;
    /// only values are exposed for mutation.
    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;

    friend bool operator==(const MlpParams&, const MlpParams&) = default;

private:
    std::vector<DenseLayer> layers_;
    Activation activation_;
};

/// Gradients mirroring an MlpParams layer by layer.
struct ParamGrads {
    std::vector<DenseLayer> layers;

    static ParamGrads zeros_like(const MlpParams& model);

    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;
    bool all_finite() const;
};

/// Activations recorded by forward. inputs[k] feeds layer k; pre[k] is the
/// affine output of layer k before the nonlinearity.
struct ForwardCache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> pre;
    std::uint64_t model_fingerprint = 0;
};

struct ForwardResult {
    Matrix logits;
    ForwardCache cache;
};

/// Logits only, no cache.
Matrix predict_logits(const MlpParams& model, const Matrix& features);
ForwardResult forward(const MlpParams& model, const Matrix& features);

/// Does not rescale: the batch-mean convention lives in the loss gradient.
ParamGrads backward(const MlpParams& model, const ForwardCache& cache, const Matrix& dloss_dlogits);

/// Glorot-uniform weights, zero biases.
MlpParams init_mlp(std::span<const std::size_t> dims, Activation hidden_activation, Rng& rng);

/// FNV-1a over the raw bytes of every parameter, in block order.
std::uint64_t checksum(const MlpParams& model);

// ---------------------------------------------------------------------------
// Gradient checking

struct LossAndGrad {
    double loss = 0.0;
    Matrix grad;  // d loss / d logits
};

using LogitLossFn = std::function<LossAndGrad(const Matrix& logits)>;

/// Central differences (L(theta + eps) - L(theta - eps)) / (2 eps), per parameter.
ParamGrads finite_difference_grads(const MlpParams& model, const LogitLossFn& loss_fn,
                                   const Matrix& features, double eps);

/// max over entries of |a - b| / max(1e-12, |a| + |b|).
double max_relative_error(const ParamGrads& analytic, const ParamGrads& numeric);

/// Compares backward() against finite differences; eps must lie in (0, 1e-3].
double grad_check(const MlpParams& model, const LogitLossFn& loss_fn, const Matrix& features,
                  double eps);

}  // namespace gdistil
