#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "imidet/tensor.hpp"

namespace imidet::nn {

// Architecture constants of the three-lead inception network: each lead
// feeds 7 parallel conv(4 filters)->BN->ReLU->maxpool paths whose outputs
// are concatenated channel-wise, then GAP and a 2-unit dense softmax.
inline constexpr std::array<int, 7> kConvWindows = {3, 5, 7, 9, 16, 32, 64};
inline constexpr int kFiltersPerPath = 4;
inline constexpr int kLeads = 3;
inline constexpr int kPathsPerLead = 7;
inline constexpr int kGapWidth = kLeads * kPathsPerLead * kFiltersPerPath;  // 84
inline constexpr int kNumClasses = 2;

enum class Mode { train, infer };

struct DegenerateBatch : std::runtime_error {
    explicit DegenerateBatch(const std::string& what) : std::runtime_error(what) {}
};

// ---- conv1d (stride 1, "same" zero padding, extra pad on the right when
// the window is even) ----

// x: {L, C_in}, w: {K, C_in, F}, b: {F} -> {L, F}
Tensor conv1d_forward(const Tensor& x, const Tensor& w, const Tensor& b);

struct Conv1dGrads {
    Tensor grad_x, grad_w, grad_b;
};
Conv1dGrads conv1d_backward(const Tensor& grad_out, const Tensor& x, const Tensor& w);

// ---- batch normalization ----

struct BatchNormState {
    Tensor gamma, beta;              // learnable, per channel
    Tensor running_mean, running_var;
    double momentum = 0.99;
    double epsilon = 1e-3;

    static BatchNormState make(std::size_t channels, double momentum = 0.99,
                               double epsilon = 1e-3);
};

struct BatchNormCache {
    Tensor xhat;                 // {B, L, C}
    std::vector<double> inv_std; // per channel
};

// x: {B, L, C}. Train mode normalizes by the batch moments per channel over
// B*L elements (biased variance) and updates the running statistics in
// place; infer mode normalizes by the running statistics.
Tensor batchnorm_forward(const Tensor& x, BatchNormState& state, Mode mode,
                         BatchNormCache* cache = nullptr);

struct BatchNormGrads {
    Tensor grad_x, grad_gamma, grad_beta;
};
// Exact gradient of the train-mode forward, including the dependence of the
// batch moments on x.
BatchNormGrads batchnorm_backward(const Tensor& grad_out, const BatchNormState& state,
                                  const BatchNormCache& cache);

// ---- pointwise and pooling layers ----

Tensor relu(const Tensor& x);
// gradient at exactly 0 is defined as 0
Tensor relu_backward(const Tensor& grad_out, const Tensor& x);

struct MaxPoolResult {
    Tensor out;                   // {floor(L/2), C}
    std::vector<std::size_t> argmax;  // flat index into x per output element
};
// window 2, stride 2; incomplete trailing window dropped; ties keep the
// earlier index.
MaxPoolResult maxpool(const Tensor& x);
Tensor maxpool_backward(const Tensor& grad_out, const std::vector<std::size_t>& argmax,
                        const std::vector<std::size_t>& in_shape);

// {L, C} -> {C}
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& grad_out, std::size_t in_len);

// ---- dense + softmax head ----

// max-subtracted softmax over the last axis of {B, C} or {C}
Tensor softmax(const Tensor& logits);
// features: {F}, w: {F, kNumClasses}, b: {kNumClasses} -> probabilities
Tensor dense_softmax(const Tensor& features, const Tensor& w, const Tensor& b,
                     Tensor* logits_out = nullptr);

// ---- the full model ----

struct PathParams {
    Tensor conv_w;  // {window, 1, 4}
    Tensor conv_b;  // {4}
    BatchNormState bn;
};

struct ModelParams {
    std::array<std::array<PathParams, kPathsPerLead>, kLeads> paths;
    Tensor dense_w;  // {84, 2}
    Tensor dense_b;  // {2}

    // Glorot-uniform conv/dense weights, zero biases, BN gamma 1 / beta 0,
    // running stats (0, 1). Deterministic per seed.
    static ModelParams init(std::uint64_t seed);
    std::size_t trainable_count() const;
};

struct PathGrads {
    Tensor conv_w, conv_b, gamma, beta;
};

struct ModelGrads {
    std::array<std::array<PathGrads, kPathsPerLead>, kLeads> paths;
    Tensor dense_w, dense_b;

    static ModelGrads zeros_like(const ModelParams& params);
};

struct PathCache {
    Tensor conv_out;   // {B, L, 4} (pre-BN, kept for conv backward bookkeeping)
    BatchNormCache bn;
    Tensor bn_out;     // {B, L, 4} (pre-ReLU)
    std::vector<std::size_t> pool_argmax;  // per sample, flat into {L, 4}
};

struct ModelCache {
    Tensor input;  // {B, 3, L}
    std::array<std::array<PathCache, kPathsPerLead>, kLeads> paths;
    Tensor gap_features;  // {B, 84}
    Tensor logits;        // {B, 2}
    Tensor probs;         // {B, 2}
};

struct ForwardResult {
    Tensor probs;         // {B, 2}, rows sum to 1
    Tensor gap_features;  // {B, 84}
};

// batch: {B, 3, L}. Mutates the BN running statistics in train mode.
ForwardResult model_forward(const Tensor& batch, ModelParams& params, Mode mode,
                            ModelCache* cache = nullptr);

// Reverse traversal of model_forward from a gradient with respect to the
// softmax probabilities (applies the softmax Jacobian first).
ModelGrads model_backward(const Tensor& grad_probs, const ModelParams& params,
                          const ModelCache& cache);

// Same, but from a gradient with respect to the logits.
ModelGrads model_backward_from_logits(const Tensor& grad_logits, const ModelParams& params,
                                      const ModelCache& cache);

// Canonical traversal of the trainable tensors: per lead, per path
// (conv_w, conv_b, gamma, beta), then dense_w, dense_b. Checkpoints, Adam
// state and finite-difference probes all rely on this order.
void for_each_trainable(ModelParams& params, const std::function<void(Tensor&)>& fn);
void for_each_trainable(const ModelParams& params, const std::function<void(const Tensor&)>& fn);
void for_each_trainable(ModelGrads& grads, const std::function<void(Tensor&)>& fn);
void for_each_trainable_pair(ModelParams& params, const ModelGrads& grads,
                             const std::function<void(Tensor&, const Tensor&)>& fn);

} // namespace imidet::nn
