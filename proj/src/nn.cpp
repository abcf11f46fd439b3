#include "imidet/nn.hpp"

#include <algorithm>
#include <cmath>

#include "imidet/rng.hpp"

namespace imidet::nn {

namespace {

// "same" padding: window-1 zeros total, extra one on the right when the
// window is even
inline long pad_left(long window) { return (window - 1) / 2; }

} // namespace

Tensor conv1d_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 2 || w.rank() != 3 || b.rank() != 1) {
        throw ShapeMismatch("conv1d: x must be {L,C}, w {K,C,F}, b {F}");
    }
    const long L = static_cast<long>(x.dim(0));
    const long C = static_cast<long>(x.dim(1));
    const long K = static_cast<long>(w.dim(0));
    const long F = static_cast<long>(w.dim(2));
    if (static_cast<long>(w.dim(1)) != C || static_cast<long>(b.dim(0)) != F) {
        throw ShapeMismatch("conv1d: channel/filter extents disagree");
    }
    const long left = pad_left(K);

    Tensor out({static_cast<std::size_t>(L), static_cast<std::size_t>(F)});
    for (long t = 0; t < L; ++t) {
        const long k_lo = std::max(0L, left - t);
        const long k_hi = std::min(K - 1, L - 1 + left - t);
        for (long f = 0; f < F; ++f) {
            double acc = b[static_cast<std::size_t>(f)];
            for (long k = k_lo; k <= k_hi; ++k) {
                const long s = t + k - left;
                for (long c = 0; c < C; ++c) {
                    acc += w(static_cast<std::size_t>(k), static_cast<std::size_t>(c),
                             static_cast<std::size_t>(f)) *
                           x(static_cast<std::size_t>(s), static_cast<std::size_t>(c));
                }
            }
            out(static_cast<std::size_t>(t), static_cast<std::size_t>(f)) = acc;
        }
    }
    return out;
}

Conv1dGrads conv1d_backward(const Tensor& grad_out, const Tensor& x, const Tensor& w) {
    const long L = static_cast<long>(x.dim(0));
    const long C = static_cast<long>(x.dim(1));
    const long K = static_cast<long>(w.dim(0));
    const long F = static_cast<long>(w.dim(2));
    if (grad_out.rank() != 2 || static_cast<long>(grad_out.dim(0)) != L ||
        static_cast<long>(grad_out.dim(1)) != F) {
        throw ShapeMismatch("conv1d_backward: grad_out must be {L,F}");
    }
    const long left = pad_left(K);

    Conv1dGrads g;
    g.grad_x = Tensor(x.shape);
    g.grad_w = Tensor(w.shape);
    g.grad_b = Tensor({static_cast<std::size_t>(F)});

    for (long t = 0; t < L; ++t) {
        const long k_lo = std::max(0L, left - t);
        const long k_hi = std::min(K - 1, L - 1 + left - t);
        for (long f = 0; f < F; ++f) {
            const double go = grad_out(static_cast<std::size_t>(t), static_cast<std::size_t>(f));
            g.grad_b[static_cast<std::size_t>(f)] += go;
            if (go == 0.0) continue;
            for (long k = k_lo; k <= k_hi; ++k) {
                const long s = t + k - left;
                for (long c = 0; c < C; ++c) {
                    g.grad_w(static_cast<std::size_t>(k), static_cast<std::size_t>(c),
                             static_cast<std::size_t>(f)) +=
                        go * x(static_cast<std::size_t>(s), static_cast<std::size_t>(c));
                    g.grad_x(static_cast<std::size_t>(s), static_cast<std::size_t>(c)) +=
                        go * w(static_cast<std::size_t>(k), static_cast<std::size_t>(c),
                               static_cast<std::size_t>(f));
                }
            }
        }
    }
    return g;
}

BatchNormState BatchNormState::make(std::size_t channels, double momentum, double epsilon) {
    BatchNormState s;
    s.gamma = Tensor({channels});
    s.gamma.fill(1.0);
    s.beta = Tensor({channels});
    s.running_mean = Tensor({channels});
    s.running_var = Tensor({channels});
    s.running_var.fill(1.0);
    s.momentum = momentum;
    s.epsilon = epsilon;
    return s;
}

Tensor batchnorm_forward(const Tensor& x, BatchNormState& state, Mode mode,
                         BatchNormCache* cache) {
    if (x.rank() != 3) throw ShapeMismatch("batchnorm: x must be {B,L,C}");
    const std::size_t B = x.dim(0), L = x.dim(1), C = x.dim(2);
    if (state.gamma.numel() != C || state.beta.numel() != C ||
        state.running_mean.numel() != C || state.running_var.numel() != C) {
        throw ShapeMismatch("batchnorm: state width does not match channels");
    }

    Tensor out(x.shape);
    if (mode == Mode::infer) {
        for (std::size_t c = 0; c < C; ++c) {
            const double inv = 1.0 / std::sqrt(state.running_var[c] + state.epsilon);
            const double scale = state.gamma[c] * inv;
            const double shift = state.beta[c] - state.running_mean[c] * scale;
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t t = 0; t < L; ++t)
                    out(b, t, c) = x(b, t, c) * scale + shift;
        }
        return out;
    }

    const std::size_t n = B * L;
    if (n < 2) throw DegenerateBatch("batchnorm train mode needs >= 2 elements per channel");

    if (cache) {
        cache->xhat = Tensor(x.shape);
        cache->inv_std.assign(C, 0.0);
    }
    for (std::size_t c = 0; c < C; ++c) {
        double mean = 0.0;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < L; ++t) mean += x(b, t, c);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < L; ++t) {
                const double d = x(b, t, c) - mean;
                var += d * d;
            }
        var /= static_cast<double>(n);  // biased

        const double inv = 1.0 / std::sqrt(var + state.epsilon);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < L; ++t) {
                const double xhat = (x(b, t, c) - mean) * inv;
                if (cache) cache->xhat(b, t, c) = xhat;
                out(b, t, c) = state.gamma[c] * xhat + state.beta[c];
            }
        if (cache) cache->inv_std[c] = inv;

        state.running_mean[c] = state.momentum * state.running_mean[c] + (1.0 - state.momentum) * mean;
        state.running_var[c] = state.momentum * state.running_var[c] + (1.0 - state.momentum) * var;
    }
    return out;
}

BatchNormGrads batchnorm_backward(const Tensor& grad_out, const BatchNormState& state,
                                  const BatchNormCache& cache) {
    if (!grad_out.same_shape(cache.xhat)) {
        throw ShapeMismatch("batchnorm_backward: grad_out shape differs from cached batch");
    }
    const std::size_t B = grad_out.dim(0), L = grad_out.dim(1), C = grad_out.dim(2);
    const double n = static_cast<double>(B * L);

    BatchNormGrads g;
    g.grad_x = Tensor(grad_out.shape);
    g.grad_gamma = Tensor({C});
    g.grad_beta = Tensor({C});

    for (std::size_t c = 0; c < C; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < L; ++t) {
                sum_g += grad_out(b, t, c);
                sum_gx += grad_out(b, t, c) * cache.xhat(b, t, c);
            }
        g.grad_beta[c] = sum_g;
        g.grad_gamma[c] = sum_gx;

        const double scale = state.gamma[c] * cache.inv_std[c];
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < L; ++t) {
                g.grad_x(b, t, c) = scale * (grad_out(b, t, c) - sum_g / n -
                                             cache.xhat(b, t, c) * sum_gx / n);
            }
    }
    return g;
}

Tensor relu(const Tensor& x) {
    Tensor out(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& x) {
    if (!grad_out.same_shape(x)) throw ShapeMismatch("relu_backward: shape mismatch");
    Tensor out(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
    return out;
}

MaxPoolResult maxpool(const Tensor& x) {
    if (x.rank() != 2) throw ShapeMismatch("maxpool: x must be {L,C}");
    const std::size_t L = x.dim(0), C = x.dim(1);
    const std::size_t L_out = L / 2;
    MaxPoolResult r;
    r.out = Tensor({L_out, C});
    r.argmax.assign(L_out * C, 0);
    for (std::size_t j = 0; j < L_out; ++j) {
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t i0 = 2 * j, i1 = 2 * j + 1;
            // ties keep the earlier index
            if (x(i1, c) > x(i0, c)) {
                r.out(j, c) = x(i1, c);
                r.argmax[j * C + c] = i1 * C + c;
            } else {
                r.out(j, c) = x(i0, c);
                r.argmax[j * C + c] = i0 * C + c;
            }
        }
    }
    return r;
}

Tensor maxpool_backward(const Tensor& grad_out, const std::vector<std::size_t>& argmax,
                        const std::vector<std::size_t>& in_shape) {
    Tensor grad_x(in_shape);
    if (grad_out.numel() != argmax.size()) {
        throw ShapeMismatch("maxpool_backward: grad/argmax size mismatch");
    }
    for (std::size_t i = 0; i < argmax.size(); ++i) grad_x[argmax[i]] += grad_out[i];
    return grad_x;
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.rank() != 2) throw ShapeMismatch("global_avg_pool: x must be {L,C}");
    const std::size_t L = x.dim(0), C = x.dim(1);
    if (L == 0) throw ShapeMismatch("global_avg_pool: empty length axis");
    Tensor out({C});
    for (std::size_t t = 0; t < L; ++t)
        for (std::size_t c = 0; c < C; ++c) out[c] += x(t, c);
    for (std::size_t c = 0; c < C; ++c) out[c] /= static_cast<double>(L);
    return out;
}

Tensor global_avg_pool_backward(const Tensor& grad_out, std::size_t in_len) {
    const std::size_t C = grad_out.numel();
    Tensor grad_x({in_len, C});
    for (std::size_t t = 0; t < in_len; ++t)
        for (std::size_t c = 0; c < C; ++c)
            grad_x(t, c) = grad_out[c] / static_cast<double>(in_len);
    return grad_x;
}

Tensor softmax(const Tensor& logits) {
    Tensor out(logits.shape);
    const std::size_t C = logits.shape.back();
    const std::size_t rows = logits.numel() / C;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* z = logits.data.data() + r * C;
        double* p = out.data.data() + r * C;
        double mx = z[0];
        for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, z[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            p[c] = std::exp(z[c] - mx);
            sum += p[c];
        }
        for (std::size_t c = 0; c < C; ++c) p[c] /= sum;
    }
    return out;
}

Tensor dense_softmax(const Tensor& features, const Tensor& w, const Tensor& b,
                     Tensor* logits_out) {
    if (features.rank() != 1 || w.rank() != 2 || w.dim(0) != features.dim(0) ||
        b.numel() != w.dim(1)) {
        throw ShapeMismatch("dense_softmax: features {F}, w {F,C}, b {C}");
    }
    const std::size_t F = w.dim(0), C = w.dim(1);
    Tensor logits({C});
    for (std::size_t o = 0; o < C; ++o) {
        double acc = b[o];
        for (std::size_t i = 0; i < F; ++i) acc += features[i] * w(i, o);
        logits[o] = acc;
    }
    if (logits_out) *logits_out = logits;
    return softmax(logits);
}

ModelParams ModelParams::init(std::uint64_t seed) {
    Rng rng(seed);
    ModelParams p;
    for (int l = 0; l < kLeads; ++l) {
        for (int pi = 0; pi < kPathsPerLead; ++pi) {
            const int window = kConvWindows[static_cast<std::size_t>(pi)];
            auto& path = p.paths[static_cast<std::size_t>(l)][static_cast<std::size_t>(pi)];
            path.conv_w = Tensor({static_cast<std::size_t>(window), 1,
                                  static_cast<std::size_t>(kFiltersPerPath)});
            const double fan_in = window;
            const double fan_out = window * kFiltersPerPath;
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            for (double& v : path.conv_w.data) v = rng.uniform(-limit, limit);
            path.conv_b = Tensor({static_cast<std::size_t>(kFiltersPerPath)});
            path.bn = BatchNormState::make(static_cast<std::size_t>(kFiltersPerPath));
        }
    }
    p.dense_w = Tensor({static_cast<std::size_t>(kGapWidth),
                        static_cast<std::size_t>(kNumClasses)});
    const double limit = std::sqrt(6.0 / (kGapWidth + kNumClasses));
    for (double& v : p.dense_w.data) v = rng.uniform(-limit, limit);
    p.dense_b = Tensor({static_cast<std::size_t>(kNumClasses)});
    return p;
}

std::size_t ModelParams::trainable_count() const {
    std::size_t n = 0;
    for_each_trainable(*this, [&n](const Tensor& t) { n += t.numel(); });
    return n;
}

ModelGrads ModelGrads::zeros_like(const ModelParams& params) {
    ModelGrads g;
    for (int l = 0; l < kLeads; ++l) {
        for (int pi = 0; pi < kPathsPerLead; ++pi) {
            const auto& path = params.paths[static_cast<std::size_t>(l)][static_cast<std::size_t>(pi)];
            auto& gp = g.paths[static_cast<std::size_t>(l)][static_cast<std::size_t>(pi)];
            gp.conv_w = Tensor(path.conv_w.shape);
            gp.conv_b = Tensor(path.conv_b.shape);
            gp.gamma = Tensor(path.bn.gamma.shape);
            gp.beta = Tensor(path.bn.beta.shape);
        }
    }
    g.dense_w = Tensor(params.dense_w.shape);
    g.dense_b = Tensor(params.dense_b.shape);
    return g;
}

void for_each_trainable(ModelParams& params, const std::function<void(Tensor&)>& fn) {
    for (auto& lead : params.paths) {
        for (auto& path : lead) {
            fn(path.conv_w);
            fn(path.conv_b);
            fn(path.bn.gamma);
            fn(path.bn.beta);
        }
    }
    fn(params.dense_w);
    fn(params.dense_b);
}

void for_each_trainable(const ModelParams& params,
                        const std::function<void(const Tensor&)>& fn) {
    for (const auto& lead : params.paths) {
        for (const auto& path : lead) {
            fn(path.conv_w);
            fn(path.conv_b);
            fn(path.bn.gamma);
            fn(path.bn.beta);
        }
    }
    fn(params.dense_w);
    fn(params.dense_b);
}

void for_each_trainable(ModelGrads& grads, const std::function<void(Tensor&)>& fn) {
    for (auto& lead : grads.paths) {
        for (auto& path : lead) {
            fn(path.conv_w);
            fn(path.conv_b);
            fn(path.gamma);
            fn(path.beta);
        }
    }
    fn(grads.dense_w);
    fn(grads.dense_b);
}

void for_each_trainable_pair(ModelParams& params, const ModelGrads& grads,
                             const std::function<void(Tensor&, const Tensor&)>& fn) {
    for (int l = 0; l < kLeads; ++l) {
        for (int pi = 0; pi < kPathsPerLead; ++pi) {
            auto& p = params.paths[static_cast<std::size_t>(l)][static_cast<std::size_t>(pi)];
            const auto& g = grads.paths[static_cast<std::size_t>(l)][static_cast<std::size_t>(pi)];
            fn(p.conv_w, g.conv_w);
            fn(p.conv_b, g.conv_b);
            fn(p.bn.gamma, g.gamma);
            fn(p.bn.beta, g.beta);
        }
    }
    fn(params.dense_w, grads.dense_w);
    fn(params.dense_b, grads.dense_b);
}

ForwardResult model_forward(const Tensor& batch, ModelParams& params, Mode mode,
                            ModelCache* cache) {
    if (batch.rank() != 3 || batch.dim(1) != static_cast<std::size_t>(kLeads)) {
        throw ShapeMismatch("model_forward: batch must be {B,3,L}");
    }
    const std::size_t B = batch.dim(0), L = batch.dim(2);
    const std::size_t L_out = L / 2;
    if (B == 0 || L_out == 0) throw ShapeMismatch("model_forward: batch too small");

    ModelCache local;
    ModelCache& cc = cache ? *cache : local;
    const bool want_cache = cache != nullptr;
    if (want_cache) cc.input = batch;

    // pooled path outputs concatenated channel-wise: {B, L/2, 84}
    Tensor pooled({B, L_out, static_cast<std::size_t>(kGapWidth)});

    for (int l = 0; l < kLeads; ++l) {
        // lead slice as per-sample {L,1} tensors
        for (int pi = 0; pi < kPathsPerLead; ++pi) {
            auto& path = params.paths[static_cast<std::size_t>(l)][static_cast<std::size_t>(pi)];
            PathCache* pc = want_cache
                                ? &cc.paths[static_cast<std::size_t>(l)][static_cast<std::size_t>(pi)]
                                : nullptr;

            Tensor conv_out({B, L, static_cast<std::size_t>(kFiltersPerPath)});
            Tensor x_sample({L, 1});
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t t = 0; t < L; ++t)
                    x_sample(t, 0) = batch(b, static_cast<std::size_t>(l), t);
                const Tensor co = conv1d_forward(x_sample, path.conv_w, path.conv_b);
                std::copy(co.data.begin(), co.data.end(),
                          conv_out.data.begin() +
                              static_cast<long>(b * L * kFiltersPerPath));
            }

            BatchNormCache bn_cache;
            const Tensor bn_out = batchnorm_forward(conv_out, path.bn, mode,
                                                    mode == Mode::train ? &bn_cache : nullptr);
            const Tensor act = relu(bn_out);

            if (pc) {
                pc->conv_out = std::move(conv_out);
                pc->bn = std::move(bn_cache);
                pc->bn_out = bn_out;
                pc->pool_argmax.assign(B * L_out * kFiltersPerPath, 0);
            }

            const std::size_t ch0 =
                static_cast<std::size_t>((l * kPathsPerLead + pi) * kFiltersPerPath);
            Tensor act_sample({L, static_cast<std::size_t>(kFiltersPerPath)});
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t t = 0; t < L; ++t)
                    for (std::size_t f = 0; f < static_cast<std::size_t>(kFiltersPerPath); ++f)
                        act_sample(t, f) = act(b, t, f);
                MaxPoolResult pr = maxpool(act_sample);
                for (std::size_t j = 0; j < L_out; ++j)
                    for (std::size_t f = 0; f < static_cast<std::size_t>(kFiltersPerPath); ++f)
                        pooled(b, j, ch0 + f) = pr.out(j, f);
                if (pc) {
                    std::copy(pr.argmax.begin(), pr.argmax.end(),
                              pc->pool_argmax.begin() +
                                  static_cast<long>(b * L_out * kFiltersPerPath));
                }
            }
        }
    }

    Tensor gap({B, static_cast<std::size_t>(kGapWidth)});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t j = 0; j < L_out; ++j)
            for (std::size_t c = 0; c < static_cast<std::size_t>(kGapWidth); ++c)
                gap(b, c) += pooled(b, j, c);
        for (std::size_t c = 0; c < static_cast<std::size_t>(kGapWidth); ++c)
            gap(b, c) /= static_cast<double>(L_out);
    }

    Tensor logits({B, static_cast<std::size_t>(kNumClasses)});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t o = 0; o < static_cast<std::size_t>(kNumClasses); ++o) {
            double acc = params.dense_b[o];
            for (std::size_t i = 0; i < static_cast<std::size_t>(kGapWidth); ++i)
                acc += gap(b, i) * params.dense_w(i, o);
            logits(b, o) = acc;
        }
    }
    Tensor probs = softmax(logits);

    if (want_cache) {
        cc.gap_features = gap;
        cc.logits = logits;
        cc.probs = probs;
    }
    return ForwardResult{std::move(probs), std::move(gap)};
}

ModelGrads model_backward_from_logits(const Tensor& grad_logits, const ModelParams& params,
                                      const ModelCache& cache) {
    const std::size_t B = cache.input.dim(0), L = cache.input.dim(2);
    const std::size_t L_out = L / 2;
    if (grad_logits.rank() != 2 || grad_logits.dim(0) != B ||
        grad_logits.dim(1) != static_cast<std::size_t>(kNumClasses)) {
        throw ShapeMismatch("model_backward: grad must be {B,2}");
    }

    ModelGrads g = ModelGrads::zeros_like(params);

    // dense layer
    Tensor grad_gap({B, static_cast<std::size_t>(kGapWidth)});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t o = 0; o < static_cast<std::size_t>(kNumClasses); ++o) {
            const double gz = grad_logits(b, o);
            g.dense_b[o] += gz;
            for (std::size_t i = 0; i < static_cast<std::size_t>(kGapWidth); ++i) {
                g.dense_w(i, o) += cache.gap_features(b, i) * gz;
                grad_gap(b, i) += params.dense_w(i, o) * gz;
            }
        }
    }

    for (int l = 0; l < kLeads; ++l) {
        for (int pi = 0; pi < kPathsPerLead; ++pi) {
            const auto& path = params.paths[static_cast<std::size_t>(l)][static_cast<std::size_t>(pi)];
            const auto& pc = cache.paths[static_cast<std::size_t>(l)][static_cast<std::size_t>(pi)];
            auto& gp = g.paths[static_cast<std::size_t>(l)][static_cast<std::size_t>(pi)];
            const std::size_t ch0 =
                static_cast<std::size_t>((l * kPathsPerLead + pi) * kFiltersPerPath);

            // GAP backward restricted to this path's channels, then unpool
            Tensor grad_act({B, L, static_cast<std::size_t>(kFiltersPerPath)});
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t j = 0; j < L_out; ++j) {
                    for (std::size_t f = 0; f < static_cast<std::size_t>(kFiltersPerPath); ++f) {
                        const double gpool =
                            grad_gap(b, ch0 + f) / static_cast<double>(L_out);
                        const std::size_t src =
                            pc.pool_argmax[(b * L_out + j) * kFiltersPerPath + f];
                        // src is flat within the sample's {L,4} activation
                        grad_act.data[b * L * kFiltersPerPath + src] += gpool;
                    }
                }
            }

            // ReLU mask on the pre-activation (BN output)
            const Tensor grad_bn_out = relu_backward(grad_act, pc.bn_out);

            const BatchNormGrads bn_g = batchnorm_backward(grad_bn_out, path.bn, pc.bn);
            gp.gamma = bn_g.grad_gamma;
            gp.beta = bn_g.grad_beta;

            // conv backward per sample, accumulating weight gradients
            Tensor x_sample({L, 1});
            Tensor go_sample({L, static_cast<std::size_t>(kFiltersPerPath)});
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t t = 0; t < L; ++t) {
                    x_sample(t, 0) = cache.input(b, static_cast<std::size_t>(l), t);
                    for (std::size_t f = 0; f < static_cast<std::size_t>(kFiltersPerPath); ++f)
                        go_sample(t, f) = bn_g.grad_x(b, t, f);
                }
                const Conv1dGrads cg = conv1d_backward(go_sample, x_sample, path.conv_w);
                for (std::size_t i = 0; i < cg.grad_w.numel(); ++i)
                    gp.conv_w[i] += cg.grad_w[i];
                for (std::size_t i = 0; i < cg.grad_b.numel(); ++i)
                    gp.conv_b[i] += cg.grad_b[i];
            }
        }
    }
    return g;
}

ModelGrads model_backward(const Tensor& grad_probs, const ModelParams& params,
                          const ModelCache& cache) {
    if (!grad_probs.same_shape(cache.probs)) {
        throw ShapeMismatch("model_backward: grad_probs shape differs from forward probs");
    }
    const std::size_t B = grad_probs.dim(0), C = grad_probs.dim(1);
    Tensor grad_logits({B, C});
    for (std::size_t b = 0; b < B; ++b) {
        double dot = 0.0;
        for (std::size_t c = 0; c < C; ++c) dot += cache.probs(b, c) * grad_probs(b, c);
        for (std::size_t c = 0; c < C; ++c)
            grad_logits(b, c) = cache.probs(b, c) * (grad_probs(b, c) - dot);
    }
    return model_backward_from_logits(grad_logits, params, cache);
}

} // namespace imidet::nn
