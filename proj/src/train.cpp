#include "imidet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "imidet/rng.hpp"

namespace imidet::train {

namespace {
constexpr double kProbClamp = 1e-12;
}

void TrainConfig::validate() const {
    if (!(lr_min > 0.0 && lr_min <= lr_init)) {
        throw std::invalid_argument("need 0 < lr_min <= lr_init");
    }
    if (!(lr_factor > 0.0 && lr_factor < 1.0)) {
        throw std::invalid_argument("lr_factor must be in (0,1)");
    }
    if (plateau_patience < 1 || stop_patience < 1) {
        throw std::invalid_argument("patiences must be >= 1");
    }
    if (max_epochs < 1 || batch_size < 1) {
        throw std::invalid_argument("max_epochs and batch_size must be >= 1");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
        throw std::invalid_argument("betas must be in [0,1)");
    }
    if (adam_epsilon <= 0.0 || lambda_l2 < 0.0) {
        throw std::invalid_argument("bad adam_epsilon or lambda_l2");
    }
}

AdamState AdamState::zeros_like(const nn::ModelParams& params) {
    AdamState s;
    nn::for_each_trainable(params, [&s](const Tensor& t) {
        s.m.emplace_back(t.shape);
        s.v.emplace_back(t.shape);
    });
    s.t = 0;
    return s;
}

double loss(const Tensor& probs, const std::vector<int>& labels,
            const Tensor& dense_w, double lambda) {
    if (probs.rank() != 2 || probs.dim(1) != 2 || probs.dim(0) != labels.size()) {
        throw ShapeMismatch("loss: probs must be {B,2} matching labels");
    }
    const std::size_t B = probs.dim(0);
    double acc = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const double p = std::clamp(probs(b, 1), kProbClamp, 1.0 - kProbClamp);
        acc += labels[b] == 1 ? -std::log(p) : -std::log(1.0 - p);
    }
    acc /= static_cast<double>(B);
    double penalty = 0.0;
    for (const double w : dense_w.data) penalty += w * w;
    return acc + lambda * penalty;
}

Tensor loss_grad_probs(const Tensor& probs, const std::vector<int>& labels) {
    if (probs.rank() != 2 || probs.dim(1) != 2 || probs.dim(0) != labels.size()) {
        throw ShapeMismatch("loss_grad_probs: probs must be {B,2} matching labels");
    }
    const std::size_t B = probs.dim(0);
    Tensor g(probs.shape);
    for (std::size_t b = 0; b < B; ++b) {
        const double p = std::clamp(probs(b, 1), kProbClamp, 1.0 - kProbClamp);
        // d/dp of -y ln p - (1-y) ln(1-p); only the IMI column carries it
        const double d = labels[b] == 1 ? -1.0 / p : 1.0 / (1.0 - p);
        g(b, 1) = d / static_cast<double>(B);
    }
    return g;
}

void adam_step(nn::ModelParams& params, const nn::ModelGrads& grads, AdamState& state,
               double lr, const TrainConfig& cfg) {
    if (lr <= 0.0) throw std::invalid_argument("adam_step: lr must be positive");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

    std::size_t idx = 0;
    nn::for_each_trainable_pair(params, grads, [&](Tensor& p, const Tensor& g) {
        if (idx >= state.m.size() || !state.m[idx].same_shape(p)) {
            throw ShapeMismatch("adam_step: state does not mirror parameters");
        }
        Tensor& m = state.m[idx];
        Tensor& v = state.v[idx];
        if (!g.same_shape(p)) throw ShapeMismatch("adam_step: grad/param shape mismatch");
        for (std::size_t i = 0; i < p.numel(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
        }
        ++idx;
    });
}

double lr_schedule(const std::vector<double>& epoch_losses, double current_lr,
                   const TrainConfig& cfg) {
    // replay the counter over the history; current_lr is reduced only when
    // the newest epoch completes a plateau (earlier reductions are already
    // reflected in current_lr)
    PlateauTracker tracker;
    bool reduce_now = false;
    for (const double l : epoch_losses) {
        reduce_now = false;
        tracker.update(l);
        if (tracker.wait() >= cfg.plateau_patience) {
            tracker.reset_wait();
            reduce_now = true;
        }
    }
    if (!reduce_now) return current_lr;
    return std::max(current_lr * cfg.lr_factor, cfg.lr_min);
}

TrainLog fit(const std::vector<dsp::Sample>& dataset, nn::ModelParams& params,
             const TrainConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw EmptyDataset("fit: dataset is empty");
    const std::size_t n = dataset.size();
    const std::size_t n_leads = dataset[0].x.dim(0);
    const std::size_t seg_len = dataset[0].x.dim(1);
    for (const auto& s : dataset) {
        if (s.x.dim(0) != n_leads || s.x.dim(1) != seg_len) {
            throw ShapeMismatch("fit: inconsistent sample shapes");
        }
    }

    Rng rng(cfg.seed);
    AdamState adam = AdamState::zeros_like(params);
    PlateauTracker plateau;
    PlateauTracker stopper;
    double lr = cfg.lr_init;

    TrainLog log;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        rng.shuffle(order);

        double loss_sum = 0.0;
        double correct = 0.0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t bsz =
                std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n - start);
            Tensor batch({bsz, n_leads, seg_len});
            std::vector<int> labels(bsz);
            for (std::size_t i = 0; i < bsz; ++i) {
                const auto& s = dataset[order[start + i]];
                std::copy(s.x.data.begin(), s.x.data.end(),
                          batch.data.begin() + static_cast<long>(i * n_leads * seg_len));
                labels[i] = static_cast<int>(s.label);
            }

            nn::ModelCache cache;
            const nn::ForwardResult fwd =
                nn::model_forward(batch, params, nn::Mode::train, &cache);
            const double batch_loss = loss(fwd.probs, labels, params.dense_w, cfg.lambda_l2);
            loss_sum += batch_loss * static_cast<double>(bsz);
            for (std::size_t i = 0; i < bsz; ++i) {
                const int pred = fwd.probs(i, 1) >= fwd.probs(i, 0) ? 1 : 0;
                if (pred == labels[i]) correct += 1.0;
            }

            const Tensor grad_probs = loss_grad_probs(fwd.probs, labels);
            nn::ModelGrads grads = nn::model_backward(grad_probs, params, cache);
            for (std::size_t i = 0; i < grads.dense_w.numel(); ++i) {
                grads.dense_w[i] += 2.0 * cfg.lambda_l2 * params.dense_w[i];
            }
            adam_step(params, grads, adam, lr, cfg);
        }

        const double epoch_loss = loss_sum / static_cast<double>(n);
        const double epoch_acc = correct / static_cast<double>(n);
        const auto t1 = std::chrono::steady_clock::now();
        const double wall_ms =
            std::chrono::duration<double, std::milli>(t1 - t0).count();
        log.epochs.push_back({epoch, epoch_loss, epoch_acc, lr, wall_ms});

        plateau.update(epoch_loss);
        if (plateau.wait() >= cfg.plateau_patience) {
            lr = std::max(lr * cfg.lr_factor, cfg.lr_min);
            plateau.reset_wait();
        }
        stopper.update(epoch_loss);
        if (stopper.wait() >= cfg.stop_patience) {
            log.stop_reason = StopReason::early_stop;
            break;
        }
        if (epoch == cfg.max_epochs) log.stop_reason = StopReason::max_epochs;
    }

    log.best_loss = stopper.best();
    log.final_loss = log.epochs.back().loss;
    return log;
}

} // namespace imidet::train
