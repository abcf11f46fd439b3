#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "imidet/dsp.hpp"
#include "imidet/nn.hpp"
#include "imidet/tensor.hpp"

namespace imidet::train {

struct EmptyDataset : std::runtime_error {
    explicit EmptyDataset(const std::string& what) : std::runtime_error(what) {}
};

struct TrainConfig {
    double lr_init = 1e-3;
    double lr_min = 1e-5;
    double lr_factor = 0.1;
    int plateau_patience = 5;   // epochs without improvement before lr drop
    int stop_patience = 10;     // epochs without improvement before stopping
    int max_epochs = 200;
    int batch_size = 32;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-7;
    double lambda_l2 = 0.001;   // on the dense weights only
    std::uint64_t seed = 1;

    void validate() const;
};

struct AdamState {
    std::vector<Tensor> m, v;  // one entry per trainable tensor, canonical order
    long t = 0;

    static AdamState zeros_like(const nn::ModelParams& params);
};

enum class StopReason { early_stop, max_epochs };

struct EpochStats {
    int epoch = 0;        // 1-based
    double loss = 0.0;    // batch-size-weighted mean training loss
    double accuracy = 0.0;
    double lr = 0.0;      // learning rate used during this epoch
    double wall_ms = 0.0;
};

struct TrainLog {
    std::vector<EpochStats> epochs;
    StopReason stop_reason = StopReason::max_epochs;
    double best_loss = std::numeric_limits<double>::infinity();
    double final_loss = std::numeric_limits<double>::infinity();
};

// Mean over the batch of -y ln(p) - (1-y) ln(1-p) with p = P(IMI), p clamped
// to [1e-12, 1-1e-12], plus lambda * sum(dense_w^2).
double loss(const Tensor& probs, const std::vector<int>& labels,
            const Tensor& dense_w, double lambda);

// Gradient of the mean crossentropy term with respect to the probabilities
// (the L2 term contributes 2*lambda*w directly to the dense weight grads).
Tensor loss_grad_probs(const Tensor& probs, const std::vector<int>& labels);

// One Adam update over every trainable tensor, in canonical order.
void adam_step(nn::ModelParams& params, const nn::ModelGrads& grads, AdamState& state,
               double lr, const TrainConfig& cfg);

// Strict-improvement plateau counter shared by the lr scheduler and early
// stopping (improvement = loss < best, zero minimum delta).
class PlateauTracker {
public:
    // returns true when the loss improved the best-so-far
    bool update(double l) {
        if (l < best_) {
            best_ = l;
            wait_ = 0;
            return true;
        }
        ++wait_;
        return false;
    }
    int wait() const { return wait_; }
    void reset_wait() { wait_ = 0; }
    double best() const { return best_; }

private:
    double best_ = std::numeric_limits<double>::infinity();
    int wait_ = 0;
};

// Replays the plateau rule over a full epoch-loss history: when the best
// loss has not strictly improved for plateau_patience consecutive epochs,
// the rate drops by lr_factor (floored at lr_min) and the counter resets.
double lr_schedule(const std::vector<double>& epoch_losses, double current_lr,
                   const TrainConfig& cfg);

// The mini-batch training loop: per epoch, shuffle with the seeded
// generator, run forward (train mode) / loss / backward / adam_step over
// batches of batch_size (final short batch kept). Stops early when the
// training loss fails to improve for stop_patience epochs. Returns the
// end-of-training parameters in place.
TrainLog fit(const std::vector<dsp::Sample>& dataset, nn::ModelParams& params,
             const TrainConfig& cfg);

} // namespace imidet::train
