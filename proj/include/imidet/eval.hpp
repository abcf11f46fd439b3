#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "imidet/dsp.hpp"
#include "imidet/ingest.hpp"
#include "imidet/tensor.hpp"
#include "imidet/train.hpp"

namespace imidet::eval {

struct EmptyConfusion : std::runtime_error {
    explicit EmptyConfusion(const std::string& what) : std::runtime_error(what) {}
};
struct InsufficientPatients : std::runtime_error {
    explicit InsufficientPatients(const std::string& what) : std::runtime_error(what) {}
};

// positive class = IMI
struct Confusion {
    long tp = 0, tn = 0, fp = 0, fn = 0;
    long total() const { return tp + tn + fp + fn; }

    void add(int true_label, int predicted) {
        if (true_label == 1) {
            predicted == 1 ? ++tp : ++fn;
        } else {
            predicted == 0 ? ++tn : ++fp;
        }
    }
};

struct Metrics {
    double ac = 0.0;           // percent
    std::optional<double> se;  // absent when tp+fn = 0
    std::optional<double> sp;  // absent when tn+fp = 0
};

// Ac% = (tp+tn)/total*100, Se% = tp/(tp+fn)*100, Sp% = tn/(tn+fp)*100.
Metrics metrics(const Confusion& c);

// argmax of the two probabilities; an exact tie goes to IMI
int predict_label(double p_hc, double p_imi);
std::vector<int> predict_labels(const Tensor& probs);

struct FoldReport {
    std::string held_out_patient;
    Confusion confusion;
    Metrics m;
    std::vector<double> imi_probs;  // per held-out sample, in segment order
};

struct CvReport {
    std::vector<FoldReport> folds;  // patient-id order
    double avg_ac = 0.0;            // arithmetic mean of fold values
    std::optional<double> avg_se;
    std::optional<double> avg_sp;
    int ac_folds = 0;  // folds contributing to each average (se/sp can be
    int se_folds = 0;  // undefined for single-class folds)
    int sp_folds = 0;
    Confusion pooled;
};

// Leave-one-patient-out: per fold, a fresh model (seed = cfg.seed + fold
// index) is trained on every other patient's samples and tested on the held
// out patient in infer mode. Folds may run in parallel (jobs > 1); the
// report order is always patient-id order.
CvReport lopo(const ingest::PatientSet& patients, const train::TrainConfig& cfg,
              const dsp::PipelineConfig& pipeline, int jobs = 1);

} // namespace imidet::eval
