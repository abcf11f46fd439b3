#include "imidet/eval.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

namespace imidet::eval {

Metrics metrics(const Confusion& c) {
    if (c.tp < 0 || c.tn < 0 || c.fp < 0 || c.fn < 0) {
        throw std::invalid_argument("negative confusion counts");
    }
    if (c.total() == 0) throw EmptyConfusion("metrics on an empty confusion matrix");
    Metrics m;
    m.ac = 100.0 * static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    if (c.tp + c.fn > 0) {
        m.se = 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    }
    if (c.tn + c.fp > 0) {
        m.sp = 100.0 * static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
    }
    return m;
}

int predict_label(double p_hc, double p_imi) { return p_imi >= p_hc ? 1 : 0; }

std::vector<int> predict_labels(const Tensor& probs) {
    if (probs.rank() != 2 || probs.dim(1) != 2) {
        throw ShapeMismatch("predict_labels: probs must be {B,2}");
    }
    std::vector<int> out(probs.dim(0));
    for (std::size_t b = 0; b < probs.dim(0); ++b) {
        out[b] = predict_label(probs(b, 0), probs(b, 1));
    }
    return out;
}

namespace {

FoldReport run_fold(const std::vector<dsp::Sample>& samples,
                    const std::string& held_out, const train::TrainConfig& fold_cfg) {
    std::vector<dsp::Sample> train_set;
    std::vector<const dsp::Sample*> test_set;
    for (const auto& s : samples) {
        if (s.patient_id == held_out) {
            test_set.push_back(&s);
        } else {
            train_set.push_back(s);
        }
    }

    nn::ModelParams params = nn::ModelParams::init(fold_cfg.seed);
    train::fit(train_set, params, fold_cfg);

    FoldReport report;
    report.held_out_patient = held_out;
    if (test_set.empty()) return report;

    const std::size_t n_leads = test_set[0]->x.dim(0);
    const std::size_t seg_len = test_set[0]->x.dim(1);
    constexpr std::size_t kEvalBatch = 64;
    for (std::size_t start = 0; start < test_set.size(); start += kEvalBatch) {
        const std::size_t bsz = std::min(kEvalBatch, test_set.size() - start);
        Tensor batch({bsz, n_leads, seg_len});
        for (std::size_t i = 0; i < bsz; ++i) {
            const auto& s = *test_set[start + i];
            std::copy(s.x.data.begin(), s.x.data.end(),
                      batch.data.begin() + static_cast<long>(i * n_leads * seg_len));
        }
        const nn::ForwardResult fwd = nn::model_forward(batch, params, nn::Mode::infer);
        for (std::size_t i = 0; i < bsz; ++i) {
            const int truth = static_cast<int>(test_set[start + i]->label);
            const int pred = predict_label(fwd.probs(i, 0), fwd.probs(i, 1));
            report.confusion.add(truth, pred);
            report.imi_probs.push_back(fwd.probs(i, 1));
        }
    }
    report.m = metrics(report.confusion);
    return report;
}

} // namespace

CvReport lopo(const ingest::PatientSet& patients, const train::TrainConfig& cfg,
              const dsp::PipelineConfig& pipeline, int jobs) {
    if (patients.patients.size() < 2) {
        throw InsufficientPatients("leave-one-patient-out needs at least 2 patients");
    }
    bool has_hc = false, has_imi = false;
    for (const auto& p : patients.patients) {
        (p.label == ingest::ClassLabel::IMI ? has_imi : has_hc) = true;
    }
    if (!has_hc || !has_imi) {
        throw InsufficientPatients("both classes must be present");
    }

    // the preprocessing chain is deterministic and fold-independent, so the
    // samples are computed once up front
    std::vector<dsp::Sample> samples;
    for (const auto& p : patients.patients) {
        for (const auto& rec : p.records) {
            auto recs = dsp::make_samples(rec, pipeline);
            samples.insert(samples.end(), std::make_move_iterator(recs.begin()),
                           std::make_move_iterator(recs.end()));
        }
    }

    std::vector<std::string> fold_patients;
    fold_patients.reserve(patients.patients.size());
    for (const auto& p : patients.patients) fold_patients.push_back(p.patient_id);
    std::sort(fold_patients.begin(), fold_patients.end());

    std::vector<FoldReport> folds(fold_patients.size());
    const int n_jobs = std::max(1, jobs);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= fold_patients.size()) return;
            train::TrainConfig fold_cfg = cfg;
            fold_cfg.seed = cfg.seed + i;
            folds[i] = run_fold(samples, fold_patients[i], fold_cfg);
        }
    };
    if (n_jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < n_jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    CvReport report;
    report.folds = std::move(folds);
    double ac_sum = 0.0, se_sum = 0.0, sp_sum = 0.0;
    for (const auto& f : report.folds) {
        report.pooled.tp += f.confusion.tp;
        report.pooled.tn += f.confusion.tn;
        report.pooled.fp += f.confusion.fp;
        report.pooled.fn += f.confusion.fn;
        if (f.confusion.total() == 0) continue;  // patient yielded no samples
        ac_sum += f.m.ac;
        ++report.ac_folds;
        if (f.m.se) {
            se_sum += *f.m.se;
            ++report.se_folds;
        }
        if (f.m.sp) {
            sp_sum += *f.m.sp;
            ++report.sp_folds;
        }
    }
    report.avg_ac = report.ac_folds > 0 ? ac_sum / report.ac_folds : 0.0;
    if (report.se_folds > 0) report.avg_se = se_sum / report.se_folds;
    if (report.sp_folds > 0) report.avg_sp = sp_sum / report.sp_folds;
    return report;
}

} // namespace imidet::eval
