#include "imidet/featquality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace imidet::fq {

FeatureSet extract_features(const std::vector<dsp::Sample>& samples,
                            nn::ModelParams& params) {
    FeatureSet fs;
    if (samples.empty()) return fs;
    const std::size_t n_leads = samples[0].x.dim(0);
    const std::size_t seg_len = samples[0].x.dim(1);

    constexpr std::size_t kBatch = 64;
    for (std::size_t start = 0; start < samples.size(); start += kBatch) {
        const std::size_t bsz = std::min(kBatch, samples.size() - start);
        Tensor batch({bsz, n_leads, seg_len});
        for (std::size_t i = 0; i < bsz; ++i) {
            const auto& s = samples[start + i];
            if (s.x.dim(0) != n_leads || s.x.dim(1) != seg_len) {
                throw ShapeMismatch("extract_features: inconsistent sample shapes");
            }
            std::copy(s.x.data.begin(), s.x.data.end(),
                      batch.data.begin() + static_cast<long>(i * n_leads * seg_len));
        }
        const nn::ForwardResult fwd = nn::model_forward(batch, params, nn::Mode::infer);
        const std::size_t width = fwd.gap_features.dim(1);
        for (std::size_t i = 0; i < bsz; ++i) {
            std::vector<double> v(width);
            for (std::size_t c = 0; c < width; ++c) v[c] = fwd.gap_features(i, c);
            fs.vectors.push_back(std::move(v));
            fs.labels.push_back(static_cast<int>(samples[start + i].label));
        }
    }
    return fs;
}

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

} // namespace

double gsi(const FeatureSet& fs, GsiStats* stats) {
    const std::size_t n = fs.vectors.size();
    if (n < 2) throw TooFewVectors("gsi needs at least 2 vectors");
    if (fs.labels.size() != n) throw std::invalid_argument("labels/vectors size mismatch");
    const std::size_t dim = fs.vectors[0].size();
    for (const auto& v : fs.vectors) {
        if (v.size() != dim) throw std::invalid_argument("vector dimensions differ");
    }

    if (stats) stats->conflicting_duplicates = 0;
    std::size_t same = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = n;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = squared_distance(fs.vectors[i], fs.vectors[j]);
            if (d < best) {  // strict: ties keep the lowest index
                best = d;
                best_j = j;
            }
        }
        if (stats && best == 0.0 && fs.labels[best_j] != fs.labels[i]) {
            ++stats->conflicting_duplicates;
        }
        if (fs.labels[best_j] == fs.labels[i]) ++same;
    }
    return static_cast<double>(same) / static_cast<double>(n);
}

double intra_class_distance(const FeatureSet& fs, int k) {
    if (fs.labels.size() != fs.vectors.size()) {
        throw std::invalid_argument("labels/vectors size mismatch");
    }
    std::vector<const std::vector<double>*> members;
    for (std::size_t i = 0; i < fs.vectors.size(); ++i) {
        if (fs.labels[i] == k) members.push_back(&fs.vectors[i]);
    }
    const std::size_t n = members.size();
    if (n < 2) throw TooFewVectors("intra_class_distance needs >= 2 vectors in the class");

    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            sum += std::sqrt(squared_distance(*members[i], *members[j]));
        }
    }
    const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
    return sum / pairs;
}

} // namespace imidet::fq
