#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "imidet/dsp.hpp"
#include "imidet/nn.hpp"

namespace imidet::fq {

struct TooFewVectors : std::runtime_error {
    explicit TooFewVectors(const std::string& what) : std::runtime_error(what) {}
};

// GAP-layer feature vectors with their true binary labels.
struct FeatureSet {
    std::vector<std::vector<double>> vectors;  // all of equal dimension
    std::vector<int> labels;                   // 0 = HC, 1 = IMI
};

// Runs the model in infer mode and collects the 84-wide GAP outputs.
FeatureSet extract_features(const std::vector<dsp::Sample>& samples,
                            nn::ModelParams& params);

struct GsiStats {
    std::size_t conflicting_duplicates = 0;  // identical vectors, different labels
};

// Thornton's geometric separability index: the fraction of vectors whose
// Euclidean nearest neighbor (self excluded, ties to the lowest index)
// carries the same label. Always in [0, 1].
double gsi(const FeatureSet& fs, GsiStats* stats = nullptr);

// Mean Euclidean distance over all unordered pairs within class k.
double intra_class_distance(const FeatureSet& fs, int k);

} // namespace imidet::fq
