#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "imidet/ingest.hpp"
#include "imidet/tensor.hpp"

namespace imidet::dsp {

struct EmptyInput : std::runtime_error {
    explicit EmptyInput(const std::string& what) : std::runtime_error(what) {}
};
struct EvenWindow : std::runtime_error {
    explicit EvenWindow(const std::string& what) : std::runtime_error(what) {}
};
struct BadFrame : std::runtime_error {
    explicit BadFrame(const std::string& what) : std::runtime_error(what) {}
};
struct MissingLead : std::runtime_error {
    explicit MissingLead(const std::string& what) : std::runtime_error(what) {}
};

// The preprocessing chain: 1000 -> 250 Hz, two-stage median baseline
// removal (windows at 250 Hz), Savitzky-Golay smoothing, 250 -> 64 Hz,
// then segmentation into 196-sample windows.
struct PipelineConfig {
    int fs_in = 1000;
    int fs_mid = 250;
    int fs_out = 64;
    int median_w1 = 125;
    int median_w2 = 249;
    int sg_order = 3;
    int sg_frame = 15;
    int segment_len = 196;

    void validate() const;
};

// One training/test instance: 3 leads (II, III, aVF) x segment_len points.
struct Sample {
    Tensor x;  // {3, segment_len}
    ingest::ClassLabel label = ingest::ClassLabel::HC;
    std::string patient_id;
    std::string record_name;
    std::size_t segment_index = 0;
};

// Rational polyphase resampler: upsample by p, low-pass with a
// Kaiser-windowed sinc at min(pi/p, pi/q), downsample by q. Output length
// is ceil(len * p / q). Per-phase tap normalization keeps DC exact in
// steady state.
std::vector<double> resample(std::span<const double> x, int p, int q);

// Centered running median of odd width w; the window is truncated at the
// boundaries and even-count windows take the lower median.
std::vector<double> median_filter(std::span<const double> x, int w);

// x minus its two-stage median baseline median(median(x, w1), w2).
std::vector<double> remove_baseline(std::span<const double> x, int w1, int w2);

// Savitzky-Golay smoothing: least-squares polynomial fit of the given order
// over a centered window of `frame` samples, evaluated at the center. Edges
// are fit on the truncated asymmetric window.
std::vector<double> savgol(std::span<const double> x, int order, int frame);

// Interior convolution kernel of the Savitzky-Golay filter (exposed so the
// coefficients can be checked against the normal-equations solution).
std::vector<double> savgol_kernel(int order, int frame);

// Non-overlapping consecutive windows of exactly seg_len; the trailing
// remainder is discarded.
std::vector<std::vector<double>> segment(std::span<const double> x, int seg_len);

// Full per-record chain. Segment k of the three leads is stacked into
// Sample k (lead-major: II, III, aVF).
std::vector<Sample> make_samples(const ingest::EcgRecord& record,
                                 const PipelineConfig& cfg);

} // namespace imidet::dsp
