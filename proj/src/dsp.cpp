#include "imidet/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace imidet::dsp {

void PipelineConfig::validate() const {
    if (fs_in <= 0 || fs_mid <= 0 || fs_out <= 0 || !(fs_in > fs_mid && fs_mid > fs_out)) {
        throw std::invalid_argument("sampling rates must satisfy fs_in > fs_mid > fs_out > 0");
    }
    if (median_w1 % 2 == 0 || median_w2 % 2 == 0 || median_w1 < 1 || median_w2 < 1) {
        throw EvenWindow("median windows must be odd and positive");
    }
    if (sg_frame % 2 == 0 || sg_frame <= sg_order) {
        throw BadFrame("sg_frame must be odd and greater than sg_order");
    }
    if (sg_order < 0) throw BadFrame("sg_order must be non-negative");
    if (segment_len < 1) throw std::invalid_argument("segment_len must be positive");
}

namespace {

double bessel_i0(double x) {
    // series expansion, converges fast for the beta values used here
    double sum = 1.0, term = 1.0;
    const double q = x * x / 4.0;
    for (int k = 1; k < 64; ++k) {
        term *= q / (static_cast<double>(k) * k);
        sum += term;
        if (term < 1e-18 * sum) break;
    }
    return sum;
}

double sinc(double x) {
    if (x == 0.0) return 1.0;
    const double px = M_PI * x;
    return std::sin(px) / px;
}

// Kaiser-windowed sinc for the polyphase resampler, designed at the
// upsampled rate with cutoff pi/max(p,q). half_len taps each side.
std::vector<double> design_resample_filter(int p, int q, int half_len, double beta) {
    const int m = std::max(p, q);
    const int n_taps = 2 * half_len + 1;
    std::vector<double> h(static_cast<std::size_t>(n_taps));
    const double i0b = bessel_i0(beta);
    for (int i = 0; i < n_taps; ++i) {
        const double t = static_cast<double>(i - half_len);
        const double r = t / half_len;  // in [-1, 1]
        const double window = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
        h[static_cast<std::size_t>(i)] =
            window * static_cast<double>(p) / m * sinc(t / m);
    }
    // normalize each polyphase branch so a constant input stays constant
    for (int r = 0; r < p; ++r) {
        double s = 0.0;
        for (int i = r; i < n_taps; i += p) s += h[static_cast<std::size_t>(i)];
        if (s != 0.0) {
            for (int i = r; i < n_taps; i += p) h[static_cast<std::size_t>(i)] /= s;
        }
    }
    return h;
}

} // namespace

std::vector<double> resample(std::span<const double> x, int p, int q) {
    if (x.empty()) throw EmptyInput("resample: empty input");
    if (p < 1 || q < 1) throw std::invalid_argument("resample: p and q must be >= 1");
    const int g = std::gcd(p, q);
    p /= g;
    q /= g;
    if (p == 1 && q == 1) return std::vector<double>(x.begin(), x.end());

    const int half_len = 10 * std::max(p, q);
    const std::vector<double> h = design_resample_filter(p, q, half_len, 5.0);
    const long n_taps = static_cast<long>(h.size());

    const long n_in = static_cast<long>(x.size());
    const long n_out = (n_in * p + q - 1) / q;  // ceil
    std::vector<double> y(static_cast<std::size_t>(n_out), 0.0);

    // y[m] picks the taps of conv(upsample(x, p), h) at index m*q + half_len;
    // x is zero outside its support.
    for (long m = 0; m < n_out; ++m) {
        const long base = m * static_cast<long>(q) + half_len;
        const long d = base - n_taps + 1;
        const long k_lo = d > 0 ? (d + p - 1) / p : 0;
        const long k_hi = std::min(base / p, n_in - 1);
        double acc = 0.0;
        for (long k = k_lo; k <= k_hi; ++k) {
            acc += h[static_cast<std::size_t>(base - k * p)] * x[static_cast<std::size_t>(k)];
        }
        y[static_cast<std::size_t>(m)] = acc;
    }
    return y;
}

std::vector<double> median_filter(std::span<const double> x, int w) {
    if (w < 1 || w % 2 == 0) throw EvenWindow("median window must be odd and >= 1");
    const long n = static_cast<long>(x.size());
    const long half = (w - 1) / 2;
    std::vector<double> out(x.size());
    std::vector<double> window;
    window.reserve(static_cast<std::size_t>(w));
    for (long i = 0; i < n; ++i) {
        const long lo = std::max(0L, i - half);
        const long hi = std::min(n - 1, i + half);
        window.assign(x.begin() + lo, x.begin() + hi + 1);
        // lower median: element at (count-1)/2 of the sorted window
        const std::size_t mid = (window.size() - 1) / 2;
        std::nth_element(window.begin(), window.begin() + static_cast<long>(mid), window.end());
        out[static_cast<std::size_t>(i)] = window[mid];
    }
    return out;
}

std::vector<double> remove_baseline(std::span<const double> x, int w1, int w2) {
    const std::vector<double> stage1 = median_filter(x, w1);
    const std::vector<double> baseline = median_filter(stage1, w2);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - baseline[i];
    return out;
}

namespace {

// Least-squares polynomial smoothing weights for window offsets `off`,
// evaluated at offset 0: w_r = P_z(off[r]) where z solves (G'G) z = e0.
// Solved in long double; systems are at most (order+1)^2.
std::vector<double> savgol_weights(const std::vector<long>& off, int order) {
    const int deg = std::min<int>(order, static_cast<int>(off.size()) - 1);
    const int m = deg + 1;
    // A = G'G with G[r][j] = off[r]^j, so A[i][j] = sum_r off[r]^(i+j)
    std::vector<long double> a(static_cast<std::size_t>(m * m), 0.0L);
    std::vector<long double> pows(static_cast<std::size_t>(m));
    for (long o : off) {
        pows[0] = 1.0L;
        for (int j = 1; j < m; ++j)
            pows[static_cast<std::size_t>(j)] = pows[static_cast<std::size_t>(j - 1)] * o;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                a[static_cast<std::size_t>(i * m + j)] +=
                    pows[static_cast<std::size_t>(i)] * pows[static_cast<std::size_t>(j)];
    }
    std::vector<long double> z(static_cast<std::size_t>(m), 0.0L);
    z[0] = 1.0L;  // rhs e0
    // Gaussian elimination with partial pivoting
    std::vector<int> piv(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) piv[static_cast<std::size_t>(i)] = i;
    for (int col = 0; col < m; ++col) {
        int best = col;
        for (int r = col + 1; r < m; ++r) {
            if (std::fabs(static_cast<double>(a[static_cast<std::size_t>(r * m + col)])) >
                std::fabs(static_cast<double>(a[static_cast<std::size_t>(best * m + col)]))) {
                best = r;
            }
        }
        if (best != col) {
            for (int j = 0; j < m; ++j)
                std::swap(a[static_cast<std::size_t>(col * m + j)],
                          a[static_cast<std::size_t>(best * m + j)]);
            std::swap(z[static_cast<std::size_t>(col)], z[static_cast<std::size_t>(best)]);
        }
        const long double pivot = a[static_cast<std::size_t>(col * m + col)];
        for (int r = col + 1; r < m; ++r) {
            const long double f = a[static_cast<std::size_t>(r * m + col)] / pivot;
            if (f == 0.0L) continue;
            for (int j = col; j < m; ++j)
                a[static_cast<std::size_t>(r * m + j)] -= f * a[static_cast<std::size_t>(col * m + j)];
            z[static_cast<std::size_t>(r)] -= f * z[static_cast<std::size_t>(col)];
        }
    }
    for (int r = m - 1; r >= 0; --r) {
        long double acc = z[static_cast<std::size_t>(r)];
        for (int j = r + 1; j < m; ++j)
            acc -= a[static_cast<std::size_t>(r * m + j)] * z[static_cast<std::size_t>(j)];
        z[static_cast<std::size_t>(r)] = acc / a[static_cast<std::size_t>(r * m + r)];
    }
    // kernel tap at offset o is the fitted polynomial evaluated at o
    std::vector<double> w(off.size());
    for (std::size_t r = 0; r < off.size(); ++r) {
        long double acc = 0.0L, pw = 1.0L;
        for (int j = 0; j < m; ++j) {
            acc += z[static_cast<std::size_t>(j)] * pw;
            pw *= off[r];
        }
        w[r] = static_cast<double>(acc);
    }
    return w;
}

} // namespace

std::vector<double> savgol_kernel(int order, int frame) {
    if (frame % 2 == 0 || frame <= order) throw BadFrame("frame must be odd and > order");
    const long half = (frame - 1) / 2;
    std::vector<long> off(static_cast<std::size_t>(frame));
    for (long i = 0; i < frame; ++i) off[static_cast<std::size_t>(i)] = i - half;
    return savgol_weights(off, order);
}

std::vector<double> savgol(std::span<const double> x, int order, int frame) {
    if (frame % 2 == 0 || frame <= order) throw BadFrame("frame must be odd and > order");
    if (order < 0) throw BadFrame("order must be non-negative");
    const long n = static_cast<long>(x.size());
    const long half = (frame - 1) / 2;
    std::vector<double> out(x.size(), 0.0);
    if (n == 0) return out;

    const std::vector<double> interior = savgol_kernel(order, frame);
    std::vector<long> off;
    for (long i = 0; i < n; ++i) {
        const long lo = std::max(0L, i - half);
        const long hi = std::min(n - 1, i + half);
        double acc = 0.0;
        if (hi - lo + 1 == frame) {
            for (long j = lo; j <= hi; ++j) {
                acc += interior[static_cast<std::size_t>(j - lo)] * x[static_cast<std::size_t>(j)];
            }
        } else {
            off.clear();
            for (long j = lo; j <= hi; ++j) off.push_back(j - i);
            const std::vector<double> w = savgol_weights(off, order);
            for (long j = lo; j <= hi; ++j) {
                acc += w[static_cast<std::size_t>(j - lo)] * x[static_cast<std::size_t>(j)];
            }
        }
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

std::vector<std::vector<double>> segment(std::span<const double> x, int seg_len) {
    if (seg_len < 1) throw std::invalid_argument("segment length must be >= 1");
    const std::size_t w = static_cast<std::size_t>(seg_len);
    std::vector<std::vector<double>> out;
    out.reserve(x.size() / w);
    for (std::size_t start = 0; start + w <= x.size(); start += w) {
        out.emplace_back(x.begin() + static_cast<long>(start),
                         x.begin() + static_cast<long>(start + w));
    }
    return out;
}

std::vector<Sample> make_samples(const ingest::EcgRecord& record,
                                 const PipelineConfig& cfg) {
    cfg.validate();
    static const char* kLeads[3] = {"ii", "iii", "avf"};
    for (const char* lead : kLeads) {
        if (record.leads.find(lead) == record.leads.end()) {
            throw MissingLead(std::string("record ") + record.record_name +
                              " lacks lead " + lead);
        }
    }
    if (std::lround(record.sampling_rate) != cfg.fs_in) {
        throw std::invalid_argument("record sampling rate does not match fs_in");
    }

    const int g1 = std::gcd(cfg.fs_mid, cfg.fs_in);
    const int g2 = std::gcd(cfg.fs_out, cfg.fs_mid);

    std::vector<std::vector<std::vector<double>>> segments_per_lead(3);
    for (int l = 0; l < 3; ++l) {
        const auto& series = record.leads.at(kLeads[l]);
        if (series.empty()) {
            segments_per_lead[static_cast<std::size_t>(l)] = {};
            continue;
        }
        std::vector<double> y = resample(series, cfg.fs_mid / g1, cfg.fs_in / g1);
        y = remove_baseline(y, cfg.median_w1, cfg.median_w2);
        y = savgol(y, cfg.sg_order, cfg.sg_frame);
        y = resample(y, cfg.fs_out / g2, cfg.fs_mid / g2);
        segments_per_lead[static_cast<std::size_t>(l)] = segment(y, cfg.segment_len);
    }

    const std::size_t n_segments =
        std::min({segments_per_lead[0].size(), segments_per_lead[1].size(),
                  segments_per_lead[2].size()});
    const ingest::ClassLabel label = record.diagnosis == ingest::Diagnosis::InferiorMI
                                         ? ingest::ClassLabel::IMI
                                         : ingest::ClassLabel::HC;

    std::vector<Sample> samples;
    samples.reserve(n_segments);
    for (std::size_t k = 0; k < n_segments; ++k) {
        Sample s;
        s.x = Tensor({3, static_cast<std::size_t>(cfg.segment_len)});
        for (std::size_t l = 0; l < 3; ++l) {
            const auto& seg = segments_per_lead[l][k];
            for (std::size_t i = 0; i < seg.size(); ++i) {
                s.x(l, i) = seg[i];
            }
        }
        s.label = label;
        s.patient_id = record.patient_id;
        s.record_name = record.record_name;
        s.segment_index = k;
        samples.push_back(std::move(s));
    }
    return samples;
}

} // namespace imidet::dsp
