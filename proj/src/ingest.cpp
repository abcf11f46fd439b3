#include "imidet/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include "imidet/rng.hpp"

namespace imidet::ingest {

namespace {

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> toks;
    std::istringstream in(line);
    std::string t;
    while (in >> t) toks.push_back(t);
    return toks;
}

long parse_long(const std::string& tok, const char* what) {
    try {
        std::size_t pos = 0;
        long v = std::stol(tok, &pos);
        if (pos == 0) throw MalformedHeader(std::string("bad ") + what);
        return v;
    } catch (const std::exception&) {
        throw MalformedHeader(std::string("bad ") + what + ": " + tok);
    }
}

double parse_double_prefix(const std::string& tok, const char* what) {
    try {
        std::size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos == 0) throw MalformedHeader(std::string("bad ") + what);
        return v;
    } catch (const std::exception&) {
        throw MalformedHeader(std::string("bad ") + what + ": " + tok);
    }
}

// gain token: "<gain>[(baseline)][/units]"
void parse_gain_token(const std::string& tok, SignalSpec& spec, bool* have_baseline) {
    std::size_t pos = 0;
    double gain = 0.0;
    try {
        gain = std::stod(tok, &pos);
    } catch (const std::exception&) {
        throw MalformedHeader("bad gain: " + tok);
    }
    spec.gain = gain;
    *have_baseline = false;
    if (pos < tok.size() && tok[pos] == '(') {
        const std::size_t close = tok.find(')', pos);
        if (close == std::string::npos) throw MalformedHeader("unterminated baseline: " + tok);
        spec.baseline = parse_double_prefix(tok.substr(pos + 1, close - pos - 1), "baseline");
        *have_baseline = true;
    }
    // "/units" suffix ignored
}

} // namespace

RecordHeader parse_header(std::string_view text) {
    RecordHeader header;
    std::vector<std::string> body_lines;

    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string line = trim(text.substr(start, end - start));
        start = end + 1;
        if (line.empty()) continue;
        if (line[0] == '#') {
            header.comments.push_back(line);
        } else {
            body_lines.push_back(line);
        }
    }

    if (body_lines.empty()) throw MalformedHeader("missing record line");

    const auto record_toks = tokenize(body_lines[0]);
    if (record_toks.size() < 2) throw MalformedHeader("record line needs name and signal count");
    header.record_name = record_toks[0];
    if (header.record_name.find('/') != std::string::npos) {
        throw UnsupportedFormat("multi-segment records are not supported");
    }
    header.n_signals = static_cast<int>(parse_long(record_toks[1], "signal count"));
    if (header.n_signals < 1) throw MalformedHeader("signal count must be >= 1");
    header.sampling_rate =
        record_toks.size() > 2 ? parse_double_prefix(record_toks[2], "sampling rate") : 250.0;
    if (header.sampling_rate <= 0.0) throw MalformedHeader("sampling rate must be positive");
    header.n_samples = record_toks.size() > 3 ? parse_long(record_toks[3], "sample count") : 0;
    if (header.n_samples < 0) throw MalformedHeader("negative sample count");

    if (static_cast<int>(body_lines.size()) - 1 != header.n_signals) {
        throw MalformedHeader("signal spec count does not match declared signal count");
    }

    for (int s = 0; s < header.n_signals; ++s) {
        const auto toks = tokenize(body_lines[1 + static_cast<std::size_t>(s)]);
        if (toks.size() < 3) throw MalformedHeader("signal spec needs file, format and gain");
        SignalSpec spec;
        // format token may carry xN/:skew/+offset suffixes; only plain 16 is in scope
        const long fmt = static_cast<long>(parse_double_prefix(toks[1], "storage format"));
        if (fmt != 16) {
            throw UnsupportedFormat("storage format " + toks[1] + " (only 16 supported)");
        }
        if (toks[1] != "16") {
            throw UnsupportedFormat("format modifiers are not supported: " + toks[1]);
        }
        spec.storage_format = 16;
        bool have_baseline = false;
        parse_gain_token(toks[2], &spec, &have_baseline);
        if (spec.gain == 0.0) throw MalformedHeader("zero gain");
        if (!have_baseline && toks.size() > 4) {
            spec.baseline = parse_double_prefix(toks[4], "ADC zero");
        }
        // description = tokens from index 8 on, may contain spaces
        std::string name;
        for (std::size_t i = 8; i < toks.size(); ++i) {
            if (!name.empty()) name += ' ';
            name += toks[i];
        }
        spec.lead_name = name;
        header.signal_specs.push_back(std::move(spec));
    }
    return header;
}

std::map<std::string, std::vector<double>> read_signals(
    const RecordHeader& header, const std::vector<std::uint8_t>& payload) {
    const std::size_t n_sig = static_cast<std::size_t>(header.n_signals);
    for (const auto& spec : header.signal_specs) {
        if (spec.storage_format != 16) throw UnsupportedFormat("storage format must be 16");
    }
    if (header.signal_specs.size() != n_sig) {
        throw MalformedHeader("signal spec count does not match declared signal count");
    }

    std::size_t n_samples = static_cast<std::size_t>(header.n_samples);
    if (n_samples == 0) {
        if (payload.size() % (2 * n_sig) != 0) {
            throw LengthMismatch("payload size is not a whole number of frames");
        }
        n_samples = payload.size() / (2 * n_sig);
    }
    if (payload.size() != n_sig * n_samples * 2) {
        throw LengthMismatch("payload size does not match header");
    }

    std::map<std::string, std::vector<double>> out;
    std::vector<std::vector<double>*> series(n_sig);
    for (std::size_t s = 0; s < n_sig; ++s) {
        auto& v = out[header.signal_specs[s].lead_name];
        v.assign(n_samples, 0.0);
        series[s] = &v;
    }

    for (std::size_t i = 0; i < n_samples; ++i) {
        for (std::size_t s = 0; s < n_sig; ++s) {
            const std::size_t off = 2 * (i * n_sig + s);
            const std::uint16_t u =
                static_cast<std::uint16_t>(payload[off]) |
                static_cast<std::uint16_t>(payload[off + 1]) << 8;
            const double raw = static_cast<double>(static_cast<std::int16_t>(u));
            const auto& spec = header.signal_specs[s];
            (*series[s])[i] = (raw - spec.baseline) / spec.gain;
        }
    }
    return out;
}

std::vector<std::uint8_t> encode_signals(
    const RecordHeader& header,
    const std::map<std::string, std::vector<double>>& leads) {
    const std::size_t n_sig = static_cast<std::size_t>(header.n_signals);
    if (header.signal_specs.size() != n_sig) {
        throw MalformedHeader("signal spec count does not match declared signal count");
    }
    std::vector<const std::vector<double>*> series(n_sig);
    std::size_t n_samples = 0;
    for (std::size_t s = 0; s < n_sig; ++s) {
        const auto it = leads.find(header.signal_specs[s].lead_name);
        if (it == leads.end()) {
            throw LengthMismatch("missing series for lead " + header.signal_specs[s].lead_name);
        }
        series[s] = &it->second;
        if (s == 0) {
            n_samples = it->second.size();
        } else if (it->second.size() != n_samples) {
            throw LengthMismatch("lead series lengths differ");
        }
    }

    std::vector<std::uint8_t> payload(n_sig * n_samples * 2);
    for (std::size_t i = 0; i < n_samples; ++i) {
        for (std::size_t s = 0; s < n_sig; ++s) {
            const auto& spec = header.signal_specs[s];
            long raw = std::lround((*series[s])[i] * spec.gain + spec.baseline);
            raw = std::clamp(raw, -32768L, 32767L);
            const std::uint16_t u = static_cast<std::uint16_t>(static_cast<std::int16_t>(raw));
            const std::size_t off = 2 * (i * n_sig + s);
            payload[off] = static_cast<std::uint8_t>(u & 0xff);
            payload[off + 1] = static_cast<std::uint8_t>(u >> 8);
        }
    }
    return payload;
}

namespace {

// value of the comment after "key:", or empty if the key is absent
std::string comment_value(const std::vector<std::string>& comments, const std::string& key_lc) {
    for (const auto& c : comments) {
        const std::string lc = to_lower(c);
        const std::size_t pos = lc.find(key_lc);
        if (pos == std::string::npos) continue;
        return trim(c.substr(pos + key_lc.size()));
    }
    return {};
}

} // namespace

Diagnosis classify_diagnosis(const std::vector<std::string>& comments,
                             const std::vector<std::string>& imi_localizations) {
    const std::string reason = to_lower(comment_value(comments, "reason for admission:"));
    if (reason.empty()) return Diagnosis::Other;
    if (reason.find("healthy control") != std::string::npos) {
        return Diagnosis::HealthyControl;
    }
    if (reason.find("myocardial infarction") == std::string::npos) {
        return Diagnosis::Other;
    }
    std::string loc = to_lower(comment_value(comments, "acute infarction (localization):"));
    while (!loc.empty() && (loc.back() == '.' || std::isspace(static_cast<unsigned char>(loc.back())))) {
        loc.pop_back();
    }
    if (loc.empty()) return Diagnosis::Other;
    for (const auto& wanted : imi_localizations) {
        if (loc == to_lower(wanted)) return Diagnosis::InferiorMI;
    }
    return Diagnosis::Other;
}

PatientSet build_patient_set(const std::vector<EcgRecord>& records) {
    std::map<std::string, Patient> by_id;
    for (const auto& rec : records) {
        if (rec.diagnosis == Diagnosis::Other) {
            throw std::invalid_argument("record " + rec.record_name +
                                        " has diagnosis Other; filter before grouping");
        }
        const ClassLabel label =
            rec.diagnosis == Diagnosis::InferiorMI ? ClassLabel::IMI : ClassLabel::HC;
        auto [it, inserted] = by_id.try_emplace(rec.patient_id);
        if (inserted) {
            it->second.patient_id = rec.patient_id;
            it->second.label = label;
        } else if (it->second.label != label) {
            throw ConflictingLabels(rec.patient_id);
        }
        it->second.records.push_back(rec);
    }
    PatientSet set;
    set.patients.reserve(by_id.size());
    for (auto& [id, patient] : by_id) set.patients.push_back(std::move(patient));
    return set;
}

namespace {

struct Bump {
    double center;  // seconds from beat onset
    double sigma;
    double amp;     // mV
};

constexpr double kBeatPeriod = 60.0 / 72.0;  // 72 bpm

double bump_sum(const Bump* bumps, int n, double phase) {
    double v = 0.0;
    for (int i = 0; i < n; ++i) {
        // evaluate the neighboring beats too so the waveform is periodic
        for (int k = -1; k <= 1; ++k) {
            const double d = phase - bumps[i].center + k * kBeatPeriod;
            v += bumps[i].amp * std::exp(-0.5 * d * d / (bumps[i].sigma * bumps[i].sigma));
        }
    }
    return v;
}

} // namespace

double synth_template(ClassLabel label, double t) {
    static const Bump kHcBumps[] = {
        {0.15, 0.025, 0.12},   // P
        {0.23, 0.012, -0.10},  // Q
        {0.25, 0.012, 1.00},   // R
        {0.27, 0.012, -0.15},  // S
        {0.45, 0.050, 0.25},   // T
    };
    static const Bump kImiBumps[] = {
        {0.15, 0.025, 0.12},
        {0.23, 0.012, -0.45},  // pathological Q
        {0.25, 0.012, 1.00},
        {0.27, 0.012, -0.15},
        {0.45, 0.050, -0.22},  // inverted T
    };
    const double phase = t - std::floor(t / kBeatPeriod) * kBeatPeriod;
    const Bump* bumps = label == ClassLabel::IMI ? kImiBumps : kHcBumps;
    return bump_sum(bumps, 5, phase);
}

EcgRecord synth_record(ClassLabel label, double duration_s, double rate_hz,
                       std::uint64_t seed) {
    if (duration_s <= 0.0 || rate_hz <= 0.0) {
        throw std::invalid_argument("duration and rate must be positive");
    }
    const std::size_t n = static_cast<std::size_t>(std::llround(duration_s * rate_hz));

    Rng rng(seed);
    const double drift_freq = rng.uniform(0.15, 0.35);  // Hz, well under 0.5
    const double drift_phase = rng.uniform(0.0, 2.0 * M_PI);
    const double drift_amp = 0.08;  // mV
    const double noise_sigma = 0.02;

    static const char* kLeadNames[3] = {"ii", "iii", "avf"};
    static const double kLeadScale[3] = {1.0, 0.75, 0.9};

    EcgRecord rec;
    rec.sampling_rate = rate_hz;
    rec.diagnosis = label == ClassLabel::IMI ? Diagnosis::InferiorMI : Diagnosis::HealthyControl;
    const std::string tag = label == ClassLabel::IMI ? "imi" : "hc";
    rec.record_name = "synth-" + tag + "-s" + std::to_string(seed);
    rec.patient_id = "synth-p" + std::to_string(seed);

    for (int l = 0; l < 3; ++l) {
        std::vector<double> series(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / rate_hz;
            const double wave = kLeadScale[l] * synth_template(label, t);
            const double drift = drift_amp * std::sin(2.0 * M_PI * drift_freq * t + drift_phase);
            series[i] = wave + drift + noise_sigma * rng.gaussian();
        }
        rec.leads[kLeadNames[l]] = std::move(series);
    }
    return rec;
}

} // namespace imidet::ingest
