#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace imidet::ingest {

enum class Diagnosis { HealthyControl, InferiorMI, Other };
enum class ClassLabel : int { HC = 0, IMI = 1 };

struct MalformedHeader : std::runtime_error {
    explicit MalformedHeader(const std::string& what) : std::runtime_error(what) {}
};
struct UnsupportedFormat : std::runtime_error {
    explicit UnsupportedFormat(const std::string& what) : std::runtime_error(what) {}
};
struct LengthMismatch : std::runtime_error {
    explicit LengthMismatch(const std::string& what) : std::runtime_error(what) {}
};
struct ConflictingLabels : std::runtime_error {
    explicit ConflictingLabels(const std::string& patient)
        : std::runtime_error("conflicting diagnoses for patient " + patient),
          patient_id(patient) {}
    std::string patient_id;
};

// One line of a .hea signal description. Only format 16 is supported; the
// fields beyond (name, format, gain, baseline) are parsed permissively and
// dropped.
struct SignalSpec {
    std::string lead_name;
    int storage_format = 16;
    double gain = 0.0;      // ADC units per mV
    double baseline = 0.0;  // ADC units at 0 mV
};

struct RecordHeader {
    std::string record_name;
    int n_signals = 0;
    double sampling_rate = 0.0;  // Hz
    long n_samples = 0;          // per signal; 0 when the header omits it
    std::vector<SignalSpec> signal_specs;
    std::vector<std::string> comments;  // verbatim, leading '#' kept
};

// One multi-lead signal in mV at a known sampling rate. After lead selection
// only the lowercase leads of interest ("ii", "iii", "avf") are retained.
struct EcgRecord {
    std::string patient_id;
    std::string record_name;
    double sampling_rate = 0.0;
    std::map<std::string, std::vector<double>> leads;
    Diagnosis diagnosis = Diagnosis::Other;
};

struct Patient {
    std::string patient_id;
    std::vector<EcgRecord> records;
    ClassLabel label = ClassLabel::HC;
};

struct PatientSet {
    std::vector<Patient> patients;  // sorted by patient_id
    std::size_t record_count() const {
        std::size_t n = 0;
        for (const auto& p : patients) n += p.records.size();
        return n;
    }
};

// Parses a WFDB ".hea" text payload. Comment lines (leading '#') are kept
// verbatim and in order. Multi-segment headers and storage formats other
// than 16 are rejected.
RecordHeader parse_header(std::string_view text);

// Decodes a format-16 ".dat" payload (interleaved little-endian int16) into
// per-lead series in mV: value = (raw - baseline) / gain.
std::map<std::string, std::vector<double>> read_signals(
    const RecordHeader& header, const std::vector<std::uint8_t>& payload);

// Inverse of read_signals; round-trips payloads bit-exactly.
std::vector<std::uint8_t> encode_signals(
    const RecordHeader& header,
    const std::map<std::string, std::vector<double>>& leads);

inline const std::vector<std::string> kDefaultImiLocalizations = {"inferior"};

// HealthyControl iff the admission reason contains "Healthy control";
// InferiorMI iff it contains "Myocardial infarction" and the acute
// localization equals one of imi_localizations (case-insensitive); else
// Other. Total and pure.
Diagnosis classify_diagnosis(
    const std::vector<std::string>& comments,
    const std::vector<std::string>& imi_localizations = kDefaultImiLocalizations);

// Groups records by patient_id (result sorted by id). Every record must
// carry an HC or IMI diagnosis; a patient with both throws
// ConflictingLabels.
PatientSet build_patient_set(const std::vector<EcgRecord>& records);

// Clean periodic P-QRS-T template in mV at time t (no drift, no noise).
// The IMI variant deepens the Q bump and inverts the T bump, so the two
// classes differ by construction.
double synth_template(ClassLabel label, double t);

// Deterministic synthetic three-lead record: template per lead (scaled),
// plus a sub-0.5 Hz sinusoidal baseline drift and white noise, both drawn
// from the seed. Lead length = round(duration_s * rate_hz).
EcgRecord synth_record(ClassLabel label, double duration_s, double rate_hz,
                       std::uint64_t seed);

} // namespace imidet::ingest
