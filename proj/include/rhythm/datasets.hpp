#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rhythm/types.hpp"

namespace rhythm::data {

using Rng = std::mt19937_64;

struct RhythmParams {
    double sr_mean_rr_s = 0.8;
    double sr_sd_rr_s = 0.03;
    double af_min_rr_s = 0.4;
    double af_max_rr_s = 1.2;
    /// Fraction of "Other" intervals that are premature.
    double ectopy_rate = 0.2;
    double premature_factor = 0.6;
    double compensation_factor = 1.4;
};

struct SynthConfig {
    int n_patients = 30;
    int segments_per_patient = 40;
    /// SR, AF, Other.
    std::array<double, kNumClasses> class_mix{0.4, 0.4, 0.2};
    int motion_levels = 10;
    std::uint64_t seed = 1;
    RhythmParams rhythm;
    /// Gain of the ACC magnitude leaking into the PPG.
    double artifact_gain = 1.5;
    double train_fraction = 0.5;

    void validate() const;
};

std::vector<double> gen_rr_series(Rhythm kind, double duration_s, Rng& rng, const RhythmParams& p = {});

/// One pulse per interval, beat j starting at sum(rr[0..j)); the pulse height
/// follows the interval preceding the beat. Adds baseline wander and white noise.
std::vector<double> gen_ppg(std::span<const double> rr_s, double fs_hz, Rng& rng);

struct AccAxes {
    std::vector<double> x, y, z;
};

/// Gravity along `gravity_dir` plus band-limited motion bursts whose amplitude
/// grows with `motion_level` (0 is rest). All random draws are made regardless
/// of level, so for a fixed rng state only the amplitude changes.
AccAxes gen_acc(int motion_level, double fs_hz, int n_samples, Rng& rng,
                const std::array<double, 3>& gravity_dir = {0.0, 0.0, 1.0});

/// ppg * attenuation + alpha * (|acc| - mean|acc|), attenuation = 1 / (1 + alpha * e(t))
/// where e(t) is the 1 s moving RMS of the mean-removed magnitude (in g).
std::vector<double> couple_artifacts(std::span<const double> ppg, const AccAxes& acc, double alpha);

struct SynthDataset {
    std::vector<RawRecording> recordings;
    std::vector<Segment> segments;
    /// Ground-truth motion level of each segment.
    std::vector<int> motion_levels;
};

SynthDataset generate_dataset(const SynthConfig& cfg);

enum class Split { Train, Test };
std::string to_string(Split s);

struct ManifestEntry {
    std::string patient_id;
    Split split = Split::Train;
};

struct Manifest {
    std::vector<ManifestEntry> entries;

    /// Throws if the patient is not listed.
    Split split_of(const std::string& patient_id) const;
    bool contains(const std::string& patient_id) const;
};

/// Patient-level split stratified by each patient's majority label.
/// round(n_patients * train_fraction) patients go to train.
Manifest split_patients(std::span<const Segment> records, double train_fraction, std::uint64_t seed);

struct ParseError : std::runtime_error {
    ParseError(const std::string& source, size_t line, const std::string& what)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line(line) {}
    size_t line;
};

/// One JSON object per line, keys in the order
/// patient_id, label, motion_score, processed, ppg, acc_x, acc_y, acc_z.
std::string segment_to_line(const Segment& s);
Segment segment_from_line(const std::string& line, const std::string& source = "<string>", size_t line_no = 1);

void write_segments(const std::filesystem::path& path, std::span<const Segment> records);
std::vector<Segment> read_segments(const std::filesystem::path& path);

/// CSV: header "patient_id,split", one row per patient.
void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place.
void atomic_write(const std::filesystem::path& path, const std::string& contents);

}  // namespace rhythm::data
