#pragma once

#include <complex>
#include <span>
#include <vector>

#include "rhythm/types.hpp"

namespace rhythm::sigproc {

struct Biquad {
    double b0 = 1, b1 = 0, b2 = 0;
    double a1 = 0, a2 = 0;
};

struct BandpassDesign {
    double low_hz = 0;
    double high_hz = 0;
    int order = 0;
    double sample_rate_hz = 0;
};

/// Digital bandpass realized as cascaded second-order sections
/// (a0 normalized to 1 in every section).
struct BiquadCascade {
    std::vector<Biquad> sections;
    BandpassDesign design;

    /// H(e^{j 2 pi f / fs}).
    std::complex<double> response(double f_hz) const;
    double magnitude(double f_hz) const { return std::abs(response(f_hz)); }
    /// All poles of the cascade (two per section).
    std::vector<std::complex<double>> poles() const;
};

/// Butterworth bandpass of the given prototype order: analog prototype,
/// lowpass-to-bandpass transform at prewarped edges, bilinear map.
/// The digital filter has order 2*order, i.e. `order` sections.
BiquadCascade design_bandpass(double low_hz, double high_hz, int order, double fs_hz);

/// Single causal pass, zero initial state (transposed direct form II).
std::vector<double> apply_filter(const BiquadCascade& f, std::span<const double> x);

/// Non-overlapping windows of `window_s` seconds; trailing partial window dropped.
std::vector<Channels> segment_windows(const RawRecording& r, double window_s = 30.0);

/// Zero mean, unit population variance. Constant input (sd < 1e-12) maps to zeros.
std::vector<double> znormalize(std::span<const double> x);

std::vector<double> acc_magnitude(std::span<const double> ax, std::span<const double> ay,
                                  std::span<const double> az);

/// Population variance.
double motion_score(std::span<const double> magnitude);

struct MotionStrata {
    int n_bins = 10;
    /// n_bins + 1 thresholds: min score, the score at each bin's first rank, max score.
    std::vector<double> bin_edges;
    /// bin index for every input position.
    std::vector<int> assignment;

    std::vector<std::vector<size_t>> members() const;
};

/// Rank by score (ties by original index); rank r goes to bin floor(r*n_bins/N).
MotionStrata stratify_percentiles(std::span<const double> scores, int n_bins = 10);

/// The two filters used by the preprocessing pipeline.
struct PreprocessFilters {
    BiquadCascade ppg = design_bandpass(0.5, 8.0, 3, kSampleRateHz);
    BiquadCascade acc = design_bandpass(0.5, 5.0, 2, kSampleRateHz);
};

/// Full per-segment conditioning. PPG: mean removal, 0.5-8 Hz filter,
/// z-normalization. ACC axes: mean removal, 0.5-5 Hz filter; the motion score
/// is the variance of the filtered magnitude and the network channels are the
/// filtered axes, z-normalized.
Segment preprocess_segment(const Segment& raw, const PreprocessFilters& filters = {});

}  // namespace rhythm::sigproc
