#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rhythm/types.hpp"

namespace rhythm::hrv {

/// Strictly increasing sample indices.
using PeakList = std::vector<int>;

/// Automatic multiscale peak detection on a linearly detrended copy of `x`.
///
/// Uses the deterministic local-maxima scalogram: at scale k sample i is a
/// maximum when it exceeds both x[i-k] and x[i+k]. The scale with the most
/// maxima (lambda) sets the cutoff, and a peak is a sample that is a maximum
/// at every scale 1..lambda. For the cutoff search a neighbour that falls
/// outside the signal counts as a failed comparison; for the final column test
/// the missing side is ignored, so peaks within lambda samples of either end
/// are still found. End samples are never peaks. Differences within 1e-10 of the
/// signal's range are ties and go to the earlier sample. Inputs shorter than 8
/// samples give no peaks.
PeakList ampd_peaks(std::span<const double> x);

/// Successive peak distances in milliseconds. Fewer than 2 peaks: empty.
std::vector<double> compute_ibis(const PeakList& peaks, double fs_hz);

/// The HRV statistics need at least two intervals; otherwise they are absent.
std::optional<double> rmssd(std::span<const double> ibi_ms);
/// Population standard deviation of successive differences.
std::optional<double> sdsd(std::span<const double> ibi_ms);
/// Percentage of |successive difference| strictly greater than 40 ms.
std::optional<double> pnn40(std::span<const double> ibi_ms);

enum class Feature : int { Rmssd = 0, Sdsd = 1, Pnn40 = 2 };
inline constexpr std::array<Feature, 3> kAllFeatures{Feature::Rmssd, Feature::Sdsd, Feature::Pnn40};
std::string feature_name(Feature f);

struct HrvFeatures {
    std::optional<double> rmssd_ms;
    std::optional<double> sdsd_ms;
    std::optional<double> pnn40_pct;

    std::optional<double> get(Feature f) const;
};

/// AMPD on the PPG row, then IBIs and the three statistics.
HrvFeatures extract_features(std::span<const double> ppg, double fs_hz = kSampleRateHz);

struct LogRegConfig {
    int max_iterations = 10000;
    double grad_tol = 1e-6;
    double initial_step = 1.0;
};

/// Softmax regression on one standardized scalar feature.
struct LogRegModel {
    std::array<double, kNumClasses> weights{};
    std::array<double, kNumClasses> biases{};
    double feature_mean = 0;
    double feature_sd = 1;
    int iterations = 0;
    /// Training loss after each accepted step (index 0 is the initial loss).
    std::vector<double> loss_history;

    double standardize(std::optional<double> v) const { return v ? (*v - feature_mean) / feature_sd : 0.0; }
};

/// Full-batch gradient descent with Armijo backtracking on mean cross-entropy.
/// Absent feature values are imputed with the training mean.
LogRegModel fit_logreg(std::span<const std::optional<double>> features, std::span<const Rhythm> labels,
                       const LogRegConfig& config = {});

std::array<double, kNumClasses> predict_logreg(const LogRegModel& m, std::optional<double> feature);

}  // namespace rhythm::hrv
