#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rhythm/sigproc.hpp"
#include "rhythm/types.hpp"

namespace rhythm::metrics {

using Probs = std::array<double, kNumClasses>;

struct ScoredSegment {
    Probs probs{};
    Rhythm label = Rhythm::SR;
    int motion_bin = 0;
};

/// Mann-Whitney AUC from midranks: (concordant + 0.5 tied) / (P*N).
/// Absent when either class is empty.
std::optional<double> binary_auc(std::span<const double> scores, std::span<const bool> positives);

struct MacroAuc {
    std::optional<double> value;
    /// Classes that had both positives and negatives and entered the mean.
    std::vector<Rhythm> classes_present;
};

MacroAuc macro_auc(std::span<const ScoredSegment> s);
std::optional<double> micro_auc(std::span<const ScoredSegment> s);
/// argmax ties resolve to the lowest class index.
int predicted_class(const Probs& p);
std::optional<double> accuracy(std::span<const ScoredSegment> s);

struct ReportRow {
    std::string bin;  // "0".."9" or "all"
    std::string model;
    std::optional<double> macro_auc;
    std::optional<double> micro_auc;
    std::optional<double> accuracy;
    size_t n = 0;
    std::vector<Rhythm> classes_present;
};

struct EvalReport {
    std::vector<ReportRow> rows;
};

/// One row per bin (in bin order) followed by the "all" row.
/// Each scored segment's `motion_bin` must agree with `strata`.
EvalReport build_report(std::span<const ScoredSegment> scored, const sigproc::MotionStrata& strata,
                        const std::string& model_name);

inline constexpr const char* kReportHeader = "bin,model,macro_auc,micro_auc,accuracy,n,classes_present";

std::string format_metric(std::optional<double> v);
std::string format_classes(const std::vector<Rhythm>& classes);
/// CSV with kReportHeader; no trailing blank line.
std::string report_csv(const EvalReport& r, bool with_header = true);
/// One JSON object per line with the same fields.
std::string report_ndjson(const EvalReport& r);

/// Seed-averaged long-format table: metric,bin,model,mean,min,max,n_runs.
/// Model names of the form "<variant>/seed<k>" are grouped by variant.
std::string summarize_report_csv(const std::string& report_csv_text);

}  // namespace rhythm::metrics
