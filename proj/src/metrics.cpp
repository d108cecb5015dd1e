#include "rhythm/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace rhythm::metrics {

std::optional<double> binary_auc(std::span<const double> scores, std::span<const bool> positives) {
    if (scores.size() != positives.size()) throw std::invalid_argument("binary_auc: length mismatch");
    const size_t n = scores.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // 1-based midranks; accumulate the rank sum of the positives.
    double rank_sum = 0;
    size_t n_pos = 0;
    for (size_t i = 0; i < n;) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (size_t k = i; k < j; ++k)
            if (positives[order[k]]) {
                rank_sum += midrank;
                ++n_pos;
            }
        i = j;
    }
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;
    const double p = static_cast<double>(n_pos);
    const double u = rank_sum - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(n_neg));
}

MacroAuc macro_auc(std::span<const ScoredSegment> s) {
    MacroAuc out;
    std::vector<double> scores(s.size());
    const auto positives = std::make_unique<bool[]>(s.size());
    double sum = 0;
    for (Rhythm c : kAllRhythms) {
        for (size_t i = 0; i < s.size(); ++i) {
            scores[i] = s[i].probs[class_index(c)];
            positives[i] = s[i].label == c;
        }
        const auto auc = binary_auc(scores, std::span<const bool>(positives.get(), s.size()));
        if (!auc) continue;
        sum += *auc;
        out.classes_present.push_back(c);
    }
    if (out.classes_present.size() >= 2) out.value = sum / static_cast<double>(out.classes_present.size());
    return out;
}

std::optional<double> micro_auc(std::span<const ScoredSegment> s) {
    if (s.empty()) return std::nullopt;
    std::vector<double> scores;
    const auto flags = std::make_unique<bool[]>(s.size() * kNumClasses);
    scores.reserve(s.size() * kNumClasses);
    size_t k = 0;
    for (const auto& seg : s)
        for (Rhythm c : kAllRhythms) {
            scores.push_back(seg.probs[class_index(c)]);
            flags[k++] = seg.label == c;
        }
    return binary_auc(scores, std::span<const bool>(flags.get(), k));
}

int predicted_class(const Probs& p) {
    int best = 0;
    for (int c = 1; c < kNumClasses; ++c)
        if (p[c] > p[best]) best = c;
    return best;
}

std::optional<double> accuracy(std::span<const ScoredSegment> s) {
    if (s.empty()) return std::nullopt;
    size_t correct = 0;
    for (const auto& seg : s)
        if (predicted_class(seg.probs) == class_index(seg.label)) ++correct;
    return static_cast<double>(correct) / static_cast<double>(s.size());
}

namespace {

ReportRow make_row(std::string bin, const std::string& model, std::span<const ScoredSegment> s) {
    ReportRow row;
    row.bin = std::move(bin);
    row.model = model;
    row.n = s.size();
    if (s.empty()) return row;
    auto macro = macro_auc(s);
    row.macro_auc = macro.value;
    row.classes_present = std::move(macro.classes_present);
    row.micro_auc = micro_auc(s);
    row.accuracy = accuracy(s);
    return row;
}

}  // namespace

EvalReport build_report(std::span<const ScoredSegment> scored, const sigproc::MotionStrata& strata,
                        const std::string& model_name) {
    if (strata.assignment.size() != scored.size())
        throw std::invalid_argument("build_report: strata do not cover the scored segments");
    EvalReport r;
    const auto members = strata.members();
    for (int b = 0; b < strata.n_bins; ++b) {
        std::vector<ScoredSegment> in_bin;
        for (size_t i : members[static_cast<size_t>(b)]) {
            if (scored[i].motion_bin != b) throw std::invalid_argument("build_report: segment bin disagrees with strata");
            in_bin.push_back(scored[i]);
        }
        r.rows.push_back(make_row(std::to_string(b), model_name, in_bin));
    }
    r.rows.push_back(make_row("all", model_name, scored));
    return r;
}

std::string format_metric(std::optional<double> v) {
    if (!v) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
}

std::string format_classes(const std::vector<Rhythm>& classes) {
    std::string out;
    for (size_t i = 0; i < classes.size(); ++i) {
        if (i) out += '|';
        out += to_string(classes[i]);
    }
    return out;
}

std::string report_csv(const EvalReport& r, bool with_header) {
    std::string out;
    if (with_header) out += std::string(kReportHeader) + "\n";
    for (const auto& row : r.rows) {
        out += row.bin + ',' + row.model + ',' + format_metric(row.macro_auc) + ',' + format_metric(row.micro_auc) + ',' +
               format_metric(row.accuracy) + ',' + std::to_string(row.n) + ',' + format_classes(row.classes_present) + '\n';
    }
    return out;
}

std::string report_ndjson(const EvalReport& r) {
    std::string out;
    for (const auto& row : r.rows) {
        nlohmann::ordered_json j;
        j["bin"] = row.bin;
        j["model"] = row.model;
        auto put = [&](const char* key, std::optional<double> v) { j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
        put("macro_auc", row.macro_auc);
        put("micro_auc", row.micro_auc);
        put("accuracy", row.accuracy);
        j["n"] = row.n;
        std::vector<std::string> cls;
        for (auto c : row.classes_present) cls.emplace_back(to_string(c));
        j["classes_present"] = cls;
        out += j.dump() + "\n";
    }
    return out;
}

std::string summarize_report_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kReportHeader) throw std::runtime_error("summarize: not a report CSV (bad header)");

    static constexpr std::array<const char*, 3> kMetrics{"macro_auc", "micro_auc", "accuracy"};
    struct Acc {
        std::array<std::vector<double>, 3> values;
        size_t runs = 0;
    };
    std::vector<std::string> variants;
    std::vector<std::string> bins;
    std::map<std::pair<std::string, std::string>, Acc> groups;

    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (line.back() == ',') f.emplace_back();
        if (f.size() != 7) throw std::runtime_error("summarize: line " + std::to_string(line_no) + " has " + std::to_string(f.size()) + " fields");
        std::string variant = f[1];
        if (const auto at = variant.find("/seed"); at != std::string::npos) variant.resize(at);
        if (std::find(variants.begin(), variants.end(), variant) == variants.end()) variants.push_back(variant);
        if (std::find(bins.begin(), bins.end(), f[0]) == bins.end()) bins.push_back(f[0]);
        auto& acc = groups[{variant, f[0]}];
        ++acc.runs;
        for (size_t m = 0; m < 3; ++m)
            if (f[2 + m] != "NA") acc.values[m].push_back(std::stod(f[2 + m]));
    }

    std::string out = "metric,bin,model,mean,min,max,n_runs\n";
    for (size_t m = 0; m < 3; ++m)
        for (const auto& v : variants)
            for (const auto& b : bins) {
                const auto it = groups.find({v, b});
                if (it == groups.end()) continue;
                const auto& vals = it->second.values[m];
                std::optional<double> mean, lo, hi;
                if (!vals.empty()) {
                    mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
                    lo = *std::min_element(vals.begin(), vals.end());
                    hi = *std::max_element(vals.begin(), vals.end());
                }
                out += std::string(kMetrics[m]) + ',' + b + ',' + v + ',' + format_metric(mean) + ',' + format_metric(lo) + ',' +
                       format_metric(hi) + ',' + std::to_string(vals.size()) + '\n';
            }
    return out;
}

}  // namespace rhythm::metrics
