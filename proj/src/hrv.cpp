#include "rhythm/hrv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rhythm::hrv {

namespace {

std::vector<double> detrend(std::span<const double> x) {
    const size_t n = x.size();
    const double tm = (static_cast<double>(n) - 1.0) / 2.0;
    const double xm = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    double sxy = 0, sxx = 0;
    for (size_t i = 0; i < n; ++i) {
        const double dt = static_cast<double>(i) - tm;
        sxy += dt * (x[i] - xm);
        sxx += dt * dt;
    }
    const double slope = sxx > 0 ? sxy / sxx : 0.0;
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = x[i] - xm - slope * (static_cast<double>(i) - tm);
    return out;
}

std::vector<double> successive_differences(std::span<const double> ibi) {
    std::vector<double> d;
    if (ibi.size() < 2) return d;
    d.reserve(ibi.size() - 1);
    for (size_t i = 0; i + 1 < ibi.size(); ++i) d.push_back(ibi[i + 1] - ibi[i]);
    return d;
}

std::array<double, kNumClasses> softmax3(const std::array<double, kNumClasses>& z) {
    const double m = std::max({z[0], z[1], z[2]});
    std::array<double, kNumClasses> p{};
    double s = 0;
    for (int c = 0; c < kNumClasses; ++c) s += (p[c] = std::exp(z[c] - m));
    for (auto& v : p) v /= s;
    return p;
}

struct LossGrad {
    double loss = 0;
    std::array<double, kNumClasses> dw{};
    std::array<double, kNumClasses> db{};
    double norm_sq() const {
        double s = 0;
        for (int c = 0; c < kNumClasses; ++c) s += dw[c] * dw[c] + db[c] * db[c];
        return s;
    }
};

LossGrad loss_and_grad(const std::array<double, kNumClasses>& w, const std::array<double, kNumClasses>& b,
                       const std::vector<double>& xs, std::span<const Rhythm> labels) {
    LossGrad out;
    const double inv_n = 1.0 / static_cast<double>(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) {
        std::array<double, kNumClasses> z{};
        for (int c = 0; c < kNumClasses; ++c) z[c] = w[c] * xs[i] + b[c];
        const double m = std::max({z[0], z[1], z[2]});
        double s = 0;
        for (int c = 0; c < kNumClasses; ++c) s += std::exp(z[c] - m);
        const int y = class_index(labels[i]);
        out.loss += (m + std::log(s) - z[y]) * inv_n;
        for (int c = 0; c < kNumClasses; ++c) {
            const double r = std::exp(z[c] - m) / s - (c == y ? 1.0 : 0.0);
            out.dw[c] += r * xs[i] * inv_n;
            out.db[c] += r * inv_n;
        }
    }
    return out;
}

}  // namespace

PeakList ampd_peaks(std::span<const double> x_raw) {
    PeakList peaks;
    const int n = static_cast<int>(x_raw.size());
    if (n < 8) return peaks;

    const auto x = detrend(x_raw);
    // Differences below this margin are ties (e.g. the roundoff left over after
    // detrending a straight line). A tie goes to the earlier sample, so a flat
    // top two samples wide still gives one peak.
    double scale = 0;
    const double raw_mean = std::accumulate(x_raw.begin(), x_raw.end(), 0.0) / n;
    for (double v : x_raw) scale = std::max(scale, std::abs(v - raw_mean));
    const double tol = 1e-10 * scale;
    auto greater = [&](int i, int j) {
        const double d = x[i] - x[j];
        return d > tol || (d >= -tol && i < j);
    };

    const int scales = (n + 1) / 2 - 1;
    int best_scale = 1;
    int best_count = -1;
    for (int k = 1; k <= scales; ++k) {
        int count = 0;
        for (int i = k; i < n - k; ++i)
            if (greater(i, i - k) && greater(i, i + k)) ++count;
        if (count > best_count) {
            best_count = count;
            best_scale = k;
        }
    }

    for (int i = 1; i < n - 1; ++i) {
        bool peak = true;
        for (int k = 1; k <= best_scale && peak; ++k) {
            if (i - k >= 0 && !greater(i, i - k)) peak = false;
            if (i + k < n && !greater(i, i + k)) peak = false;
        }
        if (peak) peaks.push_back(i);
    }
    return peaks;
}

std::vector<double> compute_ibis(const PeakList& peaks, double fs_hz) {
    if (!(fs_hz > 0)) throw std::invalid_argument("compute_ibis: sample rate must be positive");
    std::vector<double> out;
    if (peaks.size() < 2) return out;
    out.reserve(peaks.size() - 1);
    for (size_t i = 0; i + 1 < peaks.size(); ++i) {
        if (peaks[i + 1] <= peaks[i]) throw std::invalid_argument("compute_ibis: peaks must be strictly increasing");
        out.push_back(static_cast<double>(peaks[i + 1] - peaks[i]) * 1000.0 / fs_hz);
    }
    return out;
}

std::optional<double> rmssd(std::span<const double> ibi_ms) {
    const auto d = successive_differences(ibi_ms);
    if (d.empty()) return std::nullopt;
    // Extended-precision sums keep these within a few ulp of the exact value
    // even for long, widely spread series.
    long double s = 0;
    for (double v : d) s += static_cast<long double>(v) * v;
    return static_cast<double>(std::sqrt(s / static_cast<long double>(d.size())));
}

std::optional<double> sdsd(std::span<const double> ibi_ms) {
    const auto d = successive_differences(ibi_ms);
    if (d.empty()) return std::nullopt;
    const auto n = static_cast<long double>(d.size());
    const long double mean = std::accumulate(d.begin(), d.end(), 0.0L) / n;
    long double s = 0;
    for (double v : d) s += (v - mean) * (v - mean);
    return static_cast<double>(std::sqrt(s / n));
}

std::optional<double> pnn40(std::span<const double> ibi_ms) {
    const auto d = successive_differences(ibi_ms);
    if (d.empty()) return std::nullopt;
    const auto over = std::count_if(d.begin(), d.end(), [](double v) { return std::abs(v) > 40.0; });
    return 100.0 * static_cast<double>(over) / static_cast<double>(d.size());
}

std::string feature_name(Feature f) {
    switch (f) {
        case Feature::Rmssd: return "rmssd";
        case Feature::Sdsd: return "sdsd";
        case Feature::Pnn40: return "pnn40";
    }
    return "?";
}

std::optional<double> HrvFeatures::get(Feature f) const {
    switch (f) {
        case Feature::Rmssd: return rmssd_ms;
        case Feature::Sdsd: return sdsd_ms;
        case Feature::Pnn40: return pnn40_pct;
    }
    return std::nullopt;
}

HrvFeatures extract_features(std::span<const double> ppg, double fs_hz) {
    const auto ibis = compute_ibis(ampd_peaks(ppg), fs_hz);
    return {rmssd(ibis), sdsd(ibis), pnn40(ibis)};
}

LogRegModel fit_logreg(std::span<const std::optional<double>> features, std::span<const Rhythm> labels,
                       const LogRegConfig& config) {
    if (features.size() != labels.size()) throw std::invalid_argument("fit_logreg: features and labels differ in length");
    if (features.empty()) throw std::invalid_argument("fit_logreg: no training data");

    LogRegModel m;
    double sum = 0;
    size_t present = 0;
    for (const auto& f : features)
        if (f) {
            sum += *f;
            ++present;
        }
    if (present > 0) {
        m.feature_mean = sum / static_cast<double>(present);
        double ss = 0;
        for (const auto& f : features)
            if (f) ss += (*f - m.feature_mean) * (*f - m.feature_mean);
        const double sd = std::sqrt(ss / static_cast<double>(present));
        m.feature_sd = sd > 1e-12 ? sd : 1.0;
    }

    std::array<int, kNumClasses> counts{};
    for (auto l : labels) ++counts[class_index(l)];
    const auto n_classes = std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; });
    if (n_classes == 1) {
        const auto only = std::distance(counts.begin(), std::find_if(counts.begin(), counts.end(), [](int c) { return c > 0; }));
        m.biases[only] = 40.0;
        return m;
    }

    std::vector<double> xs(features.size());
    for (size_t i = 0; i < features.size(); ++i) xs[i] = m.standardize(features[i]);

    auto cur = loss_and_grad(m.weights, m.biases, xs, labels);
    m.loss_history.push_back(cur.loss);
    double step = config.initial_step;
    for (int it = 0; it < config.max_iterations; ++it) {
        const double gsq = cur.norm_sq();
        if (std::sqrt(gsq) < config.grad_tol) break;
        std::array<double, kNumClasses> w{}, b{};
        LossGrad next;
        for (;;) {
            for (int c = 0; c < kNumClasses; ++c) {
                w[c] = m.weights[c] - step * cur.dw[c];
                b[c] = m.biases[c] - step * cur.db[c];
            }
            next = loss_and_grad(w, b, xs, labels);
            if (next.loss <= cur.loss - 1e-4 * step * gsq || step < 1e-12) break;
            step *= 0.5;
        }
        if (next.loss > cur.loss) break;
        m.weights = w;
        m.biases = b;
        cur = next;
        m.loss_history.push_back(cur.loss);
        m.iterations = it + 1;
        step = std::min(step * 2.0, config.initial_step * 16.0);
    }
    return m;
}

std::array<double, kNumClasses> predict_logreg(const LogRegModel& m, std::optional<double> feature) {
    const double x = m.standardize(feature);
    std::array<double, kNumClasses> z{};
    for (int c = 0; c < kNumClasses; ++c) z[c] = m.weights[c] * x + m.biases[c];
    return softmax3(z);
}

}  // namespace rhythm::hrv
