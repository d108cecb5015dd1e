#include "rhythm/sigproc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace rhythm::sigproc {

namespace {

using cplx = std::complex<double>;

cplx bilinear(cplx s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

// Monic quadratic with roots p, q -> (1, a1, a2).
std::pair<double, double> poly_from_roots(cplx p, cplx q) {
    const cplx a1 = -(p + q);
    const cplx a2 = p * q;
    return {a1.real(), a2.real()};
}

}  // namespace

std::complex<double> BiquadCascade::response(double f_hz) const {
    const double w = 2.0 * std::numbers::pi * f_hz / design.sample_rate_hz;
    const cplx z1 = std::polar(1.0, -w);
    const cplx z2 = z1 * z1;
    cplx h = 1.0;
    for (const auto& s : sections) h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    return h;
}

std::vector<std::complex<double>> BiquadCascade::poles() const {
    std::vector<cplx> out;
    out.reserve(sections.size() * 2);
    for (const auto& s : sections) {
        const cplx disc = std::sqrt(cplx(s.a1 * s.a1 - 4.0 * s.a2, 0.0));
        out.push_back((-s.a1 + disc) / 2.0);
        out.push_back((-s.a1 - disc) / 2.0);
    }
    return out;
}

BiquadCascade design_bandpass(double low_hz, double high_hz, int order, double fs_hz) {
    if (!(fs_hz > 0)) throw std::invalid_argument("design_bandpass: sample rate must be positive");
    if (!(low_hz > 0 && low_hz < high_hz && high_hz < fs_hz / 2))
        throw std::invalid_argument("design_bandpass: need 0 < low < high < fs/2");
    if (order < 1) throw std::invalid_argument("design_bandpass: order must be >= 1");

    const double pi = std::numbers::pi;
    const double w_lo = 2.0 * fs_hz * std::tan(pi * low_hz / fs_hz);
    const double w_hi = 2.0 * fs_hz * std::tan(pi * high_hz / fs_hz);
    const double bw = w_hi - w_lo;
    const double w0_sq = w_lo * w_hi;

    // Analog bandpass poles: each prototype pole p yields the roots of
    // s^2 - p*bw*s + w0^2. Keep only the upper half plane plus real poles,
    // conjugates are implied.
    std::vector<cplx> complex_poles;
    std::vector<double> real_poles;
    for (int k = 0; k < order; ++k) {
        const double theta = pi * (2.0 * k + order + 1) / (2.0 * order);
        const cplx p = std::polar(1.0, theta);
        if (p.imag() < -1e-12) continue;  // conjugate of an already handled pole
        const bool p_real = std::abs(p.imag()) <= 1e-12;
        const cplx pb = p_real ? cplx(p.real() * bw, 0.0) : p * bw;
        const cplx disc = std::sqrt(pb * pb - 4.0 * w0_sq);
        for (const cplx s : {(pb + disc) / 2.0, (pb - disc) / 2.0}) {
            const cplx z = bilinear(s, fs_hz);
            if (p_real && std::abs(z.imag()) <= 1e-12 * std::abs(z)) {
                real_poles.push_back(z.real());
            } else if (z.imag() >= 0 || !p_real) {
                complex_poles.push_back(z.imag() >= 0 ? z : std::conj(z));
            }
        }
    }

    BiquadCascade out;
    out.design = {low_hz, high_hz, order, fs_hz};
    // Each section carries the zero pair (1 - z^-1)(1 + z^-1).
    for (const cplx z : complex_poles) {
        const auto [a1, a2] = poly_from_roots(z, std::conj(z));
        out.sections.push_back({1.0, 0.0, -1.0, a1, a2});
    }
    std::sort(real_poles.begin(), real_poles.end());
    for (size_t i = 0; i + 1 < real_poles.size(); i += 2) {
        const auto [a1, a2] = poly_from_roots(real_poles[i], real_poles[i + 1]);
        out.sections.push_back({1.0, 0.0, -1.0, a1, a2});
    }
    if (out.sections.size() != static_cast<size_t>(order))
        throw std::logic_error("design_bandpass: pole pairing produced " + std::to_string(out.sections.size()) +
                               " sections for order " + std::to_string(order));

    // Unit gain at the analog centre frequency, spread evenly over sections.
    const double f0 = fs_hz / pi * std::atan(std::sqrt(w0_sq) / (2.0 * fs_hz));
    const double g = std::pow(1.0 / out.magnitude(f0), 1.0 / order);
    for (auto& s : out.sections) {
        s.b0 *= g;
        s.b1 *= g;
        s.b2 *= g;
    }
    return out;
}

std::vector<double> apply_filter(const BiquadCascade& f, std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("apply_filter: empty input");
    std::vector<double> y(x.begin(), x.end());
    for (const auto& s : f.sections) {
        double z1 = 0, z2 = 0;
        for (auto& v : y) {
            const double in = v;
            const double out = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * out + z2;
            z2 = s.b2 * in - s.a2 * out;
            v = out;
        }
    }
    return y;
}

std::vector<Channels> segment_windows(const RawRecording& r, double window_s) {
    r.validate();
    if (!(window_s > 0)) throw std::invalid_argument("segment_windows: window must be positive");
    const auto width = static_cast<size_t>(std::llround(window_s * r.sample_rate_hz));
    std::vector<Channels> out;
    if (width == 0) return out;
    const size_t count = r.ppg.size() / width;
    out.reserve(count);
    for (size_t w = 0; w < count; ++w) {
        const auto lo = static_cast<std::ptrdiff_t>(w * width);
        const auto hi = lo + static_cast<std::ptrdiff_t>(width);
        Channels c;
        c[0].assign(r.ppg.begin() + lo, r.ppg.begin() + hi);
        c[1].assign(r.acc_x.begin() + lo, r.acc_x.begin() + hi);
        c[2].assign(r.acc_y.begin() + lo, r.acc_y.begin() + hi);
        c[3].assign(r.acc_z.begin() + lo, r.acc_z.begin() + hi);
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<double> znormalize(std::span<const double> x) {
    std::vector<double> out(x.size(), 0.0);
    if (x.empty()) return out;
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double ss = 0;
    for (double v : x) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / n);
    if (sd < 1e-12) return out;
    for (size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / sd;
    return out;
}

std::vector<double> acc_magnitude(std::span<const double> ax, std::span<const double> ay,
                                  std::span<const double> az) {
    if (ax.size() != ay.size() || ax.size() != az.size())
        throw std::invalid_argument("acc_magnitude: axis lengths differ");
    std::vector<double> out(ax.size());
    for (size_t i = 0; i < ax.size(); ++i) out[i] = std::sqrt(ax[i] * ax[i] + ay[i] * ay[i] + az[i] * az[i]);
    return out;
}

double motion_score(std::span<const double> magnitude) {
    if (magnitude.empty()) throw std::invalid_argument("motion_score: empty input");
    const double n = static_cast<double>(magnitude.size());
    const double mean = std::accumulate(magnitude.begin(), magnitude.end(), 0.0) / n;
    double ss = 0;
    for (double v : magnitude) ss += (v - mean) * (v - mean);
    return ss / n;
}

std::vector<std::vector<size_t>> MotionStrata::members() const {
    std::vector<std::vector<size_t>> out(static_cast<size_t>(n_bins));
    for (size_t i = 0; i < assignment.size(); ++i) out[static_cast<size_t>(assignment[i])].push_back(i);
    return out;
}

MotionStrata stratify_percentiles(std::span<const double> scores, int n_bins) {
    if (n_bins < 1) throw std::invalid_argument("stratify_percentiles: n_bins must be >= 1");
    if (scores.empty()) throw std::invalid_argument("stratify_percentiles: no scores");
    const size_t n = scores.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    MotionStrata s;
    s.n_bins = n_bins;
    s.assignment.assign(n, 0);
    for (size_t r = 0; r < n; ++r) s.assignment[order[r]] = static_cast<int>(r * static_cast<size_t>(n_bins) / n);

    s.bin_edges.resize(static_cast<size_t>(n_bins) + 1);
    for (int b = 0; b < n_bins; ++b) {
        // first rank r with floor(r*n_bins/N) >= b
        const size_t first = (static_cast<size_t>(b) * n + static_cast<size_t>(n_bins) - 1) / static_cast<size_t>(n_bins);
        s.bin_edges[static_cast<size_t>(b)] = scores[order[std::min(first, n - 1)]];
    }
    s.bin_edges.back() = scores[order.back()];
    return s;
}

Segment preprocess_segment(const Segment& raw, const PreprocessFilters& filters) {
    raw.validate();
    if (raw.processed) throw std::invalid_argument("preprocess_segment: segment is already processed");

    auto demean_filter = [](const BiquadCascade& f, const std::vector<double>& x) {
        const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
        std::vector<double> centered(x.size());
        for (size_t i = 0; i < x.size(); ++i) centered[i] = x[i] - mean;
        return apply_filter(f, centered);
    };

    Segment out;
    out.patient_id = raw.patient_id;
    out.label = raw.label;
    out.processed = true;
    out.channels[0] = znormalize(demean_filter(filters.ppg, raw.channels[0]));

    std::array<std::vector<double>, 3> axes;
    for (int a = 0; a < 3; ++a) axes[static_cast<size_t>(a)] = demean_filter(filters.acc, raw.channels[static_cast<size_t>(a + 1)]);
    out.motion_score = motion_score(acc_magnitude(axes[0], axes[1], axes[2]));
    for (int a = 0; a < 3; ++a) out.channels[static_cast<size_t>(a + 1)] = znormalize(axes[static_cast<size_t>(a)]);
    return out;
}

}  // namespace rhythm::sigproc
