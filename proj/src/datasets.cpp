#include "rhythm/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rhythm/sigproc.hpp"

namespace rhythm::data {

namespace {

constexpr double kPulseSpan_s = 1.0;
constexpr double kAccGainPerLevel = 0.05;  // g per motion level
constexpr double kAccRestNoise = 0.003;    // g

double pulse_shape(double tau) {
    const auto bump = [](double t, double mu, double sd) { return std::exp(-(t - mu) * (t - mu) / (2.0 * sd * sd)); };
    return bump(tau, 0.16, 0.05) + 0.45 * bump(tau, 0.40, 0.07);
}

double pulse_height(double preceding_rr_s) { return 0.5 + 0.625 * preceding_rr_s; }

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

// Largest-remainder apportionment of n items over the class mix.
std::array<int, kNumClasses> apportion(int n, const std::array<double, kNumClasses>& mix) {
    std::array<int, kNumClasses> counts{};
    std::array<double, kNumClasses> rem{};
    int used = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        const double exact = mix[c] * n;
        counts[c] = static_cast<int>(std::floor(exact));
        rem[c] = exact - counts[c];
        used += counts[c];
    }
    while (used < n) {
        const auto c = std::distance(rem.begin(), std::max_element(rem.begin(), rem.end()));
        ++counts[c];
        rem[c] = -1;
        ++used;
    }
    return counts;
}

std::array<double, 3> random_unit(Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    for (;;) {
        std::array<double, 3> v{g(rng), g(rng), g(rng)};
        const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        if (n > 1e-6) return {v[0] / n, v[1] / n, v[2] / n};
    }
}

}  // namespace

void SynthConfig::validate() const {
    if (n_patients < 1) throw std::invalid_argument("SynthConfig: n_patients must be >= 1");
    if (segments_per_patient < 1) throw std::invalid_argument("SynthConfig: segments_per_patient must be >= 1");
    if (motion_levels < 1 || motion_levels > 10) throw std::invalid_argument("SynthConfig: motion_levels must be in 1..10");
    double sum = 0;
    for (double m : class_mix) {
        if (m < 0) throw std::invalid_argument("SynthConfig: class mix entries must be nonnegative");
        sum += m;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("SynthConfig: class mix must sum to 1");
    if (!(rhythm.sr_mean_rr_s > 0 && rhythm.sr_sd_rr_s >= 0 && rhythm.af_min_rr_s > 0 && rhythm.af_max_rr_s > rhythm.af_min_rr_s))
        throw std::invalid_argument("SynthConfig: RR parameters must be positive");
    if (!(rhythm.ectopy_rate >= 0 && rhythm.ectopy_rate < 0.5))
        throw std::invalid_argument("SynthConfig: ectopy rate must be in [0, 0.5)");
    if (!(artifact_gain >= 0)) throw std::invalid_argument("SynthConfig: artifact gain must be nonnegative");
    if (!(train_fraction > 0 && train_fraction < 1)) throw std::invalid_argument("SynthConfig: train fraction must be in (0, 1)");
}

std::vector<double> gen_rr_series(Rhythm kind, double duration_s, Rng& rng, const RhythmParams& p) {
    if (!(duration_s > 0)) throw std::invalid_argument("gen_rr_series: duration must be positive");
    std::normal_distribution<double> sr(p.sr_mean_rr_s, p.sr_sd_rr_s);
    std::uniform_real_distribution<double> af(p.af_min_rr_s, p.af_max_rr_s);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto sinus = [&] {
        for (;;)
            if (const double v = sr(rng); v > 0.25) return v;
    };
    // A premature beat is always followed by its compensatory pause, so the
    // per-slot onset probability q gives a premature fraction q / (1 + q).
    const double onset = p.ectopy_rate / (1.0 - p.ectopy_rate);

    std::vector<double> rr;
    double total = 0;
    bool after_premature = false;
    while (total < duration_s) {
        double v = 0;
        switch (kind) {
            case Rhythm::SR: v = sinus(); break;
            case Rhythm::AF: v = af(rng); break;
            case Rhythm::Other: {
                const double base = sinus();
                if (after_premature) {
                    v = p.compensation_factor * base;
                    after_premature = false;
                } else if (u01(rng) < onset) {
                    v = p.premature_factor * base;
                    after_premature = true;
                } else {
                    v = base;
                }
                break;
            }
        }
        rr.push_back(v);
        total += v;
    }
    return rr;
}

std::vector<double> gen_ppg(std::span<const double> rr_s, double fs_hz, Rng& rng) {
    if (!(fs_hz > 0)) throw std::invalid_argument("gen_ppg: sample rate must be positive");
    const double total = std::accumulate(rr_s.begin(), rr_s.end(), 0.0);
    const auto n = static_cast<size_t>(std::llround(total * fs_hz));
    std::vector<double> out(n, 0.0);

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.02);
    const double wander_hz = 0.1 + 0.2 * u01(rng);
    const double wander_phase = 2.0 * std::numbers::pi * u01(rng);

    double onset = 0;
    double preceding = 0.8;
    for (double rr : rr_s) {
        const double h = pulse_height(preceding);
        const auto first = static_cast<size_t>(std::ceil(onset * fs_hz));
        for (size_t i = first; i < n; ++i) {
            const double tau = static_cast<double>(i) / fs_hz - onset;
            if (tau >= kPulseSpan_s) break;
            out[i] += h * pulse_shape(tau);
        }
        onset += rr;
        preceding = rr;
    }
    for (size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs_hz;
        out[i] += 0.15 * std::sin(2.0 * std::numbers::pi * wander_hz * t + wander_phase) + noise(rng);
    }
    return out;
}

AccAxes gen_acc(int motion_level, double fs_hz, int n_samples, Rng& rng, const std::array<double, 3>& gravity_dir) {
    if (motion_level < 0 || motion_level > 9) throw std::invalid_argument("gen_acc: motion level must be in 0..9");
    if (n_samples < 1) throw std::invalid_argument("gen_acc: need at least one sample");
    constexpr int kWarmup = 128;
    const auto n = static_cast<size_t>(n_samples);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    const auto band = sigproc::design_bandpass(0.8, 3.0, 2, fs_hz);
    std::array<std::vector<double>, 3> motion;
    double ss = 0;
    for (auto& axis : motion) {
        std::vector<double> white(n + kWarmup);
        for (auto& v : white) v = g(rng);
        const auto filtered = sigproc::apply_filter(band, white);
        axis.assign(filtered.begin() + kWarmup, filtered.end());
        for (double v : axis) ss += v * v;
    }
    const double norm = 1.0 / std::sqrt(ss / static_cast<double>(3 * n) + 1e-300);

    // Burst envelope: a floor plus 1-3 Gaussian bumps.
    const double duration = static_cast<double>(n) / fs_hz;
    const int bursts = 1 + static_cast<int>(u01(rng) * 3.0);
    std::vector<double> envelope(n, 0.3);
    for (int b = 0; b < bursts; ++b) {
        const double centre = u01(rng) * duration;
        const double width = 1.5 + 3.5 * u01(rng);
        const double height = 0.5 + 0.7 * u01(rng);
        for (size_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(i) / fs_hz - centre;
            envelope[i] += height * std::exp(-d * d / (2.0 * width * width));
        }
    }

    const double amp = kAccGainPerLevel * motion_level;
    AccAxes out;
    std::array<std::vector<double>*, 3> dst{&out.x, &out.y, &out.z};
    for (int a = 0; a < 3; ++a) {
        auto& v = *dst[static_cast<size_t>(a)];
        v.resize(n);
        for (size_t i = 0; i < n; ++i)
            v[i] = gravity_dir[static_cast<size_t>(a)] + amp * envelope[i] * motion[static_cast<size_t>(a)][i] * norm +
                   kAccRestNoise * g(rng);
    }
    return out;
}

std::vector<double> couple_artifacts(std::span<const double> ppg, const AccAxes& acc, double alpha) {
    if (acc.x.size() != ppg.size()) throw std::invalid_argument("couple_artifacts: PPG and ACC lengths differ");
    std::vector<double> out(ppg.begin(), ppg.end());
    if (alpha == 0.0) return out;

    auto mag = sigproc::acc_magnitude(acc.x, acc.y, acc.z);
    const double mean = std::accumulate(mag.begin(), mag.end(), 0.0) / static_cast<double>(mag.size());
    for (auto& v : mag) v -= mean;

    const auto n = static_cast<std::ptrdiff_t>(mag.size());
    constexpr std::ptrdiff_t kHalf = 16;
    std::vector<double> prefix(mag.size() + 1, 0.0);
    for (size_t i = 0; i < mag.size(); ++i) prefix[i + 1] = prefix[i] + mag[i] * mag[i];
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto lo = std::max<std::ptrdiff_t>(0, i - kHalf);
        const auto hi = std::min<std::ptrdiff_t>(n, i + kHalf + 1);
        const double rms = std::sqrt((prefix[static_cast<size_t>(hi)] - prefix[static_cast<size_t>(lo)]) / static_cast<double>(hi - lo));
        const auto k = static_cast<size_t>(i);
        out[k] = out[k] / (1.0 + alpha * rms) + alpha * mag[k];
    }
    return out;
}

SynthDataset generate_dataset(const SynthConfig& cfg) {
    cfg.validate();
    SynthDataset ds;
    const int width = kSegmentSamples;
    const double window_s = width / kSampleRateHz;
    for (int p = 0; p < cfg.n_patients; ++p) {
        Rng rng(sub_seed(cfg.seed, static_cast<std::uint64_t>(p)));
        const auto counts = apportion(cfg.segments_per_patient, cfg.class_mix);
        std::vector<Rhythm> labels;
        for (int c = 0; c < kNumClasses; ++c) labels.insert(labels.end(), static_cast<size_t>(counts[c]), rhythm_from_index(c));
        std::shuffle(labels.begin(), labels.end(), rng);
        std::vector<int> levels(labels.size());
        for (size_t i = 0; i < levels.size(); ++i) levels[i] = static_cast<int>(i % static_cast<size_t>(cfg.motion_levels)) * 10 / cfg.motion_levels;
        std::shuffle(levels.begin(), levels.end(), rng);
        const auto gravity = random_unit(rng);

        char id[32];
        std::snprintf(id, sizeof id, "p%03d", p);
        RawRecording rec;
        rec.patient_id = id;
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        for (size_t s = 0; s < labels.size(); ++s) {
            const auto rr = gen_rr_series(labels[s], window_s + 3.0, rng, cfg.rhythm);
            const auto ppg_full = gen_ppg(rr, kSampleRateHz, rng);
            const auto offset = static_cast<size_t>(u01(rng) * 2.0 * kSampleRateHz);
            const std::span<const double> clean(ppg_full.data() + offset, static_cast<size_t>(width));
            const auto acc = gen_acc(levels[s], kSampleRateHz, width, rng, gravity);
            const auto ppg = couple_artifacts(clean, acc, cfg.artifact_gain);
            rec.ppg.insert(rec.ppg.end(), ppg.begin(), ppg.end());
            rec.acc_x.insert(rec.acc_x.end(), acc.x.begin(), acc.x.end());
            rec.acc_y.insert(rec.acc_y.end(), acc.y.begin(), acc.y.end());
            rec.acc_z.insert(rec.acc_z.end(), acc.z.begin(), acc.z.end());
        }
        auto windows = sigproc::segment_windows(rec, window_s);
        for (size_t s = 0; s < windows.size(); ++s) {
            Segment seg;
            seg.patient_id = rec.patient_id;
            seg.label = labels[s];
            seg.channels = std::move(windows[s]);
            ds.segments.push_back(std::move(seg));
            ds.motion_levels.push_back(levels[s]);
        }
        ds.recordings.push_back(std::move(rec));
    }
    return ds;
}

std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split Manifest::split_of(const std::string& patient_id) const {
    for (const auto& e : entries)
        if (e.patient_id == patient_id) return e.split;
    throw std::out_of_range("manifest has no entry for patient " + patient_id);
}

bool Manifest::contains(const std::string& patient_id) const {
    return std::any_of(entries.begin(), entries.end(), [&](const auto& e) { return e.patient_id == patient_id; });
}

Manifest split_patients(std::span<const Segment> records, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0 && train_fraction < 1)) throw std::invalid_argument("split_patients: train fraction must be in (0, 1)");
    std::vector<std::string> patients;
    std::map<std::string, std::array<int, kNumClasses>> counts;
    for (const auto& r : records) {
        auto [it, inserted] = counts.try_emplace(r.patient_id, std::array<int, kNumClasses>{});
        if (inserted) patients.push_back(r.patient_id);
        ++it->second[class_index(r.label)];
    }
    // Group by majority label, shuffle within groups, then deal round-robin
    // across groups so every prefix is stratified.
    std::array<std::vector<std::string>, kNumClasses> groups;
    for (const auto& p : patients) {
        const auto& c = counts[p];
        groups[static_cast<size_t>(std::distance(c.begin(), std::max_element(c.begin(), c.end())))].push_back(p);
    }
    Rng rng(seed);
    for (auto& g : groups) std::shuffle(g.begin(), g.end(), rng);
    std::vector<std::string> order;
    for (size_t i = 0; order.size() < patients.size(); ++i)
        for (auto& g : groups)
            if (i < g.size()) order.push_back(g[i]);

    const auto n_train = static_cast<size_t>(std::llround(train_fraction * static_cast<double>(patients.size())));
    Manifest m;
    for (size_t i = 0; i < order.size(); ++i) m.entries.push_back({order[i], i < n_train ? Split::Train : Split::Test});
    std::sort(m.entries.begin(), m.entries.end(), [](const auto& a, const auto& b) { return a.patient_id < b.patient_id; });
    return m;
}

std::string segment_to_line(const Segment& s) {
    s.validate();
    nlohmann::ordered_json j;
    j["patient_id"] = s.patient_id;
    j["label"] = std::string(to_string(s.label));
    j["motion_score"] = s.motion_score ? nlohmann::ordered_json(*s.motion_score) : nlohmann::ordered_json(nullptr);
    j["processed"] = s.processed;
    j["ppg"] = s.channels[0];
    j["acc_x"] = s.channels[1];
    j["acc_y"] = s.channels[2];
    j["acc_z"] = s.channels[3];
    return j.dump();
}

Segment segment_from_line(const std::string& line, const std::string& source, size_t line_no) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(source, line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(source, line_no, "record is not an object");
    auto field = [&](const char* key) -> const nlohmann::json& {
        const auto it = j.find(key);
        if (it == j.end()) throw ParseError(source, line_no, std::string("missing field '") + key + "'");
        return *it;
    };
    Segment s;
    try {
        s.patient_id = field("patient_id").get<std::string>();
        const auto label = parse_rhythm(field("label").get<std::string>());
        if (!label) throw ParseError(source, line_no, "unknown label '" + field("label").get<std::string>() + "'");
        s.label = *label;
        if (const auto& m = field("motion_score"); !m.is_null()) s.motion_score = m.get<double>();
        s.processed = field("processed").get<bool>();
        const std::array<const char*, 4> keys{"ppg", "acc_x", "acc_y", "acc_z"};
        for (size_t c = 0; c < keys.size(); ++c) s.channels[c] = field(keys[c]).get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(source, line_no, std::string("bad field type: ") + e.what());
    }
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError(source, line_no, e.what());
    }
    return s;
}

void atomic_write(const std::filesystem::path& path, const std::string& contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_segments(const std::filesystem::path& path, std::span<const Segment> records) {
    std::string buf;
    for (const auto& r : records) {
        buf += segment_to_line(r);
        buf += '\n';
    }
    atomic_write(path, buf);
}

std::vector<Segment> read_segments(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<Segment> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(segment_from_line(line, path.string(), line_no));
    }
    return out;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
    std::string buf = "patient_id,split\n";
    for (const auto& e : m.entries) buf += e.patient_id + "," + to_string(e.split) + "\n";
    atomic_write(path, buf);
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "patient_id,split") throw ParseError(path.string(), 1, "expected header 'patient_id,split'");
    Manifest m;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ParseError(path.string(), line_no, "expected 'patient_id,split'");
        const auto split = line.substr(comma + 1);
        if (split != "train" && split != "test") throw ParseError(path.string(), line_no, "unknown split '" + split + "'");
        m.entries.push_back({line.substr(0, comma), split == "train" ? Split::Train : Split::Test});
    }
    return m;
}

}  // namespace rhythm::data
