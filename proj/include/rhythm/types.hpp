#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rhythm {

inline constexpr double kSampleRateHz = 32.0;
inline constexpr int kSegmentSamples = 960;
inline constexpr int kNumChannels = 4;
inline constexpr int kNumClasses = 3;

/// Rhythm class. The integer value is the class index used by every model.
enum class Rhythm : int { SR = 0, AF = 1, Other = 2 };

inline constexpr std::array<Rhythm, kNumClasses> kAllRhythms{Rhythm::SR, Rhythm::AF, Rhythm::Other};

inline int class_index(Rhythm r) { return static_cast<int>(r); }

inline Rhythm rhythm_from_index(int i) {
    if (i < 0 || i >= kNumClasses) throw std::invalid_argument("rhythm index out of range: " + std::to_string(i));
    return static_cast<Rhythm>(i);
}

inline std::string_view to_string(Rhythm r) {
    switch (r) {
        case Rhythm::SR: return "SR";
        case Rhythm::AF: return "AF";
        case Rhythm::Other: return "Other";
    }
    return "?";
}

inline std::optional<Rhythm> parse_rhythm(std::string_view s) {
    if (s == "SR") return Rhythm::SR;
    if (s == "AF") return Rhythm::AF;
    if (s == "Other") return Rhythm::Other;
    return std::nullopt;
}

enum class ChannelId : int { Ppg = 0, AccX = 1, AccY = 2, AccZ = 3 };

/// 4 x 960 samples, row order PPG, ACC-x, ACC-y, ACC-z.
using Channels = std::array<std::vector<double>, kNumChannels>;

struct RawRecording {
    std::string patient_id;
    std::vector<double> ppg;
    std::vector<double> acc_x;
    std::vector<double> acc_y;
    std::vector<double> acc_z;
    double sample_rate_hz = kSampleRateHz;

    void validate() const {
        if (!(sample_rate_hz > 0)) throw std::invalid_argument("RawRecording: sample rate must be positive");
        const auto n = ppg.size();
        if (acc_x.size() != n || acc_y.size() != n || acc_z.size() != n)
            throw std::invalid_argument("RawRecording: channel lengths differ");
    }
};

/// One 30 s window. `motion_score` is filled by preprocessing; `processed`
/// marks segments that already went through the filter/normalize pipeline.
struct Segment {
    std::string patient_id;
    Rhythm label = Rhythm::SR;
    Channels channels;
    std::optional<double> motion_score;
    bool processed = false;

    const std::vector<double>& ppg() const { return channels[0]; }

    void validate() const {
        for (const auto& ch : channels)
            if (ch.size() != static_cast<size_t>(kSegmentSamples))
                throw std::invalid_argument("Segment: every channel must hold 960 samples");
        if (motion_score && !(*motion_score >= 0))
            throw std::invalid_argument("Segment: motion score must be nonnegative");
    }
};

}  // namespace rhythm
