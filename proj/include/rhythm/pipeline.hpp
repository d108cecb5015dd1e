#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rhythm/hrv.hpp"
#include "rhythm/metrics.hpp"
#include "rhythm/nn/train.hpp"
#include "rhythm/types.hpp"

namespace rhythm::pipeline {

enum class Variant { Fusion, PpgOnly, HrvRmssd, HrvSdsd, HrvPnn40 };
inline constexpr std::array<Variant, 5> kAllVariants{Variant::Fusion, Variant::PpgOnly, Variant::HrvRmssd,
                                                     Variant::HrvSdsd, Variant::HrvPnn40};

std::string to_string(Variant v);
std::optional<Variant> parse_variant(const std::string& s);
bool is_neural(Variant v);
/// 4 for fusion, 1 for ppg_only. Throws for HRV variants.
int input_channels(Variant v);
/// Throws for neural variants.
hrv::Feature hrv_feature(Variant v);

/// Network inputs from processed segments; ppg_only keeps channel 0.
nn::LabeledInputs make_inputs(std::span<const Segment> segments, Variant v);

/// One HRV feature per segment, computed from the PPG channel.
std::vector<std::optional<double>> hrv_feature_values(std::span<const Segment> segments, hrv::Feature f);

/// A trained network or logistic model with the settings that produced it.
struct TrainedModel {
    Variant variant = Variant::Fusion;
    std::uint64_t seed = 0;
    nn::TrainConfig train;
    std::optional<nn::RhythmiNet<float>> net;
    std::optional<hrv::LogRegModel> logreg;
    std::vector<nn::EpochLog> log;
};

TrainedModel train_variant(std::span<const Segment> train_set, Variant v, std::uint64_t seed, const nn::TrainConfig& cfg,
                           const nn::EpochCallback& on_epoch = {});

std::vector<metrics::Probs> score(TrainedModel& m, std::span<const Segment> segments);

/// Class probabilities of every segment paired with its label and motion bin.
std::vector<metrics::ScoredSegment> attach(std::span<const metrics::Probs> probs, std::span<const Segment> segments,
                                           const sigproc::MotionStrata& strata);

/// Motion scores of processed segments; throws when one is missing.
std::vector<double> motion_scores(std::span<const Segment> segments);

}  // namespace rhythm::pipeline
