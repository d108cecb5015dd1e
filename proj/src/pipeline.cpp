#include "rhythm/pipeline.hpp"

#include <algorithm>
#include <stdexcept>

namespace rhythm::pipeline {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::Fusion: return "fusion";
        case Variant::PpgOnly: return "ppg_only";
        case Variant::HrvRmssd: return "hrv_rmssd";
        case Variant::HrvSdsd: return "hrv_sdsd";
        case Variant::HrvPnn40: return "hrv_pnn40";
    }
    throw std::invalid_argument("unknown variant");
}

std::optional<Variant> parse_variant(const std::string& s) {
    for (Variant v : kAllVariants)
        if (to_string(v) == s) return v;
    return std::nullopt;
}

bool is_neural(Variant v) { return v == Variant::Fusion || v == Variant::PpgOnly; }

int input_channels(Variant v) {
    if (v == Variant::Fusion) return kNumChannels;
    if (v == Variant::PpgOnly) return 1;
    throw std::invalid_argument("input_channels: " + to_string(v) + " is not a network variant");
}

hrv::Feature hrv_feature(Variant v) {
    switch (v) {
        case Variant::HrvRmssd: return hrv::Feature::Rmssd;
        case Variant::HrvSdsd: return hrv::Feature::Sdsd;
        case Variant::HrvPnn40: return hrv::Feature::Pnn40;
        default: throw std::invalid_argument("hrv_feature: " + to_string(v) + " is not an HRV variant");
    }
}

nn::LabeledInputs make_inputs(std::span<const Segment> segments, Variant v) {
    const int channels = input_channels(v);
    nn::LabeledInputs out;
    out.channels = channels;
    out.length = kSegmentSamples;
    out.samples.reserve(segments.size() * static_cast<size_t>(channels) * kSegmentSamples);
    out.labels.reserve(segments.size());
    for (const auto& s : segments) {
        if (!s.processed) throw std::invalid_argument("make_inputs: segment of " + s.patient_id + " is not preprocessed");
        s.validate();
        for (int c = 0; c < channels; ++c)
            for (double x : s.channels[static_cast<size_t>(c)]) out.samples.push_back(static_cast<float>(x));
        out.labels.push_back(class_index(s.label));
    }
    return out;
}

std::vector<std::optional<double>> hrv_feature_values(std::span<const Segment> segments, hrv::Feature f) {
    std::vector<std::optional<double>> out;
    out.reserve(segments.size());
    for (const auto& s : segments) out.push_back(hrv::extract_features(s.ppg(), kSampleRateHz).get(f));
    return out;
}

TrainedModel train_variant(std::span<const Segment> train_set, Variant v, std::uint64_t seed, const nn::TrainConfig& cfg,
                           const nn::EpochCallback& on_epoch) {
    if (train_set.empty()) throw std::invalid_argument("train_variant: empty training set");
    TrainedModel m;
    m.variant = v;
    m.seed = seed;
    m.train = cfg;
    if (is_neural(v)) {
        nn::ArchConfig arch;
        arch.in_channels = input_channels(v);
        arch.dropout_p = cfg.dropout_p;
        arch.bn_eps = cfg.bn_eps;
        arch.bn_momentum = cfg.bn_momentum;
        auto r = nn::train(make_inputs(train_set, v), cfg, arch, seed, on_epoch);
        m.net.emplace(std::move(r.model));
        m.log = std::move(r.log);
    } else {
        std::vector<Rhythm> labels;
        labels.reserve(train_set.size());
        for (const auto& s : train_set) labels.push_back(s.label);
        m.logreg = hrv::fit_logreg(hrv_feature_values(train_set, hrv_feature(v)), labels);
    }
    return m;
}

std::vector<metrics::Probs> score(TrainedModel& m, std::span<const Segment> segments) {
    if (is_neural(m.variant)) {
        if (!m.net) throw std::invalid_argument("score: model has no network");
        if (segments.empty()) return {};
        return nn::predict(*m.net, make_inputs(segments, m.variant), m.train.batch_size);
    }
    if (!m.logreg) throw std::invalid_argument("score: model has no logistic regression");
    std::vector<metrics::Probs> out;
    out.reserve(segments.size());
    for (const auto& f : hrv_feature_values(segments, hrv_feature(m.variant))) out.push_back(hrv::predict_logreg(*m.logreg, f));
    return out;
}

std::vector<metrics::ScoredSegment> attach(std::span<const metrics::Probs> probs, std::span<const Segment> segments,
                                           const sigproc::MotionStrata& strata) {
    if (probs.size() != segments.size() || strata.assignment.size() != segments.size())
        throw std::invalid_argument("attach: probabilities, segments and strata differ in size");
    std::vector<metrics::ScoredSegment> out(segments.size());
    for (size_t i = 0; i < segments.size(); ++i) out[i] = {probs[i], segments[i].label, strata.assignment[i]};
    return out;
}

std::vector<double> motion_scores(std::span<const Segment> segments) {
    std::vector<double> out;
    out.reserve(segments.size());
    for (const auto& s : segments) {
        if (!s.motion_score) throw std::invalid_argument("motion_scores: segment of " + s.patient_id + " has no motion score");
        out.push_back(*s.motion_score);
    }
    return out;
}

}  // namespace rhythm::pipeline
