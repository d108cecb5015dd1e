#pragma once

#include <filesystem>
#include <string>

#include "rhythm/pipeline.hpp"

namespace rhythm::pipeline {

inline constexpr const char* kCheckpointFormat = "rhythm-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Line-oriented JSON: a header object, one object per tensor, one per epoch.
/// The layout is described in the README.
std::string checkpoint_to_text(const TrainedModel& m);
TrainedModel checkpoint_from_text(const std::string& text, const std::string& source = "<string>");

void save_checkpoint(const std::filesystem::path& path, const TrainedModel& m);
TrainedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace rhythm::pipeline
