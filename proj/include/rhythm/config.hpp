#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rhythm/datasets.hpp"
#include "rhythm/nn/train.hpp"
#include "rhythm/pipeline.hpp"

namespace rhythm::config {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Ordered `key = value` pairs. Blank lines and lines starting with '#' are
/// skipped; duplicate keys are an error.
using KeyValues = std::vector<std::pair<std::string, std::string>>;
KeyValues parse_key_values(const std::string& text, const std::string& source = "<string>");

/// Settings shared by every subcommand. Lists are comma separated in files.
struct RunConfig {
    data::SynthConfig synth;
    nn::TrainConfig train;
    std::vector<pipeline::Variant> models{pipeline::Variant::Fusion};
    int bins = 10;

    void validate() const;
};

/// Overrides fields named by `kv`; an unknown key throws ConfigError.
void apply(RunConfig& cfg, const KeyValues& kv, const std::string& source = "<string>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Keys accepted by apply(), in documentation order.
const std::vector<std::string>& known_keys();

}  // namespace rhythm::config
