#include "rhythm/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace rhythm::config {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end || v.empty()) throw ConfigError(key + ": cannot parse '" + v + "' as a number");
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

template <typename T, typename Field>
Setter number(Field field) {
    return [field](RunConfig& c, const std::string& k, const std::string& v) { std::invoke(field, c) = parse_number<T>(k, v); };
}

const std::vector<std::pair<std::string, Setter>>& setters() {
    static const std::vector<std::pair<std::string, Setter>> table = {
        {"n_patients", number<int>([](RunConfig& c) -> int& { return c.synth.n_patients; })},
        {"segments_per_patient", number<int>([](RunConfig& c) -> int& { return c.synth.segments_per_patient; })},
        {"class_mix",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             const auto items = split_list(v);
             if (items.size() != kNumClasses) throw ConfigError(k + ": expected 3 comma-separated fractions (SR, AF, Other)");
             for (size_t i = 0; i < items.size(); ++i) c.synth.class_mix[i] = parse_number<double>(k, items[i]);
         }},
        {"motion_levels", number<int>([](RunConfig& c) -> int& { return c.synth.motion_levels; })},
        {"synth_seed", number<std::uint64_t>([](RunConfig& c) -> std::uint64_t& { return c.synth.seed; })},
        {"artifact_gain", number<double>([](RunConfig& c) -> double& { return c.synth.artifact_gain; })},
        {"train_fraction", number<double>([](RunConfig& c) -> double& { return c.synth.train_fraction; })},
        {"sr_mean_rr_s", number<double>([](RunConfig& c) -> double& { return c.synth.rhythm.sr_mean_rr_s; })},
        {"sr_sd_rr_s", number<double>([](RunConfig& c) -> double& { return c.synth.rhythm.sr_sd_rr_s; })},
        {"af_min_rr_s", number<double>([](RunConfig& c) -> double& { return c.synth.rhythm.af_min_rr_s; })},
        {"af_max_rr_s", number<double>([](RunConfig& c) -> double& { return c.synth.rhythm.af_max_rr_s; })},
        {"ectopy_rate", number<double>([](RunConfig& c) -> double& { return c.synth.rhythm.ectopy_rate; })},
        {"premature_factor", number<double>([](RunConfig& c) -> double& { return c.synth.rhythm.premature_factor; })},
        {"compensation_factor", number<double>([](RunConfig& c) -> double& { return c.synth.rhythm.compensation_factor; })},
        {"batch_size", number<int>([](RunConfig& c) -> int& { return c.train.batch_size; })},
        {"epochs", number<int>([](RunConfig& c) -> int& { return c.train.epochs; })},
        {"lr0", number<double>([](RunConfig& c) -> double& { return c.train.lr0; })},
        {"weight_decay", number<double>([](RunConfig& c) -> double& { return c.train.weight_decay; })},
        {"lr_step", number<int>([](RunConfig& c) -> int& { return c.train.lr_step; })},
        {"lr_factor", number<double>([](RunConfig& c) -> double& { return c.train.lr_factor; })},
        {"dropout_p", number<double>([](RunConfig& c) -> double& { return c.train.dropout_p; })},
        {"bn_eps", number<double>([](RunConfig& c) -> double& { return c.train.bn_eps; })},
        {"bn_momentum", number<double>([](RunConfig& c) -> double& { return c.train.bn_momentum; })},
        {"seeds",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.train.seeds.clear();
             for (const auto& item : split_list(v)) c.train.seeds.push_back(parse_number<std::uint64_t>(k, item));
         }},
        {"models",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.models.clear();
             for (const auto& item : split_list(v)) {
                 const auto variant = pipeline::parse_variant(item);
                 if (!variant) throw ConfigError(k + ": unknown model '" + item + "'");
                 c.models.push_back(*variant);
             }
         }},
        {"bins", number<int>([](RunConfig& c) -> int& { return c.bins; })},
    };
    return table;
}

}  // namespace

KeyValues parse_key_values(const std::string& text, const std::string& source) {
    KeyValues out;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        const auto where = source + ":" + std::to_string(line_no) + ": ";
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        const auto key = trim(t.substr(0, eq));
        const auto value = trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + "empty key");
        for (const auto& [k, v] : out)
            if (k == key) throw ConfigError(where + "duplicate key '" + key + "'");
        out.emplace_back(key, value);
    }
    return out;
}

void RunConfig::validate() const {
    try {
        synth.validate();
        train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (models.empty()) throw ConfigError("models: at least one model is required");
    if (bins < 1) throw ConfigError("bins must be >= 1");
}

void apply(RunConfig& cfg, const KeyValues& kv, const std::string& source) {
    for (const auto& [key, value] : kv) {
        const Setter* setter = nullptr;
        for (const auto& [name, s] : setters())
            if (name == key) setter = &s;
        if (!setter) throw ConfigError(source + ": unknown key '" + key + "'");
        try {
            (*setter)(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(source + ": " + e.what());
        }
    }
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    RunConfig cfg;
    apply(cfg, parse_key_values(ss.str(), path.string()), path.string());
    cfg.validate();
    return cfg;
}

const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, s] : setters()) k.push_back(name);
        return k;
    }();
    return keys;
}

}  // namespace rhythm::config
