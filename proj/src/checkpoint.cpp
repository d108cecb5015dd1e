#include "rhythm/checkpoint.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rhythm/datasets.hpp"

namespace rhythm::pipeline {

using json = nlohmann::ordered_json;

namespace {

json train_to_json(const nn::TrainConfig& c) {
    return {{"batch_size", c.batch_size}, {"epochs", c.epochs},       {"lr0", c.lr0},
            {"weight_decay", c.weight_decay}, {"lr_step", c.lr_step}, {"lr_factor", c.lr_factor},
            {"dropout_p", c.dropout_p},   {"bn_eps", c.bn_eps},       {"bn_momentum", c.bn_momentum},
            {"seeds", c.seeds}};
}

nn::TrainConfig train_from_json(const json& j) {
    nn::TrainConfig c;
    c.batch_size = j.at("batch_size").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.lr0 = j.at("lr0").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.lr_step = j.at("lr_step").get<int>();
    c.lr_factor = j.at("lr_factor").get<double>();
    c.dropout_p = j.at("dropout_p").get<double>();
    c.bn_eps = j.at("bn_eps").get<double>();
    c.bn_momentum = j.at("bn_momentum").get<double>();
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.validate();
    return c;
}

json arch_to_json(const nn::ArchConfig& a) {
    return {{"in_channels", a.in_channels},   {"stem_width", a.stem_width},     {"stage1_width", a.stage1_width},
            {"stage2_width", a.stage2_width}, {"stem_kernel", a.stem_kernel},   {"stem_stride", a.stem_stride},
            {"block_kernel", a.block_kernel}, {"num_classes", a.num_classes},   {"dropout_p", a.dropout_p},
            {"bn_eps", a.bn_eps},             {"bn_momentum", a.bn_momentum},   {"conv_init_scale", a.conv_init_scale}};
}

nn::ArchConfig arch_from_json(const json& j) {
    nn::ArchConfig a;
    a.in_channels = j.at("in_channels").get<int>();
    a.stem_width = j.at("stem_width").get<int>();
    a.stage1_width = j.at("stage1_width").get<int>();
    a.stage2_width = j.at("stage2_width").get<int>();
    a.stem_kernel = j.at("stem_kernel").get<int>();
    a.stem_stride = j.at("stem_stride").get<int>();
    a.block_kernel = j.at("block_kernel").get<int>();
    a.num_classes = j.at("num_classes").get<int>();
    a.dropout_p = j.at("dropout_p").get<double>();
    a.bn_eps = j.at("bn_eps").get<double>();
    a.bn_momentum = j.at("bn_momentum").get<double>();
    a.conv_init_scale = j.at("conv_init_scale").get<double>();
    a.validate();
    return a;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
}

}  // namespace

std::string checkpoint_to_text(const TrainedModel& m) {
    json head;
    head["format"] = kCheckpointFormat;
    head["version"] = kCheckpointVersion;
    head["variant"] = to_string(m.variant);
    head["seed"] = m.seed;
    head["train"] = train_to_json(m.train);
    size_t n_tensors = 0;
    if (is_neural(m.variant)) {
        if (!m.net) throw std::invalid_argument("checkpoint: network variant without a network");
        head["arch"] = arch_to_json(m.net->arch());
        n_tensors = m.net->params().count();
    } else {
        if (!m.logreg) throw std::invalid_argument("checkpoint: HRV variant without a logistic model");
        const auto& r = *m.logreg;
        head["logreg"] = {{"weights", r.weights},           {"biases", r.biases},
                          {"feature_mean", r.feature_mean}, {"feature_sd", r.feature_sd},
                          {"iterations", r.iterations},     {"final_loss", r.loss_history.empty() ? 0.0 : r.loss_history.back()}};
    }
    head["n_tensors"] = n_tensors;
    head["n_epochs"] = m.log.size();

    std::string out = head.dump() + "\n";
    if (m.net) {
        for (const auto& p : m.net->params().all()) {
            json t;
            t["tensor"] = p.name;
            t["shape"] = p.shape;
            t["learnable"] = p.learnable;
            t["values"] = p.value;
            out += t.dump() + "\n";
        }
    }
    for (const auto& e : m.log) {
        json l{{"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}, {"accuracy", e.accuracy}, {"order_digest", hex64(e.order_digest)}};
        out += l.dump() + "\n";
    }
    return out;
}

TrainedModel checkpoint_from_text(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    auto next = [&](const char* what) {
        if (!std::getline(in, line)) throw data::ParseError(source, line_no + 1, std::string("missing ") + what);
        ++line_no;
        try {
            return json::parse(line);
        } catch (const json::exception& e) {
            throw data::ParseError(source, line_no, e.what());
        }
    };

    TrainedModel m;
    try {
        const json head = next("header");
        if (head.value("format", "") != kCheckpointFormat) throw data::ParseError(source, 1, "not a checkpoint file");
        if (head.at("version").get<int>() != kCheckpointVersion)
            throw data::ParseError(source, 1, "unsupported checkpoint version " + head.at("version").dump());
        const auto variant = parse_variant(head.at("variant").get<std::string>());
        if (!variant) throw data::ParseError(source, 1, "unknown variant " + head.at("variant").dump());
        m.variant = *variant;
        m.seed = head.at("seed").get<std::uint64_t>();
        m.train = train_from_json(head.at("train"));
        const auto n_tensors = head.at("n_tensors").get<size_t>();
        const auto n_epochs = head.at("n_epochs").get<size_t>();

        if (is_neural(m.variant)) {
            m.net.emplace(arch_from_json(head.at("arch")), 0);
            auto& params = m.net->params();
            if (n_tensors != params.count())
                throw data::ParseError(source, 1, "expected " + std::to_string(params.count()) + " tensors, header lists " +
                                                      std::to_string(n_tensors));
            std::set<std::string> seen;
            for (size_t i = 0; i < n_tensors; ++i) {
                const json t = next("tensor");
                const auto name = t.at("tensor").get<std::string>();
                auto* p = params.find(name);
                if (!p) throw data::ParseError(source, line_no, "unknown tensor " + name);
                if (!seen.insert(name).second) throw data::ParseError(source, line_no, "duplicate tensor " + name);
                if (t.at("shape").get<std::vector<int>>() != p->shape)
                    throw data::ParseError(source, line_no, "shape mismatch for " + name);
                if (t.at("learnable").get<bool>() != p->learnable)
                    throw data::ParseError(source, line_no, "learnable flag mismatch for " + name);
                auto values = t.at("values").get<std::vector<float>>();
                if (values.size() != p->numel()) throw data::ParseError(source, line_no, "value count mismatch for " + name);
                p->value = std::move(values);
            }
        } else {
            const auto& r = head.at("logreg");
            hrv::LogRegModel lr;
            lr.weights = r.at("weights").get<std::array<double, kNumClasses>>();
            lr.biases = r.at("biases").get<std::array<double, kNumClasses>>();
            lr.feature_mean = r.at("feature_mean").get<double>();
            lr.feature_sd = r.at("feature_sd").get<double>();
            lr.iterations = r.at("iterations").get<int>();
            lr.loss_history = {r.at("final_loss").get<double>()};
            m.logreg = lr;
            if (n_tensors != 0) throw data::ParseError(source, 1, "HRV checkpoint cannot hold tensors");
        }
        for (size_t i = 0; i < n_epochs; ++i) {
            const json l = next("epoch log");
            nn::EpochLog e;
            e.epoch = l.at("epoch").get<int>();
            e.lr = l.at("lr").get<double>();
            e.loss = l.at("loss").get<double>();
            e.accuracy = l.at("accuracy").get<double>();
            e.order_digest = std::stoull(l.at("order_digest").get<std::string>(), nullptr, 16);
            m.log.push_back(e);
        }
    } catch (const json::exception& e) {
        throw data::ParseError(source, std::max<size_t>(line_no, 1), e.what());
    } catch (const std::invalid_argument& e) {
        throw data::ParseError(source, std::max<size_t>(line_no, 1), e.what());
    }
    while (std::getline(in, line))
        if (!line.empty()) throw data::ParseError(source, line_no + 1, "unexpected trailing content");
    return m;
}

void save_checkpoint(const std::filesystem::path& path, const TrainedModel& m) {
    data::atomic_write(path, checkpoint_to_text(m));
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return checkpoint_from_text(ss.str(), path.string());
}

}  // namespace rhythm::pipeline
