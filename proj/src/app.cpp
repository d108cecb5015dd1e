#include "rhythm/app.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "rhythm/checkpoint.hpp"
#include "rhythm/config.hpp"
#include "rhythm/datasets.hpp"
#include "rhythm/metrics.hpp"
#include "rhythm/pipeline.hpp"
#include "rhythm/sigproc.hpp"

namespace rhythm::app {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> model;
    std::string in;
    std::string out;
    std::string manifest;
    std::optional<int> bins;
};

config::RunConfig load_config(const Options& o) {
    config::RunConfig cfg = o.config.empty() ? config::RunConfig{} : config::load_run_config(o.config);
    if (o.bins) cfg.bins = *o.bins;
    cfg.validate();
    return cfg;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// An output file may be written when its directory exists and the path is not a directory.
void check_output_file(const fs::path& p) {
    if (fs::is_directory(p)) throw std::runtime_error(p.string() + " is a directory");
    const auto dir = p.parent_path();
    if (!dir.empty() && !fs::is_directory(dir)) throw std::runtime_error("output directory " + dir.string() + " does not exist");
}

void prepare_output_dir(const fs::path& p) {
    if (fs::exists(p) && !fs::is_directory(p)) throw std::runtime_error(p.string() + " exists and is not a directory");
    fs::create_directories(p);
}

// "report.csv" -> "report_summary.csv"
fs::path sibling(const fs::path& p, const std::string& suffix, const std::string& ext) {
    return p.parent_path() / (p.stem().string() + suffix + ext);
}

struct SplitSegments {
    std::vector<Segment> train, test;
};

SplitSegments load_split(const Options& o) {
    auto segments = data::read_segments(o.in);
    const auto manifest = data::read_manifest(o.manifest);
    SplitSegments s;
    for (auto& seg : segments) {
        if (!seg.processed) throw std::runtime_error("segments of " + seg.patient_id + " are not preprocessed; run preprocess first");
        (manifest.split_of(seg.patient_id) == data::Split::Train ? s.train : s.test).push_back(std::move(seg));
    }
    return s;
}

int cmd_synth(const Options& o, std::ostream& out) {
    auto cfg = load_config(o);
    if (o.seed) cfg.synth.seed = *o.seed;
    cfg.synth.validate();
    const fs::path dir = o.out;
    prepare_output_dir(dir);
    const auto ds = data::generate_dataset(cfg.synth);
    const auto manifest = data::split_patients(ds.segments, cfg.synth.train_fraction, cfg.synth.seed);
    data::write_segments(dir / "segments.ndjson", ds.segments);
    data::write_manifest(dir / "manifest.csv", manifest);
    out << "wrote " << ds.segments.size() << " segments from " << cfg.synth.n_patients << " patients to " << dir.string() << "\n";
    return kExitOk;
}

int cmd_preprocess(const Options& o, std::ostream& out) {
    check_output_file(o.out);
    const auto raw = data::read_segments(o.in);
    for (const auto& s : raw)
        if (s.processed) throw std::runtime_error(o.in + ": segments are already preprocessed");
    const sigproc::PreprocessFilters filters;
    std::vector<Segment> processed;
    processed.reserve(raw.size());
    for (const auto& s : raw) processed.push_back(sigproc::preprocess_segment(s, filters));
    data::write_segments(o.out, processed);
    out << "preprocessed " << processed.size() << " segments\n";
    return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
    auto cfg = load_config(o);
    if (o.seed) cfg.train.seeds = {*o.seed};
    std::vector<pipeline::Variant> variants = cfg.models;
    if (!o.model.empty()) {
        variants.clear();
        for (const auto& m : o.model) variants.push_back(*pipeline::parse_variant(m));
    }
    const fs::path dir = o.out;
    if (fs::exists(dir) && !fs::is_directory(dir)) throw std::runtime_error(dir.string() + " exists and is not a directory");
    const auto split = load_split(o);
    if (split.train.empty()) throw std::runtime_error("the manifest assigns no segments to the train split");

    std::vector<std::pair<fs::path, std::string>> outputs;
    for (const auto v : variants) {
        const auto name = pipeline::to_string(v);
        std::string log_csv = "variant,seed,epoch,lr,loss,accuracy,order_digest\n";
        for (const auto seed : cfg.train.seeds) {
            auto on_epoch = [&](const nn::EpochLog& e) {
                err << name << " seed " << seed << " epoch " << e.epoch + 1 << "/" << cfg.train.epochs << " loss "
                    << e.loss << " acc " << e.accuracy << "\n";
            };
            auto model = pipeline::train_variant(split.train, v, seed, cfg.train, on_epoch);
            for (const auto& e : model.log) {
                std::ostringstream row;
                row << name << ',' << seed << ',' << e.epoch << ',' << metrics::format_metric(e.lr) << ','
                    << metrics::format_metric(e.loss) << ',' << metrics::format_metric(e.accuracy) << ',' << std::hex
                    << e.order_digest << '\n';
                log_csv += row.str();
            }
            outputs.emplace_back(dir / (name + "_seed" + std::to_string(seed) + ".ckpt"), pipeline::checkpoint_to_text(model));
        }
        outputs.emplace_back(dir / (name + "_train_log.csv"), log_csv);
    }
    fs::create_directories(dir);
    for (const auto& [path, text] : outputs) data::atomic_write(path, text);
    out << "wrote " << outputs.size() << " files to " << dir.string() << "\n";
    return kExitOk;
}

std::vector<fs::path> checkpoint_paths(const std::vector<std::string>& args) {
    std::vector<fs::path> paths;
    for (const auto& a : args) {
        if (fs::is_directory(a)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(a))
                if (e.is_regular_file() && e.path().extension() == ".ckpt") found.push_back(e.path());
            std::sort(found.begin(), found.end());
            paths.insert(paths.end(), found.begin(), found.end());
        } else {
            paths.emplace_back(a);
        }
    }
    if (paths.empty()) throw UsageError("no checkpoints given to --model");
    return paths;
}

int cmd_eval(const Options& o, std::ostream& out) {
    const auto cfg = load_config(o);
    const fs::path report_path = o.out;
    check_output_file(report_path);
    const auto paths = checkpoint_paths(o.model);
    const auto split = load_split(o);
    if (split.test.empty()) throw std::runtime_error("the manifest assigns no segments to the test split");
    const auto strata = sigproc::stratify_percentiles(pipeline::motion_scores(split.test), cfg.bins);

    metrics::EvalReport report;
    for (const auto& p : paths) {
        auto model = pipeline::load_checkpoint(p);
        const auto probs = pipeline::score(model, split.test);
        const auto name = pipeline::to_string(model.variant) + "/seed" + std::to_string(model.seed);
        const auto part = metrics::build_report(pipeline::attach(probs, split.test, strata), strata, name);
        report.rows.insert(report.rows.end(), part.rows.begin(), part.rows.end());
    }
    const auto csv = metrics::report_csv(report);
    data::atomic_write(report_path, csv);
    data::atomic_write(sibling(report_path, "", ".ndjson"), metrics::report_ndjson(report));
    data::atomic_write(sibling(report_path, "_summary", ".csv"), metrics::summarize_report_csv(csv));
    out << "evaluated " << paths.size() << " models on " << split.test.size() << " test segments\n";
    return kExitOk;
}

int cmd_report(const Options& o, std::ostream& out) {
    check_output_file(o.out);
    const auto summary = metrics::summarize_report_csv(read_file(o.in));
    data::atomic_write(o.out, summary);
    out << "wrote " << o.out << "\n";
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Heart-rhythm classification from wrist PPG and accelerometer signals"};
    app.name(args.empty() ? "rhythm" : fs::path(args[0]).filename().string());
    app.require_subcommand(1);
    Options o;

    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "key = value configuration file")->check(CLI::ExistingFile);
    };
    std::vector<std::string> model_names;
    for (auto v : pipeline::kAllVariants) model_names.push_back(pipeline::to_string(v));

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset: OUT/segments.ndjson and OUT/manifest.csv");
    add_config(synth);
    synth->add_option("--seed", o.seed, "Generator seed (overrides synth_seed)");
    synth->add_option("--out", o.out, "Output directory")->required();

    auto* pre = app.add_subcommand("preprocess", "Filter and normalize raw segments and attach motion scores");
    pre->add_option("--in", o.in, "Raw segment file")->required()->check(CLI::ExistingFile);
    pre->add_option("--out", o.out, "Processed segment file")->required();

    auto* train = app.add_subcommand("train", "Train one model per seed on the train split");
    add_config(train);
    train->add_option("--in", o.in, "Processed segment file")->required()->check(CLI::ExistingFile);
    train->add_option("--manifest", o.manifest, "Patient split manifest")->required()->check(CLI::ExistingFile);
    train->add_option("--model", o.model, "Model variant(s); defaults to the config's models")
        ->check(CLI::IsMember(model_names));
    train->add_option("--seed", o.seed, "Train a single seed instead of the configured list");
    train->add_option("--out", o.out, "Checkpoint directory")->required();

    auto* eval = app.add_subcommand("eval", "Score the test split per motion bin; also writes *_summary.csv and .ndjson");
    add_config(eval);
    eval->add_option("--in", o.in, "Processed segment file")->required()->check(CLI::ExistingFile);
    eval->add_option("--manifest", o.manifest, "Patient split manifest")->required()->check(CLI::ExistingFile);
    eval->add_option("--model", o.model, "Checkpoint files or directories of *.ckpt")->required()->check(CLI::ExistingPath);
    eval->add_option("--bins", o.bins, "Number of motion percentile bins (default 10)")->check(CLI::PositiveNumber);
    eval->add_option("--out", o.out, "Report CSV")->required();

    auto* report = app.add_subcommand("report", "Seed-averaged summary (mean, min, max) of a report CSV");
    report->add_option("--in", o.in, "Report CSV from eval")->required()->check(CLI::ExistingFile);
    report->add_option("--out", o.out, "Summary CSV")->required();

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
            return kExitOk;
        }
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth(o, out);
        if (pre->parsed()) return cmd_preprocess(o, out);
        if (train->parsed()) return cmd_train(o, out, err);
        if (eval->parsed()) return cmd_eval(o, out);
        if (report->parsed()) return cmd_report(o, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const config::ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace rhythm::app
