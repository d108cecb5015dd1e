#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "rhythm/app.hpp"
#include "rhythm/checkpoint.hpp"
#include "rhythm/config.hpp"
#include "rhythm/sigproc.hpp"
#include "test_util.hpp"

using namespace rhythm;
using rhythm::test::slurp;
using rhythm::test::TempDir;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "rhythm");
    std::ostringstream out, err;
    const int code = app::run(args, out, err);
    return {code, out.str(), err.str()};
}

const char* kSmallConfig =
    "# tiny run\n"
    "n_patients = 6\n"
    "segments_per_patient = 6\n"
    "epochs = 2\n"
    "batch_size = 8\n"
    "seeds = 1, 2\n"
    "models = fusion, hrv_rmssd\n";

size_t count_lines(const std::string& s) { return static_cast<size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("config parsing") {
    const auto kv = config::parse_key_values("# comment\n\n a = 1 \nb=x, y\n");
    REQUIRE(kv.size() == 2);
    CHECK(kv[0] == std::pair<std::string, std::string>{"a", "1"});
    CHECK(kv[1].second == "x, y");
    CHECK_THROWS_AS(config::parse_key_values("a = 1\na = 2\n"), config::ConfigError);
    CHECK_THROWS_AS(config::parse_key_values("just words\n"), config::ConfigError);

    config::RunConfig cfg;
    config::apply(cfg, config::parse_key_values(kSmallConfig));
    CHECK(cfg.synth.n_patients == 6);
    CHECK(cfg.train.epochs == 2);
    CHECK(cfg.train.seeds == std::vector<std::uint64_t>{1, 2});
    CHECK(cfg.models == std::vector<pipeline::Variant>{pipeline::Variant::Fusion, pipeline::Variant::HrvRmssd});
    CHECK_THROWS_AS(config::apply(cfg, {{"epoch", "3"}}), config::ConfigError);
    CHECK_THROWS_AS(config::apply(cfg, {{"epochs", "three"}}), config::ConfigError);
    CHECK_THROWS_AS(config::apply(cfg, {{"models", "fusion, cnn"}}), config::ConfigError);
    CHECK(std::find(config::known_keys().begin(), config::known_keys().end(), "bn_momentum") != config::known_keys().end());

    config::RunConfig defaults;
    CHECK(defaults.train.batch_size == 64);
    CHECK(defaults.train.lr0 == 1e-4);
    CHECK(defaults.bins == 10);
}

TEST_CASE("checkpoint round trip") {
    auto segs = data::generate_dataset([] {
                    data::SynthConfig c;
                    c.n_patients = 2;
                    c.segments_per_patient = 6;
                    return c;
                }()).segments;
    for (auto& s : segs) s = sigproc::preprocess_segment(s);
    nn::TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 4;

    for (auto v : {pipeline::Variant::PpgOnly, pipeline::Variant::HrvPnn40}) {
        CAPTURE(pipeline::to_string(v));
        auto m = pipeline::train_variant(segs, v, 3, tc);
        const auto text = pipeline::checkpoint_to_text(m);
        auto back = pipeline::checkpoint_from_text(text);
        CHECK(back.variant == v);
        CHECK(back.seed == 3);
        CHECK(back.log.size() == m.log.size());
        CHECK(pipeline::checkpoint_to_text(back) == text);
        const auto a = pipeline::score(m, segs), b = pipeline::score(back, segs);
        CHECK(a == b);

        CHECK_THROWS_AS(pipeline::checkpoint_from_text(text.substr(0, text.size() / 2)), data::ParseError);
        CHECK_THROWS_AS(pipeline::checkpoint_from_text("{\"format\":\"other\"}\n"), data::ParseError);
    }
}

TEST_CASE("cli end to end") {
    TempDir dir;
    const auto cfg = dir.path / "run.cfg";
    std::ofstream(cfg) << kSmallConfig;
    const auto d = dir.path.string();

    REQUIRE(run({"synth", "--config", cfg.string(), "--out", d + "/data"}).code == 0);
    REQUIRE(run({"synth", "--config", cfg.string(), "--out", d + "/again"}).code == 0);
    CHECK(slurp(d + "/data/segments.ndjson") == slurp(d + "/again/segments.ndjson"));
    CHECK(slurp(d + "/data/manifest.csv") == slurp(d + "/again/manifest.csv"));
    CHECK(count_lines(slurp(d + "/data/manifest.csv")) == 7);

    auto r = run({"preprocess", "--in", d + "/data/segments.ndjson", "--out", d + "/data/processed.ndjson"});
    REQUIRE(r.code == 0);
    const auto processed = data::read_segments(d + "/data/processed.ndjson");
    CHECK(processed.size() == 36);
    for (const auto& s : processed) {
        CHECK(s.processed);
        REQUIRE(s.motion_score.has_value());
        CHECK(*s.motion_score >= 0);
    }
    // preprocessing twice is refused
    CHECK(run({"preprocess", "--in", d + "/data/processed.ndjson", "--out", d + "/twice.ndjson"}).code == 1);
    CHECK_FALSE(fs::exists(d + "/twice.ndjson"));

    r = run({"train", "--config", cfg.string(), "--in", d + "/data/processed.ndjson", "--manifest", d + "/data/manifest.csv",
             "--out", d + "/models"});
    REQUIRE(r.code == 0);
    for (const char* f : {"fusion_seed1.ckpt", "fusion_seed2.ckpt", "hrv_rmssd_seed1.ckpt", "hrv_rmssd_seed2.ckpt",
                          "fusion_train_log.csv", "hrv_rmssd_train_log.csv"})
        CHECK(fs::exists(dir.path / "models" / f));
    CHECK(count_lines(slurp(dir.path / "models/fusion_train_log.csv")) == 1 + 2 * 2);

    // raw segments cannot be used for training; nothing is written
    CHECK(run({"train", "--config", cfg.string(), "--in", d + "/data/segments.ndjson", "--manifest", d + "/data/manifest.csv",
               "--out", d + "/nothing"})
              .code == 1);
    CHECK_FALSE(fs::exists(d + "/nothing"));

    r = run({"eval", "--config", cfg.string(), "--in", d + "/data/processed.ndjson", "--manifest", d + "/data/manifest.csv",
             "--model", d + "/models", "--out", d + "/report.csv"});
    REQUIRE(r.code == 0);
    const auto report = slurp(d + "/report.csv");
    CHECK(count_lines(report) == 1 + 4 * 11);
    CHECK(report.find("all,fusion/seed2,") != std::string::npos);
    CHECK(report.find("all,hrv_rmssd/seed1,") != std::string::npos);
    CHECK(fs::exists(d + "/report.ndjson"));
    CHECK(slurp(d + "/report_summary.csv").find("macro_auc,all,fusion,") != std::string::npos);

    REQUIRE(run({"eval", "--config", cfg.string(), "--in", d + "/data/processed.ndjson", "--manifest", d + "/data/manifest.csv",
                 "--model", d + "/models", "--out", d + "/report2.csv"})
                .code == 0);
    CHECK(slurp(d + "/report2.csv") == report);

    REQUIRE(run({"report", "--in", d + "/report.csv", "--out", d + "/summary.csv"}).code == 0);
    CHECK(slurp(d + "/summary.csv") == slurp(d + "/report_summary.csv"));
}

TEST_CASE("cli exit codes") {
    TempDir dir;
    const auto d = dir.path.string();
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"synth"}).code == 2);
    CHECK(run({"preprocess", "--in", d + "/missing.ndjson", "--out", d + "/x.ndjson"}).code == 2);
    std::ofstream(dir.path / "bad.cfg") << "n_patient = 3\n";
    const auto r = run({"synth", "--config", d + "/bad.cfg", "--out", d + "/out"});
    CHECK(r.code == 2);
    CHECK(r.err.find("n_patient") != std::string::npos);
    std::ofstream(dir.path / "raw.ndjson") << "";
    CHECK(run({"preprocess", "--in", d + "/raw.ndjson", "--out", d + "/no/such/dir/x.ndjson"}).code == 1);
    CHECK(run({"train", "--in", d + "/raw.ndjson", "--manifest", d + "/raw.ndjson", "--model", "cnn", "--out", d}).code == 2);

    for (const char* sub : {"synth", "preprocess", "train", "eval", "report"}) {
        const auto h = run({sub, "--help"});
        CHECK(h.code == 0);
        CHECK(h.out.find("--out") != std::string::npos);
    }
}

TEST_CASE("shipped default config matches the built-in defaults") {
    const auto cfg = config::load_run_config(fs::path(RHYTHM_SOURCE_DIR) / "configs/default.cfg");
    const config::RunConfig d;
    CHECK(cfg.synth.n_patients == d.synth.n_patients);
    CHECK(cfg.synth.segments_per_patient == d.synth.segments_per_patient);
    CHECK(cfg.synth.class_mix == d.synth.class_mix);
    CHECK(cfg.synth.artifact_gain == d.synth.artifact_gain);
    CHECK(cfg.synth.rhythm.ectopy_rate == d.synth.rhythm.ectopy_rate);
    CHECK(cfg.train.epochs == d.train.epochs);
    CHECK(cfg.train.lr0 == d.train.lr0);
    CHECK(cfg.train.weight_decay == d.train.weight_decay);
    CHECK(cfg.train.bn_eps == d.train.bn_eps);
    CHECK(cfg.train.seeds == d.train.seeds);
    CHECK(cfg.models.size() == pipeline::kAllVariants.size());
    CHECK_NOTHROW(config::load_run_config(fs::path(RHYTHM_SOURCE_DIR) / "configs/small.cfg"));
}
