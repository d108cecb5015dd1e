#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "rhythm/metrics.hpp"

using namespace rhythm;
using namespace rhythm::metrics;

namespace {

std::optional<double> brute_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
    double num = 0;
    size_t P = 0, N = 0;
    for (size_t i = 0; i < s.size(); ++i) (pos[i] ? P : N)++;
    if (P == 0 || N == 0) return std::nullopt;
    for (size_t i = 0; i < s.size(); ++i)
        for (size_t j = 0; j < s.size(); ++j)
            if (pos[i] && !pos[j]) num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    return num / static_cast<double>(P * N);
}

std::vector<bool> as_bool(std::initializer_list<int> v) {
    std::vector<bool> out;
    for (int x : v) out.push_back(x != 0);
    return out;
}

std::optional<double> auc(const std::vector<double>& s, const std::vector<bool>& pos) {
    std::unique_ptr<bool[]> tmp(new bool[pos.size()]);
    std::copy(pos.begin(), pos.end(), tmp.get());
    return binary_auc(s, std::span<const bool>(tmp.get(), pos.size()));
}

Probs random_probs(std::mt19937_64& rng, bool coarse) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Probs p;
    double sum = 0;
    for (auto& v : p) sum += v = coarse ? static_cast<double>(rng() % 3 + 1) : u(rng) + 1e-3;
    for (auto& v : p) v /= sum;
    return p;
}

std::vector<ScoredSegment> random_scored(std::mt19937_64& rng, size_t n, bool coarse) {
    std::vector<ScoredSegment> s(n);
    for (auto& x : s) {
        x.probs = random_probs(rng, coarse);
        x.label = rhythm_from_index(static_cast<int>(rng() % 3));
    }
    return s;
}

}  // namespace

TEST_CASE("binary_auc examples") {
    CHECK(*auc({0.1, 0.2, 0.8, 0.9}, as_bool({0, 0, 1, 1})) == 1.0);
    CHECK(*auc({0.5, 0.5, 0.5, 0.5}, as_bool({0, 1, 0, 1})) == 0.5);
    CHECK(*auc({0.1, 0.4, 0.35, 0.8}, as_bool({0, 0, 1, 1})) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK_FALSE(auc({0.1, 0.2}, as_bool({1, 1})).has_value());
    CHECK_FALSE(auc({}, {}).has_value());
}

TEST_CASE("binary_auc matches pairwise counting, complements, and is rank invariant") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 1000; ++trial) {
        const size_t n = 2 + rng() % 49;
        std::vector<double> s(n);
        std::vector<bool> pos(n), neg(n);
        for (size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng() % 8) / 8.0;  // coarse grid forces ties
            pos[i] = rng() % 2;
            neg[i] = !pos[i];
        }
        const auto a = auc(s, pos), b = brute_auc(s, pos);
        REQUIRE(a.has_value() == b.has_value());
        if (!a) continue;
        CHECK(std::abs(*a - *b) < 1e-12);
        CHECK(*a + *auc(s, neg) == 1.0);
        std::vector<double> t(n);
        for (size_t i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
        CHECK(*auc(t, pos) == *a);
    }
}

TEST_CASE("macro and micro AUC") {
    SUBCASE("perfect one-hot") {
        std::vector<ScoredSegment> s;
        for (int c = 0; c < 3; ++c)
            for (int k = 0; k < 4; ++k) {
                ScoredSegment x;
                x.label = rhythm_from_index(c);
                x.probs = {0, 0, 0};
                x.probs[static_cast<size_t>(c)] = 1.0;
                s.push_back(x);
            }
        CHECK(*macro_auc(s).value == 1.0);
        CHECK(macro_auc(s).classes_present.size() == 3);
        CHECK(*micro_auc(s) == 1.0);
        CHECK(*accuracy(s) == 1.0);
    }
    SUBCASE("uniform probabilities") {
        std::vector<ScoredSegment> s(6);
        for (size_t i = 0; i < s.size(); ++i) {
            s[i].probs = {1.0 / 3, 1.0 / 3, 1.0 / 3};
            s[i].label = rhythm_from_index(static_cast<int>(i % 3));
        }
        CHECK(*micro_auc(s) == 0.5);
        CHECK(*macro_auc(s).value == 0.5);
        // ties go to class 0
        CHECK(*accuracy(s) == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("absent class is excluded and flagged") {
        // SR separates perfectly, AF scores are all tied; no Other segments
        std::vector<ScoredSegment> s(4);
        s[0] = {{0.6, 0.3, 0.1}, Rhythm::SR, 0};
        s[1] = {{0.5, 0.3, 0.2}, Rhythm::SR, 0};
        s[2] = {{0.2, 0.3, 0.5}, Rhythm::AF, 0};
        s[3] = {{0.1, 0.3, 0.6}, Rhythm::AF, 0};
        const auto m = macro_auc(s);
        CHECK(*m.value == doctest::Approx(0.75));
        CHECK(m.classes_present == std::vector<Rhythm>{Rhythm::SR, Rhythm::AF});
    }
    SUBCASE("single class is undefined") {
        std::vector<ScoredSegment> s(3);
        for (auto& x : s) x.probs = {0.5, 0.3, 0.2};
        CHECK_FALSE(macro_auc(s).value.has_value());
        CHECK_FALSE(accuracy(std::span<const ScoredSegment>{}).has_value());
    }
    SUBCASE("random instances against oracles") {
        std::mt19937_64 rng(43);
        for (int trial = 0; trial < 300; ++trial) {
            const auto s = random_scored(rng, 3 + rng() % 30, trial % 2 == 0);
            double sum = 0;
            int present = 0;
            for (int c = 0; c < 3; ++c) {
                std::vector<double> sc;
                std::vector<bool> pos;
                for (const auto& x : s) {
                    sc.push_back(x.probs[static_cast<size_t>(c)]);
                    pos.push_back(class_index(x.label) == c);
                }
                if (const auto a = brute_auc(sc, pos)) {
                    sum += *a;
                    ++present;
                }
            }
            const auto m = macro_auc(s);
            CHECK(static_cast<int>(m.classes_present.size()) == present);
            if (present >= 2) CHECK(std::abs(*m.value - sum / present) < 1e-12);
            else CHECK_FALSE(m.value.has_value());

            std::vector<double> flat;
            std::vector<bool> flat_pos;
            size_t correct = 0;
            for (const auto& x : s) {
                for (int c = 0; c < 3; ++c) {
                    flat.push_back(x.probs[static_cast<size_t>(c)]);
                    flat_pos.push_back(class_index(x.label) == c);
                }
                int best = 0;
                for (int c = 1; c < 3; ++c)
                    if (x.probs[static_cast<size_t>(c)] > x.probs[static_cast<size_t>(best)]) best = c;
                if (best == class_index(x.label)) ++correct;
            }
            CHECK(std::abs(*micro_auc(s) - *brute_auc(flat, flat_pos)) < 1e-12);
            CHECK(*accuracy(s) == static_cast<double>(correct) / static_cast<double>(s.size()));
            for (double v : {*micro_auc(s), *accuracy(s)}) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
    }
}

TEST_CASE("predicted_class tie-break") {
    CHECK(predicted_class({0.4, 0.4, 0.2}) == 0);
    CHECK(predicted_class({0.2, 0.4, 0.4}) == 1);
    CHECK(predicted_class({0.1, 0.2, 0.7}) == 2);
}

TEST_CASE("build_report") {
    std::mt19937_64 rng(47);
    auto s = random_scored(rng, 100, false);
    std::vector<double> motion(100);
    for (auto& m : motion) m = std::uniform_real_distribution<double>(0, 5)(rng);
    const auto strata = sigproc::stratify_percentiles(motion);
    for (size_t i = 0; i < s.size(); ++i) s[i].motion_bin = strata.assignment[i];

    const auto r = build_report(s, strata, "fusion/seed1");
    REQUIRE(r.rows.size() == 11);
    size_t total = 0;
    for (int b = 0; b < 10; ++b) {
        CHECK(r.rows[static_cast<size_t>(b)].bin == std::to_string(b));
        total += r.rows[static_cast<size_t>(b)].n;
    }
    CHECK(total == 100);
    const auto& all = r.rows.back();
    CHECK(all.bin == "all");
    CHECK(all.n == 100);
    CHECK(all.macro_auc == macro_auc(s).value);
    CHECK(all.micro_auc == micro_auc(s));
    CHECK(all.accuracy == accuracy(s));

    const auto csv = report_csv(r);
    CHECK(csv.rfind(std::string(kReportHeader) + "\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 12);
    CHECK(csv.find("\nall,fusion/seed1,") != std::string::npos);
    const auto nd = report_ndjson(r);
    CHECK(std::count(nd.begin(), nd.end(), '\n') == 11);

    s[3].motion_bin = (s[3].motion_bin + 1) % 10;
    CHECK_THROWS_AS(build_report(s, strata, "x"), std::invalid_argument);
}

TEST_CASE("empty bin gives absent metrics") {
    sigproc::MotionStrata strata;
    strata.n_bins = 2;
    strata.assignment = {0, 0};
    strata.bin_edges = {0, 1, 1};
    std::vector<ScoredSegment> s(2);
    s[0] = {{0.9, 0.05, 0.05}, Rhythm::SR, 0};
    s[1] = {{0.1, 0.8, 0.1}, Rhythm::AF, 0};
    const auto r = build_report(s, strata, "m");
    CHECK(r.rows[1].n == 0);
    CHECK_FALSE(r.rows[1].macro_auc.has_value());
    CHECK(report_csv(r).find("1,m,NA,NA,NA,0,\n") != std::string::npos);
}

TEST_CASE("summarize_report_csv groups seeds by variant") {
    const std::string csv = std::string(kReportHeader) +
                            "\n"
                            "all,fusion/seed1,0.900000,0.950000,0.800000,10,SR|AF|Other\n"
                            "all,fusion/seed2,0.800000,0.850000,0.700000,10,SR|AF|Other\n"
                            "all,ppg_only/seed1,NA,0.500000,0.500000,10,SR\n";
    const auto out = summarize_report_csv(csv);
    CHECK(out.find("macro_auc,all,fusion,0.850000,0.800000,0.900000,2\n") != std::string::npos);
    CHECK(out.find("macro_auc,all,ppg_only,NA,NA,NA,0\n") != std::string::npos);
    CHECK(out.find("accuracy,all,fusion,0.750000,0.700000,0.800000,2\n") != std::string::npos);
    CHECK_THROWS(summarize_report_csv("nope\n"));
}
