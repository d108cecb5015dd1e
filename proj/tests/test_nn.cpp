#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rhythm/nn/train.hpp"

using namespace rhythm;
using namespace rhythm::nn;

namespace {

template <typename T>
Tensor3<T> from(int B, int C, int L, std::vector<T> v) {
    Tensor3<T> t(B, C, L);
    REQUIRE(v.size() == t.size());
    t.data = std::move(v);
    return t;
}

Tensor3<double> random_tensor(int B, int C, int L, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Tensor3<double> t(B, C, L);
    for (auto& v : t.data) v = g(rng);
    return t;
}

ArchConfig tiny_arch(int cin) {
    ArchConfig a;
    a.in_channels = cin;
    a.stem_width = 4;
    a.stage1_width = 4;
    a.stage2_width = 8;
    return a;
}

// Largest per-tensor relative error ||num - ana|| / max(||num||, ||ana||).
double worst_gradient_error(RhythmiNet<double>& m, const Tensor3<double>& x, const std::vector<int>& labels, double h) {
    auto loss = [&] { return softmax_cross_entropy(m.forward(x, Mode::Train, 5), labels).loss; };
    m.params().zero_grad();
    const auto lg = softmax_cross_entropy(m.forward(x, Mode::Train, 5), labels);
    m.backward(lg.grad);
    double worst = 0;
    for (auto& p : m.params().all()) {
        if (!p.learnable) continue;
        double num2 = 0, ana2 = 0, diff2 = 0;
        for (size_t i = 0; i < p.numel(); ++i) {
            const double orig = p.value[i];
            p.value[i] = orig + h;
            const double lp = loss();
            p.value[i] = orig - h;
            const double lm = loss();
            p.value[i] = orig;
            const double num = (lp - lm) / (2 * h);
            num2 += num * num;
            ana2 += p.grad[i] * p.grad[i];
            diff2 += (num - p.grad[i]) * (num - p.grad[i]);
        }
        const double rel = std::sqrt(diff2) / std::max(1e-300, std::max(std::sqrt(num2), std::sqrt(ana2)));
        CAPTURE(p.name);
        CHECK(rel < 1e-4);
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace

TEST_CASE("conv1d examples") {
    ModelParams<double> P;
    Conv1d<double> id(P, "id", 1, 1, 1, 1, 0);
    P[id.weight_index()].value = {1.0};
    const auto x = from<double>(1, 1, 4, {1, 2, 3, 4});
    CHECK(id.forward(x, false).data == x.data);

    Conv1d<double> diff(P, "diff", 1, 1, 3, 1, 0);
    P[diff.weight_index()].value = {1, 0, -1};
    const auto y = diff.forward(x, false);
    CHECK(y.L == 2);
    CHECK(y.data == std::vector<double>{-2, -2});

    CHECK(conv_output_length(960, 7, 2, 3) == 480);
    CHECK(conv_output_length(960, 3, 2, 1) == 480);
    Conv1d<double> stem(P, "stem", 4, 2, 7, 2, 3);
    CHECK(stem.forward(Tensor3<double>(1, 4, 960), false).L == 480);
    CHECK_THROWS_AS(stem.forward(Tensor3<double>(1, 3, 960), false), std::invalid_argument);
    CHECK_THROWS_AS(diff.backward(Tensor3<double>(1, 1, 2)), std::logic_error);
}

TEST_CASE("conv1d matches a direct loop on random shapes") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const int cin = 1 + static_cast<int>(rng() % 3), cout = 1 + static_cast<int>(rng() % 3);
        const int k = 1 + static_cast<int>(rng() % 5), s = 1 + static_cast<int>(rng() % 2), p = static_cast<int>(rng() % 3);
        const int L = k + static_cast<int>(rng() % 12);
        ModelParams<double> P;
        Conv1d<double> conv(P, "c", cin, cout, k, s, p);
        std::normal_distribution<double> g;
        auto& w = P[conv.weight_index()].value;
        for (auto& v : w) v = g(rng);
        const auto x = random_tensor(2, cin, L, rng);
        const auto y = conv.forward(x, false);
        REQUIRE(y.L == conv_output_length(L, k, s, p));
        for (int b = 0; b < 2; ++b)
            for (int o = 0; o < cout; ++o)
                for (int t = 0; t < y.L; ++t) {
                    double acc = 0;
                    for (int c = 0; c < cin; ++c)
                        for (int j = 0; j < k; ++j) {
                            const int src = t * s + j - p;
                            if (src >= 0 && src < L) acc += w[static_cast<size_t>((o * cin + c) * k + j)] * x(b, c, src);
                        }
                    CHECK(y(b, o, t) == doctest::Approx(acc).epsilon(1e-12));
                }
    }
}

TEST_CASE("batchnorm1d") {
    std::mt19937_64 rng(5);
    ModelParams<double> P;
    BatchNorm1d<double> bn(P, "bn", 3, 1e-5, 0.1);
    auto x = random_tensor(4, 3, 10, rng);
    for (auto& v : x.data) v = 3.0 * v + 2.0;
    for (int b = 0; b < 4; ++b)
        for (int l = 0; l < 10; ++l) x(b, 2, l) = 7.0;  // constant channel
    const auto y = bn.forward(x, Mode::Train, false);
    for (int c = 0; c < 3; ++c) {
        double mu = 0, ss = 0;
        for (int b = 0; b < 4; ++b)
            for (int l = 0; l < 10; ++l) mu += y(b, c, l) / 40.0;
        for (int b = 0; b < 4; ++b)
            for (int l = 0; l < 10; ++l) ss += (y(b, c, l) - mu) * (y(b, c, l) - mu) / 40.0;
        CHECK(std::abs(mu) < 1e-6);
        if (c < 2) CHECK(std::abs(ss - 1.0) < 1e-4);
        else CHECK(ss == 0.0);
    }
    for (int b = 0; b < 4; ++b) CHECK(y(b, 2, 3) == 0.0);

    // running stats after one update, then eval against the hand formula
    double mu0 = 0;
    for (int b = 0; b < 4; ++b)
        for (int l = 0; l < 10; ++l) mu0 += x(b, 0, l) / 40.0;
    double var0 = 0;
    for (int b = 0; b < 4; ++b)
        for (int l = 0; l < 10; ++l) var0 += (x(b, 0, l) - mu0) * (x(b, 0, l) - mu0) / 39.0;
    const auto& rm = P[bn.running_mean_index()].value;
    const auto& rv = P[bn.running_var_index()].value;
    CHECK(rm[0] == doctest::Approx(0.1 * mu0).epsilon(1e-12));
    CHECK(rv[0] == doctest::Approx(0.9 + 0.1 * var0).epsilon(1e-12));

    P[bn.gamma_index()].value = {2.0, 0.5, 1.0};
    P[bn.beta_index()].value = {0.1, -1.0, 0.0};
    const auto z = bn.forward(x, Mode::Eval, false);
    for (int c = 0; c < 3; ++c)
        for (int l = 0; l < 10; ++l) {
            const double g = P[bn.gamma_index()].value[static_cast<size_t>(c)], be = P[bn.beta_index()].value[static_cast<size_t>(c)];
            const double want = g * (x(1, c, l) - rm[static_cast<size_t>(c)]) / std::sqrt(rv[static_cast<size_t>(c)] + 1e-5) + be;
            CHECK(z(1, c, l) == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("squeeze-excite") {
    std::mt19937_64 rng(7);
    ModelParams<double> P;
    SqueezeExcite<double> se(P, "se", 4);
    const auto x = random_tensor(2, 4, 5, rng);
    const auto y = se.forward(x, true);
    for (size_t i = 0; i < x.size(); ++i) CHECK(y.data[i] == doctest::Approx(0.5 * x.data[i]));

    auto* w1 = P.find("se.fc1.weight");
    auto* w2 = P.find("se.fc2.weight");
    REQUIRE(w1->shape == std::vector<int>{2, 4});
    REQUIRE(w2->shape == std::vector<int>{4, 2});
    std::normal_distribution<double> g;
    for (auto& v : w1->value) v = g(rng);
    for (auto& v : w2->value) v = g(rng);
    const auto z = se.forward(x, true);
    for (size_t i = 0; i < x.size(); ++i) CHECK(std::abs(z.data[i]) <= std::abs(x.data[i]));

    // B=1, C=2, L=3 by hand
    ModelParams<double> Q;
    SqueezeExcite<double> small(Q, "s", 2);
    Q.find("s.fc1.weight")->value = {0.5, -1.0};
    Q.find("s.fc1.bias")->value = {0.2};
    Q.find("s.fc2.weight")->value = {1.0, -2.0};
    Q.find("s.fc2.bias")->value = {0.0, 0.3};
    const auto xs = from<double>(1, 2, 3, {1, 2, 3, -1, 0, 4});
    const double m0 = 2.0, m1 = 1.0;
    const double h = std::max(0.0, 0.5 * m0 - 1.0 * m1 + 0.2);
    const double s0 = 1.0 / (1.0 + std::exp(-(1.0 * h))), s1 = 1.0 / (1.0 + std::exp(-(-2.0 * h + 0.3)));
    const auto ys = small.forward(xs, false);
    const std::vector<double> want{s0, 2 * s0, 3 * s0, -s1, 0, 4 * s1};
    for (size_t i = 0; i < want.size(); ++i) CHECK(ys.data[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("temporal attention") {
    std::mt19937_64 rng(11);
    ModelParams<double> P;
    TemporalAttention<double> att(P, "att", 4);
    std::normal_distribution<double> g;
    for (const char* n : {"att.wq", "att.wk", "att.wv"})
        for (auto& v : P.find(n)->value) v = g(rng);

    SUBCASE("rows are probability vectors") {
        const auto x = random_tensor(3, 4, 9, rng);
        att.forward(x, true);
        for (int b = 0; b < 3; ++b) {
            const auto A = att.attention(b);
            for (int i = 0; i < 9; ++i) {
                CHECK(std::abs(A.row(i).sum() - 1.0) < 1e-9);
                CHECK(A.row(i).minCoeff() >= 0.0);
            }
        }
    }
    SUBCASE("single time step") {
        const auto x = random_tensor(1, 4, 1, rng);
        const auto y = att.forward(x, true);
        CHECK(att.attention(0)(0, 0) == 1.0);
        const auto& wv = P.find("att.wv")->value;
        for (int c = 0; c < 4; ++c) {
            double v = 0;
            for (int d = 0; d < 4; ++d) v += wv[static_cast<size_t>(c * 4 + d)] * x(0, d, 0);
            CHECK(y(0, c, 0) == doctest::Approx(x(0, c, 0) + v).epsilon(1e-12));
        }
    }
    SUBCASE("identical keys give uniform rows") {
        auto x = random_tensor(1, 4, 6, rng);
        for (int c = 0; c < 4; ++c)
            for (int l = 0; l < 6; ++l) x(0, c, l) = c == 0 ? 1.0 : x(0, c, l);
        auto& wk = P.find("att.wk")->value;
        for (int r = 0; r < 4; ++r)
            for (int c = 1; c < 4; ++c) wk[static_cast<size_t>(r * 4 + c)] = 0.0;
        att.forward(x, true);
        const auto A = att.attention(0);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) CHECK(A(i, j) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    }
}

TEST_CASE("basic block") {
    std::mt19937_64 rng(13);
    ModelParams<double> P;
    BasicBlock<double> block(P, "b", BlockSpec{4, 4, 1, 3, 0.1, 1e-5, 0.1});
    CHECK_FALSE(block.has_projection());
    for (auto& p : P.all())
        if (p.name.find("conv") != std::string::npos) std::fill(p.value.begin(), p.value.end(), 0.0);
    const auto x = random_tensor(2, 4, 8, rng);
    const auto y = block.forward(x, Mode::Eval, 0, false);
    for (size_t i = 0; i < x.size(); ++i) CHECK(y.data[i] == std::max(0.0, x.data[i]));

    ModelParams<double> Q;
    BasicBlock<double> down(Q, "d", BlockSpec{4, 8, 2, 3, 0.1, 1e-5, 0.1});
    CHECK(down.has_projection());
    CHECK(down.forward(Tensor3<double>(1, 4, 960), Mode::Eval, 0, false).L == 480);
}

TEST_CASE("relu and dropout") {
    ReLU<double> relu;
    const auto x = from<double>(1, 1, 4, {-1, 0, 2, -3});
    CHECK(relu.forward(x, true).data == std::vector<double>{0, 0, 2, 0});
    CHECK(relu.backward(from<double>(1, 1, 4, {1, 1, 1, 1})).data == std::vector<double>{0, 0, 1, 0});

    Dropout<double> drop(0.1);
    const Tensor3<double> ones(1, 10, 1000, 1.0);
    double mean = 0;
    for (std::uint64_t s = 0; s < 10000; ++s) {
        const auto y = drop.forward(ones, Mode::Train, s, false);
        mean += std::accumulate(y.data.begin(), y.data.end(), 0.0) / static_cast<double>(y.size());
    }
    mean /= 10000.0;
    CHECK(std::abs(mean - 1.0) < 0.01);
    CHECK(drop.forward(ones, Mode::Eval, 3, false).data == ones.data);
    const auto a = drop.forward(ones, Mode::Train, 42, false), b = drop.forward(ones, Mode::Train, 42, false);
    CHECK(a.data == b.data);
    for (double v : a.data) CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.9)));
}

TEST_CASE("softmax cross-entropy") {
    const Logits<double> uniform{2, 3, {0, 0, 0, 1, 1, 1}};
    const std::vector<int> y{0, 2};
    CHECK(softmax_cross_entropy(uniform, y).loss == doctest::Approx(std::log(3.0)).epsilon(1e-14));
    const Logits<double> sure{1, 3, {50, 0, 0}};
    CHECK(softmax_cross_entropy(sure, std::vector<int>{0}).loss < 1e-20);

    std::mt19937_64 rng(17);
    std::normal_distribution<double> g;
    Logits<double> l{4, 3, std::vector<double>(12)};
    for (auto& v : l.values) v = g(rng);
    const std::vector<int> labels{0, 1, 2, 1};
    const auto lg = softmax_cross_entropy(l, labels);
    double num2 = 0, diff2 = 0;
    for (size_t i = 0; i < 12; ++i) {
        auto lp = l, lm = l;
        lp.values[i] += 1e-6;
        lm.values[i] -= 1e-6;
        const double num = (softmax_cross_entropy(lp, labels).loss - softmax_cross_entropy(lm, labels).loss) / 2e-6;
        num2 += num * num;
        diff2 += (num - lg.grad[i]) * (num - lg.grad[i]);
    }
    CHECK(std::sqrt(diff2 / num2) < 1e-6);
    for (const auto& row : softmax_rows(l)) CHECK(std::abs(row[0] + row[1] + row[2] - 1.0) < 1e-12);
    CHECK_THROWS_AS(softmax_cross_entropy(l, std::vector<int>{0, 1, 3, 0}), std::invalid_argument);
}

TEST_CASE("finite-difference gradients of the reduced network") {
    for (int cin : {4, 1}) {
        CAPTURE(cin);
        RhythmiNet<double> m(tiny_arch(cin), 7);
        std::mt19937_64 rng(3);
        std::normal_distribution<double> g;
        // move BN and biases off their neutral init so every path is exercised
        for (auto& p : m.params().all())
            if (p.learnable)
                for (auto& v : p.value) v += 0.1 * g(rng);
        const auto x = random_tensor(2, cin, 16, rng);
        CHECK(worst_gradient_error(m, x, {0, 2}, 1e-5) < 1e-4);
    }
}

TEST_CASE("backward edge cases") {
    RhythmiNet<double> m(tiny_arch(4), 1);
    std::mt19937_64 rng(19);
    const auto x = random_tensor(2, 4, 16, rng);
    CHECK_THROWS_AS(m.backward(std::vector<double>(6, 0.0)), std::logic_error);
    m.forward(x, Mode::Eval);
    CHECK_THROWS_AS(m.backward(std::vector<double>(6, 0.0)), std::logic_error);

    m.params().zero_grad();
    m.forward(x, Mode::Train, 3);
    m.backward(std::vector<double>(6, 0.0));
    for (const auto& p : m.params().all())
        for (double v : p.grad) CHECK(v == 0.0);

    // zero input channel whose stem weights are zero gets no gradient
    auto x0 = x;
    for (int b = 0; b < 2; ++b)
        for (int l = 0; l < 16; ++l) x0(b, 1, l) = 0.0;
    auto* w = m.params().find("stem.conv.weight");
    for (int o = 0; o < 4; ++o)
        for (int j = 0; j < 7; ++j) w->value[static_cast<size_t>((o * 4 + 1) * 7 + j)] = 0.0;
    m.forward(x0, Mode::Train, 3);
    const auto dx = m.backward(std::vector<double>{0.1, -0.2, 0.1, 0.3, 0.0, -0.3});
    for (int b = 0; b < 2; ++b)
        for (int l = 0; l < 16; ++l) CHECK(dx(b, 1, l) == 0.0);
}

TEST_CASE("network shape, parameter count, determinism") {
    RhythmiNet<float> fusion(ArchConfig{}, 1);
    ArchConfig ppg_arch;
    ppg_arch.in_channels = 1;
    RhythmiNet<float> ppg(ppg_arch, 1);
    CHECK(fusion.params().learnable_size() == 82211);
    CHECK(fusion.params().learnable_size() - ppg.params().learnable_size() == 32 * 3 * 7);
    CHECK(RhythmiNet<float>(ArchConfig{}, 9).params().learnable_size() == 82211);

    std::mt19937_64 rng(23);
    std::normal_distribution<float> g;
    Tensor3<float> x(3, 4, 960);
    for (auto& v : x.data) v = g(rng);
    const auto a = fusion.forward(x, Mode::Eval), b = fusion.forward(x, Mode::Eval);
    CHECK(a.batch == 3);
    CHECK(a.classes == 3);
    CHECK(a.values == b.values);

    Tensor3<float> perm(3, 4, 960);
    const int order[3] = {2, 0, 1};
    for (int i = 0; i < 3; ++i) std::copy_n(x.item(order[i]), x.item_size(), perm.item(i));
    const auto c = fusion.forward(perm, Mode::Eval);
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) CHECK(c(i, k) == doctest::Approx(a(order[i], k)).epsilon(1e-5));
    CHECK_THROWS_AS(fusion.forward(Tensor3<float>(1, 1, 960), Mode::Eval), std::invalid_argument);
}

TEST_CASE("adam and learning-rate schedule") {
    ModelParams<double> P;
    const int i = P.add("w", {2});
    P[i].value = {0.5, -2.0};
    P[i].grad = {1.0, 1.0};
    AdamState<double> s;
    adam_step(P, s, 1e-4, 0.0);
    CHECK(P[i].value[0] - 0.5 == doctest::Approx(-1e-4 / (1 + 1e-8)).epsilon(1e-9));
    CHECK(P[i].value[0] - 0.5 == doctest::Approx(-9.9999999e-5).epsilon(1e-7));

    ModelParams<double> Q;
    const int j = Q.add("w", {1});
    Q[j].value = {3.0};
    AdamState<double> s0, s1;
    adam_step(Q, s0, 1e-3, 0.0);
    CHECK(Q[j].value[0] == 3.0);
    adam_step(Q, s1, 1e-3, 0.1);
    CHECK(Q[j].value[0] < 3.0);

    TrainConfig cfg;
    CHECK(step_decay_lr(0, cfg) == doctest::Approx(1e-4));
    CHECK(step_decay_lr(19, cfg) == doctest::Approx(1e-4));
    CHECK(step_decay_lr(20, cfg) == doctest::Approx(1e-5));
    CHECK(step_decay_lr(59, cfg) == doctest::Approx(1e-6));
    CHECK_THROWS(step_decay_lr(-1, cfg));
}

TEST_CASE("training loop is reproducible and reshuffles") {
    LabeledInputs data;
    data.channels = 1;
    data.length = 64;
    std::mt19937_64 rng(29);
    std::normal_distribution<float> g;
    for (int i = 0; i < 20; ++i) {
        data.labels.push_back(i % 3);
        for (int t = 0; t < 64; ++t) data.samples.push_back(g(rng) + static_cast<float>(i % 3));
    }
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    ArchConfig arch = tiny_arch(1);
    const auto a = train(data, cfg, arch, 5), b = train(data, cfg, arch, 5);
    REQUIRE(a.log.size() == 3);
    for (size_t e = 0; e < 3; ++e) {
        CHECK(a.log[e].loss == b.log[e].loss);
        CHECK(a.log[e].order_digest == b.log[e].order_digest);
    }
    CHECK(a.log[0].order_digest != a.log[1].order_digest);
    CHECK(train(data, cfg, arch, 6).log[0].order_digest != a.log[0].order_digest);

    LabeledInputs empty;
    empty.channels = 1;
    empty.length = 64;
    CHECK_THROWS_AS(train(empty, cfg, arch, 1), std::invalid_argument);
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(data, cfg, arch, 1), std::invalid_argument);
}
