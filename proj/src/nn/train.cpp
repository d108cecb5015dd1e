#include "rhythm/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace rhythm::nn {

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (!(lr0 > 0)) throw std::invalid_argument("TrainConfig: lr0 must be positive");
    if (!(weight_decay >= 0)) throw std::invalid_argument("TrainConfig: weight_decay must be nonnegative");
    if (lr_step < 1) throw std::invalid_argument("TrainConfig: lr_step must be >= 1");
    if (!(lr_factor > 0)) throw std::invalid_argument("TrainConfig: lr_factor must be positive");
    if (!(dropout_p >= 0 && dropout_p < 1)) throw std::invalid_argument("TrainConfig: dropout_p must be in [0, 1)");
    if (!(bn_eps > 0)) throw std::invalid_argument("TrainConfig: bn_eps must be positive");
    if (!(bn_momentum > 0 && bn_momentum <= 1)) throw std::invalid_argument("TrainConfig: bn_momentum must be in (0, 1]");
    if (seeds.empty()) throw std::invalid_argument("TrainConfig: need at least one seed");
}

double step_decay_lr(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw std::invalid_argument("step_decay_lr: epoch must be >= 0");
    return cfg.lr0 * std::pow(cfg.lr_factor, epoch / cfg.lr_step);
}

template <typename T>
void adam_step(ModelParams<T>& params, AdamState<T>& s, double lr, double weight_decay) {
    auto& all = params.all();
    if (s.m.empty()) {
        s.m.resize(all.size());
        s.v.resize(all.size());
        for (size_t i = 0; i < all.size(); ++i)
            if (all[i].learnable) {
                s.m[i].assign(all[i].numel(), T(0));
                s.v[i].assign(all[i].numel(), T(0));
            }
    }
    if (s.m.size() != all.size()) throw std::invalid_argument("adam_step: optimizer state does not match parameters");
    ++s.step;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    const T b1 = static_cast<T>(s.beta1), b2 = static_cast<T>(s.beta2);
    const T wd = static_cast<T>(weight_decay);
    for (size_t i = 0; i < all.size(); ++i) {
        auto& p = all[i];
        if (!p.learnable) continue;
        auto& m = s.m[i];
        auto& v = s.v[i];
        for (size_t j = 0; j < p.numel(); ++j) {
            const T g = p.grad[j] + wd * p.value[j];
            m[j] = b1 * m[j] + (T(1) - b1) * g;
            v[j] = b2 * v[j] + (T(1) - b2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.value[j] = static_cast<T>(p.value[j] - lr * mhat / (std::sqrt(vhat) + s.eps));
        }
    }
}

Tensor3<float> LabeledInputs::batch(std::span<const size_t> indices) const {
    Tensor3<float> x(static_cast<int>(indices.size()), channels, length);
    const size_t item = static_cast<size_t>(channels) * length;
    for (size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= size()) throw std::out_of_range("LabeledInputs::batch: index out of range");
        std::copy_n(samples.data() + indices[i] * item, item, x.item(static_cast<int>(i)));
    }
    return x;
}

TrainResult train(const LabeledInputs& data, const TrainConfig& cfg, const ArchConfig& arch, std::uint64_t seed,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (data.channels != arch.in_channels) throw std::invalid_argument("train: input channels do not match the architecture");

    std::mt19937_64 rng(seed);
    TrainResult result{RhythmiNet<float>(arch, rng()), {}};
    auto& model = result.model;
    AdamState<float> adam;
    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = step_decay_lr(epoch, cfg);
        std::shuffle(order.begin(), order.end(), rng);
        std::uint64_t digest = 1469598103934665603ULL;
        for (size_t i : order) digest = (digest ^ i) * 1099511628211ULL;

        double loss_sum = 0;
        size_t correct = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            const std::span<const size_t> idx(order.data() + start, end - start);
            std::vector<int> labels(idx.size());
            for (size_t i = 0; i < idx.size(); ++i) labels[i] = data.labels[idx[i]];

            model.params().zero_grad();
            const auto logits = model.forward(data.batch(idx), Mode::Train, rng());
            const auto lg = softmax_cross_entropy(logits, labels);
            model.backward(lg.grad);
            adam_step(model.params(), adam, lr, cfg.weight_decay);

            loss_sum += lg.loss * static_cast<double>(idx.size());
            for (int b = 0; b < logits.batch; ++b) {
                int best = 0;
                for (int k = 1; k < logits.classes; ++k)
                    if (logits(b, k) > logits(b, best)) best = k;
                if (best == labels[static_cast<size_t>(b)]) ++correct;
            }
        }
        EpochLog entry{epoch, lr, loss_sum / static_cast<double>(order.size()),
                       static_cast<double>(correct) / static_cast<double>(order.size()), digest};
        result.log.push_back(entry);
        if (on_epoch) on_epoch(entry);
    }
    return result;
}

std::vector<std::array<double, kNumClasses>> predict(RhythmiNet<float>& model, const LabeledInputs& data, int batch_size) {
    if (batch_size < 1) throw std::invalid_argument("predict: batch size must be >= 1");
    std::vector<std::array<double, kNumClasses>> out;
    out.reserve(data.size());
    std::vector<size_t> idx;
    for (size_t start = 0; start < data.size(); start += static_cast<size_t>(batch_size)) {
        idx.clear();
        for (size_t i = start; i < std::min(data.size(), start + static_cast<size_t>(batch_size)); ++i) idx.push_back(i);
        const auto probs = softmax_rows(model.forward(data.batch(idx), Mode::Eval));
        out.insert(out.end(), probs.begin(), probs.end());
    }
    return out;
}

template void adam_step(ModelParams<float>&, AdamState<float>&, double, double);
template void adam_step(ModelParams<double>&, AdamState<double>&, double, double);

}  // namespace rhythm::nn
