#include "rhythm/nn/rhythminet.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace rhythm::nn {

void ArchConfig::validate() const {
    if (in_channels != 1 && in_channels != 4) throw std::invalid_argument("ArchConfig: in_channels must be 1 or 4");
    if (stem_width < 2 || stage1_width < 2 || stage2_width < 2 || stem_width % 2 || stage1_width % 2 || stage2_width % 2)
        throw std::invalid_argument("ArchConfig: widths must be even and >= 2");
    if (stem_kernel < 1 || stem_stride < 1 || block_kernel < 1 || block_kernel % 2 == 0)
        throw std::invalid_argument("ArchConfig: invalid kernel/stride");
    if (num_classes < 2) throw std::invalid_argument("ArchConfig: need at least 2 classes");
    if (!(dropout_p >= 0 && dropout_p < 1)) throw std::invalid_argument("ArchConfig: dropout must be in [0, 1)");
    if (!(bn_eps > 0 && bn_momentum > 0 && bn_momentum <= 1)) throw std::invalid_argument("ArchConfig: invalid batch-norm constants");
    if (!(conv_init_scale > 0)) throw std::invalid_argument("ArchConfig: conv_init_scale must be positive");
}

template <typename T>
RhythmiNet<T>::RhythmiNet(const ArchConfig& arch, std::uint64_t init_seed)
    : arch_(arch), params_(std::make_unique<ModelParams<T>>()) {
    arch.validate();
    auto& P = *params_;
    stem_conv_ = Conv1d<T>(P, "stem.conv", arch.in_channels, arch.stem_width, arch.stem_kernel, arch.stem_stride,
                           arch.stem_kernel / 2);
    stem_bn_ = BatchNorm1d<T>(P, "stem.bn", arch.stem_width, arch.bn_eps, arch.bn_momentum);

    auto spec = [&](int cin, int cout, int stride) {
        return BlockSpec{cin, cout, stride, arch.block_kernel, arch.dropout_p, arch.bn_eps, arch.bn_momentum};
    };
    blocks_.emplace_back(P, "stage1.0", spec(arch.stem_width, arch.stage1_width, 1));
    blocks_.emplace_back(P, "stage1.1", spec(arch.stage1_width, arch.stage1_width, 1));
    blocks_.emplace_back(P, "stage2.0", spec(arch.stage1_width, arch.stage2_width, 2));
    blocks_.emplace_back(P, "stage2.1", spec(arch.stage2_width, arch.stage2_width, 1));
    attention_ = TemporalAttention<T>(P, "attention", arch.stage2_width);
    fc_w_ = P.add("head.fc.weight", {arch.num_classes, arch.stage2_width});
    fc_b_ = P.add("head.fc.bias", {arch.num_classes});

    // He (fan-in) normal init for every weight matrix; BN starts at identity.
    // Every conv feeds a batch norm, so its scale only sets how far each Adam
    // step turns the filters; conv_init_scale shrinks it.
    std::mt19937_64 rng(init_seed);
    for (auto& p : P.all()) {
        if (!p.learnable || p.shape.size() < 2) continue;
        size_t fan_in = 1;
        for (size_t d = 1; d < p.shape.size(); ++d) fan_in *= static_cast<size_t>(p.shape[d]);
        const double gain = p.shape.size() == 3 ? arch.conv_init_scale : 1.0;
        std::normal_distribution<double> g(0.0, gain * std::sqrt(2.0 / static_cast<double>(fan_in)));
        for (auto& v : p.value) v = static_cast<T>(g(rng));
    }
}

template <typename T>
Logits<T> RhythmiNet<T>::forward(const Tensor3<T>& x, Mode mode, std::uint64_t dropout_seed) {
    if (x.C != arch_.in_channels)
        throw std::invalid_argument("RhythmiNet: expected " + std::to_string(arch_.in_channels) + " input channels, got " +
                                    std::to_string(x.C));
    const bool cache = mode == Mode::Train;
    cached_ = false;
    auto h = stem_relu_.forward(stem_bn_.forward(stem_conv_.forward(x, cache), mode, cache), cache);
    SplitMix64 seeds(dropout_seed);
    for (auto& block : blocks_) h = block.forward(h, mode, seeds.next(), cache);
    h = attention_.forward(std::move(h), cache);

    const int B = h.B, C = h.C, K = arch_.num_classes;
    std::vector<T> pooled(static_cast<size_t>(B) * C);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const T* src = h.item(b) + static_cast<size_t>(c) * h.L;
            T acc = 0;
            for (int l = 0; l < h.L; ++l) acc += src[l];
            pooled[static_cast<size_t>(b) * C + c] = acc / static_cast<T>(h.L);
        }

    const auto& w = (*params_)[fc_w_].value;
    const auto& bias = (*params_)[fc_b_].value;
    Logits<T> out{B, K, std::vector<T>(static_cast<size_t>(B) * K)};
    for (int b = 0; b < B; ++b)
        for (int k = 0; k < K; ++k) {
            T acc = bias[k];
            for (int c = 0; c < C; ++c) acc += w[static_cast<size_t>(k) * C + c] * pooled[static_cast<size_t>(b) * C + c];
            out.values[static_cast<size_t>(b) * K + k] = acc;
        }
    if (cache) {
        cached_ = true;
        cached_length_ = h.L;
        pooled_ = std::move(pooled);
    }
    return out;
}

template <typename T>
Tensor3<T> RhythmiNet<T>::backward(const std::vector<T>& dlogits) {
    if (!cached_) throw std::logic_error("RhythmiNet: backward requires a preceding Train-mode forward");
    const int K = arch_.num_classes, C = arch_.stage2_width;
    const int B = static_cast<int>(pooled_.size()) / C;
    if (dlogits.size() != static_cast<size_t>(B) * K) throw std::invalid_argument("RhythmiNet: gradient shape mismatch");

    auto& pw = (*params_)[fc_w_];
    auto& pb = (*params_)[fc_b_];
    Tensor3<T> dh(B, C, cached_length_);
    const T inv_len = T(1) / static_cast<T>(cached_length_);
    for (int b = 0; b < B; ++b) {
        for (int k = 0; k < K; ++k) {
            const T g = dlogits[static_cast<size_t>(b) * K + k];
            pb.grad[k] += g;
            for (int c = 0; c < C; ++c) pw.grad[static_cast<size_t>(k) * C + c] += g * pooled_[static_cast<size_t>(b) * C + c];
        }
        for (int c = 0; c < C; ++c) {
            T g = 0;
            for (int k = 0; k < K; ++k) g += pw.value[static_cast<size_t>(k) * C + c] * dlogits[static_cast<size_t>(b) * K + k];
            g *= inv_len;
            T* dst = dh.item(b) + static_cast<size_t>(c) * cached_length_;
            std::fill(dst, dst + cached_length_, g);
        }
    }
    auto d = attention_.backward(std::move(dh));
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) d = it->backward(d);
    return stem_conv_.backward(stem_bn_.backward(stem_relu_.backward(std::move(d))));
}

template <typename T>
LossAndGrad<T> softmax_cross_entropy(const Logits<T>& logits, std::span<const int> labels) {
    if (labels.size() != static_cast<size_t>(logits.batch)) throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
    LossAndGrad<T> out;
    out.grad.resize(logits.values.size());
    const int K = logits.classes;
    const double inv_b = 1.0 / logits.batch;
    for (int b = 0; b < logits.batch; ++b) {
        const int y = labels[static_cast<size_t>(b)];
        if (y < 0 || y >= K) throw std::invalid_argument("softmax_cross_entropy: label out of range");
        double mx = logits(b, 0);
        for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(logits(b, k)));
        double sum = 0;
        for (int k = 0; k < K; ++k) sum += std::exp(static_cast<double>(logits(b, k)) - mx);
        const double log_z = mx + std::log(sum);
        // log1p form keeps precision when the true class dominates
        double rest = 0;
        for (int k = 0; k < K; ++k)
            if (k != y) rest += std::exp(static_cast<double>(logits(b, k)) - logits(b, y));
        out.loss += std::log1p(rest) * inv_b;
        for (int k = 0; k < K; ++k) {
            const double p = std::exp(static_cast<double>(logits(b, k)) - log_z);
            out.grad[static_cast<size_t>(b) * K + k] = static_cast<T>((p - (k == y ? 1.0 : 0.0)) * inv_b);
        }
    }
    return out;
}

template <typename T>
std::vector<std::array<double, kNumClasses>> softmax_rows(const Logits<T>& logits) {
    if (logits.classes != kNumClasses) throw std::invalid_argument("softmax_rows: expected 3 classes");
    std::vector<std::array<double, kNumClasses>> out(static_cast<size_t>(logits.batch));
    for (int b = 0; b < logits.batch; ++b) {
        double mx = logits(b, 0);
        for (int k = 1; k < kNumClasses; ++k) mx = std::max(mx, static_cast<double>(logits(b, k)));
        double sum = 0;
        auto& row = out[static_cast<size_t>(b)];
        for (int k = 0; k < kNumClasses; ++k) sum += row[k] = std::exp(static_cast<double>(logits(b, k)) - mx);
        for (auto& v : row) v /= sum;
    }
    return out;
}

template class RhythmiNet<float>;
template class RhythmiNet<double>;
template LossAndGrad<float> softmax_cross_entropy(const Logits<float>&, std::span<const int>);
template LossAndGrad<double> softmax_cross_entropy(const Logits<double>&, std::span<const int>);
template std::vector<std::array<double, kNumClasses>> softmax_rows(const Logits<float>&);
template std::vector<std::array<double, kNumClasses>> softmax_rows(const Logits<double>&);

}  // namespace rhythm::nn
