#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "rhythm/nn/layers.hpp"
#include "rhythm/types.hpp"

namespace rhythm::nn {

/// Network geometry. The defaults are the full-size model; the gradient
/// tests shrink the widths.
struct ArchConfig {
    int in_channels = 4;  // 4 = PPG + ACC fusion, 1 = PPG only
    int stem_width = 32;
    int stage1_width = 32;
    int stage2_width = 64;  // also the attention width
    int stem_kernel = 7;
    int stem_stride = 2;
    int block_kernel = 3;
    int num_classes = kNumClasses;
    double dropout_p = 0.1;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;
    /// Multiplies the He standard deviation of the conv weights.
    double conv_init_scale = 0.03;

    void validate() const;
    bool operator==(const ArchConfig&) const = default;
};

/// Output of a forward pass: row-major B x num_classes logits.
template <typename T>
struct Logits {
    int batch = 0;
    int classes = 0;
    std::vector<T> values;

    T operator()(int b, int c) const { return values[static_cast<size_t>(b) * classes + c]; }
};

/// stem (conv k7 s2 -> BN -> relu) -> two SE blocks -> SE block (stride 2,
/// projection) -> SE block -> temporal attention -> mean over time -> linear.
template <typename T>
class RhythmiNet {
public:
    RhythmiNet(const ArchConfig& arch, std::uint64_t init_seed);
    RhythmiNet(RhythmiNet&&) noexcept = default;
    RhythmiNet& operator=(RhythmiNet&&) noexcept = default;
    RhythmiNet(const RhythmiNet&) = delete;
    RhythmiNet& operator=(const RhythmiNet&) = delete;

    /// In Train mode batch statistics are used, dropout is active (mask drawn
    /// from `dropout_seed`) and activations are cached for backward().
    Logits<T> forward(const Tensor3<T>& x, Mode mode, std::uint64_t dropout_seed = 0);

    /// Accumulates parameter gradients for dL/dlogits and returns dL/dx.
    /// Throws std::logic_error unless the last forward ran in Train mode.
    Tensor3<T> backward(const std::vector<T>& dlogits);

    ModelParams<T>& params() { return *params_; }
    const ModelParams<T>& params() const { return *params_; }
    const ArchConfig& arch() const { return arch_; }
    const TemporalAttention<T>& attention() const { return attention_; }

private:
    ArchConfig arch_;
    std::unique_ptr<ModelParams<T>> params_;
    Conv1d<T> stem_conv_;
    BatchNorm1d<T> stem_bn_;
    ReLU<T> stem_relu_;
    std::vector<BasicBlock<T>> blocks_;
    TemporalAttention<T> attention_;
    int fc_w_ = -1, fc_b_ = -1;

    bool cached_ = false;
    int cached_length_ = 0;
    std::vector<T> pooled_;
};

/// Mean cross-entropy and its gradient (softmax - onehot) / B.
template <typename T>
struct LossAndGrad {
    double loss = 0;
    std::vector<T> grad;
};

template <typename T>
LossAndGrad<T> softmax_cross_entropy(const Logits<T>& logits, std::span<const int> labels);

template <typename T>
std::vector<std::array<double, kNumClasses>> softmax_rows(const Logits<T>& logits);

}  // namespace rhythm::nn
