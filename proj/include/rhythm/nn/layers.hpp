#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rhythm/nn/tensor.hpp"

namespace rhythm::nn {

enum class Mode { Train, Eval };

inline int conv_output_length(int length, int kernel, int stride, int padding) {
    return (length + 2 * padding - kernel) / stride + 1;
}

/// Cross-correlation without bias (every conv in the network feeds a batch norm).
/// Weight layout [out][in][k].
template <typename T>
class Conv1d {
public:
    Conv1d() = default;
    Conv1d(ModelParams<T>& params, const std::string& name, int in_channels, int out_channels, int kernel, int stride,
           int padding);

    Tensor3<T> forward(const Tensor3<T>& x, bool cache);
    Tensor3<T> backward(const Tensor3<T>& dy);

    int weight_index() const { return w_; }
    int in_channels() const { return cin_; }
    int out_channels() const { return cout_; }

private:
    // Column matrices hold every batch item side by side: row (c, j), column b * out_length + t.
    void im2col(const T* x, int length, int out_length, size_t ld, T* col) const;
    void col2im(const T* col, int length, int out_length, size_t ld, T* dx) const;

    ModelParams<T>* params_ = nullptr;
    int w_ = -1;
    int cin_ = 0, cout_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
    bool cached_ = false;
    int in_batch_ = 0, in_length_ = 0;
    MatrixRM<T> col_, work_;
};

/// Per-channel normalization over batch x length.
template <typename T>
class BatchNorm1d {
public:
    BatchNorm1d() = default;
    BatchNorm1d(ModelParams<T>& params, const std::string& name, int channels, double eps, double momentum);

    Tensor3<T> forward(Tensor3<T> x, Mode mode, bool cache);
    Tensor3<T> backward(Tensor3<T> dy);

    int gamma_index() const { return gamma_; }
    int beta_index() const { return beta_; }
    int running_mean_index() const { return mean_; }
    int running_var_index() const { return var_; }

private:
    ModelParams<T>* params_ = nullptr;
    int gamma_ = -1, beta_ = -1, mean_ = -1, var_ = -1;
    int channels_ = 0;
    double eps_ = 1e-5, momentum_ = 0.1;
    std::optional<Tensor3<T>> xhat_;
    std::vector<T> inv_std_;
};

template <typename T>
class ReLU {
public:
    Tensor3<T> forward(Tensor3<T> x, bool cache);
    Tensor3<T> backward(Tensor3<T> dy);

private:
    std::vector<std::uint8_t> active_;
    bool cached_ = false;
};

/// Inverted dropout; the mask is drawn from `seed` so a forward pass can be replayed.
template <typename T>
class Dropout {
public:
    Dropout() = default;
    explicit Dropout(double p) : p_(p) {}

    Tensor3<T> forward(Tensor3<T> x, Mode mode, std::uint64_t seed, bool cache);
    Tensor3<T> backward(Tensor3<T> dy);

private:
    double p_ = 0.0;
    std::vector<std::uint8_t> keep_;
    bool active_ = false;
};

/// Squeeze-and-excitation with reduction ratio 2.
template <typename T>
class SqueezeExcite {
public:
    SqueezeExcite() = default;
    SqueezeExcite(ModelParams<T>& params, const std::string& name, int channels);

    Tensor3<T> forward(Tensor3<T> x, bool cache);
    Tensor3<T> backward(Tensor3<T> dy);

    /// Channel scales of the last cached forward, B x C.
    const std::vector<T>& scales() const { return scale_; }

private:
    ModelParams<T>* params_ = nullptr;
    int w1_ = -1, b1_ = -1, w2_ = -1, b2_ = -1;
    int channels_ = 0, hidden_ = 0;
    std::optional<Tensor3<T>> input_;
    std::vector<T> squeeze_, hidden_pre_, scale_;
};

/// Single-head scaled dot-product self-attention over time with a residual:
/// y = x + V softmax(Q^T K / sqrt(C))^T, Q/K/V per-timestep linear maps.
template <typename T>
class TemporalAttention {
public:
    TemporalAttention() = default;
    TemporalAttention(ModelParams<T>& params, const std::string& name, int channels);

    Tensor3<T> forward(Tensor3<T> x, bool cache);
    Tensor3<T> backward(Tensor3<T> dy);

    /// Attention matrix (L x L, rows sum to 1) for batch item b of the last cached forward.
    MatrixRM<T> attention(int b) const;

private:
    ModelParams<T>* params_ = nullptr;
    int wq_ = -1, wk_ = -1, wv_ = -1;
    int channels_ = 0;
    std::optional<Tensor3<T>> input_;
    std::vector<T> q_, k_, v_, a_;
};

struct BlockSpec {
    int in_channels = 0;
    int out_channels = 0;
    int stride = 1;
    int kernel = 3;
    double dropout_p = 0.1;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;
};

/// relu( SE(BN2(conv2(dropout(relu(BN1(conv1 x)))))) + skip(x) ), where skip is
/// the identity or a 1x1 strided conv + BN when the shape changes.
template <typename T>
class BasicBlock {
public:
    BasicBlock() = default;
    BasicBlock(ModelParams<T>& params, const std::string& name, const BlockSpec& spec);

    Tensor3<T> forward(const Tensor3<T>& x, Mode mode, std::uint64_t dropout_seed, bool cache);
    Tensor3<T> backward(const Tensor3<T>& dy);

    bool has_projection() const { return has_proj_; }

private:
    Conv1d<T> conv1_, conv2_, proj_;
    BatchNorm1d<T> bn1_, bn2_, proj_bn_;
    ReLU<T> relu1_, relu_out_;
    Dropout<T> dropout_;
    SqueezeExcite<T> se_;
    bool has_proj_ = false;
};

}  // namespace rhythm::nn
