#include "rhythm/nn/layers.hpp"

#include <algorithm>
#include <cmath>

namespace rhythm::nn {

namespace {

template <typename T>
void add_into(Tensor3<T>& a, const Tensor3<T>& b) {
    if (!a.same_shape(b)) throw std::logic_error("add_into: shape mismatch");
    for (size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

[[noreturn]] void no_cache(const char* layer) {
    throw std::logic_error(std::string(layer) + ": backward called without a cached training forward");
}

}  // namespace

// ---------------------------------------------------------------- Conv1d

template <typename T>
Conv1d<T>::Conv1d(ModelParams<T>& params, const std::string& name, int in_channels, int out_channels, int kernel,
                  int stride, int padding)
    : params_(&params), cin_(in_channels), cout_(out_channels), k_(kernel), stride_(stride), pad_(padding) {
    if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1 || padding < 0)
        throw std::invalid_argument("Conv1d " + name + ": invalid geometry");
    w_ = params.add(name + ".weight", {out_channels, in_channels, kernel});
}

namespace {

// Output positions t with 0 <= t * stride + offset < length.
std::pair<int, int> valid_range(int out_length, int length, int stride, int offset) {
    const int lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
    const int hi = length - offset <= 0 ? 0 : std::min(out_length, (length - offset + stride - 1) / stride);
    return {std::min(lo, hi), hi};
}

}  // namespace

template <typename T>
void Conv1d<T>::im2col(const T* x, int length, int out_length, size_t ld, T* col) const {
    for (int c = 0; c < cin_; ++c)
        for (int j = 0; j < k_; ++j) {
            T* row = col + static_cast<size_t>(c * k_ + j) * ld;
            const int off = j - pad_;
            const T* src = x + static_cast<size_t>(c) * length + off;
            const auto [lo, hi] = valid_range(out_length, length, stride_, off);
            std::fill(row, row + lo, T(0));
            if (stride_ == 1) {
                std::copy(src + lo, src + hi, row + lo);
            } else {
                for (int t = lo; t < hi; ++t) row[t] = src[t * stride_];
            }
            std::fill(row + hi, row + out_length, T(0));
        }
}

template <typename T>
void Conv1d<T>::col2im(const T* col, int length, int out_length, size_t ld, T* dx) const {
    for (int c = 0; c < cin_; ++c)
        for (int j = 0; j < k_; ++j) {
            const T* row = col + static_cast<size_t>(c * k_ + j) * ld;
            const int off = j - pad_;
            T* dst = dx + static_cast<size_t>(c) * length + off;
            const auto [lo, hi] = valid_range(out_length, length, stride_, off);
            for (int t = lo; t < hi; ++t) dst[t * stride_] += row[t];
        }
}

template <typename T>
Tensor3<T> Conv1d<T>::forward(const Tensor3<T>& x, bool cache) {
    if (x.C != cin_)
        throw std::invalid_argument("Conv1d: expected " + std::to_string(cin_) + " input channels, got " + std::to_string(x.C));
    const int lout = conv_output_length(x.L, k_, stride_, pad_);
    if (lout < 1) throw std::invalid_argument("Conv1d: kernel does not fit the padded input");
    const size_t ld = static_cast<size_t>(x.B) * lout;
    col_.resize(cin_ * k_, static_cast<Eigen::Index>(ld));
    for (int b = 0; b < x.B; ++b) im2col(x.item(b), x.L, lout, ld, col_.data() + static_cast<size_t>(b) * lout);
    const ConstMapRM<T> w((*params_)[w_].value.data(), cout_, cin_ * k_);
    work_.noalias() = w * col_;
    Tensor3<T> y(x.B, cout_, lout);
    for (int b = 0; b < x.B; ++b)
        for (int o = 0; o < cout_; ++o)
            std::copy_n(work_.data() + o * ld + static_cast<size_t>(b) * lout, lout, y.item(b) + static_cast<size_t>(o) * lout);
    cached_ = cache;
    in_batch_ = x.B;
    in_length_ = x.L;
    return y;
}

template <typename T>
Tensor3<T> Conv1d<T>::backward(const Tensor3<T>& dy) {
    if (!cached_) no_cache("Conv1d");
    const int B = in_batch_, lout = dy.L;
    const size_t ld = static_cast<size_t>(B) * lout;
    if (dy.B != B || dy.C != cout_ || static_cast<Eigen::Index>(ld) != col_.cols())
        throw std::invalid_argument("Conv1d: gradient shape mismatch");
    work_.resize(cout_, static_cast<Eigen::Index>(ld));
    for (int b = 0; b < B; ++b)
        for (int o = 0; o < cout_; ++o)
            std::copy_n(dy.item(b) + static_cast<size_t>(o) * lout, lout, work_.data() + o * ld + static_cast<size_t>(b) * lout);
    auto& p = (*params_)[w_];
    const ConstMapRM<T> w(p.value.data(), cout_, cin_ * k_);
    MapRM<T>(p.grad.data(), cout_, cin_ * k_).noalias() += work_ * col_.transpose();
    col_.noalias() = w.transpose() * work_;  // the cached columns are not needed past this point
    cached_ = false;
    Tensor3<T> dx(B, cin_, in_length_);
    for (int b = 0; b < B; ++b) col2im(col_.data() + static_cast<size_t>(b) * lout, in_length_, lout, ld, dx.item(b));
    return dx;
}

// ---------------------------------------------------------------- BatchNorm1d

template <typename T>
BatchNorm1d<T>::BatchNorm1d(ModelParams<T>& params, const std::string& name, int channels, double eps, double momentum)
    : params_(&params), channels_(channels), eps_(eps), momentum_(momentum) {
    gamma_ = params.add(name + ".weight", {channels});
    beta_ = params.add(name + ".bias", {channels});
    mean_ = params.add(name + ".running_mean", {channels}, false);
    var_ = params.add(name + ".running_var", {channels}, false);
    std::fill(params[gamma_].value.begin(), params[gamma_].value.end(), T(1));
    std::fill(params[var_].value.begin(), params[var_].value.end(), T(1));
}

template <typename T>
Tensor3<T> BatchNorm1d<T>::forward(Tensor3<T> x, Mode mode, bool cache) {
    if (x.C != channels_) throw std::invalid_argument("BatchNorm1d: channel mismatch");
    auto& P = *params_;
    const auto& gamma = P[gamma_].value;
    const auto& beta = P[beta_].value;
    auto& rmean = P[mean_].value;
    auto& rvar = P[var_].value;

    if (mode == Mode::Eval) {
        for (int c = 0; c < x.C; ++c) {
            const T inv = T(1) / std::sqrt(rvar[c] + static_cast<T>(eps_));
            const T scale = gamma[c] * inv;
            const T shift = beta[c] - rmean[c] * scale;
            for (int b = 0; b < x.B; ++b) {
                T* v = x.item(b) + static_cast<size_t>(c) * x.L;
                for (int l = 0; l < x.L; ++l) v[l] = v[l] * scale + shift;
            }
        }
        xhat_.reset();
        return x;
    }

    const size_t m = static_cast<size_t>(x.B) * x.L;
    if (m < 2) throw std::invalid_argument("BatchNorm1d: training mode needs at least 2 values per channel");
    if (cache) {
        xhat_.emplace(x.B, x.C, x.L);
        inv_std_.assign(static_cast<size_t>(x.C), T(0));
    } else {
        xhat_.reset();
    }
    for (int c = 0; c < x.C; ++c) {
        // single pass, shifted by the first value to keep the variance well conditioned
        const double shift = x.item(0)[static_cast<size_t>(c) * x.L];
        double sum = 0, ss = 0;
        for (int b = 0; b < x.B; ++b) {
            const T* src = x.item(b) + static_cast<size_t>(c) * x.L;
            for (int l = 0; l < x.L; ++l) {
                const double d = src[l] - shift;
                sum += d;
                ss += d * d;
            }
        }
        const double dmean = sum / static_cast<double>(m);
        const double mean = shift + dmean;
        const double var = std::max(0.0, ss / static_cast<double>(m) - dmean * dmean);
        const T inv = static_cast<T>(1.0 / std::sqrt(var + eps_));
        const T mu = static_cast<T>(mean);
        for (int b = 0; b < x.B; ++b) {
            T* v = x.item(b) + static_cast<size_t>(c) * x.L;
            T* xh = cache ? xhat_->item(b) + static_cast<size_t>(c) * x.L : nullptr;
            for (int l = 0; l < x.L; ++l) {
                const T n = (v[l] - mu) * inv;
                if (xh) xh[l] = n;
                v[l] = gamma[c] * n + beta[c];
            }
        }
        if (cache) inv_std_[static_cast<size_t>(c)] = inv;
        // Running variance uses the unbiased estimate.
        const double unbiased = var * static_cast<double>(m) / static_cast<double>(m - 1);
        rmean[c] = static_cast<T>((1.0 - momentum_) * rmean[c] + momentum_ * mean);
        rvar[c] = static_cast<T>((1.0 - momentum_) * rvar[c] + momentum_ * unbiased);
    }
    return x;
}

template <typename T>
Tensor3<T> BatchNorm1d<T>::backward(Tensor3<T> dy) {
    if (!xhat_) no_cache("BatchNorm1d");
    auto& P = *params_;
    const auto& gamma = P[gamma_].value;
    auto& dgamma = P[gamma_].grad;
    auto& dbeta = P[beta_].grad;
    const auto& xh = *xhat_;
    if (!xh.same_shape(dy)) throw std::invalid_argument("BatchNorm1d: gradient shape mismatch");
    const double m = static_cast<double>(dy.B) * dy.L;
    for (int c = 0; c < dy.C; ++c) {
        double sdy = 0, sdyx = 0;
        for (int b = 0; b < dy.B; ++b) {
            const T* g = dy.item(b) + static_cast<size_t>(c) * dy.L;
            const T* n = xh.item(b) + static_cast<size_t>(c) * dy.L;
            T a = 0, ax = 0;
            for (int l = 0; l < dy.L; ++l) {
                a += g[l];
                ax += g[l] * n[l];
            }
            sdy += a;
            sdyx += ax;
        }
        dgamma[c] += static_cast<T>(sdyx);
        dbeta[c] += static_cast<T>(sdy);
        const T k = static_cast<T>(gamma[c] * inv_std_[static_cast<size_t>(c)] / m);
        const T a = static_cast<T>(sdy), bcoef = static_cast<T>(sdyx), mm = static_cast<T>(m);
        for (int b = 0; b < dy.B; ++b) {
            T* g = dy.item(b) + static_cast<size_t>(c) * dy.L;
            const T* n = xh.item(b) + static_cast<size_t>(c) * dy.L;
            for (int l = 0; l < dy.L; ++l) g[l] = k * (mm * g[l] - a - n[l] * bcoef);
        }
    }
    return dy;
}

// ---------------------------------------------------------------- ReLU

template <typename T>
Tensor3<T> ReLU<T>::forward(Tensor3<T> x, bool cache) {
    if (cache) {
        active_.resize(x.size());
        for (size_t i = 0; i < x.size(); ++i) active_[i] = x.data[i] > T(0);
    }
    for (auto& v : x.data) v = v > T(0) ? v : T(0);
    cached_ = cache;
    return x;
}

template <typename T>
Tensor3<T> ReLU<T>::backward(Tensor3<T> dy) {
    if (!cached_ || active_.size() != dy.size()) no_cache("ReLU");
    for (size_t i = 0; i < dy.size(); ++i) dy.data[i] = active_[i] ? dy.data[i] : T(0);
    return dy;
}

// ---------------------------------------------------------------- Dropout

template <typename T>
Tensor3<T> Dropout<T>::forward(Tensor3<T> x, Mode mode, std::uint64_t seed, bool cache) {
    active_ = mode == Mode::Train && p_ > 0.0;
    keep_.clear();
    if (!active_) return x;
    SplitMix64 rng(seed);
    const T scale = static_cast<T>(1.0 / (1.0 - p_));
    keep_.resize(x.size());
    for (auto& k : keep_) k = !(rng.uniform() < p_);
    for (size_t i = 0; i < x.size(); ++i) x.data[i] = keep_[i] ? x.data[i] * scale : T(0);
    if (!cache) keep_.clear();
    return x;
}

template <typename T>
Tensor3<T> Dropout<T>::backward(Tensor3<T> dy) {
    if (!active_) return dy;
    if (keep_.size() != dy.size()) no_cache("Dropout");
    const T scale = static_cast<T>(1.0 / (1.0 - p_));
    for (size_t i = 0; i < dy.size(); ++i) dy.data[i] = keep_[i] ? dy.data[i] * scale : T(0);
    return dy;
}

// ---------------------------------------------------------------- SqueezeExcite

template <typename T>
SqueezeExcite<T>::SqueezeExcite(ModelParams<T>& params, const std::string& name, int channels)
    : params_(&params), channels_(channels), hidden_(channels / 2) {
    if (channels < 2 || channels % 2 != 0) throw std::invalid_argument("SqueezeExcite: channel count must be even");
    w1_ = params.add(name + ".fc1.weight", {hidden_, channels});
    b1_ = params.add(name + ".fc1.bias", {hidden_});
    w2_ = params.add(name + ".fc2.weight", {channels, hidden_});
    b2_ = params.add(name + ".fc2.bias", {channels});
}

template <typename T>
Tensor3<T> SqueezeExcite<T>::forward(Tensor3<T> x, bool cache) {
    if (x.C != channels_) throw std::invalid_argument("SqueezeExcite: channel mismatch");
    auto& P = *params_;
    const auto& w1 = P[w1_].value;
    const auto& b1 = P[b1_].value;
    const auto& w2 = P[w2_].value;
    const auto& b2 = P[b2_].value;
    const int B = x.B, C = channels_, H = hidden_;
    std::vector<T> z(static_cast<size_t>(B) * C), hpre(static_cast<size_t>(B) * H), s(static_cast<size_t>(B) * C);
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const T* src = x.item(b) + static_cast<size_t>(c) * x.L;
            T acc = 0;
            for (int l = 0; l < x.L; ++l) acc += src[l];
            z[static_cast<size_t>(b) * C + c] = acc / static_cast<T>(x.L);
        }
        for (int j = 0; j < H; ++j) {
            T acc = b1[j];
            for (int c = 0; c < C; ++c) acc += w1[static_cast<size_t>(j) * C + c] * z[static_cast<size_t>(b) * C + c];
            hpre[static_cast<size_t>(b) * H + j] = acc;
        }
        for (int c = 0; c < C; ++c) {
            T acc = b2[c];
            for (int j = 0; j < H; ++j) acc += w2[static_cast<size_t>(c) * H + j] * std::max(hpre[static_cast<size_t>(b) * H + j], T(0));
            s[static_cast<size_t>(b) * C + c] = T(1) / (T(1) + std::exp(-acc));
        }
    }
    if (cache) {
        input_ = x;
        squeeze_ = std::move(z);
        hidden_pre_ = std::move(hpre);
    } else {
        input_.reset();
    }
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const T sc = s[static_cast<size_t>(b) * C + c];
            T* dst = x.item(b) + static_cast<size_t>(c) * x.L;
            for (int l = 0; l < x.L; ++l) dst[l] *= sc;
        }
    scale_ = std::move(s);
    return x;
}

template <typename T>
Tensor3<T> SqueezeExcite<T>::backward(Tensor3<T> dy) {
    if (!input_) no_cache("SqueezeExcite");
    auto& P = *params_;
    const auto& w1 = P[w1_].value;
    const auto& w2 = P[w2_].value;
    auto& dw1 = P[w1_].grad;
    auto& db1 = P[b1_].grad;
    auto& dw2 = P[w2_].grad;
    auto& db2 = P[b2_].grad;
    const auto& x = *input_;
    const int B = x.B, C = channels_, H = hidden_, L = x.L;
    if (!x.same_shape(dy)) throw std::invalid_argument("SqueezeExcite: gradient shape mismatch");
    std::vector<T> dspre(static_cast<size_t>(C)), dh(static_cast<size_t>(H)), dz(static_cast<size_t>(C));
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const T* g = dy.item(b) + static_cast<size_t>(c) * L;
            const T* src = x.item(b) + static_cast<size_t>(c) * L;
            T ds = 0;
            for (int l = 0; l < L; ++l) ds += g[l] * src[l];
            const T sc = scale_[static_cast<size_t>(b) * C + c];
            dspre[static_cast<size_t>(c)] = ds * sc * (T(1) - sc);
        }
        std::fill(dh.begin(), dh.end(), T(0));
        for (int c = 0; c < C; ++c) {
            const T d = dspre[static_cast<size_t>(c)];
            db2[c] += d;
            for (int j = 0; j < H; ++j) {
                const T h = std::max(hidden_pre_[static_cast<size_t>(b) * H + j], T(0));
                dw2[static_cast<size_t>(c) * H + j] += d * h;
                dh[static_cast<size_t>(j)] += w2[static_cast<size_t>(c) * H + j] * d;
            }
        }
        std::fill(dz.begin(), dz.end(), T(0));
        for (int j = 0; j < H; ++j) {
            const T d = hidden_pre_[static_cast<size_t>(b) * H + j] > T(0) ? dh[static_cast<size_t>(j)] : T(0);
            db1[j] += d;
            for (int c = 0; c < C; ++c) {
                dw1[static_cast<size_t>(j) * C + c] += d * squeeze_[static_cast<size_t>(b) * C + c];
                dz[static_cast<size_t>(c)] += w1[static_cast<size_t>(j) * C + c] * d;
            }
        }
        for (int c = 0; c < C; ++c) {
            T* g = dy.item(b) + static_cast<size_t>(c) * L;
            const T sc = scale_[static_cast<size_t>(b) * C + c];
            const T spread = dz[static_cast<size_t>(c)] / static_cast<T>(L);
            for (int l = 0; l < L; ++l) g[l] = g[l] * sc + spread;
        }
    }
    return dy;
}

// ---------------------------------------------------------------- TemporalAttention

template <typename T>
TemporalAttention<T>::TemporalAttention(ModelParams<T>& params, const std::string& name, int channels)
    : params_(&params), channels_(channels) {
    wq_ = params.add(name + ".wq", {channels, channels});
    wk_ = params.add(name + ".wk", {channels, channels});
    wv_ = params.add(name + ".wv", {channels, channels});
}

template <typename T>
Tensor3<T> TemporalAttention<T>::forward(Tensor3<T> x, bool cache) {
    if (x.C != channels_) throw std::invalid_argument("TemporalAttention: channel mismatch");
    auto& P = *params_;
    const int C = channels_, L = x.L;
    const ConstMapRM<T> wq(P[wq_].value.data(), C, C), wk(P[wk_].value.data(), C, C), wv(P[wv_].value.data(), C, C);
    const T scale = T(1) / std::sqrt(static_cast<T>(C));
    const size_t cl = static_cast<size_t>(C) * L, ll = static_cast<size_t>(L) * L;
    if (cache) {
        input_ = x;
        q_.resize(cl * x.B);
        k_.resize(cl * x.B);
        v_.resize(cl * x.B);
        a_.resize(ll * x.B);
    } else {
        input_.reset();
    }
    MatrixRM<T> q(C, L), k(C, L), v(C, L), a(L, L);
    for (int b = 0; b < x.B; ++b) {
        const ConstMapRM<T> xb(x.item(b), C, L);
        q.noalias() = wq * xb;
        k.noalias() = wk * xb;
        v.noalias() = wv * xb;
        a.noalias() = (q.transpose() * k) * scale;
        for (int i = 0; i < L; ++i) {
            auto row = a.row(i);
            const T mx = row.maxCoeff();
            row = (row.array() - mx).exp();
            row /= row.sum();
        }
        MapRM<T>(x.item(b), C, L).noalias() += v * a.transpose();
        if (cache) {
            std::copy(q.data(), q.data() + cl, q_.data() + b * cl);
            std::copy(k.data(), k.data() + cl, k_.data() + b * cl);
            std::copy(v.data(), v.data() + cl, v_.data() + b * cl);
            std::copy(a.data(), a.data() + ll, a_.data() + b * ll);
        }
    }
    return x;
}

template <typename T>
Tensor3<T> TemporalAttention<T>::backward(Tensor3<T> dy) {
    if (!input_) no_cache("TemporalAttention");
    auto& P = *params_;
    const auto& x = *input_;
    const int C = channels_, L = x.L;
    const ConstMapRM<T> wq(P[wq_].value.data(), C, C), wk(P[wk_].value.data(), C, C), wv(P[wv_].value.data(), C, C);
    MapRM<T> dwq(P[wq_].grad.data(), C, C), dwk(P[wk_].grad.data(), C, C), dwv(P[wv_].grad.data(), C, C);
    const T scale = T(1) / std::sqrt(static_cast<T>(C));
    const size_t cl = static_cast<size_t>(C) * L, ll = static_cast<size_t>(L) * L;
    if (!x.same_shape(dy)) throw std::invalid_argument("TemporalAttention: gradient shape mismatch");
    MatrixRM<T> dv(C, L), da(L, L), dq(C, L), dk(C, L);
    for (int b = 0; b < x.B; ++b) {
        const ConstMapRM<T> xb(x.item(b), C, L), g(dy.item(b), C, L);
        const ConstMapRM<T> q(q_.data() + b * cl, C, L), k(k_.data() + b * cl, C, L), v(v_.data() + b * cl, C, L);
        const ConstMapRM<T> a(a_.data() + b * ll, L, L);
        dv.noalias() = g * a;
        da.noalias() = g.transpose() * v;
        // softmax Jacobian, row-wise
        for (int i = 0; i < L; ++i) {
            const T dot = a.row(i).dot(da.row(i));
            da.row(i) = a.row(i).cwiseProduct((da.row(i).array() - dot).matrix());
        }
        dq.noalias() = (k * da.transpose()) * scale;
        dk.noalias() = (q * da) * scale;
        dwq.noalias() += dq * xb.transpose();
        dwk.noalias() += dk * xb.transpose();
        dwv.noalias() += dv * xb.transpose();
        MapRM<T> dxb(dy.item(b), C, L);
        dxb.noalias() += wq.transpose() * dq;
        dxb.noalias() += wk.transpose() * dk;
        dxb.noalias() += wv.transpose() * dv;
    }
    return dy;
}

template <typename T>
MatrixRM<T> TemporalAttention<T>::attention(int b) const {
    if (!input_) no_cache("TemporalAttention");
    const int L = input_->L;
    const size_t ll = static_cast<size_t>(L) * L;
    return ConstMapRM<T>(a_.data() + static_cast<size_t>(b) * ll, L, L);
}

// ---------------------------------------------------------------- BasicBlock

template <typename T>
BasicBlock<T>::BasicBlock(ModelParams<T>& params, const std::string& name, const BlockSpec& s)
    : conv1_(params, name + ".conv1", s.in_channels, s.out_channels, s.kernel, s.stride, s.kernel / 2),
      conv2_(params, name + ".conv2", s.out_channels, s.out_channels, s.kernel, 1, s.kernel / 2),
      bn1_(params, name + ".bn1", s.out_channels, s.bn_eps, s.bn_momentum),
      bn2_(params, name + ".bn2", s.out_channels, s.bn_eps, s.bn_momentum),
      dropout_(s.dropout_p),
      se_(params, name + ".se", s.out_channels),
      has_proj_(s.stride != 1 || s.in_channels != s.out_channels) {
    if (has_proj_) {
        proj_ = Conv1d<T>(params, name + ".proj.conv", s.in_channels, s.out_channels, 1, s.stride, 0);
        proj_bn_ = BatchNorm1d<T>(params, name + ".proj.bn", s.out_channels, s.bn_eps, s.bn_momentum);
    }
}

template <typename T>
Tensor3<T> BasicBlock<T>::forward(const Tensor3<T>& x, Mode mode, std::uint64_t dropout_seed, bool cache) {
    auto h = bn1_.forward(conv1_.forward(x, cache), mode, cache);
    h = dropout_.forward(relu1_.forward(std::move(h), cache), mode, dropout_seed, cache);
    h = se_.forward(bn2_.forward(conv2_.forward(h, cache), mode, cache), cache);
    if (has_proj_) {
        add_into(h, proj_bn_.forward(proj_.forward(x, cache), mode, cache));
    } else {
        if (!h.same_shape(x)) throw std::logic_error("BasicBlock: identity skip with mismatched shapes");
        add_into(h, x);
    }
    return relu_out_.forward(std::move(h), cache);
}

template <typename T>
Tensor3<T> BasicBlock<T>::backward(const Tensor3<T>& dy) {
    const auto dsum = relu_out_.backward(dy);
    auto d = bn2_.backward(se_.backward(dsum));
    d = conv2_.backward(d);
    d = bn1_.backward(relu1_.backward(dropout_.backward(std::move(d))));
    d = conv1_.backward(d);
    if (has_proj_) {
        add_into(d, proj_.backward(proj_bn_.backward(dsum)));
    } else {
        add_into(d, dsum);
    }
    return d;
}

template class Conv1d<float>;
template class Conv1d<double>;
template class BatchNorm1d<float>;
template class BatchNorm1d<double>;
template class ReLU<float>;
template class ReLU<double>;
template class Dropout<float>;
template class Dropout<double>;
template class SqueezeExcite<float>;
template class SqueezeExcite<double>;
template class TemporalAttention<float>;
template class TemporalAttention<double>;
template class BasicBlock<float>;
template class BasicBlock<double>;

}  // namespace rhythm::nn
