#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace rhythm::nn {

/// Batch x channels x length, contiguous row-major.
template <typename T>
struct Tensor3 {
    int B = 0, C = 0, L = 0;
    std::vector<T> data;

    Tensor3() = default;
    Tensor3(int b, int c, int l, T fill = T(0)) : B(b), C(c), L(l), data(static_cast<size_t>(b) * c * l, fill) {
        if (b < 1 || c < 1 || l < 1) throw std::invalid_argument("Tensor3: dimensions must be >= 1");
    }

    size_t size() const { return data.size(); }
    size_t item_size() const { return static_cast<size_t>(C) * L; }
    T* item(int b) { return data.data() + static_cast<size_t>(b) * item_size(); }
    const T* item(int b) const { return data.data() + static_cast<size_t>(b) * item_size(); }
    T& operator()(int b, int c, int l) { return data[(static_cast<size_t>(b) * C + c) * L + l]; }
    T operator()(int b, int c, int l) const { return data[(static_cast<size_t>(b) * C + c) * L + l]; }
    bool same_shape(const Tensor3& o) const { return B == o.B && C == o.C && L == o.L; }
};

template <typename T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatrixRM<T>>;
template <typename T>
using ConstMapRM = Eigen::Map<const MatrixRM<T>>;

/// A named tensor of the model: learnable weights carry a gradient buffer,
/// BN running statistics do not.
template <typename T>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool learnable = true;

    size_t numel() const { return value.size(); }
};

/// All tensors of a network, addressable by index or name.
template <typename T>
class ModelParams {
public:
    int add(std::string name, std::vector<int> shape, bool learnable = true) {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        Param<T> p;
        p.name = std::move(name);
        p.shape = std::move(shape);
        p.value.assign(n, T(0));
        if (learnable) p.grad.assign(n, T(0));
        p.learnable = learnable;
        tensors_.push_back(std::move(p));
        return static_cast<int>(tensors_.size()) - 1;
    }

    Param<T>& operator[](int i) { return tensors_[static_cast<size_t>(i)]; }
    const Param<T>& operator[](int i) const { return tensors_[static_cast<size_t>(i)]; }
    std::vector<Param<T>>& all() { return tensors_; }
    const std::vector<Param<T>>& all() const { return tensors_; }
    size_t count() const { return tensors_.size(); }

    Param<T>* find(const std::string& name) {
        for (auto& p : tensors_)
            if (p.name == name) return &p;
        return nullptr;
    }
    const Param<T>* find(const std::string& name) const {
        for (const auto& p : tensors_)
            if (p.name == name) return &p;
        return nullptr;
    }

    /// Number of learnable scalars.
    size_t learnable_size() const {
        size_t n = 0;
        for (const auto& p : tensors_)
            if (p.learnable) n += p.numel();
        return n;
    }

    void zero_grad() {
        for (auto& p : tensors_)
            std::fill(p.grad.begin(), p.grad.end(), T(0));
    }

private:
    std::vector<Param<T>> tensors_;
};

/// splitmix64; used for dropout masks where a cheap, seedable stream is enough.
struct SplitMix64 {
    std::uint64_t state;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

}  // namespace rhythm::nn
