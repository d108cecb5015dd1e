#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rhythm/nn/rhythminet.hpp"

namespace rhythm::nn {

struct TrainConfig {
    int batch_size = 64;
    int epochs = 60;
    double lr0 = 1e-4;
    double weight_decay = 1e-5;
    int lr_step = 20;
    double lr_factor = 0.1;
    // copied into the ArchConfig of each trained network
    double dropout_p = 0.1;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;
    std::vector<std::uint64_t> seeds{1, 2, 3};

    void validate() const;
};

/// lr0 * factor^floor(epoch / step)
double step_decay_lr(int epoch, const TrainConfig& cfg);

template <typename T>
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<std::vector<T>> m, v;  // indexed like ModelParams; empty for buffers
};

/// Adam with L2-coupled weight decay: g <- g + wd * theta before the moment updates.
template <typename T>
void adam_step(ModelParams<T>& params, AdamState<T>& state, double lr, double weight_decay);

/// Network inputs held as float, item-major (N x channels x length).
struct LabeledInputs {
    int channels = 0;
    int length = 0;
    std::vector<float> samples;
    std::vector<int> labels;

    size_t size() const { return labels.size(); }
    /// Gathers the given items into a batch tensor.
    Tensor3<float> batch(std::span<const size_t> indices) const;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0;
    double loss = 0;      // mean train-mode cross-entropy over the epoch
    double accuracy = 0;  // train-mode accuracy over the epoch
    std::uint64_t order_digest = 0;  // FNV-1a of the epoch's sample order
};

struct TrainResult {
    RhythmiNet<float> model;
    std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Seeded shuffle every epoch, mini-batches (last short batch kept), Adam, step decay.
/// Bit-reproducible for a fixed seed.
TrainResult train(const LabeledInputs& data, const TrainConfig& cfg, const ArchConfig& arch, std::uint64_t seed,
                  const EpochCallback& on_epoch = {});

/// Eval-mode class probabilities, processed in chunks of `batch_size`.
std::vector<std::array<double, kNumClasses>> predict(RhythmiNet<float>& model, const LabeledInputs& data, int batch_size = 64);

}  // namespace rhythm::nn
