#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "oftta/data.hpp"
#include "oftta/layers.hpp"

namespace oftta {

// The fixed Conv-BN-ReLU-MaxPool stack; pool stride equals the pool window.
struct ArchSpec {
    int in_h = 0, in_w = 0;
    int kernel_h = 6, kernel_w = 1;
    std::vector<int> channels = {64, 128, 256};
    int pool_h = 2, pool_w = 1;
    int classes = 6;
};

struct TrainConfig {
    double learning_rate = 1e-4; // decays by 50% every 20 epochs
    int lr_decay_epochs = 20;
    double lr_decay_factor = 0.5;
    int epochs = 100;
    int batch_size = 128;
    double validation_fraction = 0.2;
    std::uint64_t seed = 1;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
};

struct Checkpoint {
    NetworkModel model;
    double validation_loss = 0.0;
    int epoch = 0;
};

inline double lr_at(int epoch, const TrainConfig& config) {
    double lr = config.learning_rate;
    for (int e = config.lr_decay_epochs; e <= epoch; e += config.lr_decay_epochs)
        lr *= config.lr_decay_factor;
    return lr;
}

// Glorot-uniform conv/linear weights, zero biases, gamma=1, beta=0,
// running stats (0, 1).
template <typename T>
ModelT<T> build_model(const ArchSpec& arch, std::uint64_t seed);

extern template ModelT<float> build_model<float>(const ArchSpec&, std::uint64_t);
extern template ModelT<double> build_model<double>(const ArchSpec&, std::uint64_t);

// ERM source training: pooled source samples, train-mode forward, softmax
// cross-entropy, Adam updates, stepwise lr schedule, best-validation checkpoint.
Checkpoint train_erm(const std::vector<const DomainDataset*>& sources,
                     const ArchSpec& arch, const TrainConfig& config);

// Assembles windows[indices] into a (B, 1, H, W) batch tensor.
Tensor4 make_batch(const DomainDataset& domain, const std::vector<int>& indices);

} // namespace oftta
