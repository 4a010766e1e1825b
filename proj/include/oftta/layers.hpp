#pragma once

#include <vector>

#include "oftta/tensor.hpp"

namespace oftta {

template <typename T>
struct ConvLayerT {
    Tensor4T<T> weights;      // (C_out, C_in, k_h, k_w)
    std::vector<T> bias;      // C_out
    int stride_h = 1, stride_w = 1;
};

template <typename T>
struct BatchNormLayerT {
    std::vector<T> gamma, beta;
    std::vector<T> running_mean, running_var;
    T eps = T(1e-5);
    T momentum = T(0.1);      // running-stat update rate in train mode

    int channels() const { return static_cast<int>(gamma.size()); }
};

template <typename T>
struct LinearHeadT {
    MatrixT<T> weight;        // m x K, column k is the class-k weight w^k
    std::vector<T> bias;      // K
};

// One Conv-BN-ReLU-MaxPool block.
template <typename T>
struct ConvBlockT {
    ConvLayerT<T> conv;
    BatchNormLayerT<T> bn;
    int pool_h = 2, pool_w = 1;
    int pool_sh = 2, pool_sw = 1;
};

template <typename T>
struct ModelT {
    std::vector<ConvBlockT<T>> blocks;
    LinearHeadT<T> head;
    int class_count = 0;
    int in_c = 1, in_h = 0, in_w = 0;

    int bn_layer_count() const { return static_cast<int>(blocks.size()); }
    int feature_dim() const {
        return blocks.empty() ? 0 : blocks.back().conv.weights.b;
    }
};

using ConvLayer = ConvLayerT<float>;
using BatchNormLayer = BatchNormLayerT<float>;
using LinearHead = LinearHeadT<float>;
using NetworkModel = ModelT<float>;

} // namespace oftta
