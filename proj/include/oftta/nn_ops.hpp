#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "oftta/layers.hpp"
#include "oftta/tensor.hpp"

namespace oftta {

inline std::pair<int, int> conv_output_dims(int in_h, int in_w, int k_h, int k_w,
                                            int s_h, int s_w) {
    return {(in_h - k_h) / s_h + 1, (in_w - k_w) / s_w + 1};
}

// Valid-padding cross-correlation.
template <typename T>
Tensor4T<T> conv_forward(const Tensor4T<T>& input, const ConvLayerT<T>& layer) {
    const int c_out = layer.weights.b;
    const int c_in = layer.weights.c;
    const int k_h = layer.weights.h;
    const int k_w = layer.weights.w;
    if (input.c != c_in)
        throw std::invalid_argument("conv_forward: input channels " +
                                    std::to_string(input.c) + " != kernel C_in " +
                                    std::to_string(c_in));
    if (k_h > input.h || k_w > input.w)
        throw std::invalid_argument("conv_forward: kernel " + std::to_string(k_h) +
                                    "x" + std::to_string(k_w) +
                                    " exceeds input spatial dims " + input.shape_str());
    auto [out_h, out_w] = conv_output_dims(input.h, input.w, k_h, k_w,
                                           layer.stride_h, layer.stride_w);
    Tensor4T<T> out(input.b, c_out, out_h, out_w);
    for (int ib = 0; ib < input.b; ++ib) {
        for (int co = 0; co < c_out; ++co) {
            for (int oh = 0; oh < out_h; ++oh) {
                const int h0 = oh * layer.stride_h;
                for (int ow = 0; ow < out_w; ++ow) {
                    const int w0 = ow * layer.stride_w;
                    double acc = static_cast<double>(layer.bias[co]);
                    for (int ci = 0; ci < c_in; ++ci) {
                        for (int kh = 0; kh < k_h; ++kh) {
                            const T* in_row = &input.at(ib, ci, h0 + kh, w0);
                            const T* w_row = &layer.weights.at(co, ci, kh, 0);
                            for (int kw = 0; kw < k_w; ++kw)
                                acc += static_cast<double>(in_row[kw]) * w_row[kw];
                        }
                    }
                    out.at(ib, co, oh, ow) = static_cast<T>(acc);
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor4T<T> max_pool(const Tensor4T<T>& input, int k_h, int k_w, int s_h, int s_w) {
    if (k_h > input.h || k_w > input.w)
        throw std::invalid_argument("max_pool: window " + std::to_string(k_h) + "x" +
                                    std::to_string(k_w) + " exceeds input " +
                                    input.shape_str());
    auto [out_h, out_w] = conv_output_dims(input.h, input.w, k_h, k_w, s_h, s_w);
    Tensor4T<T> out(input.b, input.c, out_h, out_w);
    for (int ib = 0; ib < input.b; ++ib)
        for (int ic = 0; ic < input.c; ++ic)
            for (int oh = 0; oh < out_h; ++oh)
                for (int ow = 0; ow < out_w; ++ow) {
                    T m = input.at(ib, ic, oh * s_h, ow * s_w);
                    for (int kh = 0; kh < k_h; ++kh)
                        for (int kw = 0; kw < k_w; ++kw)
                            m = std::max(m, input.at(ib, ic, oh * s_h + kh,
                                                     ow * s_w + kw));
                    out.at(ib, ic, oh, ow) = m;
                }
    return out;
}

// Mean over H x W per (batch, channel); yields the B x C feature matrix.
template <typename T>
MatrixT<T> global_avg_pool(const Tensor4T<T>& input) {
    MatrixT<T> out(input.b, input.c);
    const double inv = 1.0 / (static_cast<double>(input.h) * input.w);
    for (int ib = 0; ib < input.b; ++ib)
        for (int ic = 0; ic < input.c; ++ic) {
            double acc = 0.0;
            const T* p = &input.at(ib, ic, 0, 0);
            const std::size_t n = static_cast<std::size_t>(input.h) * input.w;
            for (std::size_t i = 0; i < n; ++i) acc += p[i];
            out.at(ib, ic) = static_cast<T>(acc * inv);
        }
    return out;
}

// Applies gamma*(z - mean)/sqrt(var + eps) + beta with already-resolved
// per-channel statistics. Statistic selection lives in normalization.hpp.
template <typename T>
Tensor4T<T> bn_forward(const Tensor4T<T>& input, const BatchNormLayerT<T>& layer,
                       const std::vector<T>& mean, const std::vector<T>& var) {
    if (static_cast<int>(mean.size()) != input.c ||
        static_cast<int>(var.size()) != input.c ||
        layer.channels() != input.c)
        throw std::invalid_argument("bn_forward: channel mismatch, input " +
                                    input.shape_str());
    Tensor4T<T> out(input.b, input.c, input.h, input.w);
    const std::size_t plane = static_cast<std::size_t>(input.h) * input.w;
    for (int ic = 0; ic < input.c; ++ic) {
        const T scale = layer.gamma[ic] /
                        static_cast<T>(std::sqrt(static_cast<double>(var[ic]) +
                                                 static_cast<double>(layer.eps)));
        const T shift = layer.beta[ic] - scale * mean[ic];
        for (int ib = 0; ib < input.b; ++ib) {
            const T* src = &input.at(ib, ic, 0, 0);
            T* dst = &out.at(ib, ic, 0, 0);
            for (std::size_t i = 0; i < plane; ++i) dst[i] = scale * src[i] + shift;
        }
    }
    return out;
}

template <typename T>
void relu_inplace(Tensor4T<T>& t) {
    for (auto& v : t.data) v = v > T(0) ? v : T(0);
}

template <typename T>
MatrixT<T> linear_forward(const MatrixT<T>& features, const LinearHeadT<T>& head) {
    const int m = head.weight.rows;
    const int k = head.weight.cols;
    if (features.cols != m)
        throw std::invalid_argument("linear_forward: feature dim " +
                                    std::to_string(features.cols) + " != head dim " +
                                    std::to_string(m));
    MatrixT<T> logits(features.rows, k);
    for (int r = 0; r < features.rows; ++r)
        for (int j = 0; j < k; ++j) {
            double acc = head.bias[j];
            for (int i = 0; i < m; ++i)
                acc += static_cast<double>(features.at(r, i)) * head.weight.at(i, j);
            logits.at(r, j) = static_cast<T>(acc);
        }
    return logits;
}

} // namespace oftta
