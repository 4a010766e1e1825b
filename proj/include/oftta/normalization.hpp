#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "oftta/layers.hpp"
#include "oftta/tensor.hpp"

namespace oftta {

enum class NormVariant { CBN, TBN, AlphaConst, EDTN };

// Per-BN-layer statistic selection at test time.
struct NormStrategy {
    NormVariant variant = NormVariant::CBN;
    double alpha = 1.0;          // AlphaConst
    double alpha_bottom = 0.1;   // EDTN
    double alpha_top = 1.0;      // EDTN
    double alpha_floor = 0.0;    // lower clamp on the EDTN schedule (BS=1 mode)

    static NormStrategy cbn() { return {NormVariant::CBN}; }
    static NormStrategy tbn() { return {NormVariant::TBN}; }
    static NormStrategy alpha_const(double a) {
        if (a < 0.0 || a > 1.0)
            throw std::invalid_argument("NormStrategy: alpha must be in [0,1]");
        NormStrategy s;
        s.variant = NormVariant::AlphaConst;
        s.alpha = a;
        return s;
    }
    static NormStrategy edtn(double bottom, double top, double floor = 0.0) {
        if (bottom < 0.0 || top > 1.0 || bottom > top)
            throw std::invalid_argument(
                "NormStrategy: EDTN requires 0 <= alpha_bottom <= alpha_top <= 1");
        NormStrategy s;
        s.variant = NormVariant::EDTN;
        s.alpha_bottom = bottom;
        s.alpha_top = top;
        s.alpha_floor = floor;
        return s;
    }
};

// Layer-wise mixing ratios, index 0 = shallowest BN layer.
struct AlphaSchedule {
    std::vector<double> alphas;
};

// Geometric interpolation from alpha_bottom at layer 1 to alpha_top at layer n.
// alpha_bottom = 0 degenerates to pure TBN below the top layer.
inline AlphaSchedule edtn_schedule(int n, double alpha_bottom, double alpha_top) {
    if (n < 1) throw std::invalid_argument("edtn_schedule: n must be >= 1");
    if (alpha_bottom < 0.0 || alpha_top > 1.0 || alpha_bottom > alpha_top)
        throw std::invalid_argument(
            "edtn_schedule: need 0 <= alpha_bottom <= alpha_top <= 1");
    AlphaSchedule s;
    s.alphas.resize(n);
    if (n == 1) {
        s.alphas[0] = alpha_top;
        return s;
    }
    if (alpha_bottom == 0.0) {
        std::fill(s.alphas.begin(), s.alphas.end() - 1, 0.0);
        s.alphas[n - 1] = alpha_top;
        return s;
    }
    const double r = std::pow(alpha_top / alpha_bottom, 1.0 / (n - 1));
    for (int i = 0; i < n; ++i)
        s.alphas[i] = alpha_bottom * std::pow(r, i);
    s.alphas[n - 1] = alpha_top; // exact endpoint
    return s;
}

// Population moments over the B x H x W axes, per channel.
// 64-bit accumulation; two-pass for the variance.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> batch_stats(const Tensor4T<T>& input) {
    const std::size_t count =
        static_cast<std::size_t>(input.b) * input.h * input.w;
    if (count == 0 || input.c == 0)
        throw std::invalid_argument("batch_stats: empty tensor");
    std::vector<T> mean(input.c), var(input.c);
    const std::size_t plane = static_cast<std::size_t>(input.h) * input.w;
    for (int ic = 0; ic < input.c; ++ic) {
        double sum = 0.0;
        for (int ib = 0; ib < input.b; ++ib) {
            const T* p = &input.at(ib, ic, 0, 0);
            for (std::size_t i = 0; i < plane; ++i) sum += p[i];
        }
        const double mu = sum / static_cast<double>(count);
        double sq = 0.0;
        for (int ib = 0; ib < input.b; ++ib) {
            const T* p = &input.at(ib, ic, 0, 0);
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = p[i] - mu;
                sq += d * d;
            }
        }
        mean[ic] = static_cast<T>(mu);
        var[ic] = static_cast<T>(std::max(0.0, sq / static_cast<double>(count)));
    }
    return {mean, var};
}

template <typename T>
std::pair<std::vector<T>, std::vector<T>>
mix_stats(const std::vector<T>& cbn_mean, const std::vector<T>& cbn_var,
          const std::vector<T>& tbn_mean, const std::vector<T>& tbn_var,
          double alpha) {
    if (alpha < 0.0 || alpha > 1.0)
        throw std::invalid_argument("mix_stats: alpha must be in [0,1]");
    const std::size_t c = cbn_mean.size();
    std::vector<T> mean(c), var(c);
    for (std::size_t i = 0; i < c; ++i) {
        mean[i] = static_cast<T>(alpha * cbn_mean[i] + (1.0 - alpha) * tbn_mean[i]);
        var[i] = static_cast<T>(alpha * cbn_var[i] + (1.0 - alpha) * tbn_var[i]);
    }
    return {mean, var};
}

// Resolve the statistics a BN layer should use at test time. layer_index is
// 1-based, n is the model's BN layer count. Never mutates the layer.
template <typename T>
std::pair<std::vector<T>, std::vector<T>>
resolve_stats(int layer_index, int n, const BatchNormLayerT<T>& layer,
              const Tensor4T<T>& batch, const NormStrategy& strategy) {
    if (layer_index < 1 || layer_index > n)
        throw std::invalid_argument("resolve_stats: layer index out of range");
    switch (strategy.variant) {
    case NormVariant::CBN:
        return {layer.running_mean, layer.running_var};
    case NormVariant::TBN:
        return batch_stats(batch);
    case NormVariant::AlphaConst: {
        auto [tm, tv] = batch_stats(batch);
        return mix_stats(layer.running_mean, layer.running_var, tm, tv,
                         strategy.alpha);
    }
    case NormVariant::EDTN: {
        const AlphaSchedule sched =
            edtn_schedule(n, strategy.alpha_bottom, strategy.alpha_top);
        const double a =
            std::max(sched.alphas[layer_index - 1], strategy.alpha_floor);
        if (a >= 1.0) return {layer.running_mean, layer.running_var};
        auto [tm, tv] = batch_stats(batch);
        return mix_stats(layer.running_mean, layer.running_var, tm, tv, a);
    }
    }
    throw std::logic_error("resolve_stats: unknown variant");
}

} // namespace oftta
