#pragma once

#include <stdexcept>

#include "oftta/layers.hpp"
#include "oftta/nn_ops.hpp"
#include "oftta/normalization.hpp"
#include "oftta/tensor.hpp"

namespace oftta {

template <typename T>
struct ForwardResult {
    MatrixT<T> features; // B x m, global-average-pooled last block output
    MatrixT<T> logits;   // B x K, linear head applied to features
};

// Eval-mode forward: BN statistics are resolved by the strategy, the model is
// never mutated. Train-mode forward (with caches and running-stat updates)
// lives in autograd.hpp.
template <typename T>
ForwardResult<T> network_forward(const ModelT<T>& model, const Tensor4T<T>& batch,
                                 const NormStrategy& strategy) {
    if (batch.c != model.in_c || batch.h != model.in_h || batch.w != model.in_w)
        throw std::invalid_argument("network_forward: batch shape " +
                                    batch.shape_str() + " does not match model input");
    const int n = model.bn_layer_count();
    Tensor4T<T> x = batch;
    for (int i = 0; i < n; ++i) {
        const auto& blk = model.blocks[i];
        x = conv_forward(x, blk.conv);
        auto [mean, var] = resolve_stats(i + 1, n, blk.bn, x, strategy);
        x = bn_forward(x, blk.bn, mean, var);
        relu_inplace(x);
        x = max_pool(x, blk.pool_h, blk.pool_w, blk.pool_sh, blk.pool_sw);
    }
    ForwardResult<T> out;
    out.features = global_avg_pool(x);
    out.logits = linear_forward(out.features, model.head);
    return out;
}

} // namespace oftta
