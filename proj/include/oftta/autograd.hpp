#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "oftta/layers.hpp"
#include "oftta/network.hpp"
#include "oftta/nn_ops.hpp"
#include "oftta/normalization.hpp"
#include "oftta/softmax.hpp"
#include "oftta/tensor.hpp"

namespace oftta {

// Cached activations from one train-mode forward, consumed by backward_pass.
template <typename T>
struct BlockCache {
    Tensor4T<T> input;       // conv input
    std::vector<T> mean, var; // batch statistics used for normalization
    Tensor4T<T> normalized;  // (z - mu) / sqrt(var + eps)
    Tensor4T<T> relu_out;    // post-affine, post-relu
    Tensor4T<T> pool_out;
    std::vector<std::size_t> pool_argmax; // flat index into relu_out per pool cell
};

template <typename T>
struct TrainCache {
    std::vector<BlockCache<T>> blocks;
    MatrixT<T> features;
    MatrixT<T> logits;
};

// Gradients reuse the model layout; running statistics are unused.
template <typename T>
ModelT<T> zero_like(const ModelT<T>& model) {
    ModelT<T> g = model;
    for (auto& blk : g.blocks) {
        std::fill(blk.conv.weights.data.begin(), blk.conv.weights.data.end(), T(0));
        std::fill(blk.conv.bias.begin(), blk.conv.bias.end(), T(0));
        std::fill(blk.bn.gamma.begin(), blk.bn.gamma.end(), T(0));
        std::fill(blk.bn.beta.begin(), blk.bn.beta.end(), T(0));
        std::fill(blk.bn.running_mean.begin(), blk.bn.running_mean.end(), T(0));
        std::fill(blk.bn.running_var.begin(), blk.bn.running_var.end(), T(0));
    }
    std::fill(g.head.weight.data.begin(), g.head.weight.data.end(), T(0));
    std::fill(g.head.bias.begin(), g.head.bias.end(), T(0));
    return g;
}

// Train-mode forward: BN uses current-batch statistics; when update_running is
// set, running statistics move by momentum toward the batch statistics.
template <typename T>
ForwardResult<T> train_forward(ModelT<T>& model, const Tensor4T<T>& batch,
                               TrainCache<T>& cache, bool update_running = true) {
    cache.blocks.clear();
    cache.blocks.resize(model.blocks.size());
    Tensor4T<T> x = batch;
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        auto& blk = model.blocks[i];
        auto& bc = cache.blocks[i];
        bc.input = x;
        Tensor4T<T> z = conv_forward(x, blk.conv);
        auto [mean, var] = batch_stats(z);
        bc.mean = mean;
        bc.var = var;
        if (update_running) {
            const T mom = blk.bn.momentum;
            for (int c = 0; c < z.c; ++c) {
                blk.bn.running_mean[c] =
                    (T(1) - mom) * blk.bn.running_mean[c] + mom * mean[c];
                blk.bn.running_var[c] =
                    (T(1) - mom) * blk.bn.running_var[c] + mom * var[c];
            }
        }
        // Keep the normalized tensor for the BN backward.
        bc.normalized = Tensor4T<T>(z.b, z.c, z.h, z.w);
        Tensor4T<T> y(z.b, z.c, z.h, z.w);
        const std::size_t plane = static_cast<std::size_t>(z.h) * z.w;
        for (int c = 0; c < z.c; ++c) {
            const T inv_std = T(1) / static_cast<T>(std::sqrt(
                                          static_cast<double>(var[c]) +
                                          static_cast<double>(blk.bn.eps)));
            for (int ib = 0; ib < z.b; ++ib) {
                const T* src = &z.at(ib, c, 0, 0);
                T* nh = &bc.normalized.at(ib, c, 0, 0);
                T* dst = &y.at(ib, c, 0, 0);
                for (std::size_t p = 0; p < plane; ++p) {
                    nh[p] = (src[p] - mean[c]) * inv_std;
                    dst[p] = blk.bn.gamma[c] * nh[p] + blk.bn.beta[c];
                }
            }
        }
        relu_inplace(y);
        bc.relu_out = y;
        // Max-pool with argmax bookkeeping; ties go to the first maximal
        // element in scan order.
        auto [out_h, out_w] = conv_output_dims(y.h, y.w, blk.pool_h, blk.pool_w,
                                               blk.pool_sh, blk.pool_sw);
        bc.pool_out = Tensor4T<T>(y.b, y.c, out_h, out_w);
        bc.pool_argmax.assign(bc.pool_out.size(), 0);
        for (int ib = 0; ib < y.b; ++ib)
            for (int ic = 0; ic < y.c; ++ic)
                for (int oh = 0; oh < out_h; ++oh)
                    for (int ow = 0; ow < out_w; ++ow) {
                        T best = y.at(ib, ic, oh * blk.pool_sh, ow * blk.pool_sw);
                        std::size_t best_idx =
                            y.idx(ib, ic, oh * blk.pool_sh, ow * blk.pool_sw);
                        for (int kh = 0; kh < blk.pool_h; ++kh)
                            for (int kw = 0; kw < blk.pool_w; ++kw) {
                                const std::size_t idx =
                                    y.idx(ib, ic, oh * blk.pool_sh + kh,
                                          ow * blk.pool_sw + kw);
                                if (y.data[idx] > best) {
                                    best = y.data[idx];
                                    best_idx = idx;
                                }
                            }
                        const std::size_t oidx = bc.pool_out.idx(ib, ic, oh, ow);
                        bc.pool_out.data[oidx] = best;
                        bc.pool_argmax[oidx] = best_idx;
                    }
        x = bc.pool_out;
    }
    ForwardResult<T> out;
    out.features = global_avg_pool(x);
    out.logits = linear_forward(out.features, model.head);
    cache.features = out.features;
    cache.logits = out.logits;
    return out;
}

// Mean softmax cross-entropy over the batch; fills dlogits = (softmax - onehot)/B.
template <typename T>
double softmax_ce_loss(const MatrixT<T>& logits, const std::vector<int>& labels,
                       MatrixT<T>& dlogits) {
    const int b = logits.rows;
    const int k = logits.cols;
    if (static_cast<int>(labels.size()) != b)
        throw std::invalid_argument("softmax_ce_loss: label count mismatch");
    dlogits = MatrixT<T>(b, k);
    double loss = 0.0;
    for (int r = 0; r < b; ++r) {
        const auto p = softmax_row(logits.row(r), k);
        loss -= std::log(std::max(p[labels[r]], 1e-300));
        for (int j = 0; j < k; ++j)
            dlogits.at(r, j) =
                static_cast<T>((p[j] - (j == labels[r] ? 1.0 : 0.0)) / b);
    }
    return loss / b;
}

template <typename T>
ModelT<T> backward_pass(const ModelT<T>& model, const TrainCache<T>& cache,
                        const MatrixT<T>& dlogits) {
    ModelT<T> grads = zero_like(model);
    const int b = dlogits.rows;
    const int k = dlogits.cols;
    const int m = model.head.weight.rows;

    // Linear head.
    MatrixT<T> dfeat(b, m);
    for (int r = 0; r < b; ++r)
        for (int j = 0; j < k; ++j) {
            const T dl = dlogits.at(r, j);
            grads.head.bias[j] += dl;
            for (int i = 0; i < m; ++i) {
                grads.head.weight.at(i, j) += cache.features.at(r, i) * dl;
                dfeat.at(r, i) += model.head.weight.at(i, j) * dl;
            }
        }

    // Global average pool.
    const auto& last_pool = cache.blocks.back().pool_out;
    Tensor4T<T> dx(last_pool.b, last_pool.c, last_pool.h, last_pool.w);
    const T inv_hw = T(1) / static_cast<T>(last_pool.h * last_pool.w);
    for (int ib = 0; ib < dx.b; ++ib)
        for (int ic = 0; ic < dx.c; ++ic) {
            const T g = dfeat.at(ib, ic) * inv_hw;
            T* p = &dx.at(ib, ic, 0, 0);
            const std::size_t plane = static_cast<std::size_t>(dx.h) * dx.w;
            for (std::size_t q = 0; q < plane; ++q) p[q] = g;
        }

    for (int bi = static_cast<int>(model.blocks.size()) - 1; bi >= 0; --bi) {
        const auto& blk = model.blocks[bi];
        const auto& bc = cache.blocks[bi];
        auto& gblk = grads.blocks[bi];

        // Max-pool backward: route gradient to the recorded argmax.
        Tensor4T<T> drelu(bc.relu_out.b, bc.relu_out.c, bc.relu_out.h,
                          bc.relu_out.w);
        for (std::size_t i = 0; i < dx.size(); ++i)
            drelu.data[bc.pool_argmax[i]] += dx.data[i];

        // ReLU backward.
        for (std::size_t i = 0; i < drelu.size(); ++i)
            if (bc.relu_out.data[i] <= T(0)) drelu.data[i] = T(0);

        // BN backward with batch statistics (population divisor N = B*H*W).
        const auto& xhat = bc.normalized;
        const std::size_t plane = static_cast<std::size_t>(xhat.h) * xhat.w;
        const double n_count = static_cast<double>(xhat.b) * plane;
        Tensor4T<T> dz(xhat.b, xhat.c, xhat.h, xhat.w);
        for (int c = 0; c < xhat.c; ++c) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int ib = 0; ib < xhat.b; ++ib) {
                const T* dyp = &drelu.at(ib, c, 0, 0);
                const T* xp = &xhat.at(ib, c, 0, 0);
                for (std::size_t q = 0; q < plane; ++q) {
                    sum_dy += dyp[q];
                    sum_dy_xhat += static_cast<double>(dyp[q]) * xp[q];
                }
            }
            gblk.bn.beta[c] += static_cast<T>(sum_dy);
            gblk.bn.gamma[c] += static_cast<T>(sum_dy_xhat);
            const double inv_std =
                1.0 / std::sqrt(static_cast<double>(bc.var[c]) +
                                static_cast<double>(blk.bn.eps));
            const double gamma = blk.bn.gamma[c];
            for (int ib = 0; ib < xhat.b; ++ib) {
                const T* dyp = &drelu.at(ib, c, 0, 0);
                const T* xp = &xhat.at(ib, c, 0, 0);
                T* dzp = &dz.at(ib, c, 0, 0);
                for (std::size_t q = 0; q < plane; ++q) {
                    const double dxhat = static_cast<double>(dyp[q]) * gamma;
                    dzp[q] = static_cast<T>(
                        inv_std * (dxhat - sum_dy * gamma / n_count -
                                   xp[q] * sum_dy_xhat * gamma / n_count));
                }
            }
        }

        // Conv backward.
        const auto& conv = blk.conv;
        const auto& in = bc.input;
        Tensor4T<T> din(in.b, in.c, in.h, in.w);
        const int k_h = conv.weights.h, k_w = conv.weights.w;
        for (int ib = 0; ib < dz.b; ++ib)
            for (int co = 0; co < dz.c; ++co)
                for (int oh = 0; oh < dz.h; ++oh)
                    for (int ow = 0; ow < dz.w; ++ow) {
                        const T g = dz.at(ib, co, oh, ow);
                        if (g == T(0)) continue;
                        gblk.conv.bias[co] += g;
                        const int h0 = oh * conv.stride_h;
                        const int w0 = ow * conv.stride_w;
                        for (int ci = 0; ci < in.c; ++ci)
                            for (int kh = 0; kh < k_h; ++kh) {
                                const T* in_row = &in.at(ib, ci, h0 + kh, w0);
                                T* din_row = &din.at(ib, ci, h0 + kh, w0);
                                T* gw_row = &gblk.conv.weights.at(co, ci, kh, 0);
                                const T* w_row = &conv.weights.at(co, ci, kh, 0);
                                for (int kw = 0; kw < k_w; ++kw) {
                                    gw_row[kw] += in_row[kw] * g;
                                    din_row[kw] += w_row[kw] * g;
                                }
                            }
                    }
        dx = std::move(din);
    }
    return grads;
}

} // namespace oftta
