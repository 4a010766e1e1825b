#include "oftta/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "oftta/autograd.hpp"
#include "oftta/network.hpp"

namespace oftta {

template <typename T>
ModelT<T> build_model(const ArchSpec& arch, std::uint64_t seed) {
    if (arch.in_h < 1 || arch.in_w < 1 || arch.classes < 2 || arch.channels.empty())
        throw std::invalid_argument("build_model: invalid architecture spec");
    std::mt19937_64 rng(seed);
    auto glorot = [&rng](int fan_in, int fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        return std::uniform_real_distribution<double>(-limit, limit)(rng);
    };
    ModelT<T> model;
    model.class_count = arch.classes;
    model.in_c = 1;
    model.in_h = arch.in_h;
    model.in_w = arch.in_w;
    int c_in = 1, h = arch.in_h, w = arch.in_w;
    for (int c_out : arch.channels) {
        ConvBlockT<T> blk;
        blk.conv.weights = Tensor4T<T>(c_out, c_in, arch.kernel_h, arch.kernel_w);
        blk.conv.bias.assign(c_out, T(0));
        const int fan_in = c_in * arch.kernel_h * arch.kernel_w;
        const int fan_out = c_out * arch.kernel_h * arch.kernel_w;
        for (auto& v : blk.conv.weights.data)
            v = static_cast<T>(glorot(fan_in, fan_out));
        blk.bn.gamma.assign(c_out, T(1));
        blk.bn.beta.assign(c_out, T(0));
        blk.bn.running_mean.assign(c_out, T(0));
        blk.bn.running_var.assign(c_out, T(1));
        blk.pool_h = arch.pool_h;
        blk.pool_w = arch.pool_w;
        blk.pool_sh = arch.pool_h;
        blk.pool_sw = arch.pool_w;
        h = (h - arch.kernel_h) + 1;
        w = (w - arch.kernel_w) + 1;
        if (h < blk.pool_h || w < blk.pool_w)
            throw std::invalid_argument(
                "build_model: spatial dims collapse before pooling");
        h = (h - blk.pool_h) / blk.pool_sh + 1;
        w = (w - blk.pool_w) / blk.pool_sw + 1;
        if (h < 1 || w < 1)
            throw std::invalid_argument("build_model: spatial dims collapse");
        c_in = c_out;
        model.blocks.push_back(std::move(blk));
    }
    const int m = c_in;
    model.head.weight = MatrixT<T>(m, arch.classes);
    model.head.bias.assign(arch.classes, T(0));
    for (auto& v : model.head.weight.data)
        v = static_cast<T>(glorot(m, arch.classes));
    return model;
}

template ModelT<float> build_model<float>(const ArchSpec&, std::uint64_t);
template ModelT<double> build_model<double>(const ArchSpec&, std::uint64_t);

Tensor4 make_batch(const DomainDataset& domain, const std::vector<int>& indices) {
    Tensor4 batch(static_cast<int>(indices.size()), 1, domain.height, domain.width);
    for (std::size_t i = 0; i < indices.size(); ++i)
        std::copy(domain.windows[indices[i]].begin(),
                  domain.windows[indices[i]].end(),
                  batch.data.begin() + i * domain.windows[indices[i]].size());
    return batch;
}

namespace {

// Per-parameter Adam state over the flat model layout.
struct Adam {
    std::vector<double> m, v;
    long step = 0;

    void update(NetworkModel& model, const NetworkModel& grads,
                const TrainConfig& cfg, double lr) {
        if (m.empty()) {
            std::size_t total = 0;
            collect(model, grads,
                    [&total](float*, const float*, std::size_t n) { total += n; });
            m.assign(total, 0.0);
            v.assign(total, 0.0);
        }
        ++step;
        const double bc1 = 1.0 - std::pow(cfg.beta1, step);
        const double bc2 = 1.0 - std::pow(cfg.beta2, step);
        std::size_t off = 0;
        auto apply = [&](float* p, const float* g, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) {
                const double gi = g[i];
                m[off + i] = cfg.beta1 * m[off + i] + (1.0 - cfg.beta1) * gi;
                v[off + i] = cfg.beta2 * v[off + i] + (1.0 - cfg.beta2) * gi * gi;
                const double mhat = m[off + i] / bc1;
                const double vhat = v[off + i] / bc2;
                p[i] -= static_cast<float>(lr * mhat /
                                           (std::sqrt(vhat) + cfg.adam_eps));
            }
            off += n;
        };
        collect(model, grads, apply);
    }

private:
    template <typename Fn>
    static void collect(NetworkModel& model, const NetworkModel& grads, Fn&& fn) {
        for (std::size_t i = 0; i < model.blocks.size(); ++i) {
            auto& b = model.blocks[i];
            const auto& g = grads.blocks[i];
            fn(b.conv.weights.data.data(), g.conv.weights.data.data(),
               b.conv.weights.data.size());
            fn(b.conv.bias.data(), g.conv.bias.data(), b.conv.bias.size());
            fn(b.bn.gamma.data(), g.bn.gamma.data(), b.bn.gamma.size());
            fn(b.bn.beta.data(), g.bn.beta.data(), b.bn.beta.size());
        }
        fn(model.head.weight.data.data(), grads.head.weight.data.data(),
           model.head.weight.data.size());
        fn(model.head.bias.data(), grads.head.bias.data(), model.head.bias.size());
    }
};

struct Pooled {
    DomainDataset data; // all source windows in one pool
};

Pooled pool_sources(const std::vector<const DomainDataset*>& sources) {
    Pooled p;
    p.data.subject = -1;
    p.data.class_count = sources[0]->class_count;
    p.data.height = sources[0]->height;
    p.data.width = sources[0]->width;
    for (const auto* s : sources) {
        if (s->height != p.data.height || s->width != p.data.width ||
            s->class_count != p.data.class_count)
            throw std::invalid_argument("train_erm: inconsistent source shapes");
        p.data.windows.insert(p.data.windows.end(), s->windows.begin(),
                              s->windows.end());
        p.data.labels.insert(p.data.labels.end(), s->labels.begin(),
                             s->labels.end());
    }
    return p;
}

} // namespace

Checkpoint train_erm(const std::vector<const DomainDataset*>& sources,
                     const ArchSpec& arch, const TrainConfig& config) {
    if (sources.empty())
        throw std::invalid_argument("train_erm: no source domains");
    if (config.validation_fraction <= 0.0 || config.validation_fraction >= 1.0)
        throw std::invalid_argument("train_erm: validation fraction out of (0,1)");
    Pooled pool = pool_sources(sources);
    const int n = static_cast<int>(pool.data.size());
    std::mt19937_64 rng(config.seed);

    // Stratified per-class validation holdout.
    std::vector<int> train_idx, val_idx;
    {
        std::vector<std::vector<int>> by_class(pool.data.class_count);
        for (int i = 0; i < n; ++i) by_class[pool.data.labels[i]].push_back(i);
        for (auto& cls : by_class) {
            std::shuffle(cls.begin(), cls.end(), rng);
            const int n_val =
                std::max(1, static_cast<int>(cls.size() * config.validation_fraction));
            for (std::size_t i = 0; i < cls.size(); ++i)
                (static_cast<int>(i) < n_val ? val_idx : train_idx).push_back(cls[i]);
        }
        std::sort(val_idx.begin(), val_idx.end());
        std::sort(train_idx.begin(), train_idx.end());
    }

    NetworkModel model = build_model<float>(arch, config.seed);
    Adam adam;
    Checkpoint best;
    best.validation_loss = std::numeric_limits<double>::infinity();
    best.epoch = -1;

    const Tensor4 val_batch = make_batch(pool.data, val_idx);
    std::vector<int> val_labels(val_idx.size());
    for (std::size_t i = 0; i < val_idx.size(); ++i)
        val_labels[i] = pool.data.labels[val_idx[i]];

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_at(epoch, config);
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        for (std::size_t start = 0; start < train_idx.size();
             start += config.batch_size) {
            const std::size_t end =
                std::min(train_idx.size(), start + config.batch_size);
            std::vector<int> batch_idx(train_idx.begin() + start,
                                       train_idx.begin() + end);
            if (batch_idx.size() < 2) continue; // batch stats need >= 2 samples
            const Tensor4 batch = make_batch(pool.data, batch_idx);
            std::vector<int> labels(batch_idx.size());
            for (std::size_t i = 0; i < batch_idx.size(); ++i)
                labels[i] = pool.data.labels[batch_idx[i]];
            TrainCache<float> cache;
            auto fwd = train_forward(model, batch, cache);
            Matrix dlogits;
            const double loss = softmax_ce_loss(fwd.logits, labels, dlogits);
            if (!std::isfinite(loss))
                throw std::runtime_error("train_erm: loss diverged (NaN/Inf) at epoch " +
                                         std::to_string(epoch));
            NetworkModel grads = backward_pass(model, cache, dlogits);
            adam.update(model, grads, config, lr);
        }
        // Validation loss under eval-mode CBN forward.
        auto vfwd = network_forward(model, val_batch, NormStrategy::cbn());
        Matrix unused;
        const double vloss = softmax_ce_loss(vfwd.logits, val_labels, unused);
        if (vloss < best.validation_loss) {
            best.validation_loss = vloss;
            best.epoch = epoch;
            best.model = model;
        }
    }
    return best;
}

} // namespace oftta
