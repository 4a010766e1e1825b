#include "oftta/tta.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "oftta/network.hpp"
#include "oftta/softmax.hpp"
#include "oftta/trainer.hpp"

namespace oftta {

std::string method_name(TtaMethod m) {
    switch (m) {
    case TtaMethod::ERM: return "erm";
    case TtaMethod::BN: return "bn";
    case TtaMethod::T3A: return "t3a";
    case TtaMethod::AlphaBN: return "alpha-bn";
    case TtaMethod::OFTTA: return "oftta";
    }
    return "?";
}

TtaMethod method_from_name(const std::string& name) {
    if (name == "erm") return TtaMethod::ERM;
    if (name == "bn") return TtaMethod::BN;
    if (name == "t3a") return TtaMethod::T3A;
    if (name == "alpha-bn") return TtaMethod::AlphaBN;
    if (name == "oftta") return TtaMethod::OFTTA;
    throw std::invalid_argument("unknown method '" + name + "'");
}

bool method_uses_prototypes(TtaMethod m) {
    return m == TtaMethod::T3A || m == TtaMethod::OFTTA;
}

NormStrategy strategy_for(const AdaptationConfig& config) {
    switch (config.method) {
    case TtaMethod::ERM:
    case TtaMethod::T3A:
        return NormStrategy::cbn();
    case TtaMethod::BN:
        return NormStrategy::tbn();
    case TtaMethod::AlphaBN:
        return NormStrategy::alpha_const(config.alpha);
    case TtaMethod::OFTTA:
        return NormStrategy::edtn(config.edtn_bottom, config.edtn_top,
                                  config.batch_size == 1 ? config.bs1_alpha_floor
                                                         : 0.0);
    }
    throw std::logic_error("strategy_for: unknown method");
}

std::uint64_t model_param_hash(const NetworkModel& model) {
    std::uint64_t h = 1469598103934665603ull; // FNV-1a
    auto mix = [&h](const void* data, std::size_t bytes) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < bytes; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    auto mixv = [&mix](const std::vector<float>& v) {
        mix(v.data(), v.size() * sizeof(float));
    };
    for (const auto& blk : model.blocks) {
        mixv(blk.conv.weights.data);
        mixv(blk.conv.bias);
        mixv(blk.bn.gamma);
        mixv(blk.bn.beta);
        mixv(blk.bn.running_mean);
        mixv(blk.bn.running_var);
    }
    mixv(model.head.weight.data);
    mixv(model.head.bias);
    return h;
}

namespace {

struct StreamAccumulator {
    ConfusionMatrix cm;
    double entropy_sum = 0.0;
    std::size_t count = 0;
    std::vector<BatchRecord> batches;

    explicit StreamAccumulator(int k) : cm(k) {}

    void add(BatchRecord&& rec) {
        for (std::size_t i = 0; i < rec.predictions.size(); ++i)
            cm.add(rec.labels[i], rec.predictions[i]);
        entropy_sum += rec.mean_entropy * rec.predictions.size();
        count += rec.predictions.size();
        batches.push_back(std::move(rec));
    }

    StreamResult finish() {
        StreamResult r;
        r.confusion = cm;
        r.accuracy = accuracy(cm);
        r.macro_f1 = macro_f1(cm);
        r.mean_entropy = count ? entropy_sum / count : 0.0;
        r.total = count;
        double ms = 0.0;
        for (const auto& b : batches) ms += b.elapsed_ms;
        r.mean_batch_ms = batches.empty() ? 0.0 : ms / batches.size();
        r.batches = std::move(batches);
        return r;
    }
};

// Predict one batch and update adaptation state. `state` is required for
// prototype methods.
BatchRecord process_batch(const NetworkModel& model, const Tensor4& batch,
                          const std::vector<int>& labels,
                          const NormStrategy& strategy, TtaMethod method,
                          int capacity, SupportSet* state, int index) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto fwd = network_forward(model, batch, strategy);
    BatchRecord rec;
    rec.index = index;
    rec.labels = labels;
    const int k = model.class_count;
    double entropy_sum = 0.0;
    if (method_uses_prototypes(method)) {
        if (!state)
            throw std::invalid_argument("process_batch: missing support set state");
        const AdaptResult r = adapt_batch(*state, fwd.features, capacity);
        rec.predictions = r.labels;
        for (float e : r.entropies) entropy_sum += e;
    } else {
        rec.predictions.resize(batch.b);
        for (int ib = 0; ib < batch.b; ++ib) {
            rec.predictions[ib] = argmax_row(fwd.logits.row(ib), k);
            entropy_sum += softmax_entropy(fwd.logits.row(ib), k);
        }
    }
    const auto t1 = std::chrono::steady_clock::now();
    rec.mean_entropy = entropy_sum / batch.b;
    rec.elapsed_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    return rec;
}

std::vector<int> shuffled_order(std::size_t n, std::uint64_t seed) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

void validate(const NetworkModel& model, const DomainDataset& domain,
              const AdaptationConfig& config) {
    if (domain.size() == 0)
        throw std::invalid_argument("run_stream: empty domain");
    if (model.class_count != domain.class_count)
        throw std::invalid_argument("run_stream: model/domain class counts differ");
    if (config.batch_size < 1)
        throw std::invalid_argument("run_stream: batch size must be >= 1");
    if (config.support_capacity != -1 && config.support_capacity < 1)
        throw std::invalid_argument("run_stream: capacity must be >= 1 or -1");
}

} // namespace

StreamResult run_stream_with_state(const NetworkModel& model,
                                   const DomainDataset& domain,
                                   const AdaptationConfig& config,
                                   SupportSet* state) {
    validate(model, domain, config);
    const NormStrategy strategy = strategy_for(config);
    const auto order = shuffled_order(domain.size(), config.seed);
    StreamAccumulator acc(model.class_count);
    int index = 0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
        const std::size_t end =
            std::min(order.size(), start + config.batch_size);
        std::vector<int> idx(order.begin() + start, order.begin() + end);
        const Tensor4 batch = make_batch(domain, idx);
        std::vector<int> labels(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i)
            labels[i] = domain.labels[idx[i]];
        acc.add(process_batch(model, batch, labels, strategy, config.method,
                              config.support_capacity, state, index++));
    }
    return acc.finish();
}

StreamResult run_stream(const NetworkModel& model, const DomainDataset& domain,
                        const AdaptationConfig& config) {
    if (method_uses_prototypes(config.method)) {
        SupportSet state = init_support(model.head);
        return run_stream_with_state(model, domain, config, &state);
    }
    return run_stream_with_state(model, domain, config, nullptr);
}

LooaResult run_looa(const std::vector<NetworkModel>& models,
                    const std::vector<const DomainDataset*>& domains,
                    const AdaptationConfig& config) {
    if (models.size() != domains.size())
        throw std::invalid_argument("run_looa: one model per held-out domain required");
    LooaResult out;
    for (std::size_t i = 0; i < domains.size(); ++i)
        out.per_domain.push_back(run_stream(models[i], *domains[i], config));
    for (const auto& r : out.per_domain) {
        out.avg_accuracy += r.accuracy;
        out.avg_macro_f1 += r.macro_f1;
    }
    out.avg_accuracy /= out.per_domain.size();
    out.avg_macro_f1 /= out.per_domain.size();
    return out;
}

CttaResult run_ctta(const NetworkModel& model,
                    const std::vector<const DomainDataset*>& targets,
                    const AdaptationConfig& config) {
    if (targets.empty())
        throw std::invalid_argument("run_ctta: empty target sequence");
    CttaResult out;
    SupportSet state;
    const bool proto = method_uses_prototypes(config.method);
    if (proto) state = init_support(model.head);
    for (const auto* target : targets) {
        if (proto && config.reset_at_boundary) state = init_support(model.head);
        out.per_domain.push_back(
            run_stream_with_state(model, *target, config, proto ? &state : nullptr));
    }
    for (const auto& r : out.per_domain) {
        out.avg_accuracy += r.accuracy;
        out.avg_macro_f1 += r.macro_f1;
    }
    out.avg_accuracy /= out.per_domain.size();
    out.avg_macro_f1 /= out.per_domain.size();
    return out;
}

int adapt_single_instance(const NetworkModel& model, const std::vector<float>& window,
                          int height, int width, const AdaptationConfig& config,
                          SupportSet* state) {
    if (static_cast<std::size_t>(height) * width != window.size())
        throw std::invalid_argument("adapt_single_instance: window size mismatch");
    AdaptationConfig cfg = config;
    cfg.batch_size = 1;
    Tensor4 batch(1, 1, height, width);
    std::copy(window.begin(), window.end(), batch.data.begin());
    const NormStrategy strategy = strategy_for(cfg);
    const auto fwd = network_forward(model, batch, strategy);
    if (method_uses_prototypes(cfg.method)) {
        if (!state)
            throw std::invalid_argument("adapt_single_instance: missing state");
        return adapt_batch(*state, fwd.features, cfg.support_capacity).labels[0];
    }
    return argmax_row(fwd.logits.row(0), model.class_count);
}

BenchReport benchmark(const std::vector<TtaMethod>& methods,
                      const NetworkModel& model, const DomainDataset& domain,
                      const AdaptationConfig& config, int repetitions) {
    if (repetitions < 3)
        throw std::invalid_argument("benchmark: need >= 3 repetitions");
    BenchReport report;
    report.repetitions = repetitions;
    // Interleave methods within each repetition round so slow machine-state
    // drift (cache/branch-predictor warm-up, frequency scaling) spreads evenly
    // across methods instead of biasing whichever method is measured first.
    std::vector<std::vector<double>> per_run_ms(methods.size());
    for (int rep = 0; rep < repetitions; ++rep)
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            AdaptationConfig cfg = config;
            cfg.method = methods[mi];
            const StreamResult r = run_stream(model, domain, cfg);
            double total = 0.0;
            std::size_t n = 0;
            for (std::size_t bi = 1; bi < r.batches.size(); ++bi) { // skip warm-up
                total += r.batches[bi].elapsed_ms;
                ++n;
            }
            per_run_ms[mi].push_back(n ? total / n : r.mean_batch_ms);
        }
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        const TtaMethod m = methods[mi];
        AdaptationConfig cfg = config;
        cfg.method = m;
        std::size_t support_bytes = 0;
        if (method_uses_prototypes(m)) {
            SupportSet state = init_support(model.head);
            run_stream_with_state(model, domain, cfg, &state);
            support_bytes = state.memory_bytes();
        }
        BenchEntry entry;
        entry.method = m;
        const std::vector<double>& runs = per_run_ms[mi];
        const double mean =
            std::accumulate(runs.begin(), runs.end(), 0.0) / runs.size();
        double var = 0.0;
        for (double v : runs) var += (v - mean) * (v - mean);
        entry.mean_ms = mean;
        entry.std_ms = std::sqrt(var / runs.size());
        entry.support_bytes = support_bytes;
        report.entries.push_back(entry);
    }
    return report;
}

} // namespace oftta
