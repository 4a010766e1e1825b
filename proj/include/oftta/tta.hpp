#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oftta/data.hpp"
#include "oftta/layers.hpp"
#include "oftta/metrics.hpp"
#include "oftta/normalization.hpp"
#include "oftta/prototype.hpp"

namespace oftta {

enum class TtaMethod { ERM, BN, T3A, AlphaBN, OFTTA };

std::string method_name(TtaMethod m);
TtaMethod method_from_name(const std::string& name);
bool method_uses_prototypes(TtaMethod m);

struct AdaptationConfig {
    TtaMethod method = TtaMethod::OFTTA;
    int batch_size = 64;
    int support_capacity = 25;   // M; -1 = unbounded
    double alpha = 0.5;          // AlphaBN mixing ratio
    double edtn_bottom = 0.1;
    double edtn_top = 1.0;
    std::uint64_t seed = 1;      // shuffles sample order within a domain stream
    double bs1_alpha_floor = 0.6; // EDTN floor when batch_size == 1
    bool reset_at_boundary = false; // CTTA: reset adaptation state per domain
};

struct BatchRecord {
    int index = 0;
    std::vector<int> predictions;
    std::vector<int> labels;
    double mean_entropy = 0.0;
    double elapsed_ms = 0.0;
};

struct StreamResult {
    std::vector<BatchRecord> batches;
    ConfusionMatrix confusion;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    double mean_entropy = 0.0;
    double mean_batch_ms = 0.0;
    std::size_t total = 0;
};

struct LooaResult {
    std::vector<StreamResult> per_domain;
    double avg_accuracy = 0.0;
    double avg_macro_f1 = 0.0;
};

struct CttaResult {
    std::vector<StreamResult> per_domain; // sliced from one continuous stream
    double avg_accuracy = 0.0;
    double avg_macro_f1 = 0.0;
};

NormStrategy strategy_for(const AdaptationConfig& config);

// FNV-1a over every parameter and running statistic, used to assert the
// optimization-free invariant.
std::uint64_t model_param_hash(const NetworkModel& model);

// One-pass streaming adaptation over a single domain: shuffle by seed,
// consecutive batches (short trailing batch kept), predictions recorded at
// visit time, labels consulted only for metrics.
StreamResult run_stream(const NetworkModel& model, const DomainDataset& domain,
                        const AdaptationConfig& config);

// As run_stream but with caller-owned adaptation state (CTTA persistence).
// `state` may be null for linear-head methods.
StreamResult run_stream_with_state(const NetworkModel& model,
                                   const DomainDataset& domain,
                                   const AdaptationConfig& config,
                                   SupportSet* state);

// models[i] is trained on the complement of domains[i].
LooaResult run_looa(const std::vector<NetworkModel>& models,
                    const std::vector<const DomainDataset*>& domains,
                    const AdaptationConfig& config);

// Single adaptation state persists across the target sequence (unless
// config.reset_at_boundary).
CttaResult run_ctta(const NetworkModel& model,
                    const std::vector<const DomainDataset*>& targets,
                    const AdaptationConfig& config);

// BS=1 convenience wrapper: predicts one window under the configured method.
int adapt_single_instance(const NetworkModel& model, const std::vector<float>& window,
                          int height, int width, const AdaptationConfig& config,
                          SupportSet* state);

struct BenchEntry {
    TtaMethod method;
    double mean_ms = 0.0;
    double std_ms = 0.0;
    std::size_t support_bytes = 0; // analytic support-set footprint
};

struct BenchReport {
    std::vector<BenchEntry> entries;
    int repetitions = 0;
};

// Wall time per batch around the full adaptation step (forward + classifier
// update), warm-up batch excluded; serialized on one thread.
BenchReport benchmark(const std::vector<TtaMethod>& methods,
                      const NetworkModel& model, const DomainDataset& domain,
                      const AdaptationConfig& config, int repetitions);

} // namespace oftta
