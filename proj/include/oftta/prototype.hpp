#pragma once

#include <cstdint>
#include <vector>

#include "oftta/layers.hpp"
#include "oftta/tensor.hpp"

namespace oftta {

struct SupportEntry {
    std::vector<float> feature; // unit L2 norm, length m
    float entropy = 0.0f;       // softmax entropy at insertion time, nats
    std::int64_t seq = 0;       // monotone insertion counter
};

struct SupportSet {
    std::vector<std::vector<SupportEntry>> per_class; // S^k, k = 0..K-1
    std::int64_t next_seq = 0;
    std::int64_t skipped_nonfinite = 0; // non-finite features dropped on insert

    int class_count() const { return static_cast<int>(per_class.size()); }
    std::size_t total_entries() const;
    // Analytic footprint: stored floats plus per-entry bookkeeping.
    std::size_t memory_bytes() const;
};

struct PrototypeSet {
    Matrix centroids; // K x m, arithmetic means, not re-normalized
};

struct ClassifyResult {
    Matrix logits;                // B x K cosine similarities
    std::vector<int> labels;      // argmax, ties toward smallest index
    std::vector<float> entropies; // softmax entropy of the cosine logits, nats
};

struct AdaptResult {
    std::vector<int> labels;      // final predictions (post-update prototypes)
    Matrix logits;
    std::vector<float> entropies; // entropies of the final predictions
};

// Seeds each class set with the unit-normalized head weight column (entropy 0).
SupportSet init_support(const LinearHead& head);

PrototypeSet centroids(const SupportSet& set);

ClassifyResult classify(const Matrix& features, const PrototypeSet& prototypes);

std::vector<int> pseudo_label(const Matrix& features, const PrototypeSet& prototypes);

// Appends each normalized feature to its pseudo-class list; non-finite
// features are skipped and counted, never fatal.
void insert(SupportSet& set, const Matrix& features, const std::vector<int>& labels,
            const std::vector<float>& entropies);

// Keeps the min(M, |S^k|) lowest-entropy entries per class, ties broken toward
// the older entry; M = -1 leaves the set unchanged. Retained order = ascending seq.
void filter_by_entropy(SupportSet& set, int capacity);

// Algorithm steps in order: pseudo-label against pre-batch prototypes, insert,
// filter, recompute prototypes, predict against post-update prototypes.
AdaptResult adapt_batch(SupportSet& set, const Matrix& features, int capacity);

} // namespace oftta
