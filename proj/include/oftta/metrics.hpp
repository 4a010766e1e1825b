#pragma once

#include <cstdint>
#include <vector>

#include "oftta/tensor.hpp"

namespace oftta {

struct ConfusionMatrix {
    int class_count = 0;
    std::vector<std::int64_t> counts; // K x K, rows = true, cols = predicted

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int k)
        : class_count(k), counts(static_cast<std::size_t>(k) * k, 0) {}

    std::int64_t& at(int truth, int pred) {
        return counts[static_cast<std::size_t>(truth) * class_count + pred];
    }
    std::int64_t at(int truth, int pred) const {
        return counts[static_cast<std::size_t>(truth) * class_count + pred];
    }
    void add(int truth, int pred) { ++at(truth, pred); }
    std::int64_t total() const;
};

double accuracy(const ConfusionMatrix& cm);

// Unweighted mean of per-class F1; F1 := 0 when precision + recall = 0,
// classes absent from both truth and prediction still contribute 0.
double macro_f1(const ConfusionMatrix& cm);

// Mean of -sum p ln p over rows; every row must sum to 1 within 1e-5.
double mean_entropy(const MatrixT<double>& probabilities);

// Linear CKA between two feature matrices with N matching rows; columns are
// centered internally. Zero-variance input yields 0.
double linear_cka(const MatrixT<double>& x, const MatrixT<double>& y);

} // namespace oftta
