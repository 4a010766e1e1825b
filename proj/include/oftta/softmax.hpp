#pragma once

#include <cmath>
#include <vector>

#include "oftta/tensor.hpp"

namespace oftta {

// Softmax of one logit row at temperature 1.
template <typename T>
std::vector<double> softmax_row(const T* logits, int k) {
    double mx = logits[0];
    for (int i = 1; i < k; ++i) mx = std::max<double>(mx, logits[i]);
    std::vector<double> p(k);
    double z = 0.0;
    for (int i = 0; i < k; ++i) {
        p[i] = std::exp(static_cast<double>(logits[i]) - mx);
        z += p[i];
    }
    for (int i = 0; i < k; ++i) p[i] /= z;
    return p;
}

// Shannon entropy in nats, 0*ln 0 := 0.
inline double entropy_nats(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

template <typename T>
double softmax_entropy(const T* logits, int k) {
    return entropy_nats(softmax_row(logits, k));
}

// argmax with ties broken toward the smallest index.
template <typename T>
int argmax_row(const T* v, int k) {
    int best = 0;
    for (int i = 1; i < k; ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

} // namespace oftta
