#include "oftta/prototype.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "oftta/softmax.hpp"

namespace oftta {

std::size_t SupportSet::total_entries() const {
    std::size_t n = 0;
    for (const auto& cls : per_class) n += cls.size();
    return n;
}

std::size_t SupportSet::memory_bytes() const {
    std::size_t bytes = 0;
    for (const auto& cls : per_class)
        for (const auto& e : cls)
            bytes += e.feature.size() * sizeof(float) + sizeof(float) +
                     sizeof(std::int64_t);
    return bytes;
}

namespace {

double l2_norm(const float* v, int m) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += static_cast<double>(v[i]) * v[i];
    return std::sqrt(s);
}

bool all_finite(const float* v, int m) {
    for (int i = 0; i < m; ++i)
        if (!std::isfinite(v[i])) return false;
    return true;
}

} // namespace

SupportSet init_support(const LinearHead& head) {
    const int m = head.weight.rows;
    const int k = head.weight.cols;
    SupportSet set;
    set.per_class.resize(k);
    for (int j = 0; j < k; ++j) {
        SupportEntry e;
        e.feature.resize(m);
        double norm = 0.0;
        for (int i = 0; i < m; ++i) {
            e.feature[i] = head.weight.at(i, j);
            norm += static_cast<double>(e.feature[i]) * e.feature[i];
        }
        norm = std::sqrt(norm);
        if (norm == 0.0)
            throw std::invalid_argument("init_support: zero weight column for class " +
                                        std::to_string(j));
        for (int i = 0; i < m; ++i)
            e.feature[i] = static_cast<float>(e.feature[i] / norm);
        e.entropy = 0.0f; // seed entries are maximally trusted
        e.seq = set.next_seq++;
        set.per_class[j].push_back(std::move(e));
    }
    return set;
}

PrototypeSet centroids(const SupportSet& set) {
    const int k = set.class_count();
    if (k == 0) throw std::invalid_argument("centroids: empty support set");
    const int m = static_cast<int>(set.per_class[0].empty()
                                       ? 0
                                       : set.per_class[0][0].feature.size());
    PrototypeSet p;
    p.centroids = Matrix(k, m);
    for (int j = 0; j < k; ++j) {
        const auto& cls = set.per_class[j];
        if (cls.empty())
            throw std::logic_error("centroids: class " + std::to_string(j) +
                                   " has no support entries");
        for (int i = 0; i < m; ++i) {
            double acc = 0.0;
            for (const auto& e : cls) acc += e.feature[i];
            p.centroids.at(j, i) = static_cast<float>(acc / cls.size());
        }
    }
    return p;
}

ClassifyResult classify(const Matrix& features, const PrototypeSet& prototypes) {
    const int b = features.rows;
    const int m = features.cols;
    const int k = prototypes.centroids.rows;
    if (prototypes.centroids.cols != m)
        throw std::invalid_argument("classify: feature dim mismatch");
    std::vector<double> proto_norm(k);
    for (int j = 0; j < k; ++j) {
        proto_norm[j] = l2_norm(prototypes.centroids.row(j), m);
        if (proto_norm[j] == 0.0)
            throw std::invalid_argument("classify: zero centroid for class " +
                                        std::to_string(j));
    }
    ClassifyResult r;
    r.logits = Matrix(b, k);
    r.labels.resize(b);
    r.entropies.resize(b);
    for (int ib = 0; ib < b; ++ib) {
        const float* f = features.row(ib);
        const double fn = l2_norm(f, m);
        if (fn == 0.0)
            throw std::invalid_argument("classify: zero feature vector at row " +
                                        std::to_string(ib));
        for (int j = 0; j < k; ++j) {
            double dot = 0.0;
            const float* c = prototypes.centroids.row(j);
            for (int i = 0; i < m; ++i) dot += static_cast<double>(f[i]) * c[i];
            r.logits.at(ib, j) = static_cast<float>(dot / (fn * proto_norm[j]));
        }
        r.labels[ib] = argmax_row(r.logits.row(ib), k);
        r.entropies[ib] = static_cast<float>(softmax_entropy(r.logits.row(ib), k));
    }
    return r;
}

std::vector<int> pseudo_label(const Matrix& features, const PrototypeSet& prototypes) {
    return classify(features, prototypes).labels;
}

void insert(SupportSet& set, const Matrix& features, const std::vector<int>& labels,
            const std::vector<float>& entropies) {
    const int b = features.rows;
    const int m = features.cols;
    if (static_cast<int>(labels.size()) != b ||
        static_cast<int>(entropies.size()) != b)
        throw std::invalid_argument("insert: batch size mismatch");
    for (int ib = 0; ib < b; ++ib) {
        const float* f = features.row(ib);
        if (!all_finite(f, m)) {
            ++set.skipped_nonfinite;
            continue;
        }
        const int k = labels[ib];
        if (k < 0 || k >= set.class_count())
            throw std::invalid_argument("insert: label out of range");
        const double norm = l2_norm(f, m);
        if (norm == 0.0) {
            ++set.skipped_nonfinite;
            continue;
        }
        SupportEntry e;
        e.feature.resize(m);
        for (int i = 0; i < m; ++i)
            e.feature[i] = static_cast<float>(f[i] / norm);
        e.entropy = entropies[ib];
        e.seq = set.next_seq++;
        set.per_class[k].push_back(std::move(e));
    }
}

void filter_by_entropy(SupportSet& set, int capacity) {
    if (capacity == -1) return;
    if (capacity < 1)
        throw std::invalid_argument("filter_by_entropy: capacity must be >= 1 or -1");
    for (auto& cls : set.per_class) {
        if (static_cast<int>(cls.size()) <= capacity) continue;
        std::vector<std::size_t> order(cls.size());
        for (std::size_t i = 0; i < cls.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&cls](std::size_t a, std::size_t b) {
                             if (cls[a].entropy != cls[b].entropy)
                                 return cls[a].entropy < cls[b].entropy;
                             return cls[a].seq < cls[b].seq;
                         });
        order.resize(capacity);
        std::sort(order.begin(), order.end()); // retained order = ascending seq
        std::vector<SupportEntry> kept;
        kept.reserve(capacity);
        for (std::size_t i : order) kept.push_back(std::move(cls[i]));
        cls = std::move(kept);
    }
}

AdaptResult adapt_batch(SupportSet& set, const Matrix& features, int capacity) {
    if (features.rows == 0)
        throw std::invalid_argument("adapt_batch: empty batch");
    const ClassifyResult pre = classify(features, centroids(set));
    insert(set, features, pre.labels, pre.entropies);
    filter_by_entropy(set, capacity);
    const ClassifyResult post = classify(features, centroids(set));
    AdaptResult r;
    r.labels = post.labels;
    r.logits = post.logits;
    r.entropies = post.entropies;
    return r;
}

} // namespace oftta
