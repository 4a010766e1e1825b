#include "oftta/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace oftta {

std::int64_t ConfusionMatrix::total() const {
    std::int64_t t = 0;
    for (auto v : counts) t += v;
    return t;
}

double accuracy(const ConfusionMatrix& cm) {
    const std::int64_t t = cm.total();
    if (t == 0) throw std::invalid_argument("accuracy: empty confusion matrix");
    std::int64_t correct = 0;
    for (int k = 0; k < cm.class_count; ++k) correct += cm.at(k, k);
    return static_cast<double>(correct) / static_cast<double>(t);
}

double macro_f1(const ConfusionMatrix& cm) {
    const std::int64_t t = cm.total();
    if (t == 0) throw std::invalid_argument("macro_f1: empty confusion matrix");
    double sum = 0.0;
    for (int k = 0; k < cm.class_count; ++k) {
        std::int64_t tp = cm.at(k, k), row = 0, col = 0;
        for (int j = 0; j < cm.class_count; ++j) {
            row += cm.at(k, j);
            col += cm.at(j, k);
        }
        const double p = col > 0 ? static_cast<double>(tp) / col : 0.0;
        const double r = row > 0 ? static_cast<double>(tp) / row : 0.0;
        sum += (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    return sum / cm.class_count;
}

double mean_entropy(const MatrixT<double>& probabilities) {
    if (probabilities.rows == 0)
        throw std::invalid_argument("mean_entropy: no rows");
    double total = 0.0;
    for (int r = 0; r < probabilities.rows; ++r) {
        double rowsum = 0.0, h = 0.0;
        for (int c = 0; c < probabilities.cols; ++c) {
            const double p = probabilities.at(r, c);
            if (p < 0.0)
                throw std::invalid_argument("mean_entropy: negative probability at row " +
                                            std::to_string(r));
            rowsum += p;
            if (p > 0.0) h -= p * std::log(p);
        }
        if (std::abs(rowsum - 1.0) > 1e-5)
            throw std::invalid_argument("mean_entropy: row " + std::to_string(r) +
                                        " sums to " + std::to_string(rowsum));
        total += h;
    }
    return total / probabilities.rows;
}

namespace {

// Column-centered copy.
MatrixT<double> center(const MatrixT<double>& x) {
    MatrixT<double> out(x.rows, x.cols);
    for (int c = 0; c < x.cols; ++c) {
        double mean = 0.0;
        for (int r = 0; r < x.rows; ++r) mean += x.at(r, c);
        mean /= x.rows;
        for (int r = 0; r < x.rows; ++r) out.at(r, c) = x.at(r, c) - mean;
    }
    return out;
}

// ||A^T B||_F^2 for column-centered A (N x da), B (N x db).
double cross_frob_sq(const MatrixT<double>& a, const MatrixT<double>& b) {
    double total = 0.0;
    for (int i = 0; i < a.cols; ++i)
        for (int j = 0; j < b.cols; ++j) {
            double dot = 0.0;
            for (int r = 0; r < a.rows; ++r) dot += a.at(r, i) * b.at(r, j);
            total += dot * dot;
        }
    return total;
}

} // namespace

double linear_cka(const MatrixT<double>& x, const MatrixT<double>& y) {
    if (x.rows != y.rows)
        throw std::invalid_argument("linear_cka: row counts differ");
    if (x.rows < 2)
        throw std::invalid_argument("linear_cka: need at least 2 rows");
    const MatrixT<double> xc = center(x), yc = center(y);
    const double xx = cross_frob_sq(xc, xc);
    const double yy = cross_frob_sq(yc, yc);
    if (xx == 0.0 || yy == 0.0) return 0.0; // zero-variance input
    return cross_frob_sq(yc, xc) / (std::sqrt(xx) * std::sqrt(yy));
}

} // namespace oftta
