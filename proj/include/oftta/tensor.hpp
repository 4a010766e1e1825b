#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace oftta {

// Dense rank-4 array, (batch, channel, height, width), row-major.
template <typename T>
struct Tensor4T {
    std::vector<T> data;
    int b = 0, c = 0, h = 0, w = 0;

    Tensor4T() = default;
    Tensor4T(int b_, int c_, int h_, int w_)
        : data(static_cast<std::size_t>(b_) * c_ * h_ * w_, T(0)),
          b(b_), c(c_), h(h_), w(w_) {
        if (b_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
            throw std::invalid_argument("Tensor4: negative dimension");
    }

    std::size_t size() const { return data.size(); }

    T& at(int ib, int ic, int ih, int iw) {
        return data[idx(ib, ic, ih, iw)];
    }
    const T& at(int ib, int ic, int ih, int iw) const {
        return data[idx(ib, ic, ih, iw)];
    }

    std::size_t idx(int ib, int ic, int ih, int iw) const {
        return ((static_cast<std::size_t>(ib) * c + ic) * h + ih) * w + iw;
    }

    std::string shape_str() const {
        return "(" + std::to_string(b) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

// Row-major 2-D matrix (rows x cols).
template <typename T>
struct MatrixT {
    std::vector<T> data;
    int rows = 0, cols = 0;

    MatrixT() = default;
    MatrixT(int r, int c)
        : data(static_cast<std::size_t>(r) * c, T(0)), rows(r), cols(c) {}

    T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    const T& at(int r, int c) const {
        return data[static_cast<std::size_t>(r) * cols + c];
    }
    const T* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
    T* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
};

using Tensor4 = Tensor4T<float>;
using Matrix = MatrixT<float>;

} // namespace oftta
