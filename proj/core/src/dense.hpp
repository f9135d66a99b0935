#pragma once

// Minimal dense helpers for the model's small fixed-size layers.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace provlens::dense {

/// Row-major view of a (rows x cols) matrix stored inside a flat buffer.
template <typename T>
struct MatView {
    T* data = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;

    T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<T> row(std::size_t r) const { return {data + r * cols, cols}; }
};

using ConstMat = MatView<const double>;
using Mat = MatView<double>;

/// out = W x + b
inline void affine(ConstMat w, std::span<const double> b, std::span<const double> x,
                   std::span<double> out) {
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double* wr = w.data + r * w.cols;
        double acc = b.empty() ? 0.0 : b[r];
        for (std::size_t c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
        out[r] = acc;
    }
}

/// out += W^T g
inline void accumulate_transpose(ConstMat w, std::span<const double> g, std::span<double> out) {
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double gr = g[r];
        if (gr == 0.0) continue;
        const double* wr = w.data + r * w.cols;
        for (std::size_t c = 0; c < w.cols; ++c) out[c] += wr[c] * gr;
    }
}

/// W += scale * g x^T
inline void accumulate_outer(Mat w, std::span<const double> g, std::span<const double> x,
                             double scale = 1.0) {
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double gr = g[r] * scale;
        if (gr == 0.0) continue;
        double* wr = w.data + r * w.cols;
        for (std::size_t c = 0; c < w.cols; ++c) wr[c] += gr * x[c];
    }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace provlens::dense
