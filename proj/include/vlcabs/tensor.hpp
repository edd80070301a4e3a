#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vlcabs/errors.hpp"

namespace vlcabs {

// Norms at or below this are treated as zero (cannot be normalized).
inline constexpr double kNormEps = 1e-12;

// Dense row-major matrix. Storage is 32-bit by default; every reduction
// over it (dot products, norms, softmax denominators) accumulates in
// 64-bit. MatrixT<double> is used by the 64-bit shadow paths and oracles.
template <typename T>
struct MatrixT {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    MatrixT() = default;
    MatrixT(std::size_t r, std::size_t c, T fill = T{})
        : rows(r), cols(c), data(r * c, fill) {}

    T& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    const T& at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<T> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const T> row(std::size_t i) const {
        return {data.data() + i * cols, cols};
    }

    bool same_shape(const MatrixT& other) const {
        return rows == other.rows && cols == other.cols;
    }
};

using DenseMatrix = MatrixT<float>;
using DenseMatrix64 = MatrixT<double>;

// 2-D scalar field (similarity maps, masks), row-major, height x width.
struct Grid2D {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;

    Grid2D() = default;
    Grid2D(std::size_t h, std::size_t w, float fill = 0.0f)
        : height(h), width(w), values(h * w, fill) {}

    float& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
    float at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
    bool empty() const { return height == 0 || width == 0; }
};

template <typename T>
void check_finite(std::span<const T> v, const char* what) {
    for (const T& x : v) {
        if (!std::isfinite(static_cast<double>(x))) {
            throw NonFiniteError(std::string("non-finite value in ") + what);
        }
    }
}

template <typename T>
void check_finite(const MatrixT<T>& m, const char* what) {
    check_finite(std::span<const T>(m.data), what);
}

// --- reduction kernels (64-bit accumulation regardless of T) ---

template <typename A, typename B>
double dot_acc(std::span<const A> a, std::span<const B> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

template <typename T>
double squared_norm_acc(std::span<const T> v) {
    double acc = 0.0;
    for (const T& x : v) {
        acc += static_cast<double>(x) * static_cast<double>(x);
    }
    return acc;
}

template <typename T>
double norm_acc(std::span<const T> v) {
    return std::sqrt(squared_norm_acc(v));
}

// Normalizes `in` into `out` and returns the 64-bit norm. Throws ZeroNorm
// when the norm is at or below kNormEps.
template <typename T>
double l2_normalize_to(std::span<const T> in, std::span<T> out) {
    const double n = norm_acc(in);
    if (n <= kNormEps) {
        throw ZeroNormError("cannot normalize a (near-)zero vector");
    }
    const double inv = 1.0 / n;
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = static_cast<T>(static_cast<double>(in[i]) * inv);
    }
    return n;
}

inline std::vector<float> l2_normalize(std::span<const float> v) {
    std::vector<float> out(v.size());
    l2_normalize_to<float>(v, out);
    return out;
}

// In-place stable softmax: max subtraction, 64-bit exponentials and sum.
template <typename T>
void softmax_inplace(std::span<T> x) {
    if (x.empty()) return;
    double mx = -std::numeric_limits<double>::infinity();
    for (const T& v : x) mx = std::max(mx, static_cast<double>(v));
    double sum = 0.0;
    std::vector<double> e(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        e[i] = std::exp(static_cast<double>(x[i]) - mx);
        sum += e[i];
    }
    const double inv = 1.0 / sum;
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = static_cast<T>(e[i] * inv);
    }
}

inline std::vector<float> stable_softmax(std::span<const float> x) {
    check_finite(x, "softmax input");
    std::vector<float> out(x.begin(), x.end());
    softmax_inplace<float>(out);
    return out;
}

inline double sigmoid(double x) {
    // split on sign so exp never overflows
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline float sigmoid(float x) { return static_cast<float>(sigmoid(static_cast<double>(x))); }

inline Grid2D sigmoid(const Grid2D& g) {
    Grid2D out(g.height, g.width);
    for (std::size_t i = 0; i < g.values.size(); ++i) {
        out.values[i] = sigmoid(g.values[i]);
    }
    return out;
}

// Corner-aligned bilinear resampling: source coordinate of destination
// index d is d * (src_dim - 1) / (dst_dim - 1); a 1-wide destination takes
// index 0. Interpolation runs in 64-bit with the a + t*(b-a) form, so
// outputs at exact grid points reproduce the source values and constant
// grids pass through unchanged.
inline Grid2D bilinear_resize(const Grid2D& src, std::size_t dst_height,
                              std::size_t dst_width) {
    if (src.empty()) {
        throw EmptyGridError("bilinear_resize: source grid is empty");
    }
    if (dst_height == 0 || dst_width == 0) {
        throw EmptyGridError("bilinear_resize: destination dims must be >= 1");
    }
    if (dst_height == src.height && dst_width == src.width) {
        return src;
    }

    Grid2D out(dst_height, dst_width);
    const double sy = dst_height > 1
        ? static_cast<double>(src.height - 1) / static_cast<double>(dst_height - 1)
        : 0.0;
    const double sx = dst_width > 1
        ? static_cast<double>(src.width - 1) / static_cast<double>(dst_width - 1)
        : 0.0;

    for (std::size_t y = 0; y < dst_height; ++y) {
        const double fy = static_cast<double>(y) * sy;
        std::size_t y0 = static_cast<std::size_t>(fy);
        if (y0 >= src.height - 1 && src.height > 1) y0 = src.height - 2;
        const std::size_t y1 = src.height > 1 ? y0 + 1 : y0;
        const double ty = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < dst_width; ++x) {
            const double fx = static_cast<double>(x) * sx;
            std::size_t x0 = static_cast<std::size_t>(fx);
            if (x0 >= src.width - 1 && src.width > 1) x0 = src.width - 2;
            const std::size_t x1 = src.width > 1 ? x0 + 1 : x0;
            const double tx = fx - static_cast<double>(x0);

            const double v00 = src.at(y0, x0);
            const double v01 = src.at(y0, x1);
            const double v10 = src.at(y1, x0);
            const double v11 = src.at(y1, x1);
            const double top = v00 + tx * (v01 - v00);
            const double bot = v10 + tx * (v11 - v10);
            out.at(y, x) = static_cast<float>(top + ty * (bot - top));
        }
    }
    return out;
}

}  // namespace vlcabs
