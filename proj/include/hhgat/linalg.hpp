#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace hhgat {

using Vec = std::vector<double>;

/// Dense row-major matrix. Vectors are plain `Vec`.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw StructuralError("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double sq_norm(std::span<const double> a) {
    double s = 0.0;
    for (double x : a) s += x * x;
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(sq_norm(a)); }

/// y = M x
inline Vec matvec(std::span<const double> m, std::size_t rows, std::size_t cols,
                  std::span<const double> x) {
    if (x.size() != cols || m.size() != rows * cols)
        throw StructuralError("matvec: matrix is " + std::to_string(rows) + "x" +
                              std::to_string(cols) + ", vector has length " +
                              std::to_string(x.size()));
    Vec y(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = m.data() + r * cols;
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += row[c] * x[c];
        y[r] = s;
    }
    return y;
}

inline Vec matvec(const Matrix& m, std::span<const double> x) {
    return matvec(m.data, m.rows, m.cols, x);
}

/// g_x += M^T g_y
inline void matvec_transpose_accum(std::span<const double> m, std::size_t rows, std::size_t cols,
                                   std::span<const double> gy, std::span<double> gx) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = m.data() + r * cols;
        const double g = gy[r];
        if (g == 0.0) continue;
        for (std::size_t c = 0; c < cols; ++c) gx[c] += row[c] * g;
    }
}

/// g_M += g_y x^T
inline void outer_accum(std::span<const double> gy, std::span<const double> x,
                        std::span<double> gm) {
    const std::size_t cols = x.size();
    for (std::size_t r = 0; r < gy.size(); ++r) {
        const double g = gy[r];
        if (g == 0.0) continue;
        double* row = gm.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += g * x[c];
    }
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

}  // namespace hhgat
