#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dcs/common.hpp"
#include "dcs/rng.hpp"

namespace dcs {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Rows are class weight vectors or
/// sample features throughout the library.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }
    std::span<const double> row_span(std::size_t i) const { return {row(i), cols}; }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool operator==(const Matrix& other) const = default;
};

inline double dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    return dot(a.data(), b.data(), a.size());
}

inline double squared_norm(const double* a, std::size_t n) {
    return dot(a, a, n);
}

inline double norm(const double* a, std::size_t n) {
    return std::sqrt(squared_norm(a, n));
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

/// y = W x (y resized to W.rows)
inline void matvec(const Matrix& W, std::span<const double> x, Vector& y) {
    require(x.size() == W.cols, "matvec: dimension mismatch between x and W");
    y.resize(W.rows);
    for (std::size_t i = 0; i < W.rows; ++i) y[i] = dot(W.row(i), x.data(), W.cols);
}

/// Scale a vector to unit length in place; zero vectors are left untouched.
inline bool normalize(double* v, std::size_t n) {
    const double len = norm(v, n);
    if (len == 0.0) return false;
    const double inv = 1.0 / len;
    for (std::size_t i = 0; i < n; ++i) v[i] *= inv;
    return true;
}

inline Matrix random_gaussian_matrix(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = scale * rng.normal();
    return m;
}

} // namespace dcs
