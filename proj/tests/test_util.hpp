#pragma once

// Shared helpers for the test suites: independent oracles stay here, out of
// the library proper.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dcs/matrix.hpp"
#include "dcs/rng.hpp"

namespace testutil {

inline bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

inline double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / denom;
}

/// Naive two-pass softmax without max-subtraction; the reference for inputs
/// of moderate magnitude.
inline std::vector<double> naive_softmax(const std::vector<double>& y) {
    std::vector<double> p(y.size());
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        p[i] = std::exp(y[i]);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

inline dcs::Vector random_unit_vector(std::size_t dim, dcs::Rng& rng) {
    dcs::Vector x(dim);
    for (double& v : x) v = rng.normal();
    dcs::normalize(x.data(), dim);
    return x;
}

/// Rows scaled like the store's initialization so responses stay O(1).
inline dcs::Matrix random_weights(std::size_t n, std::size_t d, dcs::Rng& rng) {
    return dcs::random_gaussian_matrix(n, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
}

inline double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
    return 0.5 * acc;
}

} // namespace testutil
