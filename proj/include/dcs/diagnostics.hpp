#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "dcs/active_set.hpp"
#include "dcs/matrix.hpp"
#include "dcs/softmax.hpp"

namespace dcs {

/// Ids of the K entries of `values` with the largest values, ties broken by
/// ascending id. Returned sorted ascending.
inline std::vector<std::uint32_t> top_k_ids(std::span<const double> values, std::size_t k) {
    require(k >= 1 && k <= values.size(), "top_k_ids: K out of range");
    std::vector<std::uint32_t> order(values.size());
    std::iota(order.begin(), order.end(), 0u);
    auto better = [&](std::uint32_t a, std::uint32_t b) {
        if (values[a] != values[b]) return values[a] > values[b];
        return a < b;
    };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k) - 1,
                     order.end(), better);
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

/// Per-sample probability mass sorted descending, the raw material for
/// top-K cumulative probability curves.
struct ConcentrationProfile {
    std::vector<double> sorted_mass;

    double cp_at(std::size_t k) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < k && i < sorted_mass.size(); ++i) acc += sorted_mass[i];
        return acc;
    }
};

inline ConcentrationProfile concentration_profile(const Vector& probs) {
    ConcentrationProfile prof;
    prof.sorted_mass = probs;
    std::sort(prof.sorted_mass.begin(), prof.sorted_mass.end(), std::greater<>());
    return prof;
}

/// Top-K cumulative probability: total mass on the K classes with highest
/// probability (equivalently highest response), ties by ascending id.
inline double cp_k(const Vector& probs, std::size_t k) {
    const auto top = top_k_ids(probs, k);
    double acc = 0.0;
    for (std::uint32_t id : top) acc += probs[id];
    return acc;
}

inline double cp_k(std::span<const double> x, const Matrix& W, std::size_t k) {
    return cp_k(forward_full(x, W), k);
}

/// Normalized top-K cumulative gradient energy: the squared cosine between
/// the stacked full-softmax gradient and its top-K row mask. Because the
/// mask zeroes whole rows, this equals the masked share of squared gradient
/// norm; row norms share the common factor ||x||^2, which cancels.
inline double ncg_k(std::span<const double> x, const Matrix& W, std::uint32_t label,
                    std::size_t k) {
    require(k >= 1 && k <= W.rows, "ncg_k: K out of range");
    require(label < W.rows, "ncg_k: label out of range");
    Vector y;
    matvec(W, x, y);
    const Vector probs = softmax(y);
    double total = 0.0;
    Vector coef_sq(W.rows);
    for (std::size_t i = 0; i < W.rows; ++i) {
        const double c = probs[i] - (i == label ? 1.0 : 0.0);
        coef_sq[i] = c * c;
        total += coef_sq[i];
    }
    if (total == 0.0 || squared_norm(x.data(), x.size()) == 0.0) {
        // zero gradient: any mask preserves it, "all energy captured"
        diag_counters().zero_gradient_ncg.fetch_add(1, std::memory_order_relaxed);
        return 1.0;
    }
    double masked = 0.0;
    for (std::uint32_t id : top_k_ids(y, k)) masked += coef_sq[id];
    return masked / total;
}

/// |S  intersect  OptimalTop_{|S|}(x, W)| / |S|: the fraction of a selected set
/// that coincides with the optimal (highest-response) selection of equal size.
inline double overlap_with_optimal(const ActiveSet& s, std::span<const double> x,
                                   const Matrix& W) {
    check_active_set(s, W.rows);
    Vector y;
    matvec(W, x, y);
    const auto optimal = top_k_ids(y, s.size());
    std::vector<std::uint32_t> both;
    std::set_intersection(s.ids.begin(), s.ids.end(), optimal.begin(), optimal.end(),
                          std::back_inserter(both));
    return static_cast<double>(both.size()) / static_cast<double>(s.size());
}

/// Smallest M such that the mean top-M cumulative probability over the
/// profiles reaches tau. Falls back to N when the threshold is never met.
inline std::size_t min_m_for_threshold(const std::vector<ConcentrationProfile>& profiles,
                                       double tau) {
    require(tau > 0.0 && tau <= 1.0, "min_m_for_threshold: tau must be in (0,1]");
    require(!profiles.empty(), "min_m_for_threshold: no profiles");
    const std::size_t n = profiles.front().sorted_mass.size();
    const double inv = 1.0 / static_cast<double>(profiles.size());
    double mean_cum = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
        double level = 0.0;
        for (const auto& prof : profiles) level += prof.sorted_mass[m];
        mean_cum += level * inv;
        if (mean_cum >= tau - 1e-9) return m + 1;
    }
    return n;
}

} // namespace dcs
