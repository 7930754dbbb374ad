#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dcs/active_set.hpp"
#include "dcs/matrix.hpp"

namespace dcs {

/// Numerically stable softmax (max-subtraction, two passes).
inline Vector softmax(std::span<const double> y) {
    require(!y.empty(), "softmax: empty input");
    const double peak = *std::max_element(y.begin(), y.end());
    Vector p(y.size());
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        p[i] = std::exp(y[i] - peak);
        total += p[i];
    }
    const double inv = 1.0 / total;
    for (double& v : p) v *= inv;
    return p;
}

/// Full-softmax posterior p = softmax(W x) over all N classes.
inline Vector forward_full(std::span<const double> x, const Matrix& W) {
    Vector y;
    matvec(W, x, y);
    return softmax(y);
}

/// Softmax restricted to the gathered rows `sub` (rows of W at the active
/// set, in id order). Returns the M restricted probabilities. Hot path for
/// the trainer and benchmarks; the expanded form is forward_selective below.
inline Vector restricted_softmax(const Matrix& sub, std::span<const double> x) {
    Vector logits;
    matvec(sub, x, logits);
    return softmax(logits);
}

inline Matrix gather_rows(const Matrix& W, const ActiveSet& s) {
    Matrix sub(s.size(), W.cols);
    for (std::size_t k = 0; k < s.size(); ++k) {
        const double* src = W.row(s.ids[k]);
        std::copy(src, src + W.cols, sub.row(k));
    }
    return sub;
}

/// Selective softmax: restrict W to the rows in `s`, softmax over the
/// restricted responses, then expand back to length N with zeros at the
/// non-selected classes. The result is a valid probability vector over all
/// N classes, ordered by class id.
inline Vector forward_selective(std::span<const double> x, const Matrix& W, const ActiveSet& s) {
    check_active_set(s, W.rows);
    require(x.size() == W.cols, "forward_selective: dimension mismatch");
    Vector logits(s.size());
    for (std::size_t k = 0; k < s.size(); ++k)
        logits[k] = dot(W.row(s.ids[k]), x.data(), W.cols);
    Vector restricted = softmax(logits);
    Vector expanded(W.rows, 0.0);
    for (std::size_t k = 0; k < s.size(); ++k) expanded[s.ids[k]] = restricted[k];
    return expanded;
}

/// Sparse gradient of the restricted softmax loss -log sigma_label for one
/// sample: one row per active class (in id order), the feature gradient
/// dL/dx, and the loss value.
struct GradientRows {
    std::vector<std::uint32_t> ids; // sorted ascending, same as the active set
    Matrix rows;                    // |ids| x D, row k is the gradient at class ids[k]
    Vector feature_grad;            // dL/dx, length D
    double loss = 0.0;

    const double* row_for(std::uint32_t id) const {
        auto it = std::lower_bound(ids.begin(), ids.end(), id);
        if (it == ids.end() || *it != id) return nullptr;
        return rows.row(static_cast<std::size_t>(it - ids.begin()));
    }
};

namespace detail {

/// Loss and restricted probabilities from precomputed restricted logits.
/// loss = logsumexp(logits) - logits[label_pos], exact even when the label
/// probability underflows.
inline double restricted_loss_and_probs(std::span<const double> logits, std::size_t label_pos,
                                        Vector& probs) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    probs.resize(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - peak);
        total += probs[i];
    }
    const double inv = 1.0 / total;
    for (double& v : probs) v *= inv;
    return std::log(total) - (logits[label_pos] - peak);
}

} // namespace detail

/// Gradients over a pre-gathered sub-matrix. `label_pos` indexes the row of
/// `sub` (and entry of the active set) holding the ground-truth class.
inline GradientRows backward_restricted(std::span<const double> x, const Matrix& sub,
                                        std::vector<std::uint32_t> ids, std::size_t label_pos) {
    GradientRows g;
    Vector logits;
    matvec(sub, x, logits);
    Vector probs;
    g.loss = detail::restricted_loss_and_probs(logits, label_pos, probs);
    g.ids = std::move(ids);
    g.rows = Matrix(sub.rows, sub.cols);
    g.feature_grad.assign(sub.cols, 0.0);
    for (std::size_t k = 0; k < sub.rows; ++k) {
        const double coef = probs[k] - (k == label_pos ? 1.0 : 0.0);
        double* out = g.rows.row(k);
        for (std::size_t j = 0; j < sub.cols; ++j) out[j] = coef * x[j];
        axpy(coef, sub.row(k), g.feature_grad.data(), sub.cols);
    }
    return g;
}

/// Analytic gradients of the selective softmax loss: for i in S,
/// g_i = sigma_i * x (i != label) and (sigma_label - 1) * x at the label,
/// with sigma the softmax restricted to S. dL/dx = sum_i coef_i * w_i.
inline GradientRows backward_selective(std::span<const double> x, const Matrix& W,
                                       const ActiveSet& s, std::uint32_t label) {
    check_active_set(s, W.rows);
    require(x.size() == W.cols, "backward_selective: dimension mismatch");
    const std::size_t label_pos = s.index_of(label);
    if (label_pos == ActiveSet::npos)
        throw precondition_error("backward_selective: label not in active set");
    return backward_restricted(x, gather_rows(W, s), s.ids, label_pos);
}

} // namespace dcs
