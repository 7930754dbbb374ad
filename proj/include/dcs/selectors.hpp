#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "dcs/active_set.hpp"
#include "dcs/diagnostics.hpp"
#include "dcs/hash_forest.hpp"
#include "dcs/matrix.hpp"
#include "dcs/rng.hpp"
#include "dcs/softmax.hpp"

namespace dcs {

/// The exact (and expensive, O(ND)) selector: the M classes with highest
/// responses Wx, ties by ascending id.
inline ActiveSet optimal_select(std::span<const double> x, const Matrix& W, std::size_t quota) {
    require(quota >= 1 && quota <= W.rows, "optimal_select: quota out of range");
    Vector y;
    matvec(W, x, y);
    ActiveSet s;
    s.origin = SelectorKind::Optimal;
    s.ids = top_k_ids(y, quota);
    return s;
}

/// Uniform sample of M classes without replacement (Fisher-Yates prefix).
inline ActiveSet random_select(std::size_t n_classes, std::size_t quota, Rng& rng) {
    require(quota >= 1 && quota <= n_classes, "random_select: quota out of range");
    std::vector<std::uint32_t> order(n_classes);
    for (std::size_t i = 0; i < n_classes; ++i) order[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < quota; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n_classes - i));
        std::swap(order[i], order[j]);
    }
    order.resize(quota);
    std::sort(order.begin(), order.end());
    ActiveSet s;
    s.origin = SelectorKind::Random;
    s.ids = std::move(order);
    return s;
}

inline ActiveSet random_select(std::size_t n_classes, std::size_t quota, std::uint64_t seed) {
    Rng rng(seed);
    return random_select(n_classes, quota, rng);
}

namespace detail {

/// Jacobi eigenvalue iteration for a symmetric matrix. Small D only; used
/// for the PCA baseline's principal directions.
inline void jacobi_eigen_symmetric(Matrix a, Matrix& eigvecs, Vector& eigvals) {
    const std::size_t n = a.rows;
    eigvecs = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) eigvecs(i, i) = 1.0;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = eigvecs(k, p), vkq = eigvecs(k, q);
                    eigvecs(k, p) = c * vkp - s * vkq;
                    eigvecs(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    eigvals.resize(n);
    for (std::size_t i = 0; i < n; ++i) eigvals[i] = a(i, i);
}

} // namespace detail

/// Polarity hash codes over the top principal directions of the weight rows.
/// Classes sharing the ground-truth class's code form its bucket.
struct PcaCodes {
    std::size_t code_bits = 0;
    std::vector<std::uint64_t> codes;           // per class
    Matrix directions;                          // code_bits x D
    Vector mean;                                // row mean, length D

    std::uint64_t code_for_row(std::span<const double> row) const {
        std::uint64_t code = 0;
        for (std::size_t b = 0; b < code_bits; ++b) {
            double proj = 0.0;
            for (std::size_t j = 0; j < row.size(); ++j)
                proj += (row[j] - mean[j]) * directions(b, j);
            if (proj >= 0.0) code |= (1ULL << b);
        }
        return code;
    }
};

inline PcaCodes build_pca_codes(const Matrix& W, std::size_t code_bits) {
    require(code_bits <= 63, "build_pca_codes: at most 63 code bits");
    PcaCodes out;
    out.code_bits = code_bits;
    out.codes.assign(W.rows, 0);
    out.mean.assign(W.cols, 0.0);
    if (code_bits == 0) return out; // single bucket
    for (std::size_t i = 0; i < W.rows; ++i)
        for (std::size_t j = 0; j < W.cols; ++j) out.mean[j] += W(i, j);
    for (double& v : out.mean) v /= static_cast<double>(W.rows);

    Matrix cov(W.cols, W.cols);
    for (std::size_t i = 0; i < W.rows; ++i) {
        for (std::size_t a = 0; a < W.cols; ++a) {
            const double da = W(i, a) - out.mean[a];
            for (std::size_t b = a; b < W.cols; ++b)
                cov(a, b) += da * (W(i, b) - out.mean[b]);
        }
    }
    for (std::size_t a = 0; a < W.cols; ++a)
        for (std::size_t b = 0; b < a; ++b) cov(a, b) = cov(b, a);

    Matrix eigvecs;
    Vector eigvals;
    detail::jacobi_eigen_symmetric(cov, eigvecs, eigvals);
    std::vector<std::size_t> order(W.cols);
    for (std::size_t i = 0; i < W.cols; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (eigvals[a] != eigvals[b]) return eigvals[a] > eigvals[b];
        return a < b;
    });
    const std::size_t bits = std::min(code_bits, W.cols);
    out.directions = Matrix(code_bits, W.cols);
    for (std::size_t b = 0; b < bits; ++b)
        for (std::size_t j = 0; j < W.cols; ++j) out.directions(b, j) = eigvecs(j, order[b]);
    // leftover bits (code_bits > D) project onto zero directions: bit set by
    // the proj >= 0 convention, identical for every class
    for (std::size_t i = 0; i < W.rows; ++i) out.codes[i] = out.code_for_row(W.row_span(i));
    return out;
}

/// All classes sharing the label's polarity code. Uses the ground-truth
/// class, not the sample feature.
inline ActiveSet pca_select(std::uint32_t label, const PcaCodes& codes) {
    require(label < codes.codes.size(), "pca_select: label out of range");
    ActiveSet s;
    s.origin = SelectorKind::Pca;
    const std::uint64_t code = codes.codes[label];
    for (std::uint32_t i = 0; i < codes.codes.size(); ++i)
        if (codes.codes[i] == code) s.ids.push_back(i);
    return s;
}

inline ActiveSet pca_select(std::uint32_t label, const Matrix& W, std::size_t code_bits) {
    return pca_select(label, build_pca_codes(W, code_bits));
}

/// Lloyd clustering of the weight rows, fixed iteration budget, centroids
/// seeded by sampling distinct rows.
struct KmeansClustering {
    std::vector<std::uint32_t> assignment;       // class id -> group
    std::vector<std::vector<std::uint32_t>> groups;
};

inline KmeansClustering build_kmeans(const Matrix& W, std::size_t n_groups, std::uint64_t seed,
                                     std::size_t iterations = 25) {
    require(n_groups >= 1 && n_groups <= W.rows, "build_kmeans: group count out of range");
    const std::size_t n = W.rows, d = W.cols;
    Rng rng(seed);
    std::vector<std::uint32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < n_groups; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(order[i], order[j]);
    }
    Matrix centroids(n_groups, d);
    for (std::size_t g = 0; g < n_groups; ++g) {
        const double* src = W.row(order[g]);
        std::copy(src, src + d, centroids.row(g));
    }

    KmeansClustering out;
    out.assignment.assign(n, 0);
    std::vector<std::size_t> counts(n_groups);
    for (std::size_t iter = 0; iter < iterations; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            std::uint32_t best_g = 0;
            for (std::size_t g = 0; g < n_groups; ++g) {
                double dist = 0.0;
                const double* c = centroids.row(g);
                const double* w = W.row(i);
                for (std::size_t j = 0; j < d; ++j) {
                    const double diff = w[j] - c[j];
                    dist += diff * diff;
                }
                if (dist < best) {
                    best = dist;
                    best_g = static_cast<std::uint32_t>(g);
                }
            }
            if (out.assignment[i] != best_g) changed = true;
            out.assignment[i] = best_g;
        }
        std::fill(centroids.data.begin(), centroids.data.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            axpy(1.0, W.row(i), centroids.row(out.assignment[i]), d);
            ++counts[out.assignment[i]];
        }
        for (std::size_t g = 0; g < n_groups; ++g) {
            if (counts[g] == 0) {
                // re-seed an empty centroid deterministically
                const double* src = W.row(rng.below(n));
                std::copy(src, src + d, centroids.row(g));
                continue;
            }
            const double inv = 1.0 / static_cast<double>(counts[g]);
            for (std::size_t j = 0; j < d; ++j) centroids(g, j) *= inv;
        }
        if (!changed && iter > 0) break;
    }
    out.groups.resize(n_groups);
    for (std::size_t i = 0; i < n; ++i)
        out.groups[out.assignment[i]].push_back(static_cast<std::uint32_t>(i));
    return out;
}

/// The ids of the cluster containing the label.
inline ActiveSet kmeans_select(std::uint32_t label, const KmeansClustering& clustering) {
    require(label < clustering.assignment.size(), "kmeans_select: label out of range");
    ActiveSet s;
    s.origin = SelectorKind::Kmeans;
    s.ids = clustering.groups[clustering.assignment[label]];
    return s;
}

/// Hashing-forest approximation of optimal selection: pooled tree
/// candidates re-ranked by cosine similarity against the current rows.
inline ActiveSet hf_select(std::span<const double> x, const HashForest& forest, const Matrix& W,
                           std::size_t quota) {
    return query_forest(forest, x, W, quota);
}

struct SelectorConfig {
    SelectorKind kind = SelectorKind::Full;
    std::size_t quota = 0;       // M, per-sample; 0 means all classes
    std::size_t batch_cap = 0;   // max |S(X)| after the union; 0 means uncapped
    std::size_t code_bits = 10;  // pca
    std::size_t n_groups = 1024; // kmeans
};

/// Read-only snapshot of whatever structure the configured selector needs.
struct SelectorContext {
    const HashForest* forest = nullptr;
    const PcaCodes* pca = nullptr;
    const KmeansClustering* kmeans = nullptr;
};

inline ActiveSet select_for_sample(std::span<const double> x, std::uint32_t label,
                                   const Matrix& W, const SelectorConfig& config,
                                   const SelectorContext& ctx, Rng& rng) {
    const std::size_t quota = config.quota == 0 ? W.rows : std::min(config.quota, W.rows);
    switch (config.kind) {
        case SelectorKind::Full:
            return full_set(W.rows);
        case SelectorKind::Random:
            return random_select(W.rows, quota, rng);
        case SelectorKind::Pca:
            require(ctx.pca != nullptr, "select_for_sample: pca codes not built");
            return pca_select(label, *ctx.pca);
        case SelectorKind::Kmeans:
            require(ctx.kmeans != nullptr, "select_for_sample: clustering not built");
            return kmeans_select(label, *ctx.kmeans);
        case SelectorKind::Optimal:
            return optimal_select(x, W, quota);
        case SelectorKind::Hf:
        case SelectorKind::HfAdaptive:
            require(ctx.forest != nullptr, "select_for_sample: forest not built");
            return hf_select(x, *ctx.forest, W, quota);
    }
    throw std::invalid_argument("select_for_sample: unknown selector kind");
}

struct BatchSelection {
    ActiveSet set;                       // S(X): union, labels included, capped
    std::vector<ActiveSet> per_sample;   // raw S(x) per sample, before the union
};

/// Mini-batch selection: per-sample sets are unioned, every ground-truth
/// label in the batch is force-included, and if the union exceeds the cap,
/// non-label ids are downsampled without replacement with weights equal to
/// their maximum restricted-softmax probability over the batch (labels are
/// never dropped).
inline BatchSelection batch_select(const Matrix& batch_features,
                                   std::span<const std::uint32_t> labels, const Matrix& W,
                                   const SelectorConfig& config, const SelectorContext& ctx,
                                   Rng& rng) {
    require(batch_features.rows == labels.size(), "batch_select: feature/label count mismatch");
    require(batch_features.rows >= 1, "batch_select: empty batch");

    BatchSelection out;
    if (config.kind == SelectorKind::Full) {
        // every sample uses all classes; per_sample stays empty
        out.set = full_set(W.rows);
        return out;
    }
    out.per_sample.reserve(labels.size());
    std::vector<std::uint32_t> unioned;
    for (std::size_t j = 0; j < labels.size(); ++j) {
        out.per_sample.push_back(select_for_sample(batch_features.row_span(j), labels[j], W,
                                                   config, ctx, rng));
        const auto& ids = out.per_sample.back().ids;
        unioned.insert(unioned.end(), ids.begin(), ids.end());
    }
    std::vector<std::uint32_t> unique_labels(labels.begin(), labels.end());
    std::sort(unique_labels.begin(), unique_labels.end());
    unique_labels.erase(std::unique(unique_labels.begin(), unique_labels.end()),
                        unique_labels.end());
    unioned.insert(unioned.end(), unique_labels.begin(), unique_labels.end());
    std::sort(unioned.begin(), unioned.end());
    unioned.erase(std::unique(unioned.begin(), unioned.end()), unioned.end());

    const std::size_t cap = config.batch_cap == 0 ? W.rows : config.batch_cap;
    require(cap >= unique_labels.size(), "batch_select: batch cap below unique label count");

    if (unioned.size() <= cap) {
        out.set = make_active_set(std::move(unioned), W.rows, config.kind);
        return out;
    }

    // Sampling weight per class: its maximum restricted-softmax probability
    // over the samples whose set contains it.
    std::vector<double> weight(W.rows, 0.0);
    for (std::size_t j = 0; j < labels.size(); ++j) {
        const ActiveSet& s = out.per_sample[j];
        const Matrix sub = gather_rows(W, s);
        const Vector probs = restricted_softmax(sub, batch_features.row_span(j));
        for (std::size_t k = 0; k < s.size(); ++k)
            weight[s.ids[k]] = std::max(weight[s.ids[k]], probs[k]);
    }

    std::vector<std::uint32_t> keep = unique_labels;
    const std::size_t extra = cap - unique_labels.size();
    if (extra > 0) {
        // Weighted sampling without replacement (exponential-key order
        // statistics); matches sequential renormalized categorical draws in
        // distribution.
        std::vector<std::pair<double, std::uint32_t>> keyed;
        keyed.reserve(unioned.size());
        for (std::uint32_t id : unioned) {
            if (std::binary_search(unique_labels.begin(), unique_labels.end(), id)) continue;
            double u = rng.uniform();
            while (u <= 0.0) u = rng.uniform();
            const double key = weight[id] > 0.0
                                   ? std::log(u) / weight[id]
                                   : -std::numeric_limits<double>::infinity();
            keyed.emplace_back(key, id);
        }
        const std::size_t take = std::min(extra, keyed.size());
        if (take > 0) {
            std::nth_element(keyed.begin(),
                             keyed.begin() + static_cast<std::ptrdiff_t>(take) - 1, keyed.end(),
                             [](const auto& a, const auto& b) {
                                 if (a.first != b.first) return a.first > b.first;
                                 return a.second < b.second;
                             });
            for (std::size_t i = 0; i < take; ++i) keep.push_back(keyed[i].second);
        }
    }
    out.set = make_active_set(std::move(keep), W.rows, config.kind);
    return out;
}

} // namespace dcs
