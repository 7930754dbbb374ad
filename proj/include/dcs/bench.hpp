#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <vector>

#include "dcs/alloc_meter.hpp"
#include "dcs/hash_forest.hpp"
#include "dcs/matrix.hpp"
#include "dcs/param_store.hpp"
#include "dcs/rng.hpp"
#include "dcs/selectors.hpp"
#include "dcs/softmax.hpp"

namespace dcs {

struct BenchReport {
    std::size_t n_classes = 0, dim = 0, quota = 0, repeats = 0;
    double selective_us_median = 0.0;
    double dense_us_median = 0.0;
    double speedup = 0.0;
    std::uint64_t selective_bytes = 0; // transient allocations per step
    std::uint64_t dense_bytes = 0;
    double memory_ratio = 0.0;
    std::size_t build_classes = 0; // build timed at this N and 2N
    std::size_t build_trees = 0;
    double build_us_base = 0.0;
    double build_us_double = 0.0;
    double build_scaling = 0.0;
};

namespace detail {

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace detail

/// Layer-level cost comparison: one optimizer step through the selective
/// path (gather + restricted forward with expansion + backward + sparse
/// scatter) versus the dense full-softmax step at the same N and D, plus
/// forest build-time scaling from N to 2N. Transient bytes come from the
/// allocation meter when the binary defines one.
inline BenchReport run_bench(std::size_t n_classes, std::size_t dim, std::size_t quota,
                             std::size_t repeats, std::size_t build_classes = 0,
                             std::size_t build_trees = 5, std::uint64_t seed = 1) {
    require(repeats >= 1, "run_bench: repeats must be >= 1");
    require(quota >= 1 && quota <= n_classes, "run_bench: quota out of range");

    using Clock = std::chrono::steady_clock;
    const auto micros = [](Clock::time_point a, Clock::time_point b) {
        return std::chrono::duration<double, std::micro>(b - a).count();
    };

    BenchReport report;
    report.n_classes = n_classes;
    report.dim = dim;
    report.quota = quota;
    report.repeats = repeats;

    Rng rng(derive_seed(seed, 0xBEC4ULL));
    ParamStore store(n_classes, dim, seed);
    Vector x(dim);
    for (double& v : x) v = rng.normal();
    normalize(x.data(), dim);
    const std::uint32_t label = static_cast<std::uint32_t>(rng.below(n_classes));

    ActiveSet set = random_select(n_classes, quota, rng);
    if (!set.contains(label)) {
        set.ids.back() = label;
        std::sort(set.ids.begin(), set.ids.end());
        set.ids.erase(std::unique(set.ids.begin(), set.ids.end()), set.ids.end());
    }
    const std::size_t label_pos = set.index_of(label);
    const double lr = 0.01, mu = 0.9;

    std::vector<double> selective_times(repeats), dense_times(repeats);
    std::uint64_t selective_bytes = 0;
    volatile double sink = 0.0; // keeps the expansion from being elided

    for (std::size_t r = 0; r < repeats; ++r) {
        const auto t0 = Clock::now();
        allocmeter::Scope meter;
        GatheredRows gathered = store.gather(set);
        Vector logits;
        matvec(gathered.rows, x, logits);
        Vector restricted = softmax(logits);
        Vector expanded(n_classes, 0.0);
        for (std::size_t k = 0; k < set.size(); ++k) expanded[set.ids[k]] = restricted[k];
        sink = sink + expanded[label];
        RowUpdate update;
        update.ids = set.ids;
        update.grads = Matrix(set.size(), dim);
        for (std::size_t k = 0; k < set.size(); ++k) {
            const double coef = restricted[k] - (k == label_pos ? 1.0 : 0.0);
            double* out = update.grads.row(k);
            for (std::size_t j = 0; j < dim; ++j) out[j] = coef * x[j];
        }
        update.learning_rate = lr;
        update.momentum = mu;
        store.scatter_update(update);
        selective_bytes = std::max(selective_bytes, meter.bytes());
        selective_times[r] = micros(t0, Clock::now());
    }

    Matrix dense_w = store.snapshot_for_rebuild().weights;
    Matrix dense_momentum(n_classes, dim);
    std::uint64_t dense_bytes = 0;
    for (std::size_t r = 0; r < repeats; ++r) {
        const auto t0 = Clock::now();
        allocmeter::Scope meter;
        Vector y;
        matvec(dense_w, x, y);
        Vector probs = softmax(y);
        Matrix grads(n_classes, dim);
        for (std::size_t i = 0; i < n_classes; ++i) {
            const double coef = probs[i] - (i == label ? 1.0 : 0.0);
            double* out = grads.row(i);
            for (std::size_t j = 0; j < dim; ++j) out[j] = coef * x[j];
        }
        for (std::size_t i = 0; i < n_classes; ++i) {
            double* w = dense_w.row(i);
            double* m = dense_momentum.row(i);
            const double* g = grads.row(i);
            for (std::size_t j = 0; j < dim; ++j) {
                m[j] = mu * m[j] + g[j];
                w[j] -= lr * m[j];
            }
        }
        dense_bytes = std::max(dense_bytes, meter.bytes());
        dense_times[r] = micros(t0, Clock::now());
    }

    report.selective_us_median = detail::median_of(selective_times);
    report.dense_us_median = detail::median_of(dense_times);
    report.speedup = report.dense_us_median > 0.0
                         ? report.dense_us_median / report.selective_us_median
                         : 0.0;
    report.selective_bytes = selective_bytes;
    report.dense_bytes = dense_bytes;
    report.memory_ratio =
        dense_bytes > 0 ? static_cast<double>(selective_bytes) / static_cast<double>(dense_bytes)
                        : 0.0;

    // O(N log N) build check: median build time at N and 2N
    report.build_classes = build_classes == 0 ? n_classes : build_classes;
    report.build_trees = build_trees;
    BuildOptions opts;
    const std::size_t build_repeats = std::min<std::size_t>(std::max<std::size_t>(repeats, 3), 7);
    for (const std::size_t scale : {std::size_t{1}, std::size_t{2}}) {
        Rng wrng(derive_seed(seed, 0xB11DULL + scale));
        const Matrix W = random_gaussian_matrix(report.build_classes * scale, dim,
                                                1.0 / std::sqrt(double(dim)), wrng);
        std::vector<double> times(build_repeats);
        for (std::size_t r = 0; r < build_repeats; ++r) {
            const auto t0 = Clock::now();
            const HashForest f = build_forest(W, build_trees, opts, derive_seed(seed, 77 + r));
            times[r] = micros(t0, Clock::now());
            require(!f.trees.empty(), "run_bench: build produced no trees");
        }
        if (scale == 1)
            report.build_us_base = detail::median_of(times);
        else
            report.build_us_double = detail::median_of(times);
    }
    report.build_scaling =
        report.build_us_base > 0.0 ? report.build_us_double / report.build_us_base : 0.0;
    return report;
}

} // namespace dcs
