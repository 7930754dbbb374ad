#pragma once

#include <algorithm>
#include <chrono>
#include <future>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcs/allocation.hpp"
#include "dcs/diagnostics.hpp"
#include "dcs/extractor.hpp"
#include "dcs/hash_forest.hpp"
#include "dcs/matrix.hpp"
#include "dcs/metrics.hpp"
#include "dcs/param_store.hpp"
#include "dcs/selectors.hpp"
#include "dcs/softmax.hpp"
#include "dcs/synthetic.hpp"

namespace dcs {

class train_error : public std::runtime_error {
public:
    train_error(std::uint64_t iteration, const std::string& what)
        : std::runtime_error("iteration " + std::to_string(iteration) + ": " + what),
          iteration_(iteration) {}
    std::uint64_t iteration() const { return iteration_; }

private:
    std::uint64_t iteration_ = 0;
};

struct TrainConfig {
    SelectorConfig selector;
    std::size_t n_trees = 10;           // L for fixed runs
    std::size_t rebuild_interval = 200; // T for fixed runs; 0 disables rebuilds
    BuildOptions forest_options;

    bool adaptive = false;              // HF-A: drive M/L/T from the schedule
    AllocationSchedule schedule;
    std::size_t quota_floor = 0;        // 0 -> max(16, batch_size)
    std::size_t quota_ceil = 0;         // 0 -> n_classes / 4

    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    double learning_rate = 0.1;
    double momentum = 0.9;

    ExtractorKind extractor = ExtractorKind::Identity;
    std::size_t extractor_hidden = 0;

    std::size_t monitor_batch = 32;     // samples for concentration metrics
    double metric_k_fraction = 0.05;    // K for cp_k / ncg_k columns
    std::size_t overlap_every = 50;     // cadence of the O(ND) metric pass

    std::uint64_t seed = 1;
};

struct TrainTimings {
    std::uint64_t select_us = 0;
    std::uint64_t softmax_us = 0;
    std::uint64_t rebuild_us = 0;
    std::uint64_t eval_us = 0;
    std::uint64_t total_us = 0;
};

struct PhaseDecision {
    std::size_t phase = 0;
    std::size_t quota = 0;
    std::size_t n_trees = 0;
    std::size_t rebuild_interval = 0;
    double tau_cp = 0.0;
};

struct RunResult {
    std::vector<MetricsRecord> records;
    double final_accuracy = 0.0;
    double initial_accuracy = 0.0;
    TrainTimings timings;
    std::uint64_t compute_proxy = 0;          // sum over iterations of |S(X)|
    std::vector<PhaseDecision> phases;        // adaptive runs only
};

/// Top-1 accuracy of argmax(W F(o)) over the given sample indices; ties go
/// to the lowest class id.
inline double evaluate(const Matrix& W, const FeatureExtractor& extractor,
                       const SyntheticDataset& ds, std::span<const std::uint32_t> indices) {
    require(!indices.empty(), "evaluate: empty index set");
    std::size_t hits = 0;
    Vector y;
    for (std::uint32_t idx : indices) {
        const Vector x = extractor.forward(ds.features.row_span(idx));
        matvec(W, x, y);
        std::size_t best = 0;
        for (std::size_t i = 1; i < y.size(); ++i)
            if (y[i] > y[best]) best = i;
        if (best == ds.labels[idx]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(indices.size());
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline std::uint64_t micros_since(Clock::time_point start) {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - start).count());
}

struct BuiltForest {
    std::shared_ptr<const HashForest> forest;
    std::uint64_t micros = 0;
};

/// One gradient step over a shared active set: restricted forward/backward
/// per sample against the gathered rows, gradients averaged into `grad`.
/// Returns the mean loss.
inline double batch_step(const Matrix& gathered, const Matrix& batch_features,
                         std::span<const std::uint32_t> labels, const ActiveSet& set,
                         Matrix& grad, FeatureExtractor* extractor,
                         std::vector<std::span<const double>> raw_inputs) {
    const std::size_t m = set.size();
    const std::size_t dim = gathered.cols;
    grad = Matrix(m, dim);
    const double scale = 1.0 / static_cast<double>(labels.size());
    double loss_sum = 0.0;
    Vector logits, probs, feature_grad;
    for (std::size_t j = 0; j < labels.size(); ++j) {
        const std::span<const double> x = batch_features.row_span(j);
        matvec(gathered, x, logits);
        const std::size_t label_pos = set.index_of(labels[j]);
        if (label_pos == ActiveSet::npos)
            throw precondition_error("batch label missing from active set");
        loss_sum += restricted_loss_and_probs(logits, label_pos, probs);
        const bool need_dx = extractor != nullptr && extractor->trainable();
        if (need_dx) feature_grad.assign(dim, 0.0);
        for (std::size_t k = 0; k < m; ++k) {
            const double coef = probs[k] - (k == label_pos ? 1.0 : 0.0);
            axpy(coef * scale, x.data(), grad.row(k), dim);
            if (need_dx) axpy(coef, gathered.row(k), feature_grad.data(), dim);
        }
        if (need_dx) extractor->accumulate(raw_inputs[j], feature_grad);
    }
    return loss_sum * scale;
}

} // namespace detail

/// Desk-scale training loop over the selective-softmax pipeline: select
/// active classes per mini-batch, gather rows, restricted forward/backward,
/// sparse scatter update, with periodic structure rebuilds off the training
/// path. Metrics that need an O(ND) pass run on a fixed monitor batch every
/// `overlap_every` iterations and at epoch ends.
inline RunResult train(const TrainConfig& config, const SyntheticDataset& ds, ParamStore& store) {
    require(config.epochs >= 1, "train: epochs must be >= 1");
    require(config.batch_size >= 1, "train: batch size must be >= 1");
    require(config.learning_rate >= 0.0, "train: learning rate must be >= 0");
    require(!ds.train_indices.empty(), "train: dataset has no training samples");

    const std::size_t n_classes = store.classes();
    const std::size_t dim = store.dim();
    require(n_classes == ds.n_classes(), "train: store/dataset class count mismatch");

    const auto t_total = detail::Clock::now();
    FeatureExtractor extractor(config.extractor, ds.dim(), dim, config.extractor_hidden,
                               config.seed);

    Rng shuffle_rng(derive_seed(config.seed, 1));
    Rng selector_rng(derive_seed(config.seed, 2));
    Rng monitor_rng(derive_seed(config.seed, 3));

    const bool uses_forest = config.selector.kind == SelectorKind::Hf ||
                             config.selector.kind == SelectorKind::HfAdaptive;
    const bool is_adaptive = config.adaptive && uses_forest;
    const std::string selector_name =
        is_adaptive ? to_string(SelectorKind::HfAdaptive) : to_string(config.selector.kind);

    // monitor batch: fixed sample of the training set
    const std::size_t monitor_count =
        std::min<std::size_t>(std::max<std::size_t>(config.monitor_batch, 1),
                              ds.train_indices.size());
    std::vector<std::uint32_t> monitor_ids(ds.train_indices.begin(), ds.train_indices.end());
    for (std::size_t i = 0; i < monitor_count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(monitor_rng.below(monitor_ids.size() - i));
        std::swap(monitor_ids[i], monitor_ids[j]);
    }
    monitor_ids.resize(monitor_count);

    const std::size_t metric_k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(config.metric_k_fraction *
                                                 static_cast<double>(n_classes))));

    const QuotaClamp clamp{
        config.quota_floor != 0 ? config.quota_floor
                                : std::max<std::size_t>(16, config.batch_size),
        config.quota_ceil != 0 ? config.quota_ceil
                               : std::max<std::size_t>(1, n_classes / 4)};

    RunResult result;
    ForestHandle forest_handle;
    PcaCodes pca_codes;
    KmeansClustering kmeans_groups;
    std::optional<std::future<detail::BuiltForest>> pending;
    std::uint64_t adopt_at = 0;
    std::uint64_t build_count = 0;

    // live allocation state (fixed configs keep these constant)
    std::size_t quota = config.selector.quota == 0 ? n_classes : config.selector.quota;
    std::size_t n_trees = config.n_trees;
    std::size_t rebuild_interval = config.rebuild_interval;
    double tau_cp = 0.0;

    auto launch_forest_build = [&](std::size_t trees, std::uint64_t iteration) {
        const WeightSnapshot snap = store.snapshot_for_rebuild();
        const BuildOptions opts = config.forest_options;
        const std::uint64_t build_seed = derive_seed(config.seed, 1000 + build_count++);
        return std::async(std::launch::async, [snap = std::move(snap), trees, opts, build_seed,
                                               iteration]() {
            const auto t0 = detail::Clock::now();
            auto forest = std::make_shared<HashForest>(
                build_forest(snap.weights, trees, opts, build_seed));
            forest->built_at_iteration = iteration;
            forest->weight_snapshot_version = snap.version;
            detail::BuiltForest out;
            out.micros = detail::micros_since(t0);
            out.forest = std::move(forest);
            return out;
        });
    };

    auto rebuild_structures_sync = [&](std::uint64_t iteration) -> std::uint64_t {
        const auto t0 = detail::Clock::now();
        if (uses_forest) {
            if (pending) pending.reset(); // superseded before adoption
            auto built = launch_forest_build(n_trees, iteration).get();
            forest_handle.publish(built.forest);
        } else if (config.selector.kind == SelectorKind::Pca) {
            pca_codes = build_pca_codes(store.weights_view(), config.selector.code_bits);
        } else if (config.selector.kind == SelectorKind::Kmeans) {
            kmeans_groups = build_kmeans(store.weights_view(),
                                         std::min(config.selector.n_groups, n_classes),
                                         derive_seed(config.seed, 4000 + build_count++));
        }
        return detail::micros_since(t0);
    };

    const auto monitor_features = [&]() {
        Matrix mx(monitor_ids.size(), dim);
        for (std::size_t i = 0; i < monitor_ids.size(); ++i) {
            const Vector x = extractor.forward(ds.features.row_span(monitor_ids[i]));
            std::copy(x.begin(), x.end(), mx.row(i));
        }
        return mx;
    };

    // initial holdout accuracy
    {
        const auto t0 = detail::Clock::now();
        result.initial_accuracy =
            ds.holdout_indices.empty()
                ? 0.0
                : evaluate(store.weights_view(), extractor, ds, ds.holdout_indices);
        result.timings.eval_us += detail::micros_since(t0);
    }
    double current_acc = result.initial_accuracy;

    std::uint64_t structure_boot_us = 0;
    if (!is_adaptive &&
        (uses_forest || config.selector.kind == SelectorKind::Pca ||
         config.selector.kind == SelectorKind::Kmeans))
        structure_boot_us = rebuild_structures_sync(0);

    std::vector<std::uint32_t> order(ds.train_indices);
    const std::size_t epochs_per_phase = std::max<std::size_t>(1, config.schedule.epochs_per_phase);
    std::uint64_t iteration = 0;
    double last_cp = 0.0, last_ncg = 0.0, last_overlap = 0.0;
    std::size_t phase_index = 0;

    try {
        for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
            std::uint64_t phase_rebuild_us = 0;
            if (is_adaptive && epoch % epochs_per_phase == 0 &&
                phase_index < config.schedule.n_phases) {
                const AllocationState state = begin_phase(
                    phase_index, config.schedule, monitor_features(), store.weights_view(), clamp);
                quota = std::min(state.quota, n_classes);
                n_trees = state.n_trees;
                rebuild_interval = state.rebuild_interval;
                tau_cp = state.tau_cp;
                result.phases.push_back(
                    {state.phase, quota, n_trees, rebuild_interval, tau_cp});
                phase_rebuild_us = rebuild_structures_sync(iteration);
                ++phase_index;
            }

            // epoch reshuffle
            for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                const std::size_t j =
                    i + static_cast<std::size_t>(shuffle_rng.below(order.size() - i));
                std::swap(order[i], order[j]);
            }

            for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
                const std::size_t b = std::min(config.batch_size, order.size() - start);
                MetricsRecord rec;
                rec.iteration = iteration;
                rec.epoch = epoch;
                rec.selector = selector_name;
                rec.n_trees = uses_forest ? n_trees : 0;
                rec.rebuild_interval = rebuild_interval;
                rec.tau_cp = tau_cp;
                rec.rebuild_time_us = (start == 0 ? structure_boot_us + phase_rebuild_us : 0);
                structure_boot_us = 0;

                // adopt a finished background build at its deterministic slot
                if (pending && iteration >= adopt_at) {
                    detail::BuiltForest built = pending->get();
                    pending.reset();
                    forest_handle.publish(built.forest);
                    rec.rebuild_time_us += built.micros;
                }

                Matrix batch_features(b, dim);
                std::vector<std::uint32_t> batch_labels(b);
                std::vector<std::span<const double>> raw_inputs(b);
                for (std::size_t j = 0; j < b; ++j) {
                    const std::uint32_t idx = order[start + j];
                    raw_inputs[j] = ds.features.row_span(idx);
                    const Vector x = extractor.forward(raw_inputs[j]);
                    std::copy(x.begin(), x.end(), batch_features.row(j));
                    batch_labels[j] = ds.labels[idx];
                }

                SelectorConfig live = config.selector;
                live.quota = quota;
                SelectorContext ctx;
                std::shared_ptr<const HashForest> forest_ref;
                if (uses_forest) {
                    forest_ref = forest_handle.get();
                    ctx.forest = forest_ref.get();
                } else if (config.selector.kind == SelectorKind::Pca) {
                    ctx.pca = &pca_codes;
                } else if (config.selector.kind == SelectorKind::Kmeans) {
                    ctx.kmeans = &kmeans_groups;
                }

                const auto t_select = detail::Clock::now();
                BatchSelection selection = batch_select(batch_features, batch_labels,
                                                        store.weights_view(), live, ctx,
                                                        selector_rng);
                rec.select_time_us = detail::micros_since(t_select);
                rec.quota = quota;
                result.compute_proxy += selection.set.size();

                const auto t_softmax = detail::Clock::now();
                const GatheredRows gathered = store.gather(selection.set);
                Matrix grad;
                rec.loss = detail::batch_step(gathered.rows, batch_features, batch_labels,
                                              selection.set, grad,
                                              extractor.trainable() ? &extractor : nullptr,
                                              raw_inputs);
                if (config.learning_rate > 0.0) {
                    RowUpdate update;
                    update.ids = selection.set.ids;
                    update.grads = std::move(grad);
                    update.learning_rate = config.learning_rate;
                    update.momentum = config.momentum;
                    store.scatter_update(update);
                    extractor.step(config.learning_rate, config.momentum, b);
                }
                rec.softmax_time_us = detail::micros_since(t_softmax);

                const bool last_in_epoch = start + config.batch_size >= order.size();
                if (iteration % config.overlap_every == 0 || last_in_epoch) {
                    const Matrix mx = monitor_features();
                    double cp_sum = 0.0, ncg_sum = 0.0;
                    for (std::size_t i = 0; i < monitor_ids.size(); ++i) {
                        const auto x = mx.row_span(i);
                        cp_sum += cp_k(forward_full(x, store.weights_view()), metric_k);
                        ncg_sum += ncg_k(x, store.weights_view(),
                                         ds.labels[monitor_ids[i]], metric_k);
                    }
                    last_cp = cp_sum / static_cast<double>(monitor_ids.size());
                    last_ncg = ncg_sum / static_cast<double>(monitor_ids.size());
                    if (selection.per_sample.empty()) {
                        last_overlap = 1.0; // full selector
                    } else {
                        double ov = 0.0;
                        for (std::size_t j = 0; j < b; ++j)
                            ov += overlap_with_optimal(selection.per_sample[j],
                                                       batch_features.row_span(j),
                                                       store.weights_view());
                        last_overlap = ov / static_cast<double>(b);
                    }
                }
                rec.cp_k = last_cp;
                rec.ncg_k = last_ncg;
                rec.overlap_optimal = last_overlap;

                // background rebuild on the fixed interval; adopted one
                // iteration later so the build overlaps training compute
                if (uses_forest && rebuild_interval > 0 &&
                    (iteration + 1) % rebuild_interval == 0) {
                    if (pending) {
                        detail::BuiltForest built = pending->get();
                        forest_handle.publish(built.forest);
                        rec.rebuild_time_us += built.micros;
                        pending.reset();
                    }
                    pending = launch_forest_build(n_trees, iteration + 1);
                    adopt_at = iteration + 2;
                } else if (!uses_forest && rebuild_interval > 0 &&
                           (config.selector.kind == SelectorKind::Pca ||
                            config.selector.kind == SelectorKind::Kmeans) &&
                           (iteration + 1) % rebuild_interval == 0) {
                    rec.rebuild_time_us += rebuild_structures_sync(iteration + 1);
                }

                if (last_in_epoch) {
                    const auto t0 = detail::Clock::now();
                    if (!ds.holdout_indices.empty())
                        current_acc =
                            evaluate(store.weights_view(), extractor, ds, ds.holdout_indices);
                    result.timings.eval_us += detail::micros_since(t0);
                }
                rec.holdout_acc = current_acc;

                result.timings.select_us += rec.select_time_us;
                result.timings.softmax_us += rec.softmax_time_us;
                result.timings.rebuild_us += rec.rebuild_time_us;
                result.records.push_back(std::move(rec));
                ++iteration;
            }
        }
    } catch (const std::exception& err) {
        if (pending) pending->wait();
        throw train_error(iteration, err.what());
    }
    if (pending) pending->wait();

    result.final_accuracy = current_acc;
    result.timings.total_us = detail::micros_since(t_total);
    return result;
}

} // namespace dcs
