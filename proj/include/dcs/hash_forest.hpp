#pragma once

#include <algorithm>
#include <cstdint>
#include <future>
#include <memory>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

#include "dcs/active_set.hpp"
#include "dcs/matrix.hpp"
#include "dcs/rng.hpp"

namespace dcs {

/// How the splitting normal is derived from the sampled pair of weight rows.
/// PairDifference (h = w_i - w_j) separates the pair with maximum margin
/// through the origin; PairMidpoint (h = (w_i + w_j)/2) is the literal
/// midpoint formula. Difference is the default since the midpoint normal
/// does not separate the sampled pair.
enum class SplitMode { PairDifference, PairMidpoint };

struct BuildOptions {
    std::uint32_t leaf_capacity = 64; // B
    SplitMode split_mode = SplitMode::PairDifference;
    std::uint32_t max_pair_resamples = 32;
};

struct TreeNode {
    Vector normal;            // empty for leaves
    double threshold = 0.0;   // nonzero only for median-fallback splits
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint32_t begin = 0;  // subtree id range in HashTree::ids
    std::uint32_t end = 0;

    bool is_leaf() const { return left < 0; }
    std::uint32_t count() const { return end - begin; }
};

/// One recursive random-hyperplane partition tree over the rows of W.
/// Each subtree owns a contiguous range of `ids`, so "all classes under a
/// node" is a span. Immutable once built.
struct HashTree {
    std::vector<TreeNode> nodes; // nodes[0] is the root
    std::vector<std::uint32_t> ids;
    std::uint32_t leaf_capacity = 0;
    std::uint64_t seed = 0;

    std::span<const std::uint32_t> ids_under(const TreeNode& node) const {
        return {ids.data() + node.begin, node.count()};
    }
};

struct HashForest {
    std::vector<HashTree> trees;
    std::uint64_t built_at_iteration = 0;
    std::uint64_t weight_snapshot_version = 0;
};

namespace detail {

class TreeBuilder {
public:
    TreeBuilder(const Matrix& unit_rows, const BuildOptions& opts, std::uint64_t seed)
        : unit_(unit_rows), opts_(opts), rng_(seed) {}

    HashTree build() {
        HashTree tree;
        tree.leaf_capacity = opts_.leaf_capacity;
        tree.ids.resize(unit_.rows);
        for (std::size_t i = 0; i < unit_.rows; ++i) tree.ids[i] = static_cast<std::uint32_t>(i);
        tree.nodes.reserve(2 * unit_.rows / std::max<std::size_t>(opts_.leaf_capacity, 1) + 8);
        split(tree, 0, static_cast<std::uint32_t>(unit_.rows));
        return tree;
    }

private:
    // Builds the subtree over tree.ids[begin, end) and returns its node index.
    std::int32_t split(HashTree& tree, std::uint32_t begin, std::uint32_t end) {
        const std::int32_t self = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[self].begin = begin;
        tree.nodes[self].end = end;
        const std::uint32_t count = end - begin;
        if (count <= opts_.leaf_capacity) return self;

        Vector normal;
        double threshold = 0.0;
        std::uint32_t mid = 0;
        if (!try_pair_split(tree, begin, end, normal, mid))
            median_split(tree, begin, end, normal, threshold, mid);

        tree.nodes[self].normal = std::move(normal);
        tree.nodes[self].threshold = threshold;
        const std::int32_t left = split(tree, begin, mid);
        const std::int32_t right = split(tree, mid, end);
        tree.nodes[self].left = left;
        tree.nodes[self].right = right;
        return self;
    }

    // Randomly sample a pair, derive the normal, partition by sign of w.h.
    // Fails (returns false) when every attempt leaves one side empty.
    bool try_pair_split(HashTree& tree, std::uint32_t begin, std::uint32_t end,
                        Vector& normal, std::uint32_t& mid) {
        const std::uint32_t count = end - begin;
        scratch_.resize(count);
        for (std::uint32_t attempt = 0; attempt < opts_.max_pair_resamples; ++attempt) {
            const std::uint32_t a = static_cast<std::uint32_t>(rng_.below(count));
            std::uint32_t b = static_cast<std::uint32_t>(rng_.below(count - 1));
            if (b >= a) ++b;
            const double* wa = unit_.row(tree.ids[begin + a]);
            const double* wb = unit_.row(tree.ids[begin + b]);
            normal.resize(unit_.cols);
            if (opts_.split_mode == SplitMode::PairDifference) {
                for (std::size_t j = 0; j < unit_.cols; ++j) normal[j] = wa[j] - wb[j];
            } else {
                for (std::size_t j = 0; j < unit_.cols; ++j) normal[j] = 0.5 * (wa[j] + wb[j]);
            }
            if (squared_norm(normal.data(), normal.size()) == 0.0) continue;

            std::uint32_t n_left = 0;
            for (std::uint32_t i = 0; i < count; ++i) {
                scratch_[i] = dot(unit_.row(tree.ids[begin + i]), normal.data(), unit_.cols);
                if (scratch_[i] >= 0.0) ++n_left;
            }
            if (n_left == 0 || n_left == count) continue;

            // stable partition keeps the build deterministic
            partition_by_sign(tree, begin, count, n_left);
            mid = begin + n_left;
            return true;
        }
        return false;
    }

    void partition_by_sign(HashTree& tree, std::uint32_t begin, std::uint32_t count,
                           std::uint32_t n_left) {
        reorder_.resize(count);
        std::uint32_t lo = 0, hi = n_left;
        for (std::uint32_t i = 0; i < count; ++i) {
            if (scratch_[i] >= 0.0)
                reorder_[lo++] = tree.ids[begin + i];
            else
                reorder_[hi++] = tree.ids[begin + i];
        }
        std::copy(reorder_.begin(), reorder_.end(), tree.ids.begin() + begin);
    }

    // Fallback for degenerate cells (duplicate or collinear rows): order by
    // projection (ties by id) and cut at the median rank, which always
    // makes progress.
    void median_split(HashTree& tree, std::uint32_t begin, std::uint32_t end,
                      Vector& normal, double& threshold, std::uint32_t& mid) {
        diag_counters().degenerate_split_fallback.fetch_add(1, std::memory_order_relaxed);
        const std::uint32_t count = end - begin;
        if (squared_norm(normal.data(), normal.size()) == 0.0) {
            normal.assign(unit_.cols, 0.0);
            normal[0] = 1.0;
        }
        std::vector<std::pair<double, std::uint32_t>> scored(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::uint32_t id = tree.ids[begin + i];
            scored[i] = {dot(unit_.row(id), normal.data(), unit_.cols), id};
        }
        std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
            if (x.first != y.first) return x.first > y.first; // descending: >= side first
            return x.second < y.second;
        });
        const std::uint32_t n_left = (count + 1) / 2;
        for (std::uint32_t i = 0; i < count; ++i) tree.ids[begin + i] = scored[i].second;
        threshold = 0.5 * (scored[n_left - 1].first + scored[n_left].first);
        mid = begin + n_left;
    }

    const Matrix& unit_;
    BuildOptions opts_;
    Rng rng_;
    Vector scratch_;
    std::vector<std::uint32_t> reorder_;
};

inline Matrix direction_normalized(const Matrix& W) {
    Matrix unit = W;
    for (std::size_t i = 0; i < unit.rows; ++i) normalize(unit.row(i), unit.cols);
    return unit;
}

} // namespace detail

/// Build one hashing tree over the rows of W. Rows are direction-normalized
/// before split evaluation (the query-side re-rank uses cosine geometry).
/// Deterministic for a given seed.
inline HashTree build_tree(const Matrix& W, const BuildOptions& opts, std::uint64_t seed) {
    require(W.rows >= 1, "build_tree: need at least one class");
    require(opts.leaf_capacity >= 2, "build_tree: leaf capacity must be >= 2");
    const Matrix unit = detail::direction_normalized(W);
    detail::TreeBuilder builder(unit, opts, seed);
    HashTree tree = builder.build();
    tree.seed = seed;
    return tree;
}

/// Build L trees with per-tree seeds derived from `seed`. Trees are
/// independent, so they can be built on several threads; the result does not
/// depend on scheduling.
inline HashForest build_forest(const Matrix& W, std::size_t n_trees, const BuildOptions& opts,
                               std::uint64_t seed, std::size_t n_threads = 0) {
    require(n_trees >= 1, "build_forest: need at least one tree");
    const Matrix unit = detail::direction_normalized(W);
    HashForest forest;
    forest.trees.resize(n_trees);
    if (n_threads == 0) {
        const unsigned hw = std::thread::hardware_concurrency();
        n_threads = hw ? hw : 1;
    }
    n_threads = std::min(n_threads, n_trees);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= n_trees) return;
            detail::TreeBuilder builder(unit, opts, derive_seed(seed, t));
            forest.trees[t] = builder.build();
            forest.trees[t].seed = derive_seed(seed, t);
        }
    };
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return forest;
}

/// Top-down traversal: descend by the sign of x.h, stop when the child that
/// would be entered holds fewer than Q classes, and return everything under
/// the current node (the parent), whose size is at least Q. A leaf met with
/// >= Q classes returns its own ids; a root with < Q returns the whole tree.
inline std::span<const std::uint32_t> query_tree(const HashTree& tree,
                                                 std::span<const double> x, std::size_t quota) {
    require(quota >= 1, "query_tree: quota must be >= 1");
    const TreeNode* node = &tree.nodes[0];
    if (node->count() < quota) return tree.ids_under(*node);
    Vector q(x.begin(), x.end());
    normalize(q.data(), q.size());
    for (;;) {
        if (node->is_leaf()) return tree.ids_under(*node);
        const double side = dot(q.data(), node->normal.data(), q.size()) - node->threshold;
        const TreeNode* next =
            side >= 0.0 ? &tree.nodes[node->left] : &tree.nodes[node->right];
        if (next->count() < quota) return tree.ids_under(*node);
        node = next;
    }
}

/// Pool the candidates of all trees, rank by cosine similarity to x against
/// the rows of W, and keep the top Q (ties by ascending id). Zero-norm
/// vectors rank last with similarity -1.
inline ActiveSet query_forest(const HashForest& forest, std::span<const double> x,
                              const Matrix& W, std::size_t quota) {
    require(quota >= 1, "query_forest: quota must be >= 1");
    std::vector<std::uint32_t> pool;
    for (const HashTree& tree : forest.trees) {
        const auto ids = query_tree(tree, x, quota);
        pool.insert(pool.end(), ids.begin(), ids.end());
    }
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

    const double x_norm = norm(x.data(), x.size());
    std::vector<std::pair<double, std::uint32_t>> ranked(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const std::uint32_t id = pool[i];
        const double w_norm = norm(W.row(id), W.cols);
        double sim = -1.0;
        if (x_norm == 0.0 || w_norm == 0.0) {
            diag_counters().zero_norm_cosine.fetch_add(1, std::memory_order_relaxed);
        } else {
            sim = dot(W.row(id), x.data(), W.cols) / (x_norm * w_norm);
        }
        ranked[i] = {sim, id};
    }
    const std::size_t keep = std::min(quota, ranked.size());
    std::nth_element(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep) - 1,
                     ranked.end(), [](const auto& a, const auto& b) {
                         if (a.first != b.first) return a.first > b.first;
                         return a.second < b.second;
                     });
    ActiveSet out;
    out.origin = SelectorKind::Hf;
    out.ids.resize(keep);
    for (std::size_t i = 0; i < keep; ++i) out.ids[i] = ranked[i].second;
    std::sort(out.ids.begin(), out.ids.end());
    return out;
}

/// Atomically published forest snapshot. Readers always see a complete
/// forest -- the previous one or the new one, never a partial build.
class ForestHandle {
public:
    std::shared_ptr<const HashForest> get() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return current_;
    }
    void publish(std::shared_ptr<const HashForest> next) {
        std::lock_guard<std::mutex> lock(mutex_);
        current_ = std::move(next);
    }

private:
    mutable std::mutex mutex_;
    std::shared_ptr<const HashForest> current_;
};

} // namespace dcs
