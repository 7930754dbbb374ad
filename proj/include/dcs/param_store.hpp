#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "dcs/active_set.hpp"
#include "dcs/matrix.hpp"
#include "dcs/rng.hpp"

namespace dcs {

/// Sparse gradient batch: one gradient row per touched class id.
struct RowUpdate {
    std::vector<std::uint32_t> ids; // sorted ascending
    Matrix grads;                   // |ids| x D
    double learning_rate = 0.0;
    double momentum = 0.0;
};

struct GatheredRows {
    Matrix rows;
    std::uint64_t version = 0;
};

struct WeightSnapshot {
    Matrix weights;
    std::uint64_t version = 0;
};

/// Source of truth for the class-weight matrix W with SGD-with-momentum row
/// updates. Models the paper's client-server sparse-update architecture
/// in-process: gathers return snapshot copies, scatters apply per-row
/// atomically, and a rebuild thread can snapshot concurrently. Momentum
/// buffers are per-row and advance only when the row is touched, so rows
/// outside an update stay bit-identical.
class ParamStore {
public:
    ParamStore(std::size_t n_classes, std::size_t dim, std::uint64_t seed)
        : weights_(n_classes, dim), momentum_(n_classes, dim) {
        Rng rng(derive_seed(seed, 0x57ULL));
        const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
        for (double& v : weights_.data) v = scale * rng.normal();
    }

    explicit ParamStore(Matrix initial)
        : weights_(std::move(initial)), momentum_(weights_.rows, weights_.cols) {}

    std::size_t classes() const { return weights_.rows; }
    std::size_t dim() const { return weights_.cols; }
    std::uint64_t version() const { return version_.load(std::memory_order_acquire); }

    /// Copy of the requested rows in id order, tagged with the version at
    /// read time. Rows are copied under their stripe lock, so no row mixes
    /// entries from two updates.
    GatheredRows gather(const ActiveSet& ids) const {
        check_active_set(ids, classes());
        GatheredRows out;
        out.version = version();
        out.rows = Matrix(ids.size(), dim());
        for (std::size_t k = 0; k < ids.size(); ++k) {
            std::shared_lock lock(stripe_for(ids.ids[k]));
            const double* src = weights_.row(ids.ids[k]);
            std::copy(src, src + dim(), out.rows.row(k));
        }
        return out;
    }

    /// Apply momentum_i <- mu * momentum_i + g_i; w_i <- w_i - lr * momentum_i
    /// for every touched row. Rejects the whole update if any gradient entry
    /// is non-finite. Returns the new version.
    std::uint64_t scatter_update(const RowUpdate& update) {
        require(update.grads.rows == update.ids.size(),
                "scatter_update: id/gradient row count mismatch");
        require(update.grads.cols == dim(), "scatter_update: gradient width mismatch");
        require(update.learning_rate > 0.0, "scatter_update: learning rate must be positive");
        require(update.momentum >= 0.0 && update.momentum < 1.0,
                "scatter_update: momentum must be in [0,1)");
        for (std::uint32_t id : update.ids)
            require(id < classes(), "scatter_update: row id out of range");
        for (double g : update.grads.data)
            require(std::isfinite(g), "scatter_update: non-finite gradient rejected");

        for (std::size_t k = 0; k < update.ids.size(); ++k) {
            const std::uint32_t id = update.ids[k];
            std::unique_lock lock(stripe_for(id));
            double* w = weights_.row(id);
            double* m = momentum_.row(id);
            const double* g = update.grads.row(k);
            for (std::size_t j = 0; j < dim(); ++j) {
                m[j] = update.momentum * m[j] + g[j];
                w[j] -= update.learning_rate * m[j];
            }
        }
        return version_.fetch_add(1, std::memory_order_acq_rel) + 1;
    }

    /// Consistent full copy for background structure rebuilds: each row is
    /// copied whole under its lock, so no row is half-applied.
    WeightSnapshot snapshot_for_rebuild() const {
        WeightSnapshot snap;
        snap.version = version();
        snap.weights = Matrix(classes(), dim());
        for (std::size_t i = 0; i < classes(); ++i) {
            std::shared_lock lock(stripe_for(static_cast<std::uint32_t>(i)));
            const double* src = weights_.row(i);
            std::copy(src, src + dim(), snap.weights.row(i));
        }
        return snap;
    }

    /// Direct read view for the single training worker (selection needs
    /// whole-matrix responses). Concurrent scatter calls from other workers
    /// are not synchronized against this view; the default harness has one
    /// training worker, and the rebuild thread uses snapshot_for_rebuild.
    const Matrix& weights_view() const { return weights_; }
    const Matrix& momentum_view() const { return momentum_; }

    // Checkpoint format (little-endian): "DCS1", u32 version, u64 N, u64 D,
    // N*D f64 weights row-major, N*D f64 momentum.
    void save_checkpoint(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        require(out.good(), "save_checkpoint: cannot open file for writing");
        out.write(kMagic, 4);
        const std::uint32_t ver32 = static_cast<std::uint32_t>(version());
        const std::uint64_t n = classes(), d = dim();
        write_raw(out, &ver32, sizeof(ver32));
        write_raw(out, &n, sizeof(n));
        write_raw(out, &d, sizeof(d));
        write_raw(out, weights_.data.data(), weights_.data.size() * sizeof(double));
        write_raw(out, momentum_.data.data(), momentum_.data.size() * sizeof(double));
        require(out.good(), "save_checkpoint: write failed");
    }

    static ParamStore load_checkpoint(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        require(in.good(), "load_checkpoint: cannot open file");
        char magic[4];
        in.read(magic, 4);
        require(in.good() && std::memcmp(magic, kMagic, 4) == 0,
                "load_checkpoint: bad magic bytes");
        std::uint32_t ver32 = 0;
        std::uint64_t n = 0, d = 0;
        read_raw(in, &ver32, sizeof(ver32));
        read_raw(in, &n, sizeof(n));
        read_raw(in, &d, sizeof(d));
        require(in.good() && n >= 1 && d >= 1, "load_checkpoint: bad dimensions");
        ParamStore store{Matrix(n, d)};
        read_raw(in, store.weights_.data.data(), n * d * sizeof(double));
        read_raw(in, store.momentum_.data.data(), n * d * sizeof(double));
        require(in.good(), "load_checkpoint: truncated file");
        store.version_.store(ver32, std::memory_order_release);
        return store;
    }

    ParamStore(ParamStore&& other) noexcept
        : weights_(std::move(other.weights_)),
          momentum_(std::move(other.momentum_)),
          version_(other.version_.load()) {}

private:
    static constexpr const char* kMagic = "DCS1";
    static constexpr std::size_t kStripes = 512;

    std::shared_mutex& stripe_for(std::uint32_t id) const {
        return stripes_[id % kStripes];
    }

    static void write_raw(std::ofstream& out, const void* p, std::size_t bytes) {
        out.write(static_cast<const char*>(p), static_cast<std::streamsize>(bytes));
    }
    static void read_raw(std::ifstream& in, void* p, std::size_t bytes) {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(bytes));
    }

    Matrix weights_;
    Matrix momentum_;
    std::atomic<std::uint64_t> version_{0};
    mutable std::array<std::shared_mutex, kStripes> stripes_;
};

} // namespace dcs
