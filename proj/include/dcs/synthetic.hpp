#pragma once

#include <cstdint>
#include <vector>

#include "dcs/matrix.hpp"
#include "dcs/rng.hpp"

namespace dcs {

/// Synthetic classification data with super-cluster structure, so that
/// classes have meaningful near neighbors: class centers are unit vectors
/// scattered around a smaller set of super-cluster directions, and samples
/// are noisy copies of their class center.
struct DatasetSpec {
    std::size_t n_classes = 0;
    std::size_t dim = 0;
    std::size_t samples_per_class = 0;
    std::size_t n_superclusters = 1;
    double center_spread = 0.3;  // scatter of class centers around their super-cluster
    double noise_scale = 0.2;    // intra-class sample noise
    std::size_t holdout_per_class = 0;
    std::uint64_t seed = 1;
};

struct SyntheticDataset {
    DatasetSpec spec;
    Matrix centers;    // n_classes x dim, unit rows
    Matrix features;   // (n_classes * samples_per_class) x dim, unit rows
    std::vector<std::uint32_t> labels;
    std::vector<std::uint32_t> train_indices;
    std::vector<std::uint32_t> holdout_indices;

    std::size_t n_classes() const { return spec.n_classes; }
    std::size_t dim() const { return spec.dim; }
};

inline SyntheticDataset generate_dataset(const DatasetSpec& spec) {
    require(spec.n_classes >= 2, "generate_dataset: need at least two classes");
    require(spec.dim >= 1, "generate_dataset: dim must be >= 1");
    require(spec.samples_per_class >= 1, "generate_dataset: need samples");
    require(spec.noise_scale >= 0.0, "generate_dataset: noise scale must be >= 0");
    require(spec.center_spread >= 0.0, "generate_dataset: center spread must be >= 0");
    require(spec.n_superclusters >= 1, "generate_dataset: need at least one super-cluster");
    require(spec.holdout_per_class < spec.samples_per_class,
            "generate_dataset: holdout must leave training samples");

    SyntheticDataset ds;
    ds.spec = spec;
    Rng rng(derive_seed(spec.seed, 0xDA7AULL));

    Matrix directions(spec.n_superclusters, spec.dim);
    for (std::size_t g = 0; g < spec.n_superclusters; ++g) {
        double* dir = directions.row(g);
        for (std::size_t j = 0; j < spec.dim; ++j) dir[j] = rng.normal();
        normalize(dir, spec.dim);
    }

    ds.centers = Matrix(spec.n_classes, spec.dim);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        const double* dir = directions.row(c % spec.n_superclusters);
        double* center = ds.centers.row(c);
        for (std::size_t j = 0; j < spec.dim; ++j)
            center[j] = dir[j] + spec.center_spread * rng.normal();
        normalize(center, spec.dim);
    }

    const std::size_t total = spec.n_classes * spec.samples_per_class;
    ds.features = Matrix(total, spec.dim);
    ds.labels.resize(total);
    ds.train_indices.reserve(total - spec.n_classes * spec.holdout_per_class);
    ds.holdout_indices.reserve(spec.n_classes * spec.holdout_per_class);
    std::size_t row = 0;
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        for (std::size_t k = 0; k < spec.samples_per_class; ++k, ++row) {
            const double* center = ds.centers.row(c);
            double* x = ds.features.row(row);
            for (std::size_t j = 0; j < spec.dim; ++j)
                x[j] = center[j] + spec.noise_scale * rng.normal();
            if (spec.noise_scale > 0.0) normalize(x, spec.dim);
            ds.labels[row] = static_cast<std::uint32_t>(c);
            if (k < spec.samples_per_class - spec.holdout_per_class)
                ds.train_indices.push_back(static_cast<std::uint32_t>(row));
            else
                ds.holdout_indices.push_back(static_cast<std::uint32_t>(row));
        }
    }
    return ds;
}

} // namespace dcs
