#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "dcs/matrix.hpp"
#include "dcs/rng.hpp"

namespace dcs {

enum class ExtractorKind { Identity, Linear, Mlp };

inline const char* to_string(ExtractorKind kind) {
    switch (kind) {
        case ExtractorKind::Identity: return "identity";
        case ExtractorKind::Linear: return "linear";
        case ExtractorKind::Mlp: return "mlp";
    }
    return "unknown";
}

/// Stand-in feature extractor x = F(o; theta): identity, a single linear
/// map, or a two-layer perceptron with ReLU. Trained jointly through dL/dx
/// when non-identity; the softmax layer is the system under test, so this
/// stays deliberately small.
class FeatureExtractor {
public:
    FeatureExtractor() = default;

    FeatureExtractor(ExtractorKind kind, std::size_t in_dim, std::size_t out_dim,
                     std::size_t hidden, std::uint64_t seed)
        : kind_(kind), in_dim_(in_dim), out_dim_(out_dim) {
        Rng rng(derive_seed(seed, 0xFEA7ULL));
        if (kind_ == ExtractorKind::Identity) {
            require(in_dim == out_dim, "identity extractor requires in_dim == out_dim");
            return;
        }
        if (kind_ == ExtractorKind::Linear) {
            w1_ = random_gaussian_matrix(out_dim, in_dim, 1.0 / std::sqrt(double(in_dim)), rng);
        } else {
            hidden_ = hidden == 0 ? out_dim : hidden;
            w1_ = random_gaussian_matrix(hidden_, in_dim, 1.0 / std::sqrt(double(in_dim)), rng);
            w2_ = random_gaussian_matrix(out_dim, hidden_, 1.0 / std::sqrt(double(hidden_)), rng);
        }
        m1_ = Matrix(w1_.rows, w1_.cols);
        m2_ = Matrix(w2_.rows, w2_.cols);
        g1_ = Matrix(w1_.rows, w1_.cols);
        g2_ = Matrix(w2_.rows, w2_.cols);
    }

    ExtractorKind kind() const { return kind_; }
    bool trainable() const { return kind_ != ExtractorKind::Identity; }
    std::size_t out_dim() const { return out_dim_; }

    Vector forward(std::span<const double> input) const {
        if (kind_ == ExtractorKind::Identity) return Vector(input.begin(), input.end());
        if (kind_ == ExtractorKind::Linear) {
            Vector out;
            matvec(w1_, input, out);
            return out;
        }
        Vector h;
        matvec(w1_, input, h);
        for (double& v : h) v = std::max(v, 0.0);
        Vector out;
        matvec(w2_, h, out);
        return out;
    }

    /// Accumulate parameter gradients for one sample given dL/dx. The input
    /// (and hidden activation) are recomputed; batches are small.
    void accumulate(std::span<const double> input, std::span<const double> feature_grad) {
        if (kind_ == ExtractorKind::Identity) return;
        if (kind_ == ExtractorKind::Linear) {
            for (std::size_t i = 0; i < w1_.rows; ++i)
                axpy(feature_grad[i], input.data(), g1_.row(i), in_dim_);
            return;
        }
        Vector h;
        matvec(w1_, input, h);
        Vector relu = h;
        for (double& v : relu) v = std::max(v, 0.0);
        for (std::size_t i = 0; i < w2_.rows; ++i)
            axpy(feature_grad[i], relu.data(), g2_.row(i), hidden_);
        Vector dh(hidden_, 0.0);
        for (std::size_t i = 0; i < w2_.rows; ++i)
            axpy(feature_grad[i], w2_.row(i), dh.data(), hidden_);
        for (std::size_t i = 0; i < hidden_; ++i)
            if (h[i] <= 0.0) dh[i] = 0.0;
        for (std::size_t i = 0; i < w1_.rows; ++i)
            axpy(dh[i], input.data(), g1_.row(i), in_dim_);
    }

    /// SGD-with-momentum step over the accumulated gradients (scaled by
    /// 1/batch), then clears the accumulators.
    void step(double learning_rate, double momentum, std::size_t batch_size) {
        if (!trainable()) return;
        const double scale = 1.0 / static_cast<double>(batch_size);
        apply(w1_, m1_, g1_, learning_rate, momentum, scale);
        if (kind_ == ExtractorKind::Mlp) apply(w2_, m2_, g2_, learning_rate, momentum, scale);
    }

private:
    static void apply(Matrix& w, Matrix& m, Matrix& g, double lr, double mu, double scale) {
        for (std::size_t i = 0; i < w.data.size(); ++i) {
            m.data[i] = mu * m.data[i] + scale * g.data[i];
            w.data[i] -= lr * m.data[i];
            g.data[i] = 0.0;
        }
    }

    ExtractorKind kind_ = ExtractorKind::Identity;
    std::size_t in_dim_ = 0;
    std::size_t out_dim_ = 0;
    std::size_t hidden_ = 0;
    Matrix w1_, w2_;
    Matrix m1_, m2_;
    Matrix g1_, g2_;
};

} // namespace dcs
