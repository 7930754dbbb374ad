#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>

#include "dcs/softmax.hpp"
#include "test_util.hpp"

using namespace dcs;
using testutil::near;

TEST_CASE("softmax symmetry and analytic values") {
    const Vector uniform = softmax(std::vector<double>{0.0, 0.0, 0.0});
    for (double v : uniform) REQUIRE(near(v, 1.0 / 3.0, 1e-15));

    const Vector skewed = softmax(std::vector<double>{std::log(2.0), 0.0, 0.0});
    REQUIRE(near(skewed[0], 0.5, 1e-12));
    REQUIRE(near(skewed[1], 0.25, 1e-12));
    REQUIRE(near(skewed[2], 0.25, 1e-12));

    REQUIRE_THROWS_AS(softmax(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("softmax matches naive reference on random length-1000 input") {
    Rng rng(42);
    std::vector<double> y(1000);
    for (double& v : y) v = 6.0 * rng.uniform() - 3.0;
    const Vector p = softmax(y);
    const auto ref = testutil::naive_softmax(y);
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        REQUIRE(near(p[i], ref[i], 1e-12));
        total += p[i];
    }
    REQUIRE(near(total, 1.0, 1e-12));
}

TEST_CASE("softmax is overflow safe") {
    const Vector p = softmax(std::vector<double>{1000.0, 999.0, -1000.0});
    REQUIRE(std::isfinite(p[0]));
    REQUIRE(p[0] > p[1]);
    REQUIRE(near(p[0] + p[1] + p[2], 1.0, 1e-12));
}

TEST_CASE("forward_full analytic cases") {
    Matrix eye(3, 3);
    for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
    const Vector p = forward_full(std::vector<double>{0.0, 0.0, 0.0}, eye);
    for (double v : p) REQUIRE(near(v, 1.0 / 3.0, 1e-15));

    Matrix two(2, 2);
    two(0, 0) = 1.0;
    two(1, 1) = 1.0;
    const Vector q = forward_full(std::vector<double>{std::log(3.0), 0.0}, two);
    REQUIRE(near(q[0], 0.75, 1e-12));
    REQUIRE(near(q[1], 0.25, 1e-12));

    REQUIRE_THROWS_AS(forward_full(std::vector<double>{1.0}, two), std::invalid_argument);
}

TEST_CASE("forward_full equals brute-force oracle, N=500 D=16") {
    Rng rng(7);
    const Matrix W = testutil::random_weights(500, 16, rng);
    const Vector x = testutil::random_unit_vector(16, rng);
    const Vector p = forward_full(x, W);

    std::vector<double> y(500);
    for (std::size_t i = 0; i < 500; ++i) y[i] = dot(W.row(i), x.data(), 16);
    const auto ref = testutil::naive_softmax(y);
    for (std::size_t i = 0; i < 500; ++i) REQUIRE(near(p[i], ref[i], 1e-12));
}

TEST_CASE("forward_selective degenerate and singleton cases") {
    Rng rng(3);
    const Matrix W = testutil::random_weights(20, 8, rng);
    const Vector x = testutil::random_unit_vector(8, rng);

    const Vector full = forward_full(x, W);
    const Vector via_full_set = forward_selective(x, W, full_set(20));
    for (std::size_t i = 0; i < 20; ++i) REQUIRE(near(full[i], via_full_set[i], 1e-12));

    ActiveSet singleton;
    singleton.ids = {7};
    const Vector p = forward_selective(x, W, singleton);
    for (std::size_t i = 0; i < 20; ++i) REQUIRE(p[i] == (i == 7 ? 1.0 : 0.0));

    ActiveSet empty;
    REQUIRE_THROWS_AS(forward_selective(x, W, empty), std::invalid_argument);
    ActiveSet out_of_range;
    out_of_range.ids = {5, 99};
    REQUIRE_THROWS_AS(forward_selective(x, W, out_of_range), std::invalid_argument);
}

TEST_CASE("forward_selective equals restricted-softmax oracle, N=100 |S|=10") {
    Rng rng(11);
    const Matrix W = testutil::random_weights(100, 8, rng);
    const Vector x = testutil::random_unit_vector(8, rng);
    ActiveSet s;
    s.ids = {3, 12, 17, 33, 40, 41, 58, 77, 90, 99};

    const Vector p = forward_selective(x, W, s);

    // oracle: exponentiate the restricted logits, normalize, scatter
    double total = 0.0;
    std::vector<double> e(s.ids.size());
    for (std::size_t k = 0; k < s.ids.size(); ++k) {
        e[k] = std::exp(dot(W.row(s.ids[k]), x.data(), 8));
        total += e[k];
    }
    std::size_t k = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
        if (k < s.ids.size() && s.ids[k] == i) {
            REQUIRE(near(p[i], e[k] / total, 1e-12));
            ++k;
        } else {
            REQUIRE(p[i] == 0.0);
        }
        sum += p[i];
    }
    REQUIRE(near(sum, 1.0, 1e-9));
}

TEST_CASE("expansion validity on random instances") {
    Rng rng(19);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 30 + rng.below(200);
        const Matrix W = testutil::random_weights(n, 12, rng);
        const Vector x = testutil::random_unit_vector(12, rng);
        std::vector<std::uint32_t> ids;
        const std::size_t m = 1 + rng.below(n);
        for (std::size_t i = 0; i < m; ++i) ids.push_back(static_cast<std::uint32_t>(rng.below(n)));
        const ActiveSet s = make_active_set(std::move(ids), n, SelectorKind::Random);
        const Vector p = forward_selective(x, W, s);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            REQUIRE(p[i] >= 0.0);
            if (!s.contains(static_cast<std::uint32_t>(i))) REQUIRE(p[i] == 0.0);
            total += p[i];
        }
        REQUIRE(near(total, 1.0, 1e-9));
    }
}

TEST_CASE("total variation to full softmax shrinks as nested sets grow") {
    Rng rng(23);
    const std::size_t n = 120;
    const Matrix W = testutil::random_weights(n, 10, rng);
    const Vector x = testutil::random_unit_vector(10, rng);
    const Vector full = forward_full(x, W);

    Vector y;
    matvec(W, x, y);
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(),
              [&](std::uint32_t a, std::uint32_t b) { return y[a] > y[b]; });

    double prev = 1.0;
    for (std::size_t m : {5u, 10u, 20u, 40u, 80u, 120u}) {
        const ActiveSet s = make_active_set(
            {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m)}, n,
            SelectorKind::Optimal);
        const double tv = testutil::total_variation(forward_selective(x, W, s), full);
        REQUIRE(tv <= prev + 1e-12);
        prev = tv;
    }
    REQUIRE(near(prev, 0.0, 1e-12));
}

TEST_CASE("backward_selective analytic cases") {
    Rng rng(5);
    const Matrix W = testutil::random_weights(10, 6, rng);
    const Vector x = testutil::random_unit_vector(6, rng);

    ActiveSet singleton;
    singleton.ids = {4};
    const GradientRows g = backward_selective(x, W, singleton, 4);
    REQUIRE(g.loss == 0.0);
    for (std::size_t j = 0; j < 6; ++j) REQUIRE(g.rows(0, j) == 0.0);

    // two classes with equal responses: gradient is +-x/2
    Matrix zero(2, 3);
    const Vector x3{0.4, -0.2, 1.0};
    ActiveSet both;
    both.ids = {0, 1};
    const GradientRows g2 = backward_selective(x3, zero, both, 0);
    for (std::size_t j = 0; j < 3; ++j) {
        REQUIRE(near(g2.rows(0, j), -0.5 * x3[j], 1e-15));
        REQUIRE(near(g2.rows(1, j), 0.5 * x3[j], 1e-15));
    }
    REQUIRE(near(g2.loss, std::log(2.0), 1e-15));

    REQUIRE_THROWS_AS(backward_selective(x, W, singleton, 5), precondition_error);
}

namespace {

double restricted_loss(const Matrix& W, const Vector& x, const ActiveSet& s,
                       std::uint32_t label) {
    const Vector p = forward_selective(x, W, s);
    return -std::log(p[label]);
}

} // namespace

TEST_CASE("gradients match central finite differences") {
    Rng rng(31);
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 50, d = 8, m = 10;
        Matrix W = testutil::random_weights(n, d, rng);
        const Vector x = testutil::random_unit_vector(d, rng);
        std::vector<std::uint32_t> ids;
        for (std::size_t i = 0; i < m; ++i) ids.push_back(static_cast<std::uint32_t>(rng.below(n)));
        ActiveSet s = make_active_set(std::move(ids), n, SelectorKind::Random);
        const std::uint32_t label = s.ids[rng.below(s.ids.size())];

        const GradientRows g = backward_selective(x, W, s, label);
        REQUIRE(near(g.loss, restricted_loss(W, x, s, label), 1e-12));

        for (std::size_t k = 0; k < s.ids.size(); ++k) {
            for (std::size_t j = 0; j < d; ++j) {
                const double keep = W(s.ids[k], j);
                W(s.ids[k], j) = keep + h;
                const double up = restricted_loss(W, x, s, label);
                W(s.ids[k], j) = keep - h;
                const double down = restricted_loss(W, x, s, label);
                W(s.ids[k], j) = keep;
                const double fd = (up - down) / (2.0 * h);
                REQUIRE(testutil::rel_err(g.rows(k, j), fd) <= 1e-5);
            }
        }
        Vector xp = x;
        for (std::size_t j = 0; j < d; ++j) {
            const double keep = xp[j];
            xp[j] = keep + h;
            const double up = restricted_loss(W, xp, s, label);
            xp[j] = keep - h;
            const double down = restricted_loss(W, xp, s, label);
            xp[j] = keep;
            const double fd = (up - down) / (2.0 * h);
            REQUIRE(testutil::rel_err(g.feature_grad[j], fd) <= 1e-5);
        }
    }
}

TEST_CASE("selective step cost grows linearly in |S|", "[timing]") {
    Rng rng(77);
    // sizes chosen so both working sets stay cache- and arena-resident;
    // larger sizes measure the memory system, not the algorithm
    const std::size_t n = 1024, d = 64;
    const Matrix W = testutil::random_weights(n, d, rng);
    const Vector x = testutil::random_unit_vector(d, rng);

    auto set_of = [&](std::size_t m) {
        std::vector<std::uint32_t> ids(m);
        for (std::size_t i = 0; i < m; ++i) ids[i] = static_cast<std::uint32_t>(i);
        return make_active_set(std::move(ids), n, SelectorKind::Optimal);
    };
    auto batch = [&](const ActiveSet& s, int reps) {
        const auto t0 = std::chrono::steady_clock::now();
        double acc = 0.0;
        for (int r = 0; r < reps; ++r) {
            const Vector p = forward_selective(x, W, s);
            const GradientRows g = backward_selective(x, W, s, 0);
            acc += p[0] + g.loss;
        }
        const auto t1 = std::chrono::steady_clock::now();
        return std::chrono::duration<double>(t1 - t0).count() + 0.0 * acc;
    };
    const ActiveSet small = set_of(96), large = set_of(192);
    batch(small, 50); // warmup
    batch(large, 50);
    std::vector<double> small_runs, large_runs;
    for (int trial = 0; trial < 7; ++trial) {
        small_runs.push_back(batch(small, 400));
        large_runs.push_back(batch(large, 400));
    }
    std::sort(small_runs.begin(), small_runs.end());
    std::sort(large_runs.begin(), large_runs.end());
    const double ratio = large_runs[3] / small_runs[3];
    REQUIRE(ratio >= 1.6);
    REQUIRE(ratio <= 2.4);
}
