#include "cte/metrics.hpp"
#include "cte/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace cte;

namespace {

Matrix normal_points(std::size_t m, std::size_t d, std::uint64_t seed, double shift = 0.0) {
    Rng rng(seed);
    Matrix x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal() + shift;
    return x;
}

Matrix column(std::initializer_list<double> values) {
    Matrix x(static_cast<Eigen::Index>(values.size()), 1);
    Eigen::Index i = 0;
    for (double v : values) x(i++, 0) = v;
    return x;
}

/// Trapezoid integral of (p - q)^2 for 1-D Gaussian KDEs with bandwidth sigma.
double kde_l2_quadrature(const Matrix &x, const Matrix &y, double sigma) {
    const double lo = std::min(x.minCoeff(), y.minCoeff()) - 10.0 * sigma;
    const double hi = std::max(x.maxCoeff(), y.maxCoeff()) + 10.0 * sigma;
    const int steps = 200000;
    const double h = (hi - lo) / steps;
    auto kde = [&](const Matrix &s, double t) {
        double v = 0.0;
        for (Eigen::Index i = 0; i < s.rows(); ++i) {
            const double z = (t - s(i, 0)) / sigma;
            v += std::exp(-0.5 * z * z);
        }
        return v / (static_cast<double>(s.rows()) * sigma * std::sqrt(2.0 * std::numbers::pi));
    };
    double total = 0.0;
    for (int k = 0; k <= steps; ++k) {
        const double t = lo + h * k;
        const double diff = kde(x, t) - kde(y, t);
        total += (k == 0 || k == steps ? 0.5 : 1.0) * diff * diff;
    }
    return total * h;
}

/// Exact 1-D Wasserstein-1 distance between equal-size uniform samples.
double sorted_quantile_w1(const Matrix &x, const Matrix &y) {
    std::vector<double> a(x.data(), x.data() + x.size());
    std::vector<double> b(y.data(), y.data() + y.size());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}


// Primal entropic OT by plain matrix scaling:
// <C, P> + eps * KL(P | a b^T) at the fixed point.
double primal_entropic_ot(const Matrix &x, const Matrix &y, double eps) {
    const Eigen::Index m = x.rows();
    const Eigen::Index l = y.rows();
    Eigen::MatrixXd c(m, l);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < l; ++j) c(i, j) = (x.row(i) - y.row(j)).norm();
    }
    const Eigen::MatrixXd k = (-c / eps).array().exp();
    Eigen::VectorXd u = Eigen::VectorXd::Ones(m);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(l);
    const double a = 1.0 / static_cast<double>(m);
    const double b = 1.0 / static_cast<double>(l);
    for (int it = 0; it < 20000; ++it) {
        u = (a / (k * v).array()).matrix();
        v = (b / (k.transpose() * u).array()).matrix();
    }
    const Eigen::MatrixXd p = u.asDiagonal() * k * v.asDiagonal();
    double total = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < l; ++j) {
            if (p(i, j) > 0.0) total += p(i, j) * c(i, j) + eps * p(i, j) * std::log(p(i, j) / (a * b));
        }
    }
    return total;
}

double median_pooled_distance(const Matrix &x, const Matrix &y) {
    Matrix z(x.rows() + y.rows(), x.cols());
    z << x, y;
    std::vector<double> d;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < z.rows(); ++j) d.push_back((z.row(i) - z.row(j)).norm());
    }
    std::sort(d.begin(), d.end());
    return d[d.size() / 2];
}

}  // namespace

TEST(MmdUnbiased, HandComputedTwoPointExample) {
    const Matrix x = column({0.0, 1.0});
    const double expected = 2.0 * std::exp(-0.5) - 0.5 * (2.0 + 2.0 * std::exp(-0.5));
    EXPECT_NEAR(mmd_unbiased(x, x, GaussianKernel(1.0)), expected, 1e-15);
    EXPECT_NEAR(expected, -0.39347, 1e-5);
}

TEST(MmdUnbiased, SameDistributionNearZero) {
    const Matrix x = normal_points(1000, 2, 1);
    const Matrix y = normal_points(1000, 2, 2);
    EXPECT_LT(std::abs(mmd_unbiased(x, y, GaussianKernel(2.0))), 5.0 / std::sqrt(1000.0));
}

TEST(MmdUnbiased, FarSamplesLoseCrossTerm) {
    const Matrix x = normal_points(20, 2, 3);
    const Matrix y = normal_points(20, 2, 4, 200.0);
    const GaussianKernel k(1.0);
    const Matrix kx = gram(k, x, x);
    const Matrix ky = gram(k, y, y);
    const double within = (kx.sum() - 20.0) / (20.0 * 19.0) + (ky.sum() - 20.0) / (20.0 * 19.0);
    EXPECT_NEAR(mmd_unbiased(x, y, k), within, 1e-12);
}

TEST(MmdUnbiased, NeedsTwoPointsPerSample) {
    EXPECT_THROW(mmd_unbiased(column({1.0}), column({1.0, 2.0}), GaussianKernel(1.0)), ConfigError);
}

TEST(MmdUnbiased, ConvergesToVStatistic) {
    const GaussianKernel k(1.5);
    auto gap = [&](std::size_t m) {
        const Matrix x = normal_points(m, 2, 10 + m);
        const Matrix y = normal_points(m, 2, 20 + m, 0.3);
        return std::abs(mmd_unbiased(x, y, k) - mmd_v_statistic(x, y, k));
    };
    EXPECT_LT(gap(500), gap(50));
}

TEST(MmdBiased, ZeroForIdenticalSets) {
    const Matrix x = normal_points(15, 3, 5);
    EXPECT_NEAR(mmd_biased_sq(x, x, GaussianKernel(2.0)), 0.0, 1e-15);
}

TEST(MmdBiased, SinglePointPairMatchesClosedForm) {
    const double sigma = 0.8;
    const double z = 1.3;
    const double expected = (1.0 / (std::sqrt(std::numbers::pi) * sigma)) * (1.0 - std::exp(-z * z / (4.0 * sigma * sigma)));
    EXPECT_NEAR(mmd_biased_sq(column({0.0}), column({z}), GaussianKernel(sigma)), expected, 1e-12);
}

TEST(MmdBiased, MatchesQuadratureOracle) {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t m = 1 + rng.index(30);
        const std::size_t l = 1 + rng.index(30);
        const Matrix x = normal_points(m, 1, 100 + static_cast<std::uint64_t>(trial));
        const Matrix y = normal_points(l, 1, 200 + static_cast<std::uint64_t>(trial), 0.5);
        const double sigma = 0.5 + rng.uniform();
        EXPECT_NEAR(mmd_biased_sq(x, y, GaussianKernel(sigma)), kde_l2_quadrature(x, y, sigma), 1e-8);
    }
}

TEST(MmdBiased, SymmetricAndDuplicationInvariant) {
    const Matrix x = normal_points(12, 2, 6);
    const Matrix y = normal_points(9, 2, 7, 0.4);
    const GaussianKernel k(1.1);
    const double v = mmd_biased_sq(x, y, k);
    EXPECT_GE(v, 0.0);
    EXPECT_NEAR(v, mmd_biased_sq(y, x, k), 1e-15);
    Matrix x2(24, 2), y2(18, 2);
    x2 << x, x;
    y2 << y, y;
    EXPECT_NEAR(mmd_biased_sq(x2, y2, k), v, 1e-14);
}

TEST(TvKl, ZeroOnIdenticalSamples) {
    const Matrix x = normal_points(100, 4, 8);
    const auto r = tv_kl_top3(x, x);
    EXPECT_DOUBLE_EQ(r.tv_top3, 0.0);
    EXPECT_NEAR(r.kl_top3, 0.0, 1e-9);
}

TEST(TvKl, DisjointBinsGiveUnitTv) {
    const Matrix x = column({0.0, 0.0, 0.0, 10.0});
    const Matrix y = column({10.0, 10.0});
    // d = 1, so the single feature is averaged: x mass 3/4 in bin 0, y none.
    const Matrix x_lo = column({0.0, 0.1, 0.2, 10.0});
    const Matrix y_hi = column({5.0, 5.1});
    EXPECT_NEAR(tv_kl_top3(x_lo, y_hi).tv_top3, 1.0, 1e-12);
    EXPECT_NEAR(tv_kl_top3(x, y).tv_top3, 0.75, 1e-12);
}

TEST(TvKl, TopThreeAveragesSinglePerturbedColumn) {
    Matrix x(10, 5);
    for (Eigen::Index i = 0; i < 10; ++i) {
        for (Eigen::Index j = 0; j < 5; ++j) x(i, j) = static_cast<double>(i);
    }
    Matrix y = x;
    // Move 4 of 10 points of column 2 into bins unused by x (bin width 9/32).
    y(0, 2) = 0.5;
    y(1, 2) = 1.5;
    y(2, 2) = 2.5;
    y(3, 2) = 3.5;
    const auto r = tv_kl_top3(x, y);
    EXPECT_NEAR(r.tv_top3, 0.4 / 3.0, 1e-12);
    EXPECT_GT(r.kl_top3, 0.0);
}

TEST(TvKl, ConstantColumnContributesZero) {
    Matrix x = Matrix::Constant(5, 1, 2.0);
    Matrix y = Matrix::Constant(3, 1, 7.0);
    const auto r = tv_kl_top3(x, y);
    EXPECT_DOUBLE_EQ(r.tv_top3, 0.0);
    EXPECT_DOUBLE_EQ(r.kl_top3, 0.0);
}

TEST(TvKl, ValidatesArguments) {
    EXPECT_THROW(tv_kl_top3(column({1.0, 2.0}), column({1.0}), 1), ConfigError);
    EXPECT_THROW(tv_kl_top3(Matrix::Zero(2, 2), Matrix::Zero(2, 3)), ShapeError);
}

TEST(Wasserstein, ZeroForIdenticalSamples) {
    const Matrix x = normal_points(40, 3, 9);
    const auto r = wasserstein(x, x);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.value, 0.0, 1e-6);
}

TEST(Wasserstein, MatchesSortedQuantileInOneDimension) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Matrix x = normal_points(60, 1, 300 + seed);
        const Matrix y = normal_points(60, 1, 400 + seed, 1.0 + 0.5 * static_cast<double>(seed));
        const double exact = sorted_quantile_w1(x, y);
        const auto r = wasserstein(x, y);
        EXPECT_TRUE(r.converged);
        // The entropic bias at this regularization is a few tenths here.
        EXPECT_NEAR(r.value, exact, 0.15 * exact) << "seed " << seed;
    }
}

TEST(Wasserstein, GrowsWithTranslation) {
    const Matrix x = normal_points(50, 2, 11);
    const Matrix base = normal_points(50, 2, 12);
    double prev = -1.0;
    for (double offset : {2.0, 5.0, 10.0}) {
        Matrix y = base;
        y.col(0).array() += offset;
        const double v = wasserstein(x, y).value;
        EXPECT_GT(v, prev);
        EXPECT_NEAR(v, offset, 0.3 * offset);
        prev = v;
    }
}

TEST(Mae, Arithmetic) {
    const std::vector<double> a{1.0, 2.0};
    const std::vector<double> b{0.0, 4.0};
    EXPECT_DOUBLE_EQ(mae(a, b), 1.5);
    EXPECT_DOUBLE_EQ(mae(a, a), 0.0);
    const std::vector<double> c{1.0};
    EXPECT_THROW(mae(a, c), ShapeError);
}

TEST(Mae, MetricAxiomsOnRandomTriples) {
    Rng rng(13);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> a(7), b(7), c(7);
        for (std::size_t j = 0; j < 7; ++j) {
            a[j] = rng.normal();
            b[j] = rng.normal();
            c[j] = rng.normal();
        }
        EXPECT_GE(mae(a, b), 0.0);
        EXPECT_DOUBLE_EQ(mae(a, b), mae(b, a));
        EXPECT_LE(mae(a, c), mae(a, b) + mae(b, c) + 1e-15);
    }
}

TEST(Mae, FeatureEffectLengthConvention) {
    const std::size_t d = 3;
    EXPECT_EQ(100 * (d + d * d), 1200u);
}

TEST(TopK, Examples) {
    const std::vector<double> truth{9, 8, 7, 6, 5, 0, 0, 0, 0, 0};
    const std::vector<double> est{9, 8, 7, 6, 0, 0, 0, 0, 0, 5};
    EXPECT_DOUBLE_EQ(topk_precision(truth, truth, 5), 1.0);
    EXPECT_DOUBLE_EQ(topk_precision(est, truth, 5), 0.8);
    EXPECT_DOUBLE_EQ(topk_precision(est, truth, 10), 1.0);
    EXPECT_THROW(topk_precision(est, truth, 11), ConfigError);
}

TEST(TopK, TiesBreakByLowerIndexAndUseMagnitude) {
    const std::vector<double> v{1.0, -3.0, 3.0, 0.5};
    EXPECT_EQ(topk_indices(v, 2), (IndexList{1, 2}));
    const std::vector<double> flat{2.0, 2.0, 2.0};
    EXPECT_EQ(topk_indices(flat, 2), (IndexList{0, 1}));
}

TEST(TopK, InvariantToPositiveRescaling) {
    Rng rng(14);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> a(8), b(8), a2(8), b2(8);
        const double sa = 0.01 + 10.0 * rng.uniform();
        const double sb = 0.01 + 10.0 * rng.uniform();
        for (std::size_t j = 0; j < 8; ++j) {
            a[j] = rng.normal();
            b[j] = rng.normal();
            a2[j] = sa * a[j];
            b2[j] = sb * b[j];
        }
        EXPECT_DOUBLE_EQ(topk_precision(a, b, 3), topk_precision(a2, b2, 3));
    }
}

TEST(Discrepancy, AllZeroForIdenticalSets) {
    const Matrix x = normal_points(30, 2, 15);
    const auto r = discrepancy(x, x, GaussianKernel(2.0));
    EXPECT_NEAR(r.mmd_biased_sq, 0.0, 1e-15);
    EXPECT_DOUBLE_EQ(r.tv_top3, 0.0);
    EXPECT_NEAR(r.kl_top3, 0.0, 1e-9);
    EXPECT_NEAR(r.wasserstein, 0.0, 1e-6);
}

TEST(Wasserstein, MatchesPrimalScalingOracle) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const Matrix x = normal_points(30, 2, 500 + seed);
        const Matrix y = normal_points(25, 2, 600 + seed, 0.7);
        const double eps = 0.05 * median_pooled_distance(x, y);
        const double expected =
            primal_entropic_ot(x, y, eps) - 0.5 * (primal_entropic_ot(x, x, eps) + primal_entropic_ot(y, y, eps));
        const auto r = wasserstein(x, y);
        EXPECT_TRUE(r.converged);
        EXPECT_NEAR(r.value, expected, 1e-5 * expected) << "seed " << seed;
    }
}
