#include "cte/kernels.hpp"
#include "cte/rng.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace cte;

namespace {

Matrix random_points(std::size_t m, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    return x;
}

}  // namespace

TEST(GaussianKernel, UnitAtZeroDistance) {
    const GaussianKernel k(1.7);
    const std::vector<double> x{0.3, -1.0, 2.0};
    EXPECT_DOUBLE_EQ(k(x, x), 1.0);
}

TEST(GaussianKernel, DirectEvaluation) {
    const GaussianKernel k(1.0);
    const std::vector<double> x{0.0};
    const std::vector<double> y{2.0};
    EXPECT_NEAR(k(x, y), std::exp(-2.0), 1e-15);
    EXPECT_NEAR(k(x, y), 0.135335, 1e-6);
}

TEST(GaussianKernel, WideBandwidthApproachesOne) {
    const GaussianKernel k(1e8);
    const std::vector<double> x{-5.0, 4.0};
    const std::vector<double> y{7.0, 1.0};
    EXPECT_NEAR(k(x, y), 1.0, 1e-12);
}

TEST(GaussianKernel, DimensionMismatchIsShapeError) {
    const GaussianKernel k(1.0);
    const std::vector<double> x{1.0, 2.0};
    const std::vector<double> y{1.0};
    EXPECT_THROW(k(x, y), ShapeError);
}

TEST(GaussianKernel, RejectsNonPositiveBandwidth) {
    EXPECT_THROW(GaussianKernel(0.0), ConfigError);
    EXPECT_THROW(GaussianKernel(-1.0), ConfigError);
}

TEST(GaussianKernel, TranslationInvariant) {
    const GaussianKernel k(1.3);
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> x(4), y(4), xs(4), ys(4);
        for (int j = 0; j < 4; ++j) {
            x[j] = rng.normal();
            y[j] = rng.normal();
            const double shift = 10.0 * rng.normal();
            xs[j] = x[j] + shift;
            ys[j] = y[j] + shift;
        }
        EXPECT_NEAR(k(x, y), k(xs, ys), 1e-12);
    }
}

TEST(DefaultBandwidth, SqrtTwoD) {
    EXPECT_DOUBLE_EQ(default_bandwidth(2), 2.0);
    EXPECT_DOUBLE_EQ(default_bandwidth(8), 4.0);
    EXPECT_NEAR(default_bandwidth(1), 1.41421, 1e-5);
}

TEST(SquaredDistance, CompensatedSumMatchesLongDouble) {
    Rng rng(3);
    std::vector<double> x(1000), y(1000);
    long double ref = 0.0L;
    for (std::size_t j = 0; j < x.size(); ++j) {
        x[j] = 1e3 + rng.normal();
        y[j] = 1e3 + rng.normal();
        const long double diff = static_cast<long double>(x[j]) - static_cast<long double>(y[j]);
        ref += diff * diff;
    }
    EXPECT_NEAR(squared_distance(x, y), static_cast<double>(ref), 1e-10 * static_cast<double>(ref));
}

TEST(Gram, SymmetricUnitDiagonal) {
    const Matrix a = random_points(20, 3, 5);
    const Matrix g = gram(GaussianKernel(1.5), a, a);
    EXPECT_TRUE(g.isApprox(g.transpose(), 0.0));
    for (Eigen::Index i = 0; i < g.rows(); ++i) EXPECT_DOUBLE_EQ(g(i, i), 1.0);
    EXPECT_GT(g.minCoeff(), 0.0);
    EXPECT_LE(g.maxCoeff(), 1.0);
}

TEST(Gram, SingleEntryBaseCase) {
    const GaussianKernel k(2.0);
    Matrix a(1, 2), b(1, 2);
    a << 1.0, 2.0;
    b << -1.0, 0.5;
    const Matrix g = gram(k, a, b);
    ASSERT_EQ(g.rows(), 1);
    ASSERT_EQ(g.cols(), 1);
    EXPECT_DOUBLE_EQ(g(0, 0), k(row_span(a, 0), row_span(b, 0)));
}

TEST(Gram, FarClustersHaveVanishingOffBlocks) {
    const double sigma = 1.0;
    Matrix a = random_points(5, 2, 8) * 0.1;
    Matrix b = random_points(5, 2, 9) * 0.1;
    b.col(0).array() += 20.0 * sigma;
    const Matrix g = gram(GaussianKernel(sigma), a, b);
    EXPECT_LT(g.maxCoeff(), 1e-10);
}

TEST(Gram, DimensionMismatchIsShapeError) {
    EXPECT_THROW(gram(GaussianKernel(1.0), Matrix::Zero(2, 3), Matrix::Zero(2, 2)), ShapeError);
}

TEST(Gram, PositiveSemidefinite) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix a = random_points(48, 4, 100 + seed);
        const Matrix g = gram(GaussianKernel(0.7 + 0.3 * static_cast<double>(seed)), a, a);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(g)};
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
    }
}
