#include "cte/synthetic.hpp"
#include "cte/rng.hpp"

#include <cmath>

namespace cte {

namespace {

void check_shape(std::size_t n, std::size_t d) {
    if (n == 0 || d == 0) {
        throw ConfigError("synthetic: n and d must be positive");
    }
}

double feature_weight(std::size_t j) { return 2.0 * std::pow(0.8, static_cast<double>(j)) * (j % 3 == 2 ? -1.0 : 1.0); }

}  // namespace

Dataset gaussian_mixture(std::size_t n, std::size_t d, std::size_t components, std::uint64_t seed, double spread) {
    check_shape(n, d);
    if (components == 0) {
        throw ConfigError("synthetic: components must be positive");
    }
    Rng rng(derive_seed(seed, "mixture"));
    Matrix means(static_cast<Eigen::Index>(components), static_cast<Eigen::Index>(d));
    for (Eigen::Index c = 0; c < means.rows(); ++c) {
        for (Eigen::Index j = 0; j < means.cols(); ++j) means(c, j) = spread * (2.0 * rng.uniform() - 1.0);
    }
    Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const auto c = static_cast<Eigen::Index>(rng.index(components));
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = means(c, j) + rng.normal();
    }
    return Dataset::from_matrix(std::move(x));
}

Dataset synthetic_classification(std::size_t n, std::size_t d, std::uint64_t seed) {
    Dataset data = gaussian_mixture(n, d, 4, seed, 1.5);
    Rng rng(derive_seed(seed, "labels"));
    Vector y(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) z += feature_weight(j) * data.features(i, static_cast<Eigen::Index>(j));
        if (d >= 2) z += 0.5 * data.features(i, 0) * data.features(i, 1);
        const double p = 1.0 / (1.0 + std::exp(-z));
        y(i) = rng.uniform() < p ? 1.0 : 0.0;
    }
    return Dataset::from_matrix(std::move(data.features), std::move(y), TaskKind::classification);
}

Dataset synthetic_regression(std::size_t n, std::size_t d, std::uint64_t seed) {
    Dataset data = gaussian_mixture(n, d, 4, seed, 1.5);
    Rng rng(derive_seed(seed, "targets"));
    Vector y(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double v = 0.0;
        for (std::size_t j = 0; j < d; ++j) v += feature_weight(j) * std::sin(data.features(i, static_cast<Eigen::Index>(j)));
        if (d >= 2) v += 0.5 * data.features(i, 0) * data.features(i, 1);
        y(i) = v + 0.1 * rng.normal();
    }
    return Dataset::from_matrix(std::move(data.features), std::move(y), TaskKind::regression);
}

Dataset generate_dataset(const std::string &kind, std::size_t n, std::size_t d, std::uint64_t seed) {
    if (kind == "mixture") return gaussian_mixture(n, d, 8, seed);
    if (kind == "classification") return synthetic_classification(n, d, seed);
    if (kind == "regression") return synthetic_regression(n, d, seed);
    throw ConfigError("unknown synthetic dataset kind: " + kind);
}

}  // namespace cte
