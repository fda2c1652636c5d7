#include "cte/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

namespace cte {

namespace {

void require_same_dim(const Matrix &x, const Matrix &y, const char *what) {
    if (x.cols() != y.cols()) {
        throw ShapeError(std::string(what) + ": samples have different dimensions");
    }
}

/// Sum of k(x_i, y_j) over all pairs, optionally skipping the diagonal.
double kernel_sum(const Matrix &x, const Matrix &y, const GaussianKernel &kernel, bool skip_diagonal) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const auto xi = row_span(x, i);
        double row = 0.0;
        for (Eigen::Index j = 0; j < y.rows(); ++j) {
            if (skip_diagonal && i == j) continue;
            row += kernel(xi, row_span(y, j));
        }
        total += row;
    }
    return total;
}

}  // namespace

double mmd_unbiased(const Matrix &x, const Matrix &y, const GaussianKernel &kernel) {
    require_same_dim(x, y, "mmd_unbiased");
    const auto m = static_cast<double>(x.rows());
    const auto l = static_cast<double>(y.rows());
    if (x.rows() < 2 || y.rows() < 2) {
        throw ConfigError("mmd_unbiased: both samples need at least 2 points");
    }
    const double kxx = kernel_sum(x, x, kernel, true) / (m * (m - 1.0));
    const double kyy = kernel_sum(y, y, kernel, true) / (l * (l - 1.0));
    const double kxy = kernel_sum(x, y, kernel, false) / (m * l);
    return kxx + kyy - 2.0 * kxy;
}

double mmd_v_statistic(const Matrix &x, const Matrix &y, const GaussianKernel &kernel) {
    require_same_dim(x, y, "mmd_v_statistic");
    const auto m = static_cast<double>(x.rows());
    const auto l = static_cast<double>(y.rows());
    return kernel_sum(x, x, kernel, false) / (m * m) + kernel_sum(y, y, kernel, false) / (l * l) -
           2.0 * kernel_sum(x, y, kernel, false) / (m * l);
}

double mmd_biased_sq(const Matrix &x, const Matrix &y, const GaussianKernel &kernel) {
    require_same_dim(x, y, "mmd_biased_sq");
    if (x.rows() < 1 || y.rows() < 1) {
        throw ConfigError("mmd_biased_sq: both samples need at least 1 point");
    }
    // Convolving two N(0, sigma^2 I) densities gives N(0, 2 sigma^2 I).
    const double s = kernel.sigma();
    const double d = static_cast<double>(x.cols());
    const GaussianKernel convolved(std::sqrt(2.0) * s);
    const double norm = std::pow(4.0 * std::numbers::pi * s * s, -0.5 * d);
    const auto m = static_cast<double>(x.rows());
    const auto l = static_cast<double>(y.rows());
    const double value = kernel_sum(x, x, convolved, false) / (m * m) + kernel_sum(y, y, convolved, false) / (l * l) -
                         2.0 * kernel_sum(x, y, convolved, false) / (m * l);
    return std::max(0.0, norm * value);
}

MarginalDivergences tv_kl_top3(const Matrix &x, const Matrix &y, int bins, double eps) {
    require_same_dim(x, y, "tv_kl_top3");
    if (bins < 2) {
        throw ConfigError("tv_kl_top3: bins must be >= 2");
    }
    if (x.rows() < 1 || y.rows() < 1) {
        throw ConfigError("tv_kl_top3: empty sample");
    }
    const auto d = static_cast<std::size_t>(x.cols());
    std::vector<double> tv(d, 0.0);
    std::vector<double> kl(d, 0.0);
    const auto nb = static_cast<std::size_t>(bins);
    for (std::size_t j = 0; j < d; ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        const double lo = x.col(col).minCoeff();
        const double hi = x.col(col).maxCoeff();
        if (!(hi > lo)) {
            continue;  // single-bin convention
        }
        const double width = (hi - lo) / static_cast<double>(bins);
        auto bin_of = [&](double v) {
            const double pos = std::floor((v - lo) / width);
            return static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
        };
        std::vector<double> p(nb, 0.0);
        std::vector<double> q(nb, 0.0);
        for (Eigen::Index i = 0; i < x.rows(); ++i) p[bin_of(x(i, col))] += 1.0;
        for (Eigen::Index i = 0; i < y.rows(); ++i) q[bin_of(y(i, col))] += 1.0;
        double t = 0.0;
        double k = 0.0;
        for (std::size_t b = 0; b < nb; ++b) {
            p[b] /= static_cast<double>(x.rows());
            q[b] /= static_cast<double>(y.rows());
            t += std::abs(p[b] - q[b]);
            if (p[b] > 0.0) {
                k += p[b] * std::log(p[b] / (q[b] + eps));
            }
        }
        tv[j] = 0.5 * t;
        kl[j] = std::max(0.0, k);
    }
    auto top3_mean = [](std::vector<double> v) {
        std::sort(v.begin(), v.end(), std::greater<>());
        const std::size_t count = std::min<std::size_t>(3, v.size());
        return std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(count), 0.0) / static_cast<double>(count);
    };
    return {top3_mean(tv), top3_mean(kl)};
}

double mae(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("mae: shape mismatch (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    }
    if (a.empty()) {
        throw ShapeError("mae: empty input");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
    return sum / static_cast<double>(a.size());
}

double mae(const Matrix &a, const Matrix &b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("mae: matrix shape mismatch");
    }
    return mae(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
               std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}

IndexList topk_indices(std::span<const double> values, std::size_t k) {
    if (k > values.size()) {
        throw ConfigError("topk: k exceeds the number of features");
    }
    IndexList order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(values[a]) > std::abs(values[b]); });
    order.resize(k);
    return order;
}

double topk_precision(std::span<const double> estimate, std::span<const double> truth, std::size_t k) {
    if (estimate.size() != truth.size()) {
        throw ShapeError("topk_precision: shape mismatch");
    }
    if (k == 0 || k > truth.size()) {
        throw ConfigError("topk_precision: k must be in 1..d");
    }
    IndexList a = topk_indices(estimate, k);
    IndexList b = topk_indices(truth, k);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    IndexList common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    return static_cast<double>(common.size()) / static_cast<double>(k);
}

DiscrepancyReport discrepancy(const Matrix &full, const Matrix &coreset, const GaussianKernel &kernel, int bins) {
    DiscrepancyReport r;
    if (full.rows() >= 2 && coreset.rows() >= 2) {
        r.mmd_unbiased = mmd_unbiased(full, coreset, kernel);
    }
    r.mmd_biased_sq = mmd_biased_sq(full, coreset, kernel);
    const auto tvkl = tv_kl_top3(full, coreset, bins);
    r.tv_top3 = tvkl.tv_top3;
    r.kl_top3 = tvkl.kl_top3;
    const auto w = wasserstein(full, coreset);
    r.wasserstein = w.value;
    r.wasserstein_converged = w.converged;
    return r;
}

}  // namespace cte
