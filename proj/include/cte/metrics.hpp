#pragma once

#include "cte/common.hpp"
#include "cte/kernels.hpp"

#include <span>
#include <utility>

namespace cte {

/// Unbiased (U-statistic) estimate of squared MMD; may be negative. Needs m, l >= 2.
double mmd_unbiased(const Matrix &x, const Matrix &y, const GaussianKernel &kernel);

/// Squared L2 distance between the Gaussian kernel density estimates of the
/// two samples (bandwidth sigma), in closed form. Needs m, l >= 1.
double mmd_biased_sq(const Matrix &x, const Matrix &y, const GaussianKernel &kernel);

/// V-statistic of squared MMD with the kernel itself (used to check the
/// convergence of the unbiased estimator).
double mmd_v_statistic(const Matrix &x, const Matrix &y, const GaussianKernel &kernel);

struct MarginalDivergences {
    double tv_top3 = 0.0;
    double kl_top3 = 0.0;
};

/// Mean of the three largest per-feature histogram TV and KL divergences of
/// @p y from the reference @p x (all features when d < 3). Bins span the range
/// of x; out-of-range y mass goes to the edge bins.
MarginalDivergences tv_kl_top3(const Matrix &x, const Matrix &y, int bins = 32, double eps = 1e-10);

struct SinkhornResult {
    double value = 0.0;
    bool converged = true;
    int iterations = 0;
};

struct SinkhornOptions {
    /// Regularization as a fraction of the median pairwise distance of the pooled sample.
    double epsilon_scale = 0.05;
    double tolerance = 1e-6;
    int max_iterations = 1000;
};

/// Debiased Sinkhorn divergence between uniform empirical measures with
/// Euclidean ground cost.
SinkhornResult wasserstein(const Matrix &x, const Matrix &y, const SinkhornOptions &options = {});

/// Mean absolute elementwise difference.
double mae(std::span<const double> a, std::span<const double> b);
double mae(const Matrix &a, const Matrix &b);

/// Overlap of the top-k features by absolute value; ties go to the lower index.
double topk_precision(std::span<const double> estimate, std::span<const double> truth, std::size_t k);

/// Indices of the k largest |values|, ties broken by ascending index.
IndexList topk_indices(std::span<const double> values, std::size_t k);

struct DiscrepancyReport {
    double mmd_unbiased = 0.0;
    double mmd_biased_sq = 0.0;
    double tv_top3 = 0.0;
    double kl_top3 = 0.0;
    double wasserstein = 0.0;
    bool wasserstein_converged = true;
};

/// All distance families between a full sample and a coreset.
DiscrepancyReport discrepancy(const Matrix &full, const Matrix &coreset, const GaussianKernel &kernel, int bins = 32);

struct ErrorReport {
    double mae = 0.0;
    double topk_precision = 0.0;
    std::size_t k = 0;
};

}  // namespace cte
