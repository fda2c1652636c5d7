#pragma once

#include "cte/common.hpp"
#include "cte/data.hpp"
#include "cte/models.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cte {

/// Membership flags over features: true = taken from the explained instance,
/// false = marginalized over the background.
using Coalition = std::vector<char>;

struct ExplainConfig {
    int npermutations = 10;
    /// KernelSHAP coalition budget; all coalitions are used when 2^d - 2 fits.
    std::size_t shap_nsamples = 2048;
    /// Expected-gradients quadrature nodes.
    int n_steps = 50;
    /// SAGE loss; cross-entropy for probabilistic models, MSE otherwise when absent.
    std::optional<Loss> loss;
    std::uint64_t seed = 0;
    /// Permutation estimators enumerate all d! orderings instead of sampling.
    bool exhaustive = false;
    /// Rows per model call when evaluating marginalized coalitions.
    std::size_t chunk_rows = 1 << 15;
    /// Threads used to split explained instances; results do not depend on it.
    std::size_t workers = 1;
};

struct Attribution {
    Matrix values;     ///< n x d
    Vector base_values;  ///< n, expected output over the background
};

struct GlobalImportance {
    Vector values;
    Vector stderr_values;
};

struct EffectGrid {
    Vector lo;
    Vector hi;
    int points_1d = 100;
    int points_2d = 10;

    /// Uniform grid over [min, max] of each foreground column.
    static EffectGrid from_data(const Matrix &foreground, int points_1d = 100, int points_2d = 10);

    /// Grid value @p k of @p points evenly spaced over feature @p j.
    double value(std::size_t j, int k, int points) const;
};

struct FeatureEffects {
    EffectGrid grid;
    /// d x points_1d partial dependence values.
    Matrix effects_1d;
    /// One points_2d x points_2d block per unordered pair (j < k), in
    /// lexicographic pair order; entry (a, b) has feature j at grid a, k at grid b.
    std::vector<Matrix> effects_2d;

    std::size_t dims() const { return static_cast<std::size_t>(effects_1d.rows()); }
    const Matrix &pair(std::size_t j, std::size_t k) const;

    /// Length points_1d * d + points_2d^2 * d^2: the 1-D curves, then every
    /// ordered pair (j, k); (k, j) repeats the transposed (j, k) block and the
    /// diagonal blocks are zero.
    std::vector<double> flatten() const;
};

/// Mean model output over the background with features outside @p s replaced
/// by background values.
double marginalize(const ModelFunction &f, std::span<const double> x, const Coalition &s, const Matrix &background);

/// Batched evaluation of the marginalized game for one instance.
class Marginalizer {
  public:
    Marginalizer(const ModelFunction &f, const Matrix &background, std::size_t chunk_rows = 1 << 15);

    /// Mean explained output for each coalition.
    Vector values(std::span<const double> x, const std::vector<Coalition> &coalitions) const;

    /// Mean of every output column for each coalition (coalitions x outputs).
    Matrix mean_outputs(std::span<const double> x, const std::vector<Coalition> &coalitions) const;

    std::size_t dims() const { return static_cast<std::size_t>(background_.cols()); }
    const ModelFunction &function() const { return f_; }

  private:
    const ModelFunction &f_;
    const Matrix &background_;
    std::size_t chunk_rows_;
};

/// Brute-force Shapley values over the marginalized game (d <= 12).
Vector exact_shap(const ModelFunction &f, std::span<const double> x, const Matrix &background);

/// Antithetic permutation sampling (forward and reverse sweep per permutation).
Vector permutation_shap(const ModelFunction &f, std::span<const double> x, const Matrix &background,
                        const ExplainConfig &config, std::uint64_t seed);

struct KernelShapResult {
    Vector values;
    /// True when the regression system was singular and a ridge term was added.
    bool regularized = false;
};

/// Constrained weighted least squares over sampled coalitions with Shapley kernel weights.
KernelShapResult kernel_shap(const ModelFunction &f, std::span<const double> x, const Matrix &background,
                             const ExplainConfig &config, std::uint64_t seed);

enum class Estimator {
    kernel_shap,
    permutation_shap,
    kernel_sage,
    permutation_sage,
    kernel_sage_fg,
    permutation_sage_fg,
    expected_gradients,
    feature_effects,
};

std::string to_string(Estimator e);
Estimator estimator_from_string(const std::string &name);

/// True for SAGE estimators, whose output is a GlobalImportance.
bool is_global(Estimator e);
/// True for the estimators that use the compressed sample as foreground too.
bool uses_coreset_foreground(Estimator e);
/// True when repeated runs with different seeds can differ.
bool is_stochastic(Estimator e);

/// Local attributions for every foreground row. Instance i uses the seed
/// derive_seed(config.seed, "explain", i).
Attribution explain_local(Estimator e, const ModelFunction &f, const Matrix &foreground, const Matrix &background,
                          const ExplainConfig &config);

GlobalImportance permutation_sage(const ModelFunction &f, const Dataset &foreground, const Matrix &background,
                                  const ExplainConfig &config);
GlobalImportance kernel_sage(const ModelFunction &f, const Dataset &foreground, const Matrix &background,
                             const ExplainConfig &config);

/// Exact SAGE values by enumerating all coalitions (d <= 12).
Vector exact_sage(const ModelFunction &f, const Dataset &foreground, const Matrix &background, Loss loss);

/// Gauss-Legendre nodes and weights mapped to [0, 1].
struct Quadrature {
    std::vector<double> nodes;
    std::vector<double> weights;
};
Quadrature gauss_legendre_unit(int n);

/// Baseline-averaged integrated gradients with Gauss-Legendre quadrature.
Vector expected_gradients(const MLPModel &model, std::span<const double> x, const Matrix &baselines,
                          const ExplainConfig &config, std::optional<std::size_t> output = std::nullopt);

/// Integrated gradients from one baseline.
Vector integrated_gradients(const MLPModel &model, std::span<const double> x, std::span<const double> baseline,
                            const ExplainConfig &config, std::optional<std::size_t> output = std::nullopt);

Attribution expected_gradients(const MLPModel &model, const Matrix &foreground, const Matrix &baselines,
                               const ExplainConfig &config, std::optional<std::size_t> output = std::nullopt);

/// Partial dependence over a grid (from the foreground when @p grid is absent).
FeatureEffects feature_effects(const ModelFunction &f, const Matrix &foreground, const std::optional<EffectGrid> &grid = std::nullopt,
                               std::size_t chunk_rows = 1 << 15);

}  // namespace cte
