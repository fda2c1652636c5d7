#pragma once

#include "cte/common.hpp"
#include "cte/compress.hpp"
#include "cte/data.hpp"
#include "cte/explain.hpp"
#include "cte/models.hpp"
#include "cte/stats.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cte {

/// An explanation of any estimator, flattened row-major.
struct Explanation {
    Estimator estimator = Estimator::permutation_shap;
    std::vector<double> values;
    /// n x d for local attributions, d for global importance, 100 (d + d^2) for effects.
    std::vector<std::size_t> shape;
    /// SAGE only.
    std::vector<double> stderr_values;
    /// Feature effects only.
    std::optional<EffectGrid> grid;
};

/// Validation data and the model under explanation.
struct BenchData {
    std::string dataset_id;
    Dataset valid;
    MLPModel model;
};

struct TrialSpec {
    std::string dataset_id;
    std::string model_file;
    Estimator estimator = Estimator::permutation_shap;
    /// Shared compressor settings; method and seed are set per trial.
    CompressorConfig compressor;
    std::vector<CompressionMethod> methods{CompressionMethod::iid, CompressionMethod::kt, CompressionMethod::kmedoids};
    int repeats = 33;
    /// 5, or 3 when d <= 8, when absent.
    std::optional<std::size_t> topk;
    int ground_truth_repeats = 3;
    ExplainConfig explain;
    /// Local estimators explain only the first rows of the validation set when set.
    std::optional<std::size_t> foreground_rows;
    /// Seeds the background truncation.
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t coreset_size(std::size_t n) const;
    std::size_t topk_for(std::size_t d) const;
};

struct GroundTruth {
    Explanation explanation;
    double elapsed_seconds = 0.0;
    std::size_t background_rows = 0;
    int runs = 0;
};

/// Full validation set as background, truncated to 20x the coreset size when
/// larger. Stochastic estimators average ground_truth_repeats runs; run 0 uses
/// the trial explain seed so that trials and truth share random numbers.
GroundTruth compute_ground_truth(const TrialSpec &spec, const BenchData &data);

/// Runs one estimator with @p background; for the *_fg estimators and feature
/// effects the background also serves as foreground. @p grid fixes the
/// feature-effects grid.
Explanation run_estimator(Estimator e, const MLPModel &model, const Dataset &foreground, const Dataset &background,
                          const ExplainConfig &config, const std::optional<EffectGrid> &grid = std::nullopt);

struct TrialRecord {
    std::string dataset;
    Estimator estimator = Estimator::permutation_shap;
    CompressionMethod method = CompressionMethod::iid;
    std::uint64_t seed = 0;
    std::size_t size = 0;
    double mae = 0.0;
    /// Absent for feature effects.
    std::optional<double> topk_precision;
    /// 0 for iid by convention.
    double compress_seconds = 0.0;
    double explain_seconds = 0.0;
    bool failed = false;
    std::string error;
};

struct MethodAggregate {
    CompressionMethod method = CompressionMethod::iid;
    Summary mae;
    Summary topk;
    Summary compress_seconds;
    Summary explain_seconds;
    std::size_t failures = 0;
};

struct BoundRecord {
    double lhs = 0.0;
    double rhs = 0.0;
    double constant = 0.0;
    bool satisfied = true;
};

struct BenchResult {
    std::string dataset;
    Estimator estimator = Estimator::permutation_shap;
    /// Sorted by (method order in the spec, seed).
    std::vector<TrialRecord> records;
    std::vector<MethodAggregate> aggregates;
    std::vector<BoundRecord> bounds;

    const MethodAggregate &aggregate(CompressionMethod m) const;
    std::vector<double> mae_values(CompressionMethod m) const;
};

double explanation_mae(const Explanation &estimate, const Explanation &truth);
/// Mean per-row precision for local attributions; absent for feature effects.
std::optional<double> explanation_topk(const Explanation &estimate, const Explanation &truth, std::size_t k);

/// Every (method, repeat) trial; compressor seed = repeat index. Trials already
/// in @p completed are reused as-is. Failures are recorded, never thrown.
/// @p on_record sees each newly finished trial (serialized across workers).
BenchResult run_trials(const TrialSpec &spec, const BenchData &data, const GroundTruth &truth, std::size_t workers = 1,
                       const std::vector<TrialRecord> &completed = {},
                       const std::function<void(const TrialRecord &)> &on_record = {});

/// Aggregates records per method, excluding failures.
std::vector<MethodAggregate> aggregate_records(const std::vector<TrialRecord> &records, const std::vector<CompressionMethod> &methods);

/// Marginalization bound on 1-D slices: each draw picks a row x and a feature j,
/// marginalizes j over @p full and over @p coreset, and compares the gap to
/// c_f * sqrt(mmd_biased_sq) of column j (bandwidth sqrt(2)).
std::vector<BoundRecord> bound_check(const ModelFunction &f, const Matrix &full, const Matrix &coreset, std::size_t n_draws,
                                     std::uint64_t seed, double c_f = 1.0);

/// Global bound: ||mean g(full) - mean g(coreset)||_2 against C_g * sqrt(mmd_biased_sq),
/// with C_g the largest row norm of g over both samples. @p g maps n x d to n x p.
BoundRecord global_bound_check(const std::function<Matrix(const Matrix &)> &g, const Matrix &full, const Matrix &coreset,
                               double sigma);

struct SummaryRow {
    std::string dataset;
    std::string estimator;
    CompressionMethod method = CompressionMethod::iid;
    std::size_t size = 0;
    Summary mae;
    Summary topk;
    double seconds = 0.0;
    double rank = 0.0;
};

struct SummaryTable {
    std::vector<SummaryRow> rows;
    /// Per cell (dataset, estimator): kt improvement over iid in percent and the Welch p-value.
    struct Comparison {
        std::string dataset;
        std::string estimator;
        double improvement_percent = 0.0;
        double welch_p = 1.0;
        double sd_ratio = 0.0;
    };
    std::vector<Comparison> comparisons;
    /// Mean rank of each method across cells (lower is better).
    std::vector<std::pair<CompressionMethod, double>> average_ranks;
};

SummaryTable summarize(const std::vector<BenchResult> &results);

/// Plot-ready long format: dataset, estimator, method, size, mae_mean, mae_sd, topk_mean, seconds.
std::string summary_csv(const SummaryTable &table);

/// Runs @p task(i) for i in [0, count) on @p workers threads.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)> &task);

}  // namespace cte
