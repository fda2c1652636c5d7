#pragma once

#include "cte/common.hpp"
#include "cte/data.hpp"
#include "cte/kernels.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace cte {

enum class CompressionMethod { iid, kt, kmedoids };

std::string to_string(CompressionMethod method);
CompressionMethod compression_method_from_string(const std::string &name);

struct CompressorConfig {
    CompressionMethod method = CompressionMethod::kt;
    std::uint64_t seed = 0;
    /// Compress++ oversampling parameter g.
    int oversample_g = 4;
    /// When absent, the method's natural size (sqrt of the power-of-4 working size).
    std::optional<std::size_t> target_size;
    /// Kernel bandwidth; sqrt(2 d) when absent.
    std::optional<double> sigma;
    /// Failure probability of the thinning threshold.
    double delta = 0.5;
};

struct CoresetSelection {
    IndexList indices;
    CompressionMethod method = CompressionMethod::kt;
    std::uint64_t seed = 0;
    double sigma = 0.0;
    int g = 0;
    double elapsed_seconds = 0.0;
};

/// Largest power of 4 not exceeding n (n >= 1).
std::size_t working_size(std::size_t n);

/// sqrt(working_size(n)), the Compress++ output size.
std::size_t natural_coreset_size(std::size_t n);

/// m indices drawn uniformly with replacement.
CoresetSelection iid_sample(const Dataset &data, std::size_t m, std::uint64_t seed);

/// PAM (BUILD then best-improvement SWAP) medoids under Euclidean distance.
CoresetSelection kmedoids(const Dataset &data, std::size_t k, std::uint64_t seed, int max_iterations = 100);

/// One kernel-thinning round: randomized split into two halves, then swap
/// refinement of the best candidate. Returns floor(m/2) row indices of @p points.
IndexList kt_halve(const Matrix &points, const GaussianKernel &kernel, std::uint64_t seed, double delta = 0.5);

/// Compress++ with kernel thinning. Output size is natural_coreset_size(n) or,
/// when config.target_size is set, exactly that size.
CoresetSelection compresspp(const Dataset &data, const CompressorConfig &config);

/// Dispatches on config.method; timing is measured around the selection only.
/// kmedoids and iid default to natural_coreset_size(n) points.
CoresetSelection compress(const Dataset &data, const CompressorConfig &config);

namespace kt {

/// Split rows @p input of @p points into 2^rounds candidate coresets of size
/// |input| / 2^rounds via repeated self-balancing halving.
std::vector<IndexList> split(const Matrix &points, const IndexList &input, const GaussianKernel &kernel, int rounds,
                             std::uint64_t seed, double delta);

/// Picks the candidate (or the standard-thinning baseline) closest in MMD to
/// @p input and refines it with one greedy pass of best single-point swaps.
IndexList swap(const Matrix &points, const IndexList &input, const std::vector<IndexList> &candidates, const GaussianKernel &kernel);

/// split followed by swap.
IndexList thin(const Matrix &points, const IndexList &input, const GaussianKernel &kernel, int rounds, std::uint64_t seed, double delta);

/// Reduces @p coreset to @p target points by greedy removal, then refines with
/// swaps; both steps minimize MMD to @p reference.
IndexList prune(const Matrix &points, const IndexList &reference, IndexList coreset, std::size_t target, const GaussianKernel &kernel);

/// Squared biased MMD between the empirical measures on two index sets.
double squared_mmd(const Matrix &points, const IndexList &a, const IndexList &b, const GaussianKernel &kernel);

}  // namespace kt

}  // namespace cte
