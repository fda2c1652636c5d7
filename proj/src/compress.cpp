#include "cte/compress.hpp"
#include "cte/rng.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace cte {

std::string to_string(CompressionMethod method) {
    switch (method) {
        case CompressionMethod::iid: return "iid";
        case CompressionMethod::kt: return "kt";
        case CompressionMethod::kmedoids: return "kmedoids";
    }
    return "kt";
}

CompressionMethod compression_method_from_string(const std::string &name) {
    if (name == "iid") return CompressionMethod::iid;
    if (name == "kt") return CompressionMethod::kt;
    if (name == "kmedoids") return CompressionMethod::kmedoids;
    throw ConfigError("unknown compression method: " + name);
}

std::size_t working_size(std::size_t n) {
    if (n == 0) {
        throw ConfigError("working_size: n must be >= 1");
    }
    std::size_t p = 1;
    while (p <= n / 4) p *= 4;
    return p;
}

std::size_t natural_coreset_size(std::size_t n) {
    const std::size_t w = working_size(n);
    std::size_t s = 1;
    while (s * s < w) s *= 2;
    return s;
}

CoresetSelection iid_sample(const Dataset &data, std::size_t m, std::uint64_t seed) {
    if (m == 0) {
        throw ConfigError("iid_sample: m must be >= 1");
    }
    const auto start = std::chrono::steady_clock::now();
    Rng rng(derive_seed(seed, "iid"));
    CoresetSelection out;
    out.indices.reserve(m);
    for (std::size_t i = 0; i < m; ++i) out.indices.push_back(rng.index(data.rows()));
    out.method = CompressionMethod::iid;
    out.seed = seed;
    out.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

IndexList kt_halve(const Matrix &points, const GaussianKernel &kernel, std::uint64_t seed, double delta) {
    const std::size_t m = static_cast<std::size_t>(points.rows());
    if (m < 2) {
        throw ConfigError("kt_halve: need at least 2 points");
    }
    IndexList input(m - (m % 2));
    std::iota(input.begin(), input.end(), std::size_t{0});
    return kt::thin(points, input, kernel, 1, seed, delta);
}

namespace {

class CompressRecursion {
  public:
    CompressRecursion(const Matrix &points, const GaussianKernel &kernel, int g, std::uint64_t seed, double delta)
        : points_(points), kernel_(kernel), base_size_(std::size_t{1} << (2 * g)), seed_(seed), delta_(delta) {}

    /// Returns 2^g sqrt(|input|) points, or the input itself when it is at most 4^g.
    IndexList run(const IndexList &input) {
        if (input.size() <= base_size_) {
            return input;
        }
        const std::size_t quarter = input.size() / 4;
        IndexList merged;
        for (std::size_t b = 0; b < 4; ++b) {
            const IndexList block(input.begin() + static_cast<std::ptrdiff_t>(b * quarter),
                                  input.begin() + static_cast<std::ptrdiff_t>((b + 1) * quarter));
            const IndexList part = run(block);
            merged.insert(merged.end(), part.begin(), part.end());
        }
        return halve(merged);
    }

  private:
    /// Symmetrized split-only halving: keep either half with equal probability.
    IndexList halve(const IndexList &input) {
        const std::uint64_t node_seed = derive_seed(seed_, "halve", node_++);
        auto halves = kt::split(points_, input, kernel_, 1, node_seed, delta_);
        Rng coin(derive_seed(node_seed, "symmetrize"));
        return coin.uniform() < 0.5 ? std::move(halves[0]) : std::move(halves[1]);
    }

    const Matrix &points_;
    const GaussianKernel &kernel_;
    std::size_t base_size_;
    std::uint64_t seed_;
    double delta_;
    std::uint64_t node_ = 0;
};

int log2_exact(std::size_t v) {
    int r = 0;
    while ((std::size_t{1} << r) < v) ++r;
    return r;
}

}  // namespace

CoresetSelection compresspp(const Dataset &data, const CompressorConfig &config) {
    const std::size_t n = data.rows();
    if (n < 4) {
        throw ConfigError("compresspp: need n >= 4");
    }
    if (config.oversample_g < 0 || config.oversample_g > 15) {
        throw ConfigError("compresspp: oversample_g must be in 0..15");
    }
    const auto start = std::chrono::steady_clock::now();
    const double sigma = config.sigma.value_or(default_bandwidth(data.cols()));
    const GaussianKernel kernel(sigma);

    const std::size_t work = working_size(n);
    const std::size_t natural = natural_coreset_size(n);
    const std::size_t target = config.target_size.value_or(natural);
    if (target == 0 || target > work) {
        throw ConfigError("compresspp: target size " + std::to_string(target) + " outside 1.." + std::to_string(work) +
                          " (working size for n=" + std::to_string(n) + ")");
    }
    // Output size before pruning: a power of two.
    std::size_t pow2_target = 1;
    while (pow2_target < target) pow2_target *= 2;

    IndexList working;
    if (work < n) {
        Rng rng(derive_seed(config.seed, "subsample"));
        working = rng.sample_without_replacement(n, work);
    } else {
        working.resize(n);
        std::iota(working.begin(), working.end(), std::size_t{0});
    }

    // A larger target than 2^g sqrt(n') needs a larger oversampling parameter.
    int g = config.oversample_g;
    while ((std::size_t{1} << g) * natural < pow2_target && (std::size_t{1} << (2 * g)) < work) ++g;

    CompressRecursion recursion(data.features, kernel, g, derive_seed(config.seed, "compress"), config.delta);
    const IndexList compressed = recursion.run(working);

    IndexList selected = compressed;
    if (compressed.size() > pow2_target) {
        const int rounds = log2_exact(compressed.size() / pow2_target);
        selected = kt::thin(data.features, compressed, kernel, rounds, derive_seed(config.seed, "thin"), config.delta);
    }
    if (selected.size() > target) {
        selected = kt::prune(data.features, compressed, std::move(selected), target, kernel);
    }

    CoresetSelection out;
    out.indices = std::move(selected);
    out.method = CompressionMethod::kt;
    out.seed = config.seed;
    out.sigma = sigma;
    out.g = config.oversample_g;
    out.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

CoresetSelection compress(const Dataset &data, const CompressorConfig &config) {
    const std::size_t size = config.target_size.value_or(data.rows() >= 1 ? natural_coreset_size(data.rows()) : 1);
    CoresetSelection out;
    switch (config.method) {
        case CompressionMethod::iid:
            out = iid_sample(data, size, config.seed);
            break;
        case CompressionMethod::kmedoids:
            out = kmedoids(data, size, config.seed);
            break;
        case CompressionMethod::kt:
            return compresspp(data, config);
    }
    out.sigma = config.sigma.value_or(default_bandwidth(data.cols()));
    out.g = config.oversample_g;
    return out;
}

}  // namespace cte
