#include "cte/compress.hpp"
#include "cte/rng.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace cte {

namespace {

/// Euclidean distances, cached as a full matrix when it fits comfortably.
class Distances {
  public:
    explicit Distances(const Matrix &x) : x_(x), n_(static_cast<std::size_t>(x.rows())) {
        if (n_ <= kCacheLimit) {
            cache_.resize(n_ * n_);
            for (std::size_t i = 0; i < n_; ++i) {
                cache_[i * n_ + i] = 0.0;
                for (std::size_t j = i + 1; j < n_; ++j) {
                    const double v = compute(i, j);
                    cache_[i * n_ + j] = v;
                    cache_[j * n_ + i] = v;
                }
            }
        }
    }

    double operator()(std::size_t i, std::size_t j) const { return cache_.empty() ? compute(i, j) : cache_[i * n_ + j]; }

  private:
    static constexpr std::size_t kCacheLimit = 4096;

    double compute(std::size_t i, std::size_t j) const {
        return std::sqrt(squared_distance(row_span(x_, static_cast<Eigen::Index>(i)), row_span(x_, static_cast<Eigen::Index>(j))));
    }

    const Matrix &x_;
    std::size_t n_;
    std::vector<double> cache_;
};

}  // namespace

CoresetSelection kmedoids(const Dataset &data, std::size_t k, std::uint64_t seed, int max_iterations) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t n = data.rows();
    if (k == 0 || k > n) {
        throw ConfigError("kmedoids: k must be in 1..n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    }
    constexpr double inf = std::numeric_limits<double>::infinity();
    const Distances dist(data.features);

    // The seed only fixes the scan order, which decides between exact ties.
    Rng rng(derive_seed(seed, "kmedoids"));
    const IndexList order = rng.permutation(n);

    std::vector<char> is_medoid(n, 0);
    IndexList medoids;
    std::vector<double> nearest(n, inf);

    // BUILD: greedily add the point with the largest reduction in total deviation.
    while (medoids.size() < k) {
        double best_gain = -inf;
        std::size_t best = n;
        for (const std::size_t c : order) {
            if (is_medoid[c]) continue;
            double gain = 0.0;
            for (std::size_t o = 0; o < n; ++o) {
                const double doc = dist(o, c);
                if (medoids.empty()) {
                    gain -= doc;
                } else if (doc < nearest[o]) {
                    gain += nearest[o] - doc;
                }
            }
            if (gain > best_gain) {
                best_gain = gain;
                best = c;
            }
        }
        medoids.push_back(best);
        is_medoid[best] = 1;
        for (std::size_t o = 0; o < n; ++o) nearest[o] = std::min(nearest[o], dist(o, best));
    }

    // SWAP: evaluate all (medoid, non-medoid) exchanges per candidate in one
    // pass using nearest and second-nearest distances.
    std::vector<std::size_t> near_idx(n);
    std::vector<double> near_d(n);
    std::vector<double> second_d(n);
    auto assign = [&] {
        for (std::size_t o = 0; o < n; ++o) {
            double d1 = inf;
            double d2 = inf;
            std::size_t i1 = 0;
            for (std::size_t m = 0; m < k; ++m) {
                const double v = dist(o, medoids[m]);
                if (v < d1) {
                    d2 = d1;
                    d1 = v;
                    i1 = m;
                } else if (v < d2) {
                    d2 = v;
                }
            }
            near_idx[o] = i1;
            near_d[o] = d1;
            second_d[o] = d2;
        }
    };
    assign();
    std::vector<double> delta(k);
    for (int iter = 0; iter < max_iterations && k < n; ++iter) {
        double best_change = -1e-12;
        std::size_t best_m = k;
        std::size_t best_c = n;
        for (const std::size_t c : order) {
            if (is_medoid[c]) continue;
            std::fill(delta.begin(), delta.end(), 0.0);
            double shared = 0.0;
            for (std::size_t o = 0; o < n; ++o) {
                const double doc = dist(o, c);
                const double gain_if_kept = std::min(doc - near_d[o], 0.0);
                shared += gain_if_kept;
                delta[near_idx[o]] += std::min(doc, second_d[o]) - near_d[o] - gain_if_kept;
            }
            for (std::size_t m = 0; m < k; ++m) {
                const double change = shared + delta[m];
                if (change < best_change) {
                    best_change = change;
                    best_m = m;
                    best_c = c;
                }
            }
        }
        if (best_c == n) break;
        is_medoid[medoids[best_m]] = 0;
        is_medoid[best_c] = 1;
        medoids[best_m] = best_c;
        assign();
    }

    CoresetSelection out;
    out.indices = medoids;
    out.method = CompressionMethod::kmedoids;
    out.seed = seed;
    out.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace cte
