#include "cte/compress.hpp"
#include "cte/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace cte::kt {

namespace {

struct Halves {
    IndexList first;
    IndexList second;
};

/// One self-balancing halving pass over consecutive pairs of @p input.
///
/// The signed walk psi = sum_{S1} k(c, .) - sum_{S2} k(c, .) is kept small by
/// sending each pair's members to opposite halves with a probability that
/// leans against the current imbalance, with the adaptive threshold a_i and
/// variance proxy sigma_i of kernel thinning.
Halves split_once(const Matrix &points, const IndexList &input, const GaussianKernel &kernel, Rng &rng, double delta) {
    const std::size_t pairs = input.size() / 2;
    Halves out;
    out.first.reserve(pairs);
    out.second.reserve(pairs);
    if (pairs == 0) {
        return out;
    }
    const double log_term = 2.0 * std::log(2.0 * static_cast<double>(input.size()) / delta);
    double sig_sq = 0.0;

    for (std::size_t i = 0; i < pairs; ++i) {
        const std::size_t x = input[2 * i];
        const std::size_t y = input[2 * i + 1];
        const auto px = row_span(points, static_cast<Eigen::Index>(x));
        const auto py = row_span(points, static_cast<Eigen::Index>(y));

        const double b_sq = 2.0 - 2.0 * kernel(px, py);
        // inner product <psi, k(x,.) - k(y,.)>
        double alpha = 0.0;
        for (const std::size_t c : out.first) {
            const auto pc = row_span(points, static_cast<Eigen::Index>(c));
            alpha += kernel(pc, px) - kernel(pc, py);
        }
        for (const std::size_t c : out.second) {
            const auto pc = row_span(points, static_cast<Eigen::Index>(c));
            alpha -= kernel(pc, px) - kernel(pc, py);
        }

        bool swap_pair = false;
        if (b_sq > 0.0) {
            const double a = std::max(std::sqrt(b_sq * sig_sq * log_term), b_sq);
            sig_sq += b_sq * std::max(0.0, 1.0 + (b_sq - 2.0 * a) * sig_sq / (a * a));
            const double prob_swap = std::clamp(0.5 * (1.0 + alpha / a), 0.0, 1.0);
            swap_pair = rng.uniform() < prob_swap;
        } else {
            // identical points: the walk does not move, consume a draw to keep streams aligned
            rng.uniform();
        }
        if (swap_pair) {
            out.first.push_back(y);
            out.second.push_back(x);
        } else {
            out.first.push_back(x);
            out.second.push_back(y);
        }
    }
    return out;
}

void split_recursive(const Matrix &points, const IndexList &input, const GaussianKernel &kernel, int rounds, std::uint64_t seed,
                     double delta, std::vector<IndexList> &out) {
    if (rounds == 0) {
        out.push_back(input);
        return;
    }
    Rng rng(seed);
    Halves h = split_once(points, input, kernel, rng, delta);
    split_recursive(points, h.first, kernel, rounds - 1, derive_seed(seed, "left"), delta, out);
    split_recursive(points, h.second, kernel, rounds - 1, derive_seed(seed, "right"), delta, out);
}

/// Mean kernel value of each input point against the whole input.
std::vector<double> mean_embedding(const Matrix &points, const IndexList &at, const IndexList &reference, const GaussianKernel &kernel) {
    std::vector<double> mu(at.size(), 0.0);
    const double inv = 1.0 / static_cast<double>(reference.size());
    for (std::size_t i = 0; i < at.size(); ++i) {
        const auto pi = row_span(points, static_cast<Eigen::Index>(at[i]));
        double sum = 0.0;
        for (const std::size_t r : reference) {
            sum += kernel(pi, row_span(points, static_cast<Eigen::Index>(r)));
        }
        mu[i] = sum * inv;
    }
    return mu;
}

/// Greedy single-point swaps of @p coreset positions against @p pool points.
/// @p pool_mu holds the mean embedding of the reference at each pool point;
/// coreset entries are positions into @p pool.
void refine(const Matrix &points, const IndexList &pool, const std::vector<double> &pool_mu, std::vector<std::size_t> &coreset,
            const GaussianKernel &kernel) {
    const std::size_t n = pool.size();
    const std::size_t s = coreset.size();
    if (s == 0 || s >= n) {
        return;
    }
    std::vector<char> in_coreset(n, 0);
    for (const std::size_t p : coreset) {
        in_coreset[p] = 1;
    }
    // K_S(z) = sum_{a in S} k(a, z) for every pool point z
    std::vector<double> ks(n, 0.0);
    for (std::size_t z = 0; z < n; ++z) {
        const auto pz = row_span(points, static_cast<Eigen::Index>(pool[z]));
        for (const std::size_t a : coreset) {
            ks[z] += kernel(row_span(points, static_cast<Eigen::Index>(pool[a])), pz);
        }
    }
    const double inv_s = 1.0 / static_cast<double>(s);
    std::vector<double> k_a(n);
    for (std::size_t pos = 0; pos < s; ++pos) {
        const std::size_t a = coreset[pos];
        const auto pa = row_span(points, static_cast<Eigen::Index>(pool[a]));
        for (std::size_t z = 0; z < n; ++z) {
            k_a[z] = kernel(pa, row_span(points, static_cast<Eigen::Index>(pool[z])));
        }
        double best = -1e-14;
        std::size_t best_z = n;
        for (std::size_t z = 0; z < n; ++z) {
            if (in_coreset[z]) {
                continue;
            }
            // change of sum_{S,S} k after replacing a by z (k(z,z) = k(a,a) = 1)
            const double d_self = 2.0 * (ks[z] - k_a[z]) - 2.0 * ks[a] + 2.0;
            const double delta = d_self * inv_s * inv_s - 2.0 * inv_s * (pool_mu[z] - pool_mu[a]);
            if (delta < best) {
                best = delta;
                best_z = z;
            }
        }
        if (best_z == n) {
            continue;
        }
        const auto pb = row_span(points, static_cast<Eigen::Index>(pool[best_z]));
        for (std::size_t z = 0; z < n; ++z) {
            ks[z] += kernel(pb, row_span(points, static_cast<Eigen::Index>(pool[z]))) - k_a[z];
        }
        in_coreset[a] = 0;
        in_coreset[best_z] = 1;
        coreset[pos] = best_z;
    }
}

}  // namespace

double squared_mmd(const Matrix &points, const IndexList &a, const IndexList &b, const GaussianKernel &kernel) {
    auto mean_k = [&](const IndexList &u, const IndexList &v) {
        double sum = 0.0;
        for (const std::size_t i : u) {
            const auto pi = row_span(points, static_cast<Eigen::Index>(i));
            for (const std::size_t j : v) {
                sum += kernel(pi, row_span(points, static_cast<Eigen::Index>(j)));
            }
        }
        return sum / (static_cast<double>(u.size()) * static_cast<double>(v.size()));
    };
    return std::max(0.0, mean_k(a, a) - 2.0 * mean_k(a, b) + mean_k(b, b));
}

std::vector<IndexList> split(const Matrix &points, const IndexList &input, const GaussianKernel &kernel, int rounds, std::uint64_t seed,
                             double delta) {
    if (rounds < 0) {
        throw ConfigError("kt::split: rounds must be >= 0");
    }
    if ((input.size() >> rounds) == 0) {
        throw ConfigError("kt::split: input too small for the requested number of rounds");
    }
    std::vector<IndexList> out;
    out.reserve(std::size_t{1} << rounds);
    split_recursive(points, input, kernel, rounds, seed, delta, out);
    return out;
}

IndexList swap(const Matrix &points, const IndexList &input, const std::vector<IndexList> &candidates, const GaussianKernel &kernel) {
    if (candidates.empty()) {
        throw ConfigError("kt::swap: no candidate coresets");
    }
    const std::size_t s = candidates.front().size();
    const std::size_t n = input.size();
    const std::vector<double> mu = mean_embedding(points, input, input, kernel);

    // Position of each row in the input, to express candidates as pool positions.
    std::vector<std::size_t> position_of;
    {
        std::size_t max_row = 0;
        for (const std::size_t r : input) max_row = std::max(max_row, r);
        position_of.assign(max_row + 1, std::numeric_limits<std::size_t>::max());
        for (std::size_t p = 0; p < n; ++p) position_of[input[p]] = p;
    }

    std::vector<std::vector<std::size_t>> options;
    for (const auto &c : candidates) {
        std::vector<std::size_t> pos;
        pos.reserve(c.size());
        for (const std::size_t r : c) pos.push_back(position_of[r]);
        options.push_back(std::move(pos));
    }
    // standard thinning baseline: every (n/s)-th point
    if (s > 0 && n / s > 0) {
        const std::size_t step = n / s;
        std::vector<std::size_t> baseline;
        for (std::size_t p = step - 1; baseline.size() < s && p < n; p += step) baseline.push_back(p);
        if (baseline.size() == s) options.push_back(std::move(baseline));
    }

    // squared MMD to the input up to the constant input-input term
    auto objective = [&](const std::vector<std::size_t> &pos) {
        double self = 0.0;
        double cross = 0.0;
        for (const std::size_t a : pos) {
            const auto pa = row_span(points, static_cast<Eigen::Index>(input[a]));
            for (const std::size_t b : pos) self += kernel(pa, row_span(points, static_cast<Eigen::Index>(input[b])));
            cross += mu[a];
        }
        const double inv = 1.0 / static_cast<double>(pos.size());
        return self * inv * inv - 2.0 * cross * inv;
    };
    std::size_t best = 0;
    double best_value = std::numeric_limits<double>::infinity();
    for (std::size_t o = 0; o < options.size(); ++o) {
        const double v = objective(options[o]);
        if (v < best_value) {
            best_value = v;
            best = o;
        }
    }
    std::vector<std::size_t> chosen = options[best];
    refine(points, input, mu, chosen, kernel);

    IndexList result;
    result.reserve(chosen.size());
    for (const std::size_t p : chosen) result.push_back(input[p]);
    return result;
}

IndexList thin(const Matrix &points, const IndexList &input, const GaussianKernel &kernel, int rounds, std::uint64_t seed, double delta) {
    const auto candidates = split(points, input, kernel, rounds, seed, delta);
    return swap(points, input, candidates, kernel);
}

IndexList prune(const Matrix &points, const IndexList &reference, IndexList coreset, std::size_t target, const GaussianKernel &kernel) {
    if (target == 0 || target > coreset.size()) {
        throw ConfigError("kt::prune: target must be in 1..|coreset|");
    }
    // Pool = reference rows; coreset rows must be among them.
    const std::size_t n = reference.size();
    std::size_t max_row = 0;
    for (const std::size_t r : reference) max_row = std::max(max_row, r);
    std::vector<std::size_t> position_of(max_row + 1, std::numeric_limits<std::size_t>::max());
    for (std::size_t p = 0; p < n; ++p) position_of[reference[p]] = p;
    std::vector<std::size_t> pos;
    for (const std::size_t r : coreset) {
        if (r > max_row || position_of[r] == std::numeric_limits<std::size_t>::max()) {
            throw ConfigError("kt::prune: coreset row not in the reference set");
        }
        pos.push_back(position_of[r]);
    }
    const std::vector<double> mu = mean_embedding(points, reference, reference, kernel);

    // greedy backward elimination on sum_{S,S} k / s^2 - 2 sum_S mu / s
    std::vector<double> ks(pos.size(), 0.0);
    for (std::size_t i = 0; i < pos.size(); ++i) {
        const auto pi = row_span(points, static_cast<Eigen::Index>(reference[pos[i]]));
        for (std::size_t j = 0; j < pos.size(); ++j) {
            ks[i] += kernel(pi, row_span(points, static_cast<Eigen::Index>(reference[pos[j]])));
        }
    }
    double self = 0.0;
    double cross = 0.0;
    for (std::size_t i = 0; i < pos.size(); ++i) {
        self += ks[i];
        cross += mu[pos[i]];
    }
    while (pos.size() > target) {
        const double s_new = static_cast<double>(pos.size() - 1);
        std::size_t best = 0;
        double best_value = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pos.size(); ++i) {
            const double new_self = self - 2.0 * ks[i] + 1.0;
            const double value = new_self / (s_new * s_new) - 2.0 * (cross - mu[pos[i]]) / s_new;
            if (value < best_value) {
                best_value = value;
                best = i;
            }
        }
        const auto pb = row_span(points, static_cast<Eigen::Index>(reference[pos[best]]));
        self += -2.0 * ks[best] + 1.0;
        cross -= mu[pos[best]];
        for (std::size_t j = 0; j < pos.size(); ++j) {
            ks[j] -= kernel(pb, row_span(points, static_cast<Eigen::Index>(reference[pos[j]])));
        }
        pos.erase(pos.begin() + static_cast<std::ptrdiff_t>(best));
        ks.erase(ks.begin() + static_cast<std::ptrdiff_t>(best));
    }
    refine(points, reference, mu, pos, kernel);
    IndexList result;
    for (const std::size_t p : pos) result.push_back(reference[p]);
    return result;
}

}  // namespace cte::kt
