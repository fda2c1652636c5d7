#include "cte/explain.hpp"
#include "cte/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

namespace cte {

namespace {

double binomial(std::size_t n, std::size_t k) {
    return std::round(std::exp(std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
                               std::lgamma(static_cast<double>(n - k) + 1.0)));
}

Coalition complement(const Coalition &c) {
    Coalition out(c.size());
    for (std::size_t j = 0; j < c.size(); ++j) out[j] = static_cast<char>(!c[j]);
    return out;
}

/// Calls visit(coalition) for every subset of {0..d-1} of the given size.
template <typename Visit>
void for_each_subset(std::size_t d, std::size_t size, Visit visit) {
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    while (true) {
        Coalition c(d, 0);
        for (const auto i : idx) c[i] = 1;
        visit(c);
        std::size_t pos = size;
        while (pos > 0 && idx[pos - 1] == d - size + pos - 1) --pos;
        if (pos == 0) return;
        ++idx[pos - 1];
        for (std::size_t k = pos; k < size; ++k) idx[k] = idx[k - 1] + 1;
    }
}

/// Prefix coalitions along a permutation: entry k holds the first k features.
void add_sweep(const std::vector<std::size_t> &order, std::vector<Coalition> &out) {
    Coalition c(order.size(), 0);
    for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        c[order[k]] = 1;
        out.push_back(c);
    }
}

/// Accumulates the marginal contributions of one sweep whose interior prefix
/// values start at @p values[offset].
void accumulate_sweep(const std::vector<std::size_t> &order, const Vector &values, std::size_t offset, double empty, double full,
                      Vector &phi) {
    double prev = empty;
    const std::size_t d = order.size();
    for (std::size_t k = 0; k < d; ++k) {
        const double cur = k + 1 < d ? values(static_cast<Eigen::Index>(offset + k)) : full;
        phi(static_cast<Eigen::Index>(order[k])) += cur - prev;
        prev = cur;
    }
}

}  // namespace

Vector permutation_shap(const ModelFunction &f, std::span<const double> x, const Matrix &background,
                        const ExplainConfig &config, std::uint64_t seed) {
    if (config.npermutations < 1 && !config.exhaustive) {
        throw ConfigError("permutation_shap: npermutations must be >= 1");
    }
    const std::size_t d = f.input_dim();
    const Marginalizer game(f, background, config.chunk_rows);

    std::vector<std::vector<std::size_t>> orders;
    if (config.exhaustive) {
        std::vector<std::size_t> p(d);
        std::iota(p.begin(), p.end(), std::size_t{0});
        do {
            orders.push_back(p);
        } while (std::next_permutation(p.begin(), p.end()));
    } else {
        Rng rng(seed);
        for (int i = 0; i < config.npermutations; ++i) {
            auto p = rng.permutation(d);
            orders.push_back(p);
            std::reverse(p.begin(), p.end());
            orders.push_back(std::move(p));
        }
    }

    std::vector<Coalition> coalitions{Coalition(d, 0), Coalition(d, 1)};
    for (const auto &order : orders) add_sweep(order, coalitions);
    const Vector v = game.values(x, coalitions);

    Vector phi = Vector::Zero(static_cast<Eigen::Index>(d));
    std::size_t offset = 2;
    for (const auto &order : orders) {
        accumulate_sweep(order, v, offset, v(0), v(1), phi);
        offset += d - 1;
    }
    return phi / static_cast<double>(orders.size());
}

KernelShapResult kernel_shap(const ModelFunction &f, std::span<const double> x, const Matrix &background,
                             const ExplainConfig &config, std::uint64_t seed) {
    const std::size_t d = f.input_dim();
    const Marginalizer game(f, background, config.chunk_rows);
    const Vector ends = game.values(x, {Coalition(d, 0), Coalition(d, 1)});
    const double empty = ends(0);
    const double total = ends(1) - empty;
    KernelShapResult result;
    if (d == 1) {
        result.values = Vector::Constant(1, total);
        return result;
    }
    const double max_samples = std::ldexp(1.0, static_cast<int>(std::min<std::size_t>(d, 60))) - 2.0;
    const std::size_t budget = static_cast<std::size_t>(std::min(static_cast<double>(config.shap_nsamples), max_samples));
    if (static_cast<double>(budget) < std::min(static_cast<double>(d + 2), max_samples)) {
        throw ConfigError("kernel_shap: shap_nsamples must be >= d + 2");
    }

    // Shapley kernel mass per coalition size s (and d - s), shap-style.
    const std::size_t sizes = (d - 1 + 1) / 2;   // ceil((d-1)/2)
    const std::size_t paired_sizes = (d - 1) / 2;  // floor((d-1)/2)
    std::vector<double> size_weight(sizes);
    for (std::size_t s = 1; s <= sizes; ++s) {
        size_weight[s - 1] = static_cast<double>(d - 1) / (static_cast<double>(s) * static_cast<double>(d - s));
        if (s <= paired_sizes) size_weight[s - 1] *= 2.0;
    }
    const double weight_sum = std::accumulate(size_weight.begin(), size_weight.end(), 0.0);
    for (auto &w : size_weight) w /= weight_sum;

    std::vector<Coalition> coalitions;
    std::vector<double> weights;
    std::size_t full_sizes = 0;
    double samples_left = static_cast<double>(budget);
    std::vector<double> remaining = size_weight;
    for (std::size_t s = 1; s <= sizes; ++s) {
        const bool paired = s <= paired_sizes;
        const double subsets = binomial(d, s) * (paired ? 2.0 : 1.0);
        if (samples_left * remaining[s - 1] / subsets < 1.0 - 1e-8) break;
        ++full_sizes;
        samples_left -= subsets;
        if (remaining[s - 1] < 1.0) {
            const double scale = 1.0 - remaining[s - 1];
            for (auto &w : remaining) w /= scale;
        }
        const double w = size_weight[s - 1] / subsets;
        for_each_subset(d, s, [&](const Coalition &c) {
            coalitions.push_back(c);
            weights.push_back(w);
            if (paired) {
                coalitions.push_back(complement(c));
                weights.push_back(w);
            }
        });
    }
    const std::size_t fixed = coalitions.size();

    if (full_sizes < sizes && samples_left >= 1.0) {
        std::vector<double> probs(size_weight.begin() + static_cast<std::ptrdiff_t>(full_sizes), size_weight.end());
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (full_sizes + i + 1 <= paired_sizes) probs[i] /= 2.0;
        }
        const double psum = std::accumulate(probs.begin(), probs.end(), 0.0);
        std::vector<double> cdf(probs.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) cdf[i] = (acc += probs[i] / psum);

        Rng rng(seed);
        std::map<Coalition, std::size_t> seen;
        auto add = [&](Coalition c) {
            auto [it, inserted] = seen.emplace(c, coalitions.size());
            if (inserted) {
                coalitions.push_back(std::move(c));
                weights.push_back(1.0);
            } else {
                weights[it->second] += 1.0;
            }
        };
        auto left = static_cast<long>(samples_left);
        for (long draws = 0; left > 0 && draws < 4 * static_cast<long>(samples_left); ++draws) {
            const double u = rng.uniform();
            const std::size_t pick = static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
            const std::size_t s = full_sizes + std::min(pick, cdf.size() - 1) + 1;
            Coalition c(d, 0);
            for (const auto j : rng.sample_without_replacement(d, s)) c[j] = 1;
            Coalition comp = complement(c);
            add(std::move(c));
            --left;
            if (left > 0 && s <= paired_sizes) {
                add(std::move(comp));
                --left;
            }
        }
        const double left_weight = std::accumulate(size_weight.begin() + static_cast<std::ptrdiff_t>(full_sizes), size_weight.end(), 0.0);
        const double sampled = std::accumulate(weights.begin() + static_cast<std::ptrdiff_t>(fixed), weights.end(), 0.0);
        for (std::size_t i = fixed; i < weights.size(); ++i) weights[i] *= left_weight / sampled;
    }

    const Vector v = game.values(x, coalitions);
    const auto de = static_cast<Eigen::Index>(d);
    Matrix kkt = Matrix::Zero(de + 1, de + 1);
    Vector rhs = Vector::Zero(de + 1);
    for (std::size_t c = 0; c < coalitions.size(); ++c) {
        const double w = weights[c];
        const double y = v(static_cast<Eigen::Index>(c)) - empty;
        for (std::size_t a = 0; a < d; ++a) {
            if (!coalitions[c][a]) continue;
            rhs(static_cast<Eigen::Index>(a)) += w * y;
            for (std::size_t b = 0; b < d; ++b) {
                if (coalitions[c][b]) kkt(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += w;
            }
        }
    }
    kkt.block(0, de, de, 1).setOnes();
    kkt.block(de, 0, 1, de).setOnes();
    rhs(de) = total;

    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (lu.rank() < de + 1) {
        result.regularized = true;
        Eigen::MatrixXd ridge = kkt;
        ridge.topLeftCorner(de, de).diagonal().array() += 1e-10;
        lu.compute(ridge);
    }
    const Vector solution = lu.solve(Eigen::VectorXd(rhs));
    result.values = solution.head(de);
    return result;
}

std::string to_string(Estimator e) {
    switch (e) {
        case Estimator::kernel_shap: return "kernel_shap";
        case Estimator::permutation_shap: return "permutation_shap";
        case Estimator::kernel_sage: return "kernel_sage";
        case Estimator::permutation_sage: return "permutation_sage";
        case Estimator::kernel_sage_fg: return "kernel_sage_fg";
        case Estimator::permutation_sage_fg: return "permutation_sage_fg";
        case Estimator::expected_gradients: return "expected_gradients";
        case Estimator::feature_effects: return "feature_effects";
    }
    return "unknown";
}

Estimator estimator_from_string(const std::string &name) {
    for (const auto e : {Estimator::kernel_shap, Estimator::permutation_shap, Estimator::kernel_sage, Estimator::permutation_sage,
                         Estimator::kernel_sage_fg, Estimator::permutation_sage_fg, Estimator::expected_gradients,
                         Estimator::feature_effects}) {
        if (to_string(e) == name) return e;
    }
    throw ConfigError("unknown estimator: " + name);
}

bool is_global(Estimator e) {
    return e == Estimator::kernel_sage || e == Estimator::permutation_sage || e == Estimator::kernel_sage_fg ||
           e == Estimator::permutation_sage_fg;
}

bool uses_coreset_foreground(Estimator e) { return e == Estimator::kernel_sage_fg || e == Estimator::permutation_sage_fg; }

bool is_stochastic(Estimator e) { return e != Estimator::expected_gradients && e != Estimator::feature_effects; }

Attribution explain_local(Estimator e, const ModelFunction &f, const Matrix &foreground, const Matrix &background,
                          const ExplainConfig &config) {
    if (e != Estimator::kernel_shap && e != Estimator::permutation_shap) {
        throw ConfigError("explain_local: " + to_string(e) + " is not a model-agnostic local estimator");
    }
    if (static_cast<std::size_t>(foreground.cols()) != f.input_dim()) {
        throw ShapeError("explain_local: foreground has " + std::to_string(foreground.cols()) + " features, model expects " +
                         std::to_string(f.input_dim()));
    }
    const auto n = static_cast<std::size_t>(foreground.rows());
    Attribution out;
    out.values.resize(foreground.rows(), foreground.cols());
    const double base = Marginalizer(f, background, config.chunk_rows).values(std::span<const double>(background.data(), f.input_dim()),
                                                                              {Coalition(f.input_dim(), 0)})(0);
    out.base_values = Vector::Constant(foreground.rows(), base);

    auto run = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            const std::uint64_t seed = derive_seed(config.seed, "explain", i);
            const auto x = row_span(foreground, row);
            const Vector phi = e == Estimator::kernel_shap ? kernel_shap(f, x, background, config, seed).values
                                                           : permutation_shap(f, x, background, config, seed);
            out.values.row(row) = phi.transpose();
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(config.workers, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        run(0, n);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    run(n * w / workers, n * (w + 1) / workers);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto &t : pool) t.join();
        for (const auto &err : errors) {
            if (err) std::rethrow_exception(err);
        }
    }
    return out;
}

}  // namespace cte
