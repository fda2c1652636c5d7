#include "cte/explain.hpp"
#include "cte/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

namespace cte {

namespace {

class LossGame {
  public:
    LossGame(const ModelFunction &f, const Dataset &foreground, const Matrix &background, const ExplainConfig &config)
        : game_(f, background, config.chunk_rows), foreground_(foreground) {
        if (!foreground.has_labels()) {
            throw ConfigError("sage: foreground must be labeled");
        }
        if (foreground.cols() != f.input_dim()) {
            throw ShapeError("sage: foreground has " + std::to_string(foreground.cols()) + " features, model expects " +
                             std::to_string(f.input_dim()));
        }
        if (foreground.rows() == 0) {
            throw ConfigError("sage: empty foreground");
        }
        loss_ = config.loss.value_or(f.probabilistic() ? Loss::cross_entropy : Loss::mse);
        if (loss_ == Loss::cross_entropy) {
            if (!f.probabilistic()) {
                throw ConfigError("sage: cross-entropy loss needs class-probability outputs");
            }
            const Vector &y = *foreground.labels;
            for (Eigen::Index i = 0; i < y.size(); ++i) {
                if (y(i) < 0 || y(i) >= static_cast<double>(f.output_dim()) || y(i) != std::floor(y(i))) {
                    throw ConfigError("sage: label outside the model's classes");
                }
            }
        }
    }

    std::size_t dims() const { return game_.dims(); }
    std::size_t rows() const { return foreground_.rows(); }

    /// Loss of row @p i under each coalition.
    Vector losses(std::size_t i, const std::vector<Coalition> &coalitions) const {
        const auto row = static_cast<Eigen::Index>(i);
        const Matrix out = game_.mean_outputs(row_span(foreground_.features, row), coalitions);
        const double y = (*foreground_.labels)(row);
        Vector l(out.rows());
        for (Eigen::Index c = 0; c < out.rows(); ++c) {
            if (loss_ == Loss::cross_entropy) {
                l(c) = -std::log(std::max(out(c, static_cast<Eigen::Index>(y)), 1e-12));
            } else {
                const double r = out(c, static_cast<Eigen::Index>(game_.function().explained())) - y;
                l(c) = r * r;
            }
        }
        return l;
    }

  private:
    Marginalizer game_;
    const Dataset &foreground_;
    Loss loss_;
};

/// E[z z^T] for coalitions drawn from the Shapley kernel distribution.
Eigen::MatrixXd shapley_kernel_moment(std::size_t d) {
    double norm = 0.0;
    double co = 0.0;
    for (std::size_t s = 1; s < d; ++s) {
        const double p = 1.0 / (static_cast<double>(s) * static_cast<double>(d - s));
        norm += p;
        co += p * static_cast<double>(s) * static_cast<double>(s - 1) / (static_cast<double>(d) * static_cast<double>(d - 1));
    }
    const auto de = static_cast<Eigen::Index>(d);
    Eigen::MatrixXd a = Eigen::MatrixXd::Constant(de, de, co / norm);
    a.diagonal().setConstant(0.5);
    return a;
}

Vector constrained_solve(const Eigen::MatrixXd &a, const Eigen::VectorXd &b, double total) {
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(a.rows());
    const Eigen::VectorXd ainv_b = ldlt.solve(b);
    const Eigen::VectorXd ainv_1 = ldlt.solve(ones);
    return ainv_b - ainv_1 * ((ones.dot(ainv_b) - total) / ones.dot(ainv_1));
}

}  // namespace

GlobalImportance permutation_sage(const ModelFunction &f, const Dataset &foreground, const Matrix &background,
                                  const ExplainConfig &config) {
    if (config.npermutations < 1 && !config.exhaustive) {
        throw ConfigError("permutation_sage: npermutations must be >= 1");
    }
    const LossGame game(f, foreground, background, config);
    const std::size_t d = game.dims();
    const auto de = static_cast<Eigen::Index>(d);

    std::vector<std::vector<std::size_t>> all_orders;
    if (config.exhaustive) {
        std::vector<std::size_t> p(d);
        std::iota(p.begin(), p.end(), std::size_t{0});
        do {
            all_orders.push_back(p);
        } while (std::next_permutation(p.begin(), p.end()));
    }

    Vector sum = Vector::Zero(de);
    Vector sum_sq = Vector::Zero(de);
    std::size_t sweeps = 0;
    for (std::size_t i = 0; i < game.rows(); ++i) {
        std::vector<std::vector<std::size_t>> orders = all_orders;
        if (!config.exhaustive) {
            Rng rng(derive_seed(config.seed, "sage", i));
            for (int k = 0; k < config.npermutations; ++k) orders.push_back(rng.permutation(d));
        }
        std::vector<Coalition> coalitions{Coalition(d, 0), Coalition(d, 1)};
        for (const auto &order : orders) {
            Coalition c(d, 0);
            for (std::size_t k = 0; k + 1 < d; ++k) {
                c[order[k]] = 1;
                coalitions.push_back(c);
            }
        }
        const Vector loss = game.losses(i, coalitions);
        std::size_t offset = 2;
        Vector contrib(de);
        for (const auto &order : orders) {
            double prev = loss(0);
            for (std::size_t k = 0; k < d; ++k) {
                const double cur = k + 1 < d ? loss(static_cast<Eigen::Index>(offset + k)) : loss(1);
                contrib(static_cast<Eigen::Index>(order[k])) = prev - cur;
                prev = cur;
            }
            offset += d - 1;
            sum += contrib;
            sum_sq += contrib.cwiseAbs2();
            ++sweeps;
        }
    }
    GlobalImportance out;
    const double n = static_cast<double>(sweeps);
    out.values = sum / n;
    if (sweeps > 1) {
        const Vector var = ((sum_sq - n * out.values.cwiseAbs2()) / (n - 1.0)).cwiseMax(0.0);
        out.stderr_values = (var / n).cwiseSqrt();
    } else {
        out.stderr_values = Vector::Zero(de);
    }
    return out;
}

GlobalImportance kernel_sage(const ModelFunction &f, const Dataset &foreground, const Matrix &background,
                             const ExplainConfig &config) {
    if (config.npermutations < 1) {
        throw ConfigError("kernel_sage: npermutations must be >= 1");
    }
    const LossGame game(f, foreground, background, config);
    const std::size_t d = game.dims();
    const auto de = static_cast<Eigen::Index>(d);
    const std::size_t n = game.rows();
    if (d == 1) {
        // A single feature receives the whole loss reduction.
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const Vector l = game.losses(i, {Coalition(1, 0), Coalition(1, 1)});
            total += l(0) - l(1);
        }
        return {Vector::Constant(1, total / static_cast<double>(n)), Vector::Zero(1)};
    }

    // Budget per row comparable to one permutation sweep per npermutations.
    const std::size_t pairs = static_cast<std::size_t>(config.npermutations) * ((d + 1) / 2);
    std::vector<double> cdf(d - 1);
    double acc = 0.0;
    for (std::size_t s = 1; s < d; ++s) acc += 1.0 / (static_cast<double>(s) * static_cast<double>(d - s));
    double run = 0.0;
    for (std::size_t s = 1; s < d; ++s) {
        run += 1.0 / (static_cast<double>(s) * static_cast<double>(d - s));
        cdf[s - 1] = run / acc;
    }

    // Per-row b contributions and totals, reduced into batches for the error estimate.
    const std::size_t batches = std::min<std::size_t>(16, n);
    std::vector<Eigen::VectorXd> batch_b(batches, Eigen::VectorXd::Zero(de));
    std::vector<double> batch_total(batches, 0.0);
    std::vector<double> batch_count(batches, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(config.seed, "sage", i));
        std::vector<Coalition> coalitions{Coalition(d, 0), Coalition(d, 1)};
        for (std::size_t p = 0; p < pairs; ++p) {
            const double u = rng.uniform();
            const std::size_t s = static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin()) + 1;
            Coalition c(d, 0);
            for (const auto j : rng.sample_without_replacement(d, std::min(s, d - 1))) c[j] = 1;
            Coalition comp(d);
            for (std::size_t j = 0; j < d; ++j) comp[j] = static_cast<char>(!c[j]);
            coalitions.push_back(std::move(c));
            coalitions.push_back(std::move(comp));
        }
        const Vector loss = game.losses(i, coalitions);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(de);
        for (std::size_t c = 2; c < coalitions.size(); ++c) {
            const double gain = loss(0) - loss(static_cast<Eigen::Index>(c));
            for (std::size_t j = 0; j < d; ++j) {
                if (coalitions[c][j]) b(static_cast<Eigen::Index>(j)) += gain;
            }
        }
        const std::size_t k = i * batches / n;
        batch_b[k] += b / static_cast<double>(2 * pairs);
        batch_total[k] += loss(0) - loss(1);
        batch_count[k] += 1.0;
    }

    const Eigen::MatrixXd a = shapley_kernel_moment(d);
    Eigen::VectorXd b_all = Eigen::VectorXd::Zero(de);
    double total_all = 0.0;
    std::vector<Vector> per_batch;
    for (std::size_t k = 0; k < batches; ++k) {
        b_all += batch_b[k];
        total_all += batch_total[k];
        per_batch.push_back(constrained_solve(a, batch_b[k] / batch_count[k], batch_total[k] / batch_count[k]));
    }
    GlobalImportance out;
    out.values = constrained_solve(a, b_all / static_cast<double>(n), total_all / static_cast<double>(n));
    out.stderr_values = Vector::Zero(de);
    if (batches > 1) {
        Vector mean = Vector::Zero(de);
        for (const auto &v : per_batch) mean += v;
        mean /= static_cast<double>(batches);
        Vector var = Vector::Zero(de);
        for (const auto &v : per_batch) var += (v - mean).cwiseAbs2();
        var /= static_cast<double>(batches - 1);
        out.stderr_values = (var / static_cast<double>(batches)).cwiseSqrt();
    }
    return out;
}

Vector exact_sage(const ModelFunction &f, const Dataset &foreground, const Matrix &background, Loss loss) {
    const std::size_t d = f.input_dim();
    if (d > 12) {
        throw ConfigError("exact_sage: d=" + std::to_string(d) + " exceeds the enumeration limit of 12");
    }
    ExplainConfig config;
    config.loss = loss;
    const LossGame game(f, foreground, background, config);
    const std::size_t count = std::size_t{1} << d;
    std::vector<Coalition> all(count, Coalition(d, 0));
    for (std::size_t m = 0; m < count; ++m) {
        for (std::size_t j = 0; j < d; ++j) all[m][j] = static_cast<char>((m >> j) & 1U);
    }
    Vector mean_loss = Vector::Zero(static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < game.rows(); ++i) mean_loss += game.losses(i, all);
    mean_loss /= static_cast<double>(game.rows());

    Vector phi = Vector::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t m = 0; m < count; ++m) {
        const auto size = static_cast<std::size_t>(std::popcount(m));
        for (std::size_t j = 0; j < d; ++j) {
            if ((m >> j) & 1U) continue;
            const double w = std::exp(std::lgamma(static_cast<double>(size) + 1.0) + std::lgamma(static_cast<double>(d - size)) -
                                      std::lgamma(static_cast<double>(d) + 1.0));
            const std::size_t with = m | (std::size_t{1} << j);
            phi(static_cast<Eigen::Index>(j)) += w * (mean_loss(static_cast<Eigen::Index>(m)) - mean_loss(static_cast<Eigen::Index>(with)));
        }
    }
    return phi;
}

}  // namespace cte
