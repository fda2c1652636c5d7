#include "cte/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace cte {

namespace {

Matrix euclidean_cost(const Matrix &x, const Matrix &y) {
    Matrix c(x.rows(), y.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < y.rows(); ++j) {
            c(i, j) = std::sqrt(squared_distance(row_span(x, i), row_span(y, j)));
        }
    }
    return c;
}

double median_pairwise_distance(const Matrix &x, const Matrix &y) {
    Matrix pooled(x.rows() + y.rows(), x.cols());
    pooled << x, y;
    std::vector<double> d;
    const auto n = pooled.rows();
    d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            d.push_back(std::sqrt(squared_distance(row_span(pooled, i), row_span(pooled, j))));
        }
    }
    if (d.empty()) return 0.0;
    const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    return *mid;
}

/// out_i = -eps * log sum_j exp((pot_j - C_ij) / eps) / cols (uniform weights).
void soft_min(const Matrix &cost, const Vector &pot, double eps, bool transpose, Vector &out) {
    const Eigen::Index rows = transpose ? cost.cols() : cost.rows();
    const Eigen::Index cols = transpose ? cost.rows() : cost.cols();
    const double log_w = -std::log(static_cast<double>(cols));
    out.resize(rows);
    std::vector<double> z(static_cast<std::size_t>(cols));
    for (Eigen::Index i = 0; i < rows; ++i) {
        double zmax = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < cols; ++j) {
            const double c = transpose ? cost(j, i) : cost(i, j);
            const double v = (pot(j) - c) / eps;
            z[static_cast<std::size_t>(j)] = v;
            zmax = std::max(zmax, v);
        }
        double s = 0.0;
        for (const double v : z) s += std::exp(v - zmax);
        out(i) = -eps * (zmax + std::log(s) + log_w);
    }
}

struct Transport {
    double value = 0.0;
    bool converged = false;
    int iterations = 0;
};

/// Regularization schedule halving from the cost diameter down to @p eps.
std::vector<double> annealing(double diameter, double eps) {
    std::vector<double> out;
    for (double e = diameter; e > eps; e *= 0.5) out.push_back(e);
    out.push_back(eps);
    return out;
}

/// Row-marginal violation of the plan built from (f, g), given f_next = T(g):
/// rows of that plan sum to a_i exp((f_i - f_next_i) / eps).
double marginal_error(const Vector &f, const Vector &f_next, double eps) {
    return (((f - f_next).array() / eps).exp() - 1.0).abs().mean();
}

/// Entropic OT cost between uniform measures, as the dual objective <a,f> + <b,g>.
/// Simultaneous averaged updates (plain alternating updates stall for nearly
/// matched samples), warm-started through a decreasing regularization
/// schedule. Only the last stage counts towards convergence, measured as the
/// L1 marginal violation of the plan.
Transport entropic_ot(const Matrix &cost, double eps, const SinkhornOptions &opt) {
    Vector f = Vector::Zero(cost.rows());
    Vector g = Vector::Zero(cost.cols());
    Vector tf;
    Vector tg;
    Transport t;
    for (const double e : annealing(cost.maxCoeff(), eps)) {
        t.converged = false;
        for (t.iterations = 1; t.iterations <= opt.max_iterations; ++t.iterations) {
            soft_min(cost, g, e, false, tf);
            soft_min(cost, f, e, true, tg);
            const double err = std::max(marginal_error(f, tf, e), marginal_error(g, tg, e));
            f = 0.5 * (f + tf);
            g = 0.5 * (g + tg);
            if (err < opt.tolerance) {
                t.converged = true;
                break;
            }
        }
    }
    t.iterations = std::min(t.iterations, opt.max_iterations);
    t.value = f.mean() + g.mean();
    return t;
}

/// Self-transport term with the symmetric (averaged) update.
Transport entropic_ot_self(const Matrix &cost, double eps, const SinkhornOptions &opt) {
    Vector f = Vector::Zero(cost.rows());
    Vector f_new;
    Transport t;
    for (t.iterations = 1; t.iterations <= opt.max_iterations; ++t.iterations) {
        soft_min(cost, f, eps, false, f_new);
        f_new = 0.5 * (f + f_new);
        const double change = (f_new - f).cwiseAbs().maxCoeff();
        f.swap(f_new);
        if (change < opt.tolerance) {
            t.converged = true;
            break;
        }
    }
    t.iterations = std::min(t.iterations, opt.max_iterations);
    t.value = 2.0 * f.mean();
    return t;
}

}  // namespace

SinkhornResult wasserstein(const Matrix &x, const Matrix &y, const SinkhornOptions &options) {
    if (x.cols() != y.cols()) {
        throw ShapeError("wasserstein: samples have different dimensions");
    }
    if (x.rows() < 1 || y.rows() < 1) {
        throw ConfigError("wasserstein: empty sample");
    }
    const Matrix cross = euclidean_cost(x, y);
    double scale = median_pairwise_distance(x, y);
    if (!(scale > 0.0)) {
        // Mostly duplicated points: fall back to the largest cross distance.
        scale = cross.maxCoeff();
        if (!(scale > 0.0)) return {0.0, true, 0};
    }
    const double eps = options.epsilon_scale * scale;
    const auto xy = entropic_ot(cross, eps, options);
    const auto xx = entropic_ot_self(euclidean_cost(x, x), eps, options);
    const auto yy = entropic_ot_self(euclidean_cost(y, y), eps, options);
    SinkhornResult r;
    r.value = std::max(0.0, xy.value - 0.5 * (xx.value + yy.value));
    r.converged = xy.converged && xx.converged && yy.converged;
    r.iterations = std::max({xy.iterations, xx.iterations, yy.iterations});
    return r;
}

}  // namespace cte
