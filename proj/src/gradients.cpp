#include "cte/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

namespace cte {

Quadrature gauss_legendre_unit(int n) {
    if (n < 1) {
        throw ConfigError("gauss_legendre: n_steps must be >= 1");
    }
    Quadrature q;
    q.nodes.resize(static_cast<std::size_t>(n));
    q.weights.resize(static_cast<std::size_t>(n));
    // Newton iteration on P_n from the Chebyshev-like initial guess; roots are symmetric.
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = 1.0;
            double p2 = 0.0;
            for (int k = 1; k <= n; ++k) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * k - 1.0) * x * p2 - (k - 1.0) * p3) / k;
            }
            dp = n * (x * p1 - p2) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map [-1, 1] to [0, 1]: t = (1 + x) / 2, weight halves.
        const auto lo = static_cast<std::size_t>(i);
        const auto hi = static_cast<std::size_t>(n - 1 - i);
        q.nodes[lo] = 0.5 * (1.0 - x);
        q.nodes[hi] = 0.5 * (1.0 + x);
        q.weights[lo] = 0.5 * w;
        q.weights[hi] = 0.5 * w;
    }
    return q;
}

namespace {

/// Integrated gradients from every baseline row, one row per baseline.
Matrix path_attributions(const MLPModel &model, std::span<const double> x, const Matrix &baselines, const Quadrature &q,
                         std::size_t output) {
    const auto d = baselines.cols();
    const auto b = baselines.rows();
    const auto steps = static_cast<Eigen::Index>(q.nodes.size());
    const Eigen::Map<const Eigen::RowVectorXd> xr(x.data(), d);
    Matrix points(b * steps, d);
    for (Eigen::Index r = 0; r < b; ++r) {
        const Eigen::RowVectorXd delta = xr - baselines.row(r);
        for (Eigen::Index k = 0; k < steps; ++k) {
            points.row(r * steps + k) = baselines.row(r) + q.nodes[static_cast<std::size_t>(k)] * delta;
        }
    }
    const Matrix grads = model.grad_input(points, output);
    Matrix out(b, d);
    for (Eigen::Index r = 0; r < b; ++r) {
        Eigen::RowVectorXd avg = Eigen::RowVectorXd::Zero(d);
        for (Eigen::Index k = 0; k < steps; ++k) avg += q.weights[static_cast<std::size_t>(k)] * grads.row(r * steps + k);
        out.row(r) = (xr - baselines.row(r)).cwiseProduct(avg);
    }
    return out;
}

void check_inputs(const MLPModel &model, std::size_t x_size, const Matrix &baselines) {
    if (baselines.rows() == 0) {
        throw ConfigError("expected_gradients: empty baselines");
    }
    if (x_size != model.input_dim() || static_cast<std::size_t>(baselines.cols()) != model.input_dim()) {
        throw ShapeError("expected_gradients: dimension mismatch with the model");
    }
}

}  // namespace

Vector integrated_gradients(const MLPModel &model, std::span<const double> x, std::span<const double> baseline,
                            const ExplainConfig &config, std::optional<std::size_t> output) {
    Matrix b(1, static_cast<Eigen::Index>(baseline.size()));
    std::copy(baseline.begin(), baseline.end(), b.data());
    check_inputs(model, x.size(), b);
    const Quadrature q = gauss_legendre_unit(config.n_steps);
    return path_attributions(model, x, b, q, output.value_or(model.default_output())).row(0).transpose();
}

Vector expected_gradients(const MLPModel &model, std::span<const double> x, const Matrix &baselines, const ExplainConfig &config,
                          std::optional<std::size_t> output) {
    check_inputs(model, x.size(), baselines);
    const Quadrature q = gauss_legendre_unit(config.n_steps);
    return path_attributions(model, x, baselines, q, output.value_or(model.default_output())).colwise().mean().transpose();
}

Attribution expected_gradients(const MLPModel &model, const Matrix &foreground, const Matrix &baselines, const ExplainConfig &config,
                               std::optional<std::size_t> output) {
    check_inputs(model, static_cast<std::size_t>(foreground.cols()), baselines);
    const Quadrature q = gauss_legendre_unit(config.n_steps);
    const std::size_t o = output.value_or(model.default_output());
    Attribution out;
    out.values.resize(foreground.rows(), foreground.cols());
    out.base_values = Vector::Constant(foreground.rows(), model.forward(baselines).col(static_cast<Eigen::Index>(o)).mean());
    const auto n = static_cast<std::size_t>(foreground.rows());
    auto run = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            out.values.row(row) = path_attributions(model, row_span(foreground, row), baselines, q, o).colwise().mean();
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(config.workers, 1, std::max<std::size_t>(n, 1));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run, n * w / workers, n * (w + 1) / workers);
    run(0, n / workers);
    for (auto &t : pool) t.join();
    return out;
}

}  // namespace cte
