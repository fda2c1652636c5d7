#include "cte/kernels.hpp"

#include <string>

namespace cte {

double squared_distance(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw ShapeError("squared_distance: dimension mismatch (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
    }
    const std::size_t d = x.size();
    if (d <= 256) {
        double sum = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double diff = x[k] - y[k];
            sum += diff * diff;
        }
        return sum;
    }
    double sum = 0.0;
    double carry = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double diff = x[k] - y[k];
        const double term = diff * diff;
        const double t = sum + term;
        carry += std::abs(sum) >= term ? (sum - t) + term : (term - t) + sum;
        sum = t;
    }
    return sum + carry;
}

GaussianKernel::GaussianKernel(double sigma) : sigma_(sigma), inv_two_sigma_sq_(0.0) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw ConfigError("GaussianKernel: sigma must be a positive finite number");
    }
    inv_two_sigma_sq_ = 1.0 / (2.0 * sigma * sigma);
}

double GaussianKernel::operator()(std::span<const double> x, std::span<const double> y) const {
    return from_squared_distance(squared_distance(x, y));
}

double default_bandwidth(std::size_t d) {
    if (d < 1) {
        throw ConfigError("default_bandwidth: d must be >= 1");
    }
    return std::sqrt(2.0 * static_cast<double>(d));
}

Matrix gram(const GaussianKernel &kernel, const Matrix &a, const Matrix &b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("gram: point sets have different dimensions");
    }
    Matrix k(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const auto x = row_span(a, i);
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            k(i, j) = kernel(x, row_span(b, j));
        }
    }
    return k;
}

}  // namespace cte
