#pragma once

#include "cte/common.hpp"

#include <cmath>
#include <span>

namespace cte {

/// Squared Euclidean distance. Uses compensated (Neumaier) summation when d > 256.
double squared_distance(std::span<const double> x, std::span<const double> y);

/// Gaussian kernel k(x, y) = exp(-||x - y||^2 / (2 sigma^2)).
class GaussianKernel {
  public:
    explicit GaussianKernel(double sigma);

    double sigma() const { return sigma_; }

    double operator()(std::span<const double> x, std::span<const double> y) const;

    double from_squared_distance(double sq) const { return std::exp(-sq * inv_two_sigma_sq_); }

  private:
    double sigma_;
    double inv_two_sigma_sq_;
};

/// sigma = sqrt(2 d).
double default_bandwidth(std::size_t d);

/// Entry (i, j) = k(A_i, B_j). Each row is summed in a fixed order, so the
/// result does not depend on how rows are scheduled.
Matrix gram(const GaussianKernel &kernel, const Matrix &a, const Matrix &b);

}  // namespace cte
