#pragma once

#include <span>
#include <vector>

namespace cte {

struct Summary {
    double mean = 0.0;
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    double sd = 0.0;
    double se = 0.0;
    std::size_t count = 0;
};

Summary summarize_values(std::span<const double> values);

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    /// One-sided p-value for mean(a) < mean(b).
    double p_less = 1.0;
};

/// Welch's unequal-variance t-test of H1: mean(a) < mean(b).
WelchResult welch_less(std::span<const double> a, std::span<const double> b);

/// Ranks 1..n of @p values (lowest = 1); ties get the average of their ranks.
std::vector<double> average_ranks(std::span<const double> values);

/// 100 * (reference - candidate) / reference.
double improvement_percent(double reference, double candidate);

}  // namespace cte
