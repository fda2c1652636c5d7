#pragma once

#include "cte/data.hpp"

#include <cstdint>
#include <string>

namespace cte {

/// Unlabeled mixture of @p components unit-variance Gaussians with means drawn
/// uniformly from [-spread, spread]^d.
Dataset gaussian_mixture(std::size_t n, std::size_t d, std::size_t components, std::uint64_t seed, double spread = 3.0);

/// Binary labels from a logistic model with geometrically decaying feature
/// weights and one interaction, on Gaussian-mixture features.
Dataset synthetic_classification(std::size_t n, std::size_t d, std::uint64_t seed);

/// Smooth nonlinear regression target (sines plus one interaction) with
/// Gaussian noise, on Gaussian-mixture features.
Dataset synthetic_regression(std::size_t n, std::size_t d, std::uint64_t seed);

/// Dispatch by name: "mixture", "classification", "regression".
Dataset generate_dataset(const std::string &kind, std::size_t n, std::size_t d, std::uint64_t seed);

}  // namespace cte
