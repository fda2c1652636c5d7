#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cte {

/// Derives an independent seed for a named substream, e.g. ("compress", repeat)
/// or ("explain", instance). Stable across platforms.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

/// Seeded generator with platform-independent sampling helpers.
///
/// The standard library distributions are implementation-defined, so index,
/// uniform and normal draws are done here directly from the raw engine output.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);

    /// Uniform real in [0, 1) with 53 random bits.
    double uniform();

    /// Standard normal (Marsaglia polar method).
    double normal();

    /// Uniformly random permutation of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n);

    /// @p m distinct indices from 0..n-1, in random order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t m);

    template <typename T>
    void shuffle(std::vector<T> &values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[index(i)]);
        }
    }

  private:
    std::mt19937_64 engine_;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace cte
