#include "cte/explain.hpp"

#include <algorithm>

namespace cte {

EffectGrid EffectGrid::from_data(const Matrix &foreground, int points_1d, int points_2d) {
    if (foreground.rows() == 0) {
        throw ConfigError("feature_effects: empty foreground");
    }
    if (points_1d < 1 || points_2d < 1) {
        throw ConfigError("feature_effects: grid sizes must be positive");
    }
    EffectGrid g;
    g.lo = foreground.colwise().minCoeff().transpose();
    g.hi = foreground.colwise().maxCoeff().transpose();
    g.points_1d = points_1d;
    g.points_2d = points_2d;
    return g;
}

double EffectGrid::value(std::size_t j, int k, int points) const {
    const auto jj = static_cast<Eigen::Index>(j);
    // A constant feature collapses to a single repeated grid value.
    if (points == 1 || !(hi(jj) > lo(jj))) return lo(jj);
    return lo(jj) + (hi(jj) - lo(jj)) * static_cast<double>(k) / static_cast<double>(points - 1);
}

const Matrix &FeatureEffects::pair(std::size_t j, std::size_t k) const {
    const std::size_t d = dims();
    if (j >= k || k >= d) {
        throw BoundsError("feature_effects: pair (" + std::to_string(j) + ", " + std::to_string(k) + ") not stored");
    }
    // Offset of row j in the upper triangle, then column.
    const std::size_t index = j * d - j * (j + 1) / 2 + (k - j - 1);
    return effects_2d[index];
}

std::vector<double> FeatureEffects::flatten() const {
    const std::size_t d = dims();
    const auto p2 = static_cast<Eigen::Index>(grid.points_2d);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(effects_1d.size()) + d * d * static_cast<std::size_t>(p2 * p2));
    out.insert(out.end(), effects_1d.data(), effects_1d.data() + effects_1d.size());
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < d; ++k) {
            for (Eigen::Index a = 0; a < p2; ++a) {
                for (Eigen::Index b = 0; b < p2; ++b) {
                    if (j == k) {
                        out.push_back(0.0);
                    } else if (j < k) {
                        out.push_back(pair(j, k)(a, b));
                    } else {
                        out.push_back(pair(k, j)(b, a));
                    }
                }
            }
        }
    }
    return out;
}

namespace {

/// Mean explained output of the foreground with the given columns overwritten,
/// for a list of value assignments (one per grid point).
Vector overwrite_means(const ModelFunction &f, const Matrix &foreground, const std::vector<std::size_t> &columns,
                       const std::vector<std::vector<double>> &assignments, std::size_t chunk_rows) {
    const auto n = foreground.rows();
    const std::size_t per_chunk = std::max<std::size_t>(1, chunk_rows / static_cast<std::size_t>(n));
    Vector out(static_cast<Eigen::Index>(assignments.size()));
    Matrix batch;
    for (std::size_t start = 0; start < assignments.size(); start += per_chunk) {
        const std::size_t stop = std::min(assignments.size(), start + per_chunk);
        batch.resize(static_cast<Eigen::Index>(stop - start) * n, foreground.cols());
        for (std::size_t a = start; a < stop; ++a) {
            auto block = batch.middleRows(static_cast<Eigen::Index>(a - start) * n, n);
            block = foreground;
            for (std::size_t c = 0; c < columns.size(); ++c) {
                block.col(static_cast<Eigen::Index>(columns[c])).setConstant(assignments[a][c]);
            }
        }
        const Vector y = f(batch);
        for (std::size_t a = start; a < stop; ++a) {
            out(static_cast<Eigen::Index>(a)) = y.segment(static_cast<Eigen::Index>(a - start) * n, n).mean();
        }
    }
    return out;
}

}  // namespace

FeatureEffects feature_effects(const ModelFunction &f, const Matrix &foreground, const std::optional<EffectGrid> &grid,
                               std::size_t chunk_rows) {
    if (foreground.rows() == 0) {
        throw ConfigError("feature_effects: empty foreground");
    }
    const std::size_t d = f.input_dim();
    if (static_cast<std::size_t>(foreground.cols()) != d) {
        throw ShapeError("feature_effects: foreground has " + std::to_string(foreground.cols()) + " features, model expects " +
                         std::to_string(d));
    }
    FeatureEffects fx;
    fx.grid = grid.value_or(EffectGrid::from_data(foreground));
    if (static_cast<std::size_t>(fx.grid.lo.size()) != d || static_cast<std::size_t>(fx.grid.hi.size()) != d) {
        throw ShapeError("feature_effects: grid dimension mismatch");
    }
    const int p1 = fx.grid.points_1d;
    const int p2 = fx.grid.points_2d;
    fx.effects_1d.resize(static_cast<Eigen::Index>(d), p1);
    for (std::size_t j = 0; j < d; ++j) {
        std::vector<std::vector<double>> values;
        for (int k = 0; k < p1; ++k) values.push_back({fx.grid.value(j, k, p1)});
        fx.effects_1d.row(static_cast<Eigen::Index>(j)) = overwrite_means(f, foreground, {j}, values, chunk_rows).transpose();
    }
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = j + 1; k < d; ++k) {
            std::vector<std::vector<double>> values;
            for (int a = 0; a < p2; ++a) {
                for (int b = 0; b < p2; ++b) values.push_back({fx.grid.value(j, a, p2), fx.grid.value(k, b, p2)});
            }
            const Vector means = overwrite_means(f, foreground, {j, k}, values, chunk_rows);
            fx.effects_2d.emplace_back(Eigen::Map<const Matrix>(means.data(), p2, p2));
        }
    }
    return fx;
}

}  // namespace cte
