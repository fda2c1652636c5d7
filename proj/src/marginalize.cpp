#include "cte/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace cte {

Marginalizer::Marginalizer(const ModelFunction &f, const Matrix &background, std::size_t chunk_rows)
    : f_(f), background_(background), chunk_rows_(std::max<std::size_t>(chunk_rows, 1)) {
    if (background_.rows() == 0) {
        throw ConfigError("marginalize: empty background");
    }
    if (static_cast<std::size_t>(background_.cols()) != f_.input_dim()) {
        throw ShapeError("marginalize: background has " + std::to_string(background_.cols()) + " features, model expects " +
                         std::to_string(f_.input_dim()));
    }
}

Matrix Marginalizer::mean_outputs(std::span<const double> x, const std::vector<Coalition> &coalitions) const {
    const std::size_t d = dims();
    if (x.size() != d) {
        throw ShapeError("marginalize: instance has " + std::to_string(x.size()) + " features, expected " + std::to_string(d));
    }
    const auto b = background_.rows();
    const std::size_t per_chunk = std::max<std::size_t>(1, chunk_rows_ / static_cast<std::size_t>(b));
    Matrix out(static_cast<Eigen::Index>(coalitions.size()), static_cast<Eigen::Index>(f_.output_dim()));
    Matrix batch;
    for (std::size_t start = 0; start < coalitions.size(); start += per_chunk) {
        const std::size_t stop = std::min(coalitions.size(), start + per_chunk);
        batch.resize(static_cast<Eigen::Index>(stop - start) * b, background_.cols());
        for (std::size_t c = start; c < stop; ++c) {
            if (coalitions[c].size() != d) {
                throw ShapeError("marginalize: coalition size does not match the feature count");
            }
            auto block = batch.middleRows(static_cast<Eigen::Index>(c - start) * b, b);
            block = background_;
            for (std::size_t j = 0; j < d; ++j) {
                if (coalitions[c][j]) block.col(static_cast<Eigen::Index>(j)).setConstant(x[j]);
            }
        }
        const Matrix y = f_.outputs(batch);
        for (std::size_t c = start; c < stop; ++c) {
            out.row(static_cast<Eigen::Index>(c)) = y.middleRows(static_cast<Eigen::Index>(c - start) * b, b).colwise().mean();
        }
    }
    return out;
}

Vector Marginalizer::values(std::span<const double> x, const std::vector<Coalition> &coalitions) const {
    return mean_outputs(x, coalitions).col(static_cast<Eigen::Index>(f_.explained()));
}

double marginalize(const ModelFunction &f, std::span<const double> x, const Coalition &s, const Matrix &background) {
    return Marginalizer(f, background).values(x, {s})(0);
}

Vector exact_shap(const ModelFunction &f, std::span<const double> x, const Matrix &background) {
    const std::size_t d = f.input_dim();
    if (d > 12) {
        throw ConfigError("exact_shap: d=" + std::to_string(d) + " exceeds the enumeration limit of 12");
    }
    const std::size_t count = std::size_t{1} << d;
    std::vector<Coalition> all(count, Coalition(d, 0));
    for (std::size_t m = 0; m < count; ++m) {
        for (std::size_t j = 0; j < d; ++j) all[m][j] = static_cast<char>((m >> j) & 1U);
    }
    const Vector v = Marginalizer(f, background).values(x, all);

    // weight(|S|) = |S|! (d - |S| - 1)! / d!
    std::vector<double> weight(d);
    for (std::size_t s = 0; s < d; ++s) {
        weight[s] = std::exp(std::lgamma(static_cast<double>(s) + 1.0) + std::lgamma(static_cast<double>(d - s)) -
                             std::lgamma(static_cast<double>(d) + 1.0));
    }
    Vector phi = Vector::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t m = 0; m < count; ++m) {
        const auto size = static_cast<std::size_t>(std::popcount(m));
        for (std::size_t j = 0; j < d; ++j) {
            if ((m >> j) & 1U) continue;
            const std::size_t with = m | (std::size_t{1} << j);
            phi(static_cast<Eigen::Index>(j)) += weight[size] * (v(static_cast<Eigen::Index>(with)) - v(static_cast<Eigen::Index>(m)));
        }
    }
    return phi;
}

}  // namespace cte
