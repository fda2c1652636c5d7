#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cte {

/// Row-major so that each data point is a contiguous span.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using IndexList = std::vector<std::size_t>;

/// Invalid or inconsistent configuration (bad sizes, unsupported options, missing labels).
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Dimension mismatch between operands.
class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Index outside the addressed container.
class BoundsError : public std::out_of_range {
  public:
    using std::out_of_range::out_of_range;
};

/// Malformed text input (CSV rows, numeric cells).
class ParseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed or incompatible serialized artifact (weights, JSON records).
class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline std::span<const double> row_span(const Matrix &m, Eigen::Index i) {
    return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

inline std::span<double> row_span(Matrix &m, Eigen::Index i) {
    return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

/// Gathers rows of @p source in index order.
Matrix gather_rows(const Matrix &source, std::span<const std::size_t> indices);

/// Keeps only the listed columns, in the given order.
Matrix select_columns(const Matrix &source, std::span<const std::size_t> columns);

}  // namespace cte
