#pragma once

#include "cte/common.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cte {

enum class TaskKind { classification, regression, unlabeled };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string &name);

/// An n x d table of features with optional labels.
///
/// Missing cells are stored as NaN until preprocessing imputes them. Categorical
/// columns hold level codes (indices into `levels[j]`) until target encoding
/// replaces them with real values.
struct Dataset {
    Matrix features;
    std::optional<Vector> labels;
    std::vector<std::string> feature_names;
    TaskKind task = TaskKind::unlabeled;
    std::vector<bool> categorical;
    std::vector<std::vector<std::string>> levels;
    /// Set once a fitted PreprocessSpec has been applied.
    bool preprocessed = false;

    std::size_t rows() const { return static_cast<std::size_t>(features.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(features.cols()); }
    bool has_labels() const { return labels.has_value(); }

    /// Number of classes C (labels are 0..C-1); 0 unless classification.
    int num_classes() const;

    /// Builds an unlabeled, all-numeric dataset with generated feature names.
    static Dataset from_matrix(Matrix features);
    static Dataset from_matrix(Matrix features, Vector labels, TaskKind task);

    /// Throws ConfigError when the dataset breaks its invariants.
    void validate() const;
};

/// Parses a header-first CSV. Empty cells and the literal NA are missing;
/// quoted cells make a column categorical.
///
/// Integer-valued labels in 0..C-1 (or quoted labels) are treated as classes,
/// anything else as a regression target.
Dataset load_csv(const std::filesystem::path &path, const std::optional<std::string> &label_column = std::nullopt);
Dataset parse_csv(const std::string &text, const std::optional<std::string> &label_column = std::nullopt);

/// Writes features (and labels as the last column named `label_name`) with full precision.
void write_csv(const Dataset &data, const std::filesystem::path &path, const std::string &label_name = "label");

enum class CategoricalEncoding { target_encode, none };
enum class Imputation { mean };

struct FittedStats {
    std::vector<std::string> input_names;
    std::vector<std::string> dropped;
    std::vector<std::size_t> kept_columns;
    std::vector<double> means;
    std::vector<double> stds;
    /// Per kept categorical column: level name -> encoded value.
    std::map<std::string, std::map<std::string, double>> encodings;
    double global_target_mean = 0.0;
};

struct PreprocessSpec {
    bool drop_degenerate = true;
    Imputation impute = Imputation::mean;
    bool standardize = true;
    CategoricalEncoding categorical_encoding = CategoricalEncoding::target_encode;
    /// Smoothing weight of target encoding toward the global mean.
    double smoothing = 10.0;
    std::optional<FittedStats> fitted;
};

struct PreprocessResult {
    Dataset train;
    std::vector<Dataset> others;
    PreprocessSpec spec;
};

/// Learns statistics on @p train and applies them to every dataset.
PreprocessResult fit_apply_preprocess(const Dataset &train, const std::vector<Dataset> &others, PreprocessSpec spec);

/// Applies already-fitted statistics. Rejects datasets that are already preprocessed.
Dataset apply_preprocess(const Dataset &data, const PreprocessSpec &spec);

struct DataSplit {
    IndexList train_indices;
    IndexList valid_indices;
};

/// Shuffled split with |train| = floor(0.75 n). Pure function of (n, seed).
DataSplit split_75_25(std::size_t n, std::uint64_t seed);
DataSplit split_75_25(const Dataset &data, std::uint64_t seed);

/// Gathers rows (duplicates allowed) with their labels.
Dataset subset(const Dataset &data, std::span<const std::size_t> indices);

/// Projects onto the listed feature columns.
Dataset select_features(const Dataset &data, std::span<const std::size_t> columns);

}  // namespace cte
