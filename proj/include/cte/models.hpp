#pragma once

#include "cte/common.hpp"
#include "cte/data.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cte {

enum class Activation { relu, tanh };
enum class Head { softmax, identity };
enum class Loss { cross_entropy, mse };

std::string to_string(Activation a);
std::string to_string(Head h);
std::string to_string(Loss l);
Activation activation_from_string(const std::string &name);
Head head_from_string(const std::string &name);
Loss loss_from_string(const std::string &name);

/// Feed-forward network: affine layers with a hidden activation and a
/// softmax (classification) or identity (regression) head.
class MLPModel {
  public:
    struct Layer {
        Matrix weight;  ///< out x in
        Vector bias;    ///< out
    };

    MLPModel() = default;
    MLPModel(std::vector<Layer> layers, Activation activation, Head head);

    /// Zero-initialized network with the given layer sizes (input, hidden..., output).
    static MLPModel zeros(const std::vector<std::size_t> &dims, Activation activation, Head head);

    /// He-style uniform initialization scaled by fan-in, zero biases.
    static MLPModel initialize(const std::vector<std::size_t> &dims, Activation activation, Head head, std::uint64_t seed);

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::vector<std::size_t> layer_dims() const;
    Activation activation() const { return activation_; }
    Head head() const { return head_; }
    const std::vector<Layer> &layers() const { return layers_; }
    std::vector<Layer> &layers() { return layers_; }

    /// n x input_dim -> n x output_dim.
    Matrix forward(const Matrix &x) const;

    /// Gradient of output column @p output with respect to the input, per row.
    Matrix grad_input(const Matrix &x, std::size_t output) const;

    /// Single-point convenience form of grad_input.
    Vector grad_input(std::span<const double> x, std::optional<std::size_t> output = std::nullopt) const;

    /// Default explained output: class 1 for classification, 0 for regression.
    std::size_t default_output() const;

  private:
    void check_input(const Matrix &x) const;

    std::vector<Layer> layers_;
    Activation activation_ = Activation::relu;
    Head head_ = Head::softmax;
};

struct TrainConfig {
    std::vector<std::size_t> hidden{128, 64};
    Activation activation = Activation::relu;
    int epochs = 50;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    /// Defaults to cross-entropy for classification, MSE for regression.
    std::optional<Loss> loss;
};

struct TrainReport {
    double final_loss = 0.0;
    /// Classification accuracy, or R^2 for regression, on the training data.
    double training_score = 0.0;
};

/// Mini-batch Adam on the configured loss. Deterministic for fixed (data, config).
MLPModel train(const Dataset &data, const TrainConfig &config, TrainReport *report = nullptr);

/// Versioned JSON with base64 little-endian float64 arrays.
void save_weights(const MLPModel &model, const std::filesystem::path &path);
std::string weights_to_json(const MLPModel &model);

/// Throws FormatError on malformed files or a version mismatch, ShapeError when
/// @p expected_input_dim is given and differs from the stored input size.
MLPModel load_weights(const std::filesystem::path &path, std::optional<std::size_t> expected_input_dim = std::nullopt);
MLPModel weights_from_json(const std::string &text, std::optional<std::size_t> expected_input_dim = std::nullopt);

/// Batched model evaluation with one explained output column.
///
/// Estimators call operator() for the explained scalar; loss-based estimators
/// (SAGE) use outputs() for the full class-probability rows.
class ModelFunction {
  public:
    using BatchFn = std::function<Matrix(const Matrix &)>;

    ModelFunction(BatchFn fn, std::size_t input_dim, std::size_t output_dim, std::size_t explained, bool probabilistic);

    /// Wraps a trained model; @p output defaults to model.default_output().
    static ModelFunction from_model(const MLPModel &model, std::optional<std::size_t> output = std::nullopt);

    /// Scalar function of one row, evaluated row by row.
    static ModelFunction from_scalar(std::function<double(std::span<const double>)> fn, std::size_t input_dim);

    Vector operator()(const Matrix &x) const;
    double operator()(std::span<const double> x) const;
    Matrix outputs(const Matrix &x) const;

    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const { return output_dim_; }
    std::size_t explained() const { return explained_; }
    /// True when outputs are class probabilities (softmax head).
    bool probabilistic() const { return probabilistic_; }

  private:
    BatchFn fn_;
    std::size_t input_dim_;
    std::size_t output_dim_;
    std::size_t explained_;
    bool probabilistic_;
};

}  // namespace cte
