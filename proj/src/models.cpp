#include "cte/models.hpp"
#include "cte/rng.hpp"

#include "json.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <memory>
#include <fstream>
#include <sstream>

namespace cte {

namespace {

constexpr const char *kWeightsFormat = "cte-mlp-weights";
constexpr int kWeightsVersion = 1;

template <typename E>
E parse_enum(const std::string &name, std::initializer_list<std::pair<const char *, E>> table, const char *what) {
    for (const auto &[key, value] : table) {
        if (name == key) return value;
    }
    throw ConfigError(std::string("unknown ") + what + ": " + name);
}

void apply_activation(Matrix &z, Activation a) {
    if (a == Activation::relu) {
        z = z.cwiseMax(0.0);
    } else {
        z = z.array().tanh().matrix();
    }
}

/// Multiplies @p grad in place by the activation derivative at pre-activation @p z.
/// The ReLU derivative at exactly 0 is 0.
void activation_backward(Matrix &grad, const Matrix &z, Activation a) {
    if (a == Activation::relu) {
        grad = (z.array() > 0.0).select(grad, 0.0);
    } else {
        grad = (grad.array() * (1.0 - z.array().tanh().square())).matrix();
    }
}

void softmax_rows(Matrix &z) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        auto row = z.row(i);
        const double mx = row.maxCoeff();
        row = (row.array() - mx).exp().matrix();
        row /= row.sum();
    }
}

/// Forward pass keeping every pre-activation (for backprop).
struct Trace {
    std::vector<Matrix> inputs;  ///< input to layer l
    std::vector<Matrix> pre;     ///< pre-activation of layer l
    Matrix output;
};

Trace forward_trace(const std::vector<MLPModel::Layer> &layers, const Matrix &x, Activation a, Head head) {
    Trace t;
    Matrix h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Matrix z = h * layers[l].weight.transpose();
        z.rowwise() += layers[l].bias.transpose();
        t.inputs.push_back(std::move(h));
        t.pre.push_back(z);
        if (l + 1 < layers.size()) {
            apply_activation(z, a);
        } else if (head == Head::softmax) {
            softmax_rows(z);
        }
        h = std::move(z);
    }
    t.output = std::move(h);
    return t;
}

/// Backprop of d(loss)/d(last pre-activation) through the network. Fills
/// parameter gradients when @p grads is non-null, and returns d/d(input).
Matrix backward(const std::vector<MLPModel::Layer> &layers, const Trace &t, Matrix grad, Activation a,
                std::vector<MLPModel::Layer> *grads) {
    for (std::size_t l = layers.size(); l-- > 0;) {
        if (l + 1 < layers.size()) {
            activation_backward(grad, t.pre[l], a);
        }
        if (grads != nullptr) {
            (*grads)[l].weight = grad.transpose() * t.inputs[l];
            (*grads)[l].bias = grad.colwise().sum().transpose();
        }
        grad = grad * layers[l].weight;
    }
    return grad;
}

std::string encode_doubles(const double *data, std::size_t count) {
    std::string bytes(count * sizeof(double), '\0');
    std::memcpy(bytes.data(), data, bytes.size());
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < count; ++i) std::reverse(bytes.begin() + 8 * i, bytes.begin() + 8 * (i + 1));
    }
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char *>(out.data()),
                                        reinterpret_cast<const unsigned char *>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(written));
    return out;
}

std::vector<double> decode_doubles(const std::string &text, std::size_t count) {
    if (text.size() % 4 != 0 || text.size() != 4 * ((count * sizeof(double) + 2) / 3)) {
        throw FormatError("weights: encoded array has the wrong length");
    }
    std::string bytes(3 * text.size() / 4, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char *>(bytes.data()),
                                  reinterpret_cast<const unsigned char *>(text.data()), static_cast<int>(text.size()));
    if (n < 0) {
        throw FormatError("weights: invalid base64 data");
    }
    std::vector<double> out(count);
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < count; ++i) std::reverse(bytes.begin() + 8 * i, bytes.begin() + 8 * (i + 1));
    }
    std::memcpy(out.data(), bytes.data(), count * sizeof(double));
    for (const double v : out) {
        if (!std::isfinite(v)) throw FormatError("weights: non-finite parameter");
    }
    return out;
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }
std::string to_string(Head h) { return h == Head::softmax ? "softmax" : "identity"; }
std::string to_string(Loss l) { return l == Loss::cross_entropy ? "cross_entropy" : "mse"; }

Activation activation_from_string(const std::string &name) {
    return parse_enum<Activation>(name, {{"relu", Activation::relu}, {"tanh", Activation::tanh}}, "activation");
}
Head head_from_string(const std::string &name) {
    return parse_enum<Head>(name, {{"softmax", Head::softmax}, {"identity", Head::identity}}, "head");
}
Loss loss_from_string(const std::string &name) {
    return parse_enum<Loss>(name, {{"cross_entropy", Loss::cross_entropy}, {"mse", Loss::mse}}, "loss");
}

MLPModel::MLPModel(std::vector<Layer> layers, Activation activation, Head head)
    : layers_(std::move(layers)), activation_(activation), head_(head) {
    if (layers_.empty()) {
        throw ConfigError("MLPModel: at least one layer required");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto &layer = layers_[l];
        if (layer.bias.size() != layer.weight.rows()) {
            throw ShapeError("MLPModel: bias size does not match layer " + std::to_string(l));
        }
        if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows()) {
            throw ShapeError("MLPModel: layer " + std::to_string(l) + " input size mismatch");
        }
        if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
            throw ConfigError("MLPModel: non-finite parameters");
        }
    }
    if (head_ == Head::softmax && output_dim() < 2) {
        throw ConfigError("MLPModel: softmax head needs at least 2 outputs");
    }
}

MLPModel MLPModel::zeros(const std::vector<std::size_t> &dims, Activation activation, Head head) {
    if (dims.size() < 2) {
        throw ConfigError("MLPModel: need input and output sizes");
    }
    std::vector<Layer> layers;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const auto out = static_cast<Eigen::Index>(dims[l + 1]);
        const auto in = static_cast<Eigen::Index>(dims[l]);
        layers.push_back({Matrix::Zero(out, in), Vector::Zero(out)});
    }
    return MLPModel(std::move(layers), activation, head);
}

MLPModel MLPModel::initialize(const std::vector<std::size_t> &dims, Activation activation, Head head, std::uint64_t seed) {
    MLPModel m = zeros(dims, activation, head);
    Rng rng(derive_seed(seed, "init"));
    for (auto &layer : m.layers_) {
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.weight.cols()));
        for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
            for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
                layer.weight(i, j) = limit * (2.0 * rng.uniform() - 1.0);
            }
        }
    }
    return m;
}

std::size_t MLPModel::input_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols()); }
std::size_t MLPModel::output_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows()); }

std::vector<std::size_t> MLPModel::layer_dims() const {
    std::vector<std::size_t> dims{input_dim()};
    for (const auto &layer : layers_) dims.push_back(static_cast<std::size_t>(layer.weight.rows()));
    return dims;
}

std::size_t MLPModel::default_output() const { return head_ == Head::softmax ? 1 : 0; }

void MLPModel::check_input(const Matrix &x) const {
    if (static_cast<std::size_t>(x.cols()) != input_dim()) {
        throw ShapeError("model expects " + std::to_string(input_dim()) + " features, got " + std::to_string(x.cols()));
    }
}

Matrix MLPModel::forward(const Matrix &x) const {
    check_input(x);
    Matrix h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Matrix z = h * layers_[l].weight.transpose();
        z.rowwise() += layers_[l].bias.transpose();
        if (l + 1 < layers_.size()) {
            apply_activation(z, activation_);
        } else if (head_ == Head::softmax) {
            softmax_rows(z);
        }
        h = std::move(z);
    }
    return h;
}

Matrix MLPModel::grad_input(const Matrix &x, std::size_t output) const {
    check_input(x);
    if (output >= output_dim()) {
        throw BoundsError("grad_input: output index " + std::to_string(output) + " out of range");
    }
    const Trace t = forward_trace(layers_, x, activation_, head_);
    const auto o = static_cast<Eigen::Index>(output);
    Matrix grad = Matrix::Zero(x.rows(), static_cast<Eigen::Index>(output_dim()));
    if (head_ == Head::softmax) {
        // d p_o / d z = p_o (e_o - p)
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double po = t.output(i, o);
            grad.row(i) = -po * t.output.row(i);
            grad(i, o) += po;
        }
    } else {
        grad.col(o).setOnes();
    }
    return backward(layers_, t, std::move(grad), activation_, nullptr);
}

Vector MLPModel::grad_input(std::span<const double> x, std::optional<std::size_t> output) const {
    Matrix row(1, static_cast<Eigen::Index>(x.size()));
    std::copy(x.begin(), x.end(), row.data());
    return grad_input(row, output.value_or(default_output())).row(0).transpose();
}

MLPModel train(const Dataset &data, const TrainConfig &config, TrainReport *report) {
    if (!data.has_labels() || data.task == TaskKind::unlabeled) {
        throw ConfigError("train: labeled dataset required");
    }
    if (config.epochs < 1 || config.batch_size < 1 || !(config.learning_rate > 0.0)) {
        throw ConfigError("train: epochs, batch_size and learning_rate must be positive");
    }
    const bool classification = data.task == TaskKind::classification;
    const Loss loss = config.loss.value_or(classification ? Loss::cross_entropy : Loss::mse);
    if (loss == Loss::cross_entropy && !classification) {
        throw ConfigError("train: cross_entropy loss needs a classification dataset");
    }
    const std::size_t n = data.rows();
    const Vector &y = *data.labels;
    const std::size_t outputs = classification ? static_cast<std::size_t>(std::max(2, data.num_classes())) : 1;

    std::vector<std::size_t> dims{data.cols()};
    dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
    dims.push_back(outputs);
    const Head head = loss == Loss::cross_entropy ? Head::softmax : Head::identity;
    MLPModel model = MLPModel::initialize(dims, config.activation, head, config.seed);
    auto &layers = model.layers();

    // Adam state.
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double adam_eps = 1e-8;
    std::vector<MLPModel::Layer> m1;
    std::vector<MLPModel::Layer> m2;
    for (const auto &layer : layers) {
        m1.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()), Vector::Zero(layer.bias.size())});
    }
    m2 = m1;
    std::vector<MLPModel::Layer> grads = m1;
    long step = 0;

    auto target_gradient = [&](const Matrix &out, std::span<const std::size_t> rows) {
        // d(mean loss)/d(last pre-activation)
        Matrix g = out;
        const double inv_b = 1.0 / static_cast<double>(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            if (head == Head::softmax) {
                g(r, static_cast<Eigen::Index>(y(static_cast<Eigen::Index>(rows[i])))) -= 1.0;
            } else if (loss == Loss::mse) {
                g(r, 0) = 2.0 * (out(r, 0) - y(static_cast<Eigen::Index>(rows[i])));
            }
        }
        return Matrix(g * inv_b);
    };

    Rng rng(derive_seed(config.seed, "shuffle"));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const IndexList order = rng.permutation(n);
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t stop = std::min(n, start + config.batch_size);
            const std::span<const std::size_t> rows(order.data() + start, stop - start);
            const Matrix xb = gather_rows(data.features, rows);
            const Trace t = forward_trace(layers, xb, config.activation, head);
            backward(layers, t, target_gradient(t.output, rows), config.activation, &grads);
            ++step;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            const double lr = config.learning_rate * std::sqrt(c2) / c1;
            for (std::size_t l = 0; l < layers.size(); ++l) {
                m1[l].weight = beta1 * m1[l].weight + (1.0 - beta1) * grads[l].weight;
                m2[l].weight = beta2 * m2[l].weight + (1.0 - beta2) * grads[l].weight.cwiseAbs2();
                layers[l].weight.array() -= lr * m1[l].weight.array() / (m2[l].weight.array().sqrt() + adam_eps);
                m1[l].bias = beta1 * m1[l].bias + (1.0 - beta1) * grads[l].bias;
                m2[l].bias = beta2 * m2[l].bias + (1.0 - beta2) * grads[l].bias.cwiseAbs2();
                layers[l].bias.array() -= lr * m1[l].bias.array() / (m2[l].bias.array().sqrt() + adam_eps);
            }
        }
    }

    if (report != nullptr) {
        const Matrix out = model.forward(data.features);
        double total = 0.0;
        double score = 0.0;
        if (head == Head::softmax) {
            for (Eigen::Index i = 0; i < out.rows(); ++i) {
                const auto label = static_cast<Eigen::Index>(y(i));
                total -= std::log(std::max(out(i, label), 1e-300));
                Eigen::Index best = 0;
                out.row(i).maxCoeff(&best);
                score += best == label ? 1.0 : 0.0;
            }
            score /= static_cast<double>(n);
        } else {
            const Vector residual = out.col(0) - y;
            total = residual.squaredNorm();
            const double ss = (y.array() - y.mean()).square().sum();
            score = ss > 0.0 ? 1.0 - total / ss : 0.0;
        }
        report->final_loss = total / static_cast<double>(n);
        report->training_score = score;
    }
    return model;
}

std::string weights_to_json(const MLPModel &model) {
    nlohmann::json j;
    j["format"] = kWeightsFormat;
    j["version"] = kWeightsVersion;
    j["activation"] = to_string(model.activation());
    j["head"] = to_string(model.head());
    j["loss"] = to_string(model.head() == Head::softmax ? Loss::cross_entropy : Loss::mse);
    j["layer_dims"] = model.layer_dims();
    j["layers"] = nlohmann::json::array();
    for (const auto &layer : model.layers()) {
        j["layers"].push_back({{"weight", encode_doubles(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()))},
                               {"bias", encode_doubles(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()))}});
    }
    return j.dump(1);
}

MLPModel weights_from_json(const std::string &text, std::optional<std::size_t> expected_input_dim) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception &e) {
        throw FormatError(std::string("weights: invalid JSON: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != kWeightsFormat) {
            throw FormatError("weights: not a weight file");
        }
        const int version = j.at("version").get<int>();
        if (version != kWeightsVersion) {
            throw FormatError("weights: unsupported version " + std::to_string(version));
        }
        const auto dims = j.at("layer_dims").get<std::vector<std::size_t>>();
        const auto &layers_json = j.at("layers");
        if (dims.size() < 2 || layers_json.size() + 1 != dims.size()) {
            throw FormatError("weights: layer_dims inconsistent with layers");
        }
        if (expected_input_dim && *expected_input_dim != dims.front()) {
            throw ShapeError("weights: model has " + std::to_string(dims.front()) + " inputs, data has " +
                             std::to_string(*expected_input_dim));
        }
        std::vector<MLPModel::Layer> layers;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            const auto rows = static_cast<Eigen::Index>(dims[l + 1]);
            const auto cols = static_cast<Eigen::Index>(dims[l]);
            const auto w = decode_doubles(layers_json[l].at("weight").get<std::string>(), dims[l + 1] * dims[l]);
            const auto b = decode_doubles(layers_json[l].at("bias").get<std::string>(), dims[l + 1]);
            layers.push_back({Eigen::Map<const Matrix>(w.data(), rows, cols), Eigen::Map<const Vector>(b.data(), rows)});
        }
        return MLPModel(std::move(layers), activation_from_string(j.at("activation").get<std::string>()),
                        head_from_string(j.at("head").get<std::string>()));
    } catch (const nlohmann::json::exception &e) {
        throw FormatError(std::string("weights: ") + e.what());
    } catch (const ConfigError &e) {
        throw FormatError(std::string("weights: ") + e.what());
    }
}

void save_weights(const MLPModel &model, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << weights_to_json(model) << '\n';
    if (!out) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

MLPModel load_weights(const std::filesystem::path &path, std::optional<std::size_t> expected_input_dim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return weights_from_json(buffer.str(), expected_input_dim);
}

ModelFunction::ModelFunction(BatchFn fn, std::size_t input_dim, std::size_t output_dim, std::size_t explained, bool probabilistic)
    : fn_(std::move(fn)), input_dim_(input_dim), output_dim_(output_dim), explained_(explained), probabilistic_(probabilistic) {
    if (explained_ >= output_dim_) {
        throw BoundsError("ModelFunction: explained output " + std::to_string(explained_) + " out of range");
    }
}

ModelFunction ModelFunction::from_model(const MLPModel &model, std::optional<std::size_t> output) {
    // Copy the model so the function owns its parameters.
    auto shared = std::make_shared<const MLPModel>(model);
    return ModelFunction([shared](const Matrix &x) { return shared->forward(x); }, model.input_dim(), model.output_dim(),
                         output.value_or(model.default_output()), model.head() == Head::softmax);
}

ModelFunction ModelFunction::from_scalar(std::function<double(std::span<const double>)> fn, std::size_t input_dim) {
    return ModelFunction(
        [fn = std::move(fn)](const Matrix &x) {
            Matrix out(x.rows(), 1);
            for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, 0) = fn(row_span(x, i));
            return out;
        },
        input_dim, 1, 0, false);
}

Vector ModelFunction::operator()(const Matrix &x) const { return outputs(x).col(static_cast<Eigen::Index>(explained_)); }

double ModelFunction::operator()(std::span<const double> x) const {
    Matrix row(1, static_cast<Eigen::Index>(x.size()));
    std::copy(x.begin(), x.end(), row.data());
    return (*this)(row)(0);
}

Matrix ModelFunction::outputs(const Matrix &x) const {
    if (static_cast<std::size_t>(x.cols()) != input_dim_) {
        throw ShapeError("model function expects " + std::to_string(input_dim_) + " features, got " + std::to_string(x.cols()));
    }
    Matrix out = fn_(x);
    if (out.rows() != x.rows() || static_cast<std::size_t>(out.cols()) != output_dim_) {
        throw ShapeError("model function returned an unexpected shape");
    }
    return out;
}

}  // namespace cte
