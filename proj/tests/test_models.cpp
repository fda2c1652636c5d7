#include "cte/models.hpp"
#include "cte/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace cte;

namespace {

Matrix normal_points(std::size_t m, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    return x;
}

std::filesystem::path temp_file(const std::string &name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST(Forward, ZeroNetworkGivesUniformSoftmax) {
    const MLPModel m = MLPModel::zeros({3, 4, 2}, Activation::relu, Head::softmax);
    const Matrix out = m.forward(normal_points(5, 3, 1));
    EXPECT_TRUE(out.isApproxToConstant(0.5, 1e-15));
}

TEST(Forward, LinearRegressionDotProduct) {
    MLPModel m = MLPModel::zeros({2, 1}, Activation::relu, Head::identity);
    m.layers()[0].weight << 1.0, 2.0;
    Matrix x(1, 2);
    x << 3.0, 4.0;
    EXPECT_DOUBLE_EQ(m.forward(x)(0, 0), 11.0);
}

TEST(Forward, RowPermutationPermutesOutputs) {
    const MLPModel m = MLPModel::initialize({4, 8, 3}, Activation::relu, Head::softmax, 2);
    const Matrix x = normal_points(6, 4, 3);
    Matrix reversed = x.colwise().reverse();
    const Matrix a = m.forward(x);
    const Matrix b = m.forward(reversed);
    EXPECT_LT((a - b.colwise().reverse()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Forward, BatchEqualsSingleRows) {
    const MLPModel m = MLPModel::initialize({5, 7, 6, 2}, Activation::relu, Head::softmax, 4);
    const Matrix x = normal_points(10, 5, 5);
    const Matrix batch = m.forward(x);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Matrix single = m.forward(x.row(i));
        EXPECT_NEAR((single.row(0) - batch.row(i)).cwiseAbs().maxCoeff(), 0.0, 1e-14);
    }
}

TEST(Forward, SoftmaxRowsAreDistributions) {
    const MLPModel m = MLPModel::initialize({3, 16, 4}, Activation::relu, Head::softmax, 6);
    const Matrix out = m.forward(normal_points(200, 3, 7) * 5.0);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        EXPECT_NEAR(out.row(i).sum(), 1.0, 1e-6);
        EXPECT_GE(out.row(i).minCoeff(), 0.0);
        EXPECT_LE(out.row(i).maxCoeff(), 1.0);
    }
}

TEST(Forward, ShapeMismatch) {
    const MLPModel m = MLPModel::zeros({3, 2}, Activation::relu, Head::softmax);
    EXPECT_THROW(m.forward(Matrix::Zero(2, 4)), ShapeError);
}

TEST(GradInput, LinearHeadGivesWeights) {
    MLPModel m = MLPModel::zeros({3, 1}, Activation::relu, Head::identity);
    m.layers()[0].weight << 0.5, -1.0, 2.0;
    const std::vector<double> x{1.0, 7.0, -3.0};
    const Vector g = m.grad_input(x);
    EXPECT_DOUBLE_EQ(g(0), 0.5);
    EXPECT_DOUBLE_EQ(g(1), -1.0);
    EXPECT_DOUBLE_EQ(g(2), 2.0);
}

TEST(GradInput, ConstantModelHasZeroGradient) {
    MLPModel m = MLPModel::zeros({3, 5, 1}, Activation::relu, Head::identity);
    m.layers()[1].bias(0) = 4.0;
    const std::vector<double> x{1.0, 2.0, 3.0};
    EXPECT_TRUE(m.grad_input(x).isZero(0.0));
}

TEST(GradInput, OutputIndexOutOfRange) {
    const MLPModel m = MLPModel::zeros({2, 2}, Activation::relu, Head::softmax);
    EXPECT_THROW(m.grad_input(Matrix::Zero(1, 2), 2), BoundsError);
}

TEST(GradInput, MatchesCentralDifferences) {
    for (auto act : {Activation::tanh, Activation::relu}) {
        for (auto head : {Head::softmax, Head::identity}) {
            const std::size_t outputs = head == Head::softmax ? 3 : 1;
            const MLPModel m = MLPModel::initialize({4, 12, 8, outputs}, act, head, 11);
            const Matrix x = normal_points(100, 4, 12);
            const std::size_t o = outputs - 1;
            const Matrix g = m.grad_input(x, o);
            const double h = 1e-4;
            int checked = 0;
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                Eigen::RowVectorXd fd(4);
                for (Eigen::Index j = 0; j < 4; ++j) {
                    Matrix xp = x.row(i);
                    Matrix xm = x.row(i);
                    xp(0, j) += h;
                    xm(0, j) -= h;
                    fd(j) = (m.forward(xp)(0, static_cast<Eigen::Index>(o)) - m.forward(xm)(0, static_cast<Eigen::Index>(o))) / (2.0 * h);
                }
                const double err = (fd - g.row(i)).norm();
                const double scale = std::max(g.row(i).norm(), 1e-8);
                if (act == Activation::relu && err > 1e-4 * scale) {
                    continue;  // a ReLU kink within h of the point
                }
                EXPECT_LT(err, 1e-4 * scale) << "row " << i;
                ++checked;
            }
            EXPECT_GE(checked, 90);
        }
    }
}

TEST(Train, SeparableBlobsReachHighAccuracy) {
    Rng rng(20);
    Matrix x(400, 2);
    Vector y(400);
    for (Eigen::Index i = 0; i < 400; ++i) {
        const bool pos = i % 2 == 0;
        x(i, 0) = (pos ? 2.0 : -2.0) + 0.5 * rng.normal();
        x(i, 1) = (pos ? 2.0 : -2.0) + 0.5 * rng.normal();
        y(i) = pos ? 1.0 : 0.0;
    }
    TrainConfig cfg;
    cfg.hidden = {16};
    cfg.epochs = 50;
    TrainReport report;
    train(Dataset::from_matrix(x, y, TaskKind::classification), cfg, &report);
    EXPECT_GT(report.training_score, 0.95);
}

TEST(Train, DeterministicWeights) {
    const Matrix x = normal_points(100, 3, 21);
    Vector y = (x.col(0).array() > 0.0).cast<double>();
    const Dataset d = Dataset::from_matrix(x, y, TaskKind::classification);
    TrainConfig cfg;
    cfg.hidden = {8, 4};
    cfg.epochs = 5;
    cfg.seed = 3;
    EXPECT_EQ(weights_to_json(train(d, cfg)), weights_to_json(train(d, cfg)));
}

TEST(Train, MseLearnsLinearTarget) {
    Rng rng(22);
    const Matrix x = normal_points(500, 2, 23);
    Vector y(500);
    for (Eigen::Index i = 0; i < 500; ++i) y(i) = 3.0 * x(i, 0) + 0.1 * rng.normal();
    TrainConfig cfg;
    cfg.hidden = {16};
    cfg.epochs = 50;
    cfg.learning_rate = 5e-3;
    const MLPModel m = train(Dataset::from_matrix(x, y, TaskKind::regression), cfg);
    const Vector pred = m.forward(x).col(0);
    const double corr = ((pred.array() - pred.mean()) * (y.array() - y.mean())).sum() /
                        std::sqrt((pred.array() - pred.mean()).square().sum() * (y.array() - y.mean()).square().sum());
    EXPECT_GT(corr, 0.9);
}

TEST(Train, RequiresLabels) {
    EXPECT_THROW(train(Dataset::from_matrix(normal_points(10, 2, 0)), TrainConfig{}), ConfigError);
}

TEST(Weights, RoundTripIsBitExact) {
    const MLPModel m = MLPModel::initialize({5, 9, 3}, Activation::tanh, Head::softmax, 30);
    const auto path = temp_file("cte_weights_roundtrip.json");
    save_weights(m, path);
    const MLPModel back = load_weights(path);
    EXPECT_EQ(back.layer_dims(), m.layer_dims());
    EXPECT_EQ(back.activation(), Activation::tanh);
    EXPECT_EQ(back.head(), Head::softmax);
    const Matrix x = normal_points(20, 5, 31);
    EXPECT_TRUE((back.forward(x).array() == m.forward(x).array()).all());
    std::filesystem::remove(path);
}

TEST(Weights, TruncatedFileIsFormatError) {
    const std::string text = weights_to_json(MLPModel::initialize({3, 2}, Activation::relu, Head::softmax, 1));
    EXPECT_THROW(weights_from_json(text.substr(0, text.size() / 2)), FormatError);
}

TEST(Weights, VersionMismatchIsFormatError) {
    std::string text = weights_to_json(MLPModel::initialize({3, 2}, Activation::relu, Head::softmax, 1));
    const auto pos = text.find("\"version\": 1");
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, 12, "\"version\": 7");
    EXPECT_THROW(weights_from_json(text), FormatError);
}

TEST(Weights, InputDimensionIsChecked) {
    const std::string text = weights_to_json(MLPModel::initialize({13, 4, 2}, Activation::relu, Head::softmax, 1));
    EXPECT_THROW(weights_from_json(text, 10), ShapeError);
    EXPECT_NO_THROW(weights_from_json(text, 13));
}

TEST(ModelFunction, DefaultsToSecondClass) {
    MLPModel m = MLPModel::zeros({2, 3}, Activation::relu, Head::softmax);
    m.layers()[0].bias << 0.0, 1.0, 2.0;
    const ModelFunction f = ModelFunction::from_model(m);
    EXPECT_EQ(f.explained(), 1u);
    EXPECT_TRUE(f.probabilistic());
    const std::vector<double> x{0.0, 0.0};
    const double e = std::exp(1.0) / (1.0 + std::exp(1.0) + std::exp(2.0));
    EXPECT_NEAR(f(x), e, 1e-15);
    EXPECT_THROW(ModelFunction::from_model(m, 3), BoundsError);
}
