#include "cte/data.hpp"
#include "cte/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace cte;

TEST(LoadCsv, ParsesSimpleNumericTable) {
    const Dataset d = parse_csv("a,b\n1,2\n3,4\n5,6\n");
    EXPECT_EQ(d.rows(), 3u);
    EXPECT_EQ(d.cols(), 2u);
    EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a", "b"}));
    EXPECT_DOUBLE_EQ(d.features(2, 1), 6.0);
    EXPECT_EQ(d.task, TaskKind::unlabeled);
}

TEST(LoadCsv, IntegerLabelsMakeClassification) {
    const Dataset d = parse_csv("x1,x2,y\n0.5,1,0\n1.5,2,1\n2.5,3,1\n", std::string("y"));
    EXPECT_EQ(d.task, TaskKind::classification);
    EXPECT_EQ(d.num_classes(), 2);
    EXPECT_EQ(d.cols(), 2u);
    ASSERT_TRUE(d.labels.has_value());
    EXPECT_DOUBLE_EQ((*d.labels)(1), 1.0);
}

TEST(LoadCsv, RealLabelsMakeRegression) {
    const Dataset d = parse_csv("x,y\n1,0.5\n2,1.25\n", std::string("y"));
    EXPECT_EQ(d.task, TaskKind::regression);
}

TEST(LoadCsv, MissingCellsAreFlagged) {
    const Dataset d = parse_csv("a,b\n1,\n3,NA\n5,6\n");
    EXPECT_TRUE(std::isnan(d.features(0, 1)));
    EXPECT_TRUE(std::isnan(d.features(1, 1)));
    EXPECT_DOUBLE_EQ(d.features(2, 1), 6.0);
}

TEST(LoadCsv, ColumnCountMismatchReportsRow) {
    try {
        parse_csv("a,b\n1,2\n3\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError &e) {
        EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
    }
}

TEST(LoadCsv, UnknownLabelColumnIsConfigError) {
    EXPECT_THROW(parse_csv("a,b\n1,2\n", std::string("y")), ConfigError);
}

TEST(LoadCsv, NonNumericUnquotedCellIsParseError) { EXPECT_THROW(parse_csv("a\nfoo\n"), ParseError); }

TEST(LoadCsv, MissingFileThrows) { EXPECT_ANY_THROW(load_csv("/nonexistent/file.csv")); }

TEST(LoadCsv, WriteThenLoadRoundTrips) {
    const auto path = std::filesystem::temp_directory_path() / "cte_data_roundtrip.csv";
    Matrix x(3, 2);
    x << 0.1, -2.5, 1e-17, 3.0, 4.25, 1.0 / 3.0;
    Vector y(3);
    y << 0, 1, 1;
    write_csv(Dataset::from_matrix(x, y, TaskKind::classification), path);
    const Dataset back = load_csv(path, std::string("label"));
    EXPECT_EQ(back.features, x);
    EXPECT_EQ(*back.labels, y);
    std::filesystem::remove(path);
}

TEST(Preprocess, DropsSingleValueColumnsFromAllSplits) {
    const Dataset train = parse_csv("a,c,b\n1,7,2\n2,7,5\n3,7,1\n");
    const Dataset valid = parse_csv("a,c,b\n4,7,0\n");
    const auto r = fit_apply_preprocess(train, {valid}, PreprocessSpec{});
    EXPECT_EQ(r.train.feature_names, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(r.others[0].cols(), 2u);
    EXPECT_EQ(r.spec.fitted->dropped, (std::vector<std::string>{"c"}));
}

TEST(Preprocess, StandardizesWithTrainingMoments) {
    // mean 5, population std 2
    const Dataset train = parse_csv("a\n3\n7\n3\n7\n");
    const Dataset valid = parse_csv("a\n9\n");
    const auto r = fit_apply_preprocess(train, {valid}, PreprocessSpec{});
    EXPECT_NEAR(r.others[0].features(0, 0), 2.0, 1e-12);
}

TEST(Preprocess, TrainingFeaturesHaveZeroMeanUnitStd) {
    Rng rng(4);
    Matrix x(200, 3);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = 10.0 * j + (j + 1) * rng.normal();
    }
    x(5, 1) = std::numeric_limits<double>::quiet_NaN();
    const auto r = fit_apply_preprocess(Dataset::from_matrix(x), {}, PreprocessSpec{});
    for (Eigen::Index j = 0; j < 3; ++j) {
        const auto col = r.train.features.col(j);
        const double mean = col.mean();
        const double sd = std::sqrt((col.array() - mean).square().mean());
        EXPECT_NEAR(mean, 0.0, 1e-9);
        EXPECT_NEAR(sd, 1.0, 1e-9);
    }
}

TEST(Preprocess, ImputesMissingWithTrainingMean) {
    const Dataset train = parse_csv("a,b\n1,0\n3,1\nNA,2\n");
    PreprocessSpec spec;
    spec.standardize = false;
    const auto r = fit_apply_preprocess(train, {}, spec);
    EXPECT_DOUBLE_EQ(r.train.features(2, 0), 2.0);
}

TEST(Preprocess, UnseenCategoricalLevelGetsGlobalTargetMean) {
    // Hand-computed 6-row example: labels 1,0,1,1,0,1 (global mean 2/3), smoothing 10.
    const Dataset train = parse_csv(
        "c,x,y\n\"a\",1,1\n\"a\",2,0\n\"b\",3,1\n\"b\",4,1\n\"b\",5,0\n\"c\",6,1\n", std::string("y"));
    const Dataset valid = parse_csv("c,x,y\n\"z\",1,0\n\"a\",2,1\n", std::string("y"));
    PreprocessSpec spec;
    spec.standardize = false;
    const auto r = fit_apply_preprocess(train, {valid}, spec);
    const double global = 4.0 / 6.0;
    const double enc_a = (1.0 + 10.0 * global) / (2.0 + 10.0);
    const double enc_b = (2.0 + 10.0 * global) / (3.0 + 10.0);
    const double enc_c = (1.0 + 10.0 * global) / (1.0 + 10.0);
    EXPECT_NEAR(r.train.features(0, 0), enc_a, 1e-12);
    EXPECT_NEAR(r.train.features(2, 0), enc_b, 1e-12);
    EXPECT_NEAR(r.train.features(5, 0), enc_c, 1e-12);
    EXPECT_NEAR(r.others[0].features(0, 0), global, 1e-12);
    EXPECT_NEAR(r.others[0].features(1, 0), enc_a, 1e-12);
}

TEST(Preprocess, TargetEncodingWithoutLabelsIsConfigError) {
    const Dataset train = parse_csv("c,x\n\"a\",1\n\"b\",2\n\"a\",3\n");
    EXPECT_THROW(fit_apply_preprocess(train, {}, PreprocessSpec{}), ConfigError);
}

TEST(Preprocess, DropsIdLikeCategoricalButKeepsContinuous) {
    const Dataset train = parse_csv("id,x,y\n\"u1\",0.1,0\n\"u2\",0.2,1\n\"u3\",0.3,0\n", std::string("y"));
    const auto r = fit_apply_preprocess(train, {}, PreprocessSpec{});
    EXPECT_EQ(r.train.feature_names, (std::vector<std::string>{"x"}));
}

TEST(Preprocess, DoubleApplicationIsRejected) {
    const Dataset train = parse_csv("a\n1\n2\n3\n");
    const auto r = fit_apply_preprocess(train, {}, PreprocessSpec{});
    EXPECT_THROW(apply_preprocess(r.train, r.spec), ConfigError);
    EXPECT_THROW(fit_apply_preprocess(r.train, {}, PreprocessSpec{}), ConfigError);
}

TEST(Preprocess, AppliesSameStatisticsToEverySplit) {
    const Dataset train = parse_csv("a\n1\n2\n3\n4\n");
    const Dataset other = parse_csv("a\n2\n");
    const auto r = fit_apply_preprocess(train, {other}, PreprocessSpec{});
    EXPECT_DOUBLE_EQ(r.others[0].features(0, 0), r.train.features(1, 0));
    const Dataset again = apply_preprocess(other, r.spec);
    EXPECT_DOUBLE_EQ(again.features(0, 0), r.others[0].features(0, 0));
}

TEST(Split, SizesFollowFloorRule) {
    const auto s = split_75_25(100, 0);
    EXPECT_EQ(s.train_indices.size(), 75u);
    EXPECT_EQ(s.valid_indices.size(), 25u);
    const auto small = split_75_25(5, 0);
    EXPECT_EQ(small.train_indices.size(), 3u);
    EXPECT_EQ(small.valid_indices.size(), 2u);
}

TEST(Split, IsDeterministicDisjointAndCovering) {
    for (std::uint64_t seed : {0u, 1u, 99u}) {
        const auto a = split_75_25(37, seed);
        const auto b = split_75_25(37, seed);
        EXPECT_EQ(a.train_indices, b.train_indices);
        EXPECT_EQ(a.valid_indices, b.valid_indices);
        std::set<std::size_t> all(a.train_indices.begin(), a.train_indices.end());
        for (auto i : a.valid_indices) EXPECT_TRUE(all.insert(i).second);
        EXPECT_EQ(all.size(), 37u);
    }
    EXPECT_NE(split_75_25(37, 1).train_indices, split_75_25(37, 2).train_indices);
}

TEST(Split, RejectsTinyData) { EXPECT_THROW(split_75_25(3, 0), ConfigError); }

TEST(Subset, GathersWithDuplicates) {
    const Dataset d = parse_csv("a,y\n1,0\n2,1\n3,0\n", std::string("y"));
    const std::vector<std::size_t> idx{0, 0};
    const Dataset s = subset(d, idx);
    EXPECT_EQ(s.rows(), 2u);
    EXPECT_DOUBLE_EQ(s.features(1, 0), 1.0);
    EXPECT_DOUBLE_EQ((*s.labels)(1), 0.0);
}

TEST(Subset, EmptyAndOutOfRange) {
    const Dataset d = parse_csv("a\n1\n2\n3\n");
    EXPECT_THROW(subset(d, std::vector<std::size_t>{}), ConfigError);
    EXPECT_THROW(subset(d, std::vector<std::size_t>{3}), BoundsError);
}

TEST(Subset, IdentityRoundTrip) {
    const Dataset d = parse_csv("a,b,y\n1,2,0\n3,4,1\n5,6,1\n", std::string("y"));
    const Dataset s = subset(d, std::vector<std::size_t>{0, 1, 2});
    EXPECT_EQ(s.features, d.features);
    EXPECT_EQ(*s.labels, *d.labels);
}

TEST(SelectFeatures, RejectsOutOfRangeColumn) {
    const Dataset d = parse_csv("a,b\n1,2\n");
    EXPECT_THROW(select_features(d, std::vector<std::size_t>{2}), BoundsError);
    EXPECT_EQ(select_features(d, std::vector<std::size_t>{1}).feature_names, (std::vector<std::string>{"b"}));
}
