#include "cte/manifest.hpp"
#include "cte/serialize.hpp"
#include "cte/synthetic.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace cte;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string &name) {
    const fs::path dir = fs::temp_directory_path() / ("cte_serialize_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

TrialRecord sample_record() {
    TrialRecord r;
    r.dataset = "toy";
    r.estimator = Estimator::kernel_sage;
    r.method = CompressionMethod::kt;
    r.seed = 12;
    r.size = 35;
    r.mae = 0.125;
    r.topk_precision = 0.6;
    r.compress_seconds = 0.01;
    r.explain_seconds = 0.5;
    return r;
}

}  // namespace

TEST(Schema, EveryDocumentedSchemaIsEmbedded) {
    for (const char *name : {"aggregate", "benchmark_spec", "coreset_selection", "discrepancy_report", "explanation",
                             "model_weights", "preprocess", "run_manifest", "summary", "timing_record", "trial_record"}) {
        EXPECT_TRUE(schema(name).is_object()) << name;
    }
    EXPECT_THROW(schema("no_such_schema"), ConfigError);
}

TEST(Schema, ValidatorKeywords) {
    const Json s = Json::parse(R"({
        "type": "object", "required": ["a"], "additionalProperties": false,
        "properties": {
            "a": {"type": "integer", "minimum": 1, "maximum": 3},
            "b": {"type": "array", "minItems": 1, "items": {"type": "string", "enum": ["x", "y"]}},
            "c": {"type": ["number", "null"]}
        }})");
    EXPECT_NO_THROW(validate_with_schema(Json::parse(R"({"a": 2, "b": ["x"], "c": null})"), s));
    EXPECT_NO_THROW(validate_with_schema(Json::parse(R"({"a": 3, "c": 1.5})"), s));
    EXPECT_THROW(validate_with_schema(Json::parse(R"({"b": ["x"]})"), s), FormatError);
    EXPECT_THROW(validate_with_schema(Json::parse(R"({"a": 0})"), s), FormatError);
    EXPECT_THROW(validate_with_schema(Json::parse(R"({"a": 4})"), s), FormatError);
    EXPECT_THROW(validate_with_schema(Json::parse(R"({"a": 1.5})"), s), FormatError);
    EXPECT_THROW(validate_with_schema(Json::parse(R"({"a": 1, "b": []})"), s), FormatError);
    EXPECT_THROW(validate_with_schema(Json::parse(R"({"a": 1, "b": ["z"]})"), s), FormatError);
    EXPECT_THROW(validate_with_schema(Json::parse(R"({"a": 1, "c": "no"})"), s), FormatError);
    EXPECT_THROW(validate_with_schema(Json::parse(R"({"a": 1, "extra": 1})"), s), FormatError);
}

TEST(Schema, ErrorNamesThePath) {
    try {
        validate_json(Json::parse(R"({"method": "kt", "seed": 0, "sigma": 1, "g": 4, "indices": [1, -2]})"), "coreset_selection");
        FAIL() << "expected a violation";
    } catch (const FormatError &e) {
        EXPECT_NE(std::string(e.what()).find("indices"), std::string::npos) << e.what();
    }
}

TEST(CoresetJson, RoundTripWithAndWithoutTiming) {
    CoresetSelection sel;
    sel.indices = {4, 1, 9};
    sel.method = CompressionMethod::kmedoids;
    sel.seed = 3;
    sel.sigma = 2.5;
    sel.g = 4;
    sel.elapsed_seconds = 0.25;
    const CoresetSelection back = coreset_from_json(to_json(sel));
    EXPECT_EQ(back.indices, sel.indices);
    EXPECT_EQ(back.method, sel.method);
    EXPECT_EQ(back.seed, 3u);
    EXPECT_DOUBLE_EQ(back.sigma, 2.5);
    EXPECT_DOUBLE_EQ(back.elapsed_seconds, 0.25);

    const Json bare = to_json(sel, false);
    EXPECT_FALSE(bare.contains("elapsed_seconds"));
    EXPECT_EQ(coreset_from_json(bare).indices, sel.indices);
    EXPECT_THROW(coreset_from_json(Json::parse(R"({"method": "kt", "seed": 0, "sigma": 1, "g": 4, "indices": []})")), FormatError);
}

TEST(PreprocessJson, RoundTripReproducesTransform) {
    const Dataset raw = synthetic_classification(200, 4, 5);
    const auto res = fit_apply_preprocess(raw, {}, {});
    const Json j = to_json(res.spec);
    const PreprocessSpec back = preprocess_from_json(j);
    EXPECT_EQ(to_json(back), j);
    const Dataset again = apply_preprocess(raw, back);
    EXPECT_EQ((again.features - res.train.features).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ExplanationJson, RoundTripAllShapes) {
    Explanation local;
    local.estimator = Estimator::permutation_shap;
    local.values = {1, 2, 3, 4, 5, 6};
    local.shape = {2, 3};
    Explanation global;
    global.estimator = Estimator::permutation_sage;
    global.values = {0.5, -0.25};
    global.stderr_values = {0.01, 0.02};
    global.shape = {2};
    Explanation fx;
    fx.estimator = Estimator::feature_effects;
    EffectGrid g;
    g.lo = Vector::Constant(1, -1.0);
    g.hi = Vector::Constant(1, 2.0);
    g.points_1d = 3;
    g.points_2d = 2;
    fx.grid = g;
    fx.values = {1, 2, 3, 0, 0, 0, 0};
    fx.shape = {7};
    for (const Explanation *e : {&local, &global, &fx}) {
        const Json j = to_json(*e);
        EXPECT_NO_THROW(validate_json(j, "explanation"));
        const Explanation back = explanation_from_json(j);
        EXPECT_EQ(back.estimator, e->estimator);
        EXPECT_EQ(back.values, e->values);
        EXPECT_EQ(back.shape, e->shape);
        EXPECT_EQ(back.stderr_values, e->stderr_values);
        EXPECT_EQ(back.grid.has_value(), e->grid.has_value());
        EXPECT_EQ(to_json(back), j);
    }
    Json bad = to_json(local);
    bad["shape"] = {4, 4};
    EXPECT_THROW(explanation_from_json(bad), FormatError);
}

TEST(ExplanationCsv, LayoutPerKind) {
    Explanation local;
    local.estimator = Estimator::kernel_shap;
    local.values = {1, 2, 3, 4};
    local.shape = {2, 2};
    const std::string csv = explanation_csv(local);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "instance,feature,value");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
    Explanation global;
    global.estimator = Estimator::kernel_sage;
    global.values = {1, 2};
    global.stderr_values = {0.1, 0.2};
    global.shape = {2};
    const std::string gcsv = explanation_csv(global);
    EXPECT_EQ(gcsv.substr(0, gcsv.find('\n')), "feature,value,stderr");
}

TEST(TrialRecordJson, RoundTripSeparatesTimings) {
    const TrialRecord r = sample_record();
    const Json rec = to_json(r);
    const Json timing = timing_json(r);
    EXPECT_NO_THROW(validate_json(rec, "trial_record"));
    EXPECT_NO_THROW(validate_json(timing, "timing_record"));
    EXPECT_FALSE(rec.contains("explain_seconds"));
    const TrialRecord back = record_from_json(rec, &timing);
    EXPECT_EQ(back.dataset, r.dataset);
    EXPECT_EQ(back.estimator, r.estimator);
    EXPECT_EQ(back.method, r.method);
    EXPECT_EQ(back.seed, r.seed);
    EXPECT_EQ(back.size, r.size);
    EXPECT_DOUBLE_EQ(back.mae, r.mae);
    EXPECT_DOUBLE_EQ(*back.topk_precision, *r.topk_precision);
    EXPECT_DOUBLE_EQ(back.explain_seconds, r.explain_seconds);
    EXPECT_DOUBLE_EQ(record_from_json(rec).explain_seconds, 0.0);
}

TEST(TrialRecordJson, FailedRecordHasNoScores) {
    TrialRecord r = sample_record();
    r.failed = true;
    r.error = "boom";
    const Json j = to_json(r);
    EXPECT_TRUE(j.at("topk_precision").is_null());
    EXPECT_EQ(j.at("error"), "boom");
    const TrialRecord back = record_from_json(j);
    EXPECT_TRUE(back.failed);
    EXPECT_FALSE(back.topk_precision.has_value());
}

TEST(SummaryJson, RoundTrip) {
    BenchResult res;
    res.dataset = "toy";
    res.estimator = Estimator::permutation_shap;
    for (int s = 0; s < 4; ++s) {
        TrialRecord a = sample_record();
        a.estimator = res.estimator;
        a.method = CompressionMethod::iid;
        a.seed = static_cast<std::uint64_t>(s);
        a.mae = 1.0 + 0.1 * s;
        TrialRecord b = a;
        b.method = CompressionMethod::kt;
        b.mae = 0.5 + 0.05 * s;
        res.records.push_back(a);
        res.records.push_back(b);
    }
    res.aggregates = aggregate_records(res.records, {CompressionMethod::iid, CompressionMethod::kt});
    const SummaryTable t = summarize({res});
    const Json j = to_json(t);
    EXPECT_NO_THROW(validate_json(j, "summary"));
    EXPECT_EQ(to_json(summary_from_json(j)), j);
    GroundTruth truth;
    truth.background_rows = 100;
    const Json agg{{"cells", Json::array({aggregate_json(res, truth)})}};
    EXPECT_NO_THROW(validate_json(agg, "aggregate"));
}

TEST(Files, JsonAndTextRoundTrip) {
    const fs::path dir = scratch_dir("files");
    const Json j{{"x", 1.0 / 3.0}, {"v", {1, 2, 3}}};
    write_json_file(dir / "nested" / "a.json", j);
    EXPECT_EQ(read_json_file(dir / "nested" / "a.json"), j);
    EXPECT_EQ(read_text_file(dir / "nested" / "a.json").back(), '\n');
    EXPECT_THROW(read_json_file(dir / "missing.json"), std::exception);
    write_text_file(dir / "bad.json", "{not json");
    EXPECT_THROW(read_json_file(dir / "bad.json"), FormatError);
}

TEST(Manifest, Sha256KnownVectors) {
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const fs::path dir = scratch_dir("sha");
    write_text_file(dir / "abc.txt", "abc");
    EXPECT_EQ(sha256_file(dir / "abc.txt"), sha256_hex("abc"));
}

TEST(Manifest, WriteReadRoundTrip) {
    const fs::path dir = scratch_dir("manifest");
    write_text_file(dir / "input.csv", "a,b\n1,2\n");
    RunManifest m;
    m.command = "compress";
    m.argv = {"compress", "--data", "input.csv"};
    m.config = Json{{"method", "kt"}};
    m.seeds = Json{{"compress", 7}};
    m.add_input(dir / "input.csv");
    m.artifacts = {"out.json"};
    const fs::path path = manifest_path(dir / "out.json");
    EXPECT_EQ(path.filename(), "out.json.manifest.json");
    write_manifest(m, path);
    const RunManifest back = read_manifest(path);
    EXPECT_EQ(back.to_json(), m.to_json());
    EXPECT_EQ(back.inputs.at(0).sha256, sha256_hex("a,b\n1,2\n"));
    EXPECT_EQ(back.tool_version, kToolVersion);
    Json broken = m.to_json();
    broken.erase("seeds");
    EXPECT_THROW(RunManifest::from_json(broken), FormatError);
}
