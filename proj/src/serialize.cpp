#include "cte/serialize.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace cte {

namespace detail {
const std::map<std::string, std::string> &embedded_schemas();
}

namespace {

template <typename T>
T field(const Json &j, const char *key) {
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception &e) {
        throw FormatError(std::string("field '") + key + "': " + e.what());
    }
}

Json nullable(const std::optional<double> &v) { return v ? Json(*v) : Json(nullptr); }

std::string type_name(const Json &v) {
    if (v.is_null()) return "null";
    if (v.is_boolean()) return "boolean";
    if (v.is_number_integer()) return "integer";
    if (v.is_number()) return "number";
    if (v.is_string()) return "string";
    if (v.is_array()) return "array";
    return "object";
}

bool has_type(const Json &v, const std::string &t) {
    if (t == "number") return v.is_number();
    if (t == "integer") return v.is_number_integer();
    return type_name(v) == t;
}

void validate_at(const Json &doc, const Json &schema, const std::string &path) {
    auto fail = [&](const std::string &what) { throw FormatError("schema violation at " + (path.empty() ? "/" : path) + ": " + what); };
    if (auto t = schema.find("type"); t != schema.end()) {
        bool ok = false;
        if (t->is_array()) {
            for (const auto &alt : *t) ok = ok || has_type(doc, alt.get<std::string>());
        } else {
            ok = has_type(doc, t->get<std::string>());
        }
        if (!ok) fail("expected " + t->dump() + ", got " + type_name(doc));
    }
    if (auto e = schema.find("enum"); e != schema.end()) {
        bool found = false;
        for (const auto &alt : *e) found = found || alt == doc;
        if (!found) fail("value " + doc.dump() + " not in " + e->dump());
    }
    if (doc.is_number()) {
        const double v = doc.get<double>();
        if (auto m = schema.find("minimum"); m != schema.end() && v < m->get<double>()) fail("below minimum " + m->dump());
        if (auto m = schema.find("maximum"); m != schema.end() && v > m->get<double>()) fail("above maximum " + m->dump());
    }
    if (doc.is_object()) {
        if (auto req = schema.find("required"); req != schema.end()) {
            for (const auto &key : *req) {
                if (!doc.contains(key.get<std::string>())) fail("missing required field '" + key.get<std::string>() + "'");
            }
        }
        const auto props = schema.find("properties");
        const auto extra = schema.find("additionalProperties");
        for (const auto &[key, value] : doc.items()) {
            if (props != schema.end() && props->contains(key)) {
                validate_at(value, (*props)[key], path + "/" + key);
            } else if (extra != schema.end() && extra->is_boolean() && !extra->get<bool>()) {
                fail("unexpected field '" + key + "'");
            }
        }
    }
    if (doc.is_array()) {
        if (auto m = schema.find("minItems"); m != schema.end() && doc.size() < m->get<std::size_t>()) {
            fail("fewer than " + m->dump() + " items");
        }
        if (auto items = schema.find("items"); items != schema.end()) {
            for (std::size_t i = 0; i < doc.size(); ++i) validate_at(doc[i], *items, path + "/" + std::to_string(i));
        }
    }
}

}  // namespace

Json to_json(const CoresetSelection &sel, bool with_timing) {
    Json j{{"method", to_string(sel.method)}, {"seed", sel.seed}, {"sigma", sel.sigma}, {"g", sel.g}, {"indices", sel.indices}};
    if (with_timing) j["elapsed_seconds"] = sel.elapsed_seconds;
    return j;
}

CoresetSelection coreset_from_json(const Json &j) {
    validate_json(j, "coreset_selection");
    CoresetSelection sel;
    sel.method = compression_method_from_string(field<std::string>(j, "method"));
    sel.seed = field<std::uint64_t>(j, "seed");
    sel.sigma = field<double>(j, "sigma");
    sel.g = field<int>(j, "g");
    sel.indices = field<IndexList>(j, "indices");
    if (j.contains("elapsed_seconds")) sel.elapsed_seconds = field<double>(j, "elapsed_seconds");
    return sel;
}

Json to_json(const DiscrepancyReport &r) {
    return Json{{"mmd_unbiased", r.mmd_unbiased}, {"mmd_biased_sq", r.mmd_biased_sq}, {"tv_top3", r.tv_top3},
                {"kl_top3", r.kl_top3},           {"wasserstein", r.wasserstein},     {"wasserstein_converged", r.wasserstein_converged}};
}

Json to_json(const ErrorReport &r) { return Json{{"mae", r.mae}, {"topk_precision", r.topk_precision}, {"k", r.k}}; }

Json to_json(const PreprocessSpec &spec) {
    Json fitted = nullptr;
    if (spec.fitted) {
        const FittedStats &f = *spec.fitted;
        fitted = Json{{"input_names", f.input_names},
                      {"dropped", f.dropped},
                      {"kept_columns", f.kept_columns},
                      {"means", f.means},
                      {"stds", f.stds},
                      {"encodings", f.encodings},
                      {"global_target_mean", f.global_target_mean}};
    }
    return Json{{"drop_degenerate", spec.drop_degenerate},
                {"impute", "mean"},
                {"standardize", spec.standardize},
                {"categorical_encoding", spec.categorical_encoding == CategoricalEncoding::target_encode ? "target_encode" : "none"},
                {"smoothing", spec.smoothing},
                {"fitted", fitted}};
}

PreprocessSpec preprocess_from_json(const Json &j) {
    validate_json(j, "preprocess");
    PreprocessSpec spec;
    spec.drop_degenerate = field<bool>(j, "drop_degenerate");
    spec.standardize = field<bool>(j, "standardize");
    spec.categorical_encoding =
        field<std::string>(j, "categorical_encoding") == "none" ? CategoricalEncoding::none : CategoricalEncoding::target_encode;
    spec.smoothing = field<double>(j, "smoothing");
    const Json &f = j.at("fitted");
    FittedStats s;
    s.input_names = field<std::vector<std::string>>(f, "input_names");
    s.dropped = field<std::vector<std::string>>(f, "dropped");
    s.kept_columns = field<std::vector<std::size_t>>(f, "kept_columns");
    s.means = field<std::vector<double>>(f, "means");
    s.stds = field<std::vector<double>>(f, "stds");
    s.encodings = field<std::map<std::string, std::map<std::string, double>>>(f, "encodings");
    s.global_target_mean = field<double>(f, "global_target_mean");
    spec.fitted = std::move(s);
    return spec;
}

Json to_json(const Explanation &e) {
    Json j{{"estimator", to_string(e.estimator)}, {"shape", e.shape}, {"values", e.values}};
    if (!e.stderr_values.empty()) j["stderr_values"] = e.stderr_values;
    if (e.grid) {
        const EffectGrid &g = *e.grid;
        j["grid"] = Json{{"lo", std::vector<double>(g.lo.data(), g.lo.data() + g.lo.size())},
                         {"hi", std::vector<double>(g.hi.data(), g.hi.data() + g.hi.size())},
                         {"points_1d", g.points_1d},
                         {"points_2d", g.points_2d}};
    }
    return j;
}

Explanation explanation_from_json(const Json &j) {
    validate_json(j, "explanation");
    Explanation e;
    e.estimator = estimator_from_string(field<std::string>(j, "estimator"));
    e.shape = field<std::vector<std::size_t>>(j, "shape");
    e.values = field<std::vector<double>>(j, "values");
    std::size_t expected = 1;
    for (const auto s : e.shape) expected *= s;
    if (expected != e.values.size()) throw FormatError("explanation: shape does not match the number of values");
    if (j.contains("stderr_values")) e.stderr_values = field<std::vector<double>>(j, "stderr_values");
    if (j.contains("grid")) {
        const Json &g = j.at("grid");
        EffectGrid grid;
        const auto lo = field<std::vector<double>>(g, "lo");
        const auto hi = field<std::vector<double>>(g, "hi");
        grid.lo = Eigen::Map<const Vector>(lo.data(), static_cast<Eigen::Index>(lo.size()));
        grid.hi = Eigen::Map<const Vector>(hi.data(), static_cast<Eigen::Index>(hi.size()));
        grid.points_1d = field<int>(g, "points_1d");
        grid.points_2d = field<int>(g, "points_2d");
        e.grid = grid;
    }
    return e;
}

Json to_json(const TrialRecord &r) {
    return Json{{"dataset", r.dataset},
                {"estimator", to_string(r.estimator)},
                {"method", to_string(r.method)},
                {"seed", r.seed},
                {"size", r.size},
                {"mae", r.failed ? 0.0 : r.mae},
                {"topk_precision", r.failed ? Json(nullptr) : nullable(r.topk_precision)},
                {"failed", r.failed},
                {"error", r.error}};
}

Json timing_json(const TrialRecord &r) {
    return Json{{"dataset", r.dataset},
                {"estimator", to_string(r.estimator)},
                {"method", to_string(r.method)},
                {"seed", r.seed},
                {"compress_seconds", r.compress_seconds},
                {"explain_seconds", r.explain_seconds}};
}

TrialRecord record_from_json(const Json &record, const Json *timing) {
    validate_json(record, "trial_record");
    TrialRecord r;
    r.dataset = field<std::string>(record, "dataset");
    r.estimator = estimator_from_string(field<std::string>(record, "estimator"));
    r.method = compression_method_from_string(field<std::string>(record, "method"));
    r.seed = field<std::uint64_t>(record, "seed");
    r.size = field<std::size_t>(record, "size");
    r.mae = field<double>(record, "mae");
    if (!record.at("topk_precision").is_null()) r.topk_precision = field<double>(record, "topk_precision");
    r.failed = field<bool>(record, "failed");
    r.error = field<std::string>(record, "error");
    if (timing) {
        validate_json(*timing, "timing_record");
        r.compress_seconds = field<double>(*timing, "compress_seconds");
        r.explain_seconds = field<double>(*timing, "explain_seconds");
    }
    return r;
}

Json aggregate_json(const BenchResult &result, const GroundTruth &truth) {
    Json methods = Json::array();
    for (const auto &a : result.aggregates) {
        methods.push_back(Json{{"method", to_string(a.method)},
                               {"count", a.mae.count},
                               {"failures", a.failures},
                               {"mae_mean", a.mae.mean},
                               {"mae_sd", a.mae.sd},
                               {"mae_se", a.mae.se},
                               {"topk_mean", a.topk.count ? Json(a.topk.mean) : Json(nullptr)},
                               {"topk_sd", a.topk.count ? Json(a.topk.sd) : Json(nullptr)},
                               {"compress_seconds_mean", a.compress_seconds.mean},
                               {"explain_seconds_mean", a.explain_seconds.mean}});
    }
    return Json{{"dataset", result.dataset},
                {"estimator", to_string(result.estimator)},
                {"truth_seconds", truth.elapsed_seconds},
                {"truth_background_rows", truth.background_rows},
                {"methods", methods}};
}

Json to_json(const SummaryTable &table) {
    Json rows = Json::array();
    for (const auto &r : table.rows) {
        rows.push_back(Json{{"dataset", r.dataset},
                            {"estimator", r.estimator},
                            {"method", to_string(r.method)},
                            {"size", r.size},
                            {"mae_mean", r.mae.mean},
                            {"mae_sd", r.mae.sd},
                            {"mae_se", r.mae.se},
                            {"topk_mean", r.topk.count ? Json(r.topk.mean) : Json(nullptr)},
                            {"seconds", r.seconds},
                            {"rank", r.rank}});
    }
    Json comparisons = Json::array();
    for (const auto &c : table.comparisons) {
        comparisons.push_back(Json{{"dataset", c.dataset},
                                   {"estimator", c.estimator},
                                   {"improvement_percent", c.improvement_percent},
                                   {"welch_p", c.welch_p},
                                   {"sd_ratio", c.sd_ratio}});
    }
    Json ranks = Json::array();
    for (const auto &[m, r] : table.average_ranks) ranks.push_back(Json{{"method", to_string(m)}, {"rank", r}});
    return Json{{"rows", rows}, {"comparisons", comparisons}, {"average_ranks", ranks}};
}

SummaryTable summary_from_json(const Json &j) {
    validate_json(j, "summary");
    SummaryTable t;
    for (const auto &r : j.at("rows")) {
        SummaryRow row;
        row.dataset = field<std::string>(r, "dataset");
        row.estimator = field<std::string>(r, "estimator");
        row.method = compression_method_from_string(field<std::string>(r, "method"));
        row.size = field<std::size_t>(r, "size");
        row.mae.mean = field<double>(r, "mae_mean");
        row.mae.sd = field<double>(r, "mae_sd");
        row.mae.se = field<double>(r, "mae_se");
        if (!r.at("topk_mean").is_null()) {
            row.topk.mean = field<double>(r, "topk_mean");
            row.topk.count = 1;
        }
        row.seconds = field<double>(r, "seconds");
        row.rank = field<double>(r, "rank");
        t.rows.push_back(row);
    }
    for (const auto &c : j.at("comparisons")) {
        t.comparisons.push_back({field<std::string>(c, "dataset"), field<std::string>(c, "estimator"),
                                 field<double>(c, "improvement_percent"), field<double>(c, "welch_p"), field<double>(c, "sd_ratio")});
    }
    for (const auto &a : j.at("average_ranks")) {
        t.average_ranks.emplace_back(compression_method_from_string(field<std::string>(a, "method")), field<double>(a, "rank"));
    }
    return t;
}

std::string explanation_csv(const Explanation &e) {
    std::ostringstream out;
    out.precision(17);
    if (e.estimator == Estimator::feature_effects) {
        if (!e.grid) throw FormatError("explanation_csv: feature effects without a grid");
        const EffectGrid &g = *e.grid;
        const auto d = static_cast<std::size_t>(g.lo.size());
        const auto p1 = static_cast<std::size_t>(g.points_1d);
        const auto p2 = static_cast<std::size_t>(g.points_2d);
        out << "feature_a,feature_b,grid_a,grid_b,value\n";
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t a = 0; a < p1; ++a) {
                out << j << ",," << g.value(j, static_cast<int>(a), g.points_1d) << ",," << e.values[j * p1 + a] << '\n';
            }
        }
        const std::size_t base = d * p1;
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t k = j + 1; k < d; ++k) {
                for (std::size_t a = 0; a < p2; ++a) {
                    for (std::size_t b = 0; b < p2; ++b) {
                        out << j << ',' << k << ',' << g.value(j, static_cast<int>(a), g.points_2d) << ','
                            << g.value(k, static_cast<int>(b), g.points_2d) << ','
                            << e.values[base + (j * d + k) * p2 * p2 + a * p2 + b] << '\n';
                    }
                }
            }
        }
    } else if (e.shape.size() == 2) {
        out << "instance,feature,value\n";
        for (std::size_t i = 0; i < e.shape[0]; ++i) {
            for (std::size_t j = 0; j < e.shape[1]; ++j) out << i << ',' << j << ',' << e.values[i * e.shape[1] + j] << '\n';
        }
    } else {
        out << "feature,value,stderr\n";
        for (std::size_t j = 0; j < e.values.size(); ++j) {
            out << j << ',' << e.values[j] << ',';
            if (j < e.stderr_values.size()) out << e.stderr_values[j];
            out << '\n';
        }
    }
    return out.str();
}

void validate_with_schema(const Json &doc, const Json &schema) { validate_at(doc, schema, ""); }

const Json &schema(const std::string &name) {
    static const std::map<std::string, Json> parsed = [] {
        std::map<std::string, Json> out;
        for (const auto &[stem, text] : detail::embedded_schemas()) out.emplace(stem, Json::parse(text));
        return out;
    }();
    const auto it = parsed.find(name);
    if (it == parsed.end()) throw ConfigError("unknown schema: " + name);
    return it->second;
}

void validate_json(const Json &doc, const std::string &schema_name) { validate_with_schema(doc, schema(schema_name)); }

std::string read_text_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::filesystem::path &path, const std::string &text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
    if (!out) throw ConfigError("write failed: " + path.string());
}

Json read_json_file(const std::filesystem::path &path) {
    const std::string text = read_text_file(path);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error &e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path &path, const Json &j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace cte
