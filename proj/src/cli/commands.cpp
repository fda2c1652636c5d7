#include "cte/cli.hpp"

#include "cte/bench.hpp"
#include "cte/compress.hpp"
#include "cte/data.hpp"
#include "cte/explain.hpp"
#include "cte/manifest.hpp"
#include "cte/metrics.hpp"
#include "cte/models.hpp"
#include "cte/serialize.hpp"
#include "cte/synthetic.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace cte {

namespace {

namespace fs = std::filesystem;

struct Context {
    std::ostream &out;
    std::ostream &err;
    std::vector<std::string> argv;
};

RunManifest start_manifest(const Context &ctx, const std::string &command) {
    RunManifest m;
    m.command = command;
    m.argv = ctx.argv;
    return m;
}

std::string trim_cell(std::string s) {
    const auto keep = [](unsigned char c) { return !std::isspace(c) && c != '"'; };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), keep));
    s.erase(std::find_if(s.rbegin(), s.rend(), keep).base(), s.end());
    return s;
}

bool header_has(const fs::path &path, const std::string &column) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    std::istringstream cells(line);
    for (std::string cell; std::getline(cells, cell, ',');) {
        if (trim_cell(cell) == column) return true;
    }
    return false;
}

void require_file(const fs::path &path) {
    if (!fs::is_regular_file(path)) throw ConfigError("no such file: " + path.string());
}

/// Loads a CSV; @p label is used only when the header has that column.
Dataset load_table(const fs::path &path, const std::string &label) {
    require_file(path);
    if (header_has(path, label)) return load_csv(path, label);
    return load_csv(path);
}

std::size_t env_workers() {
    const char *v = std::getenv("CTE_WORKERS");
    if (v == nullptr || *v == '\0') return 1;
    try {
        const long n = std::stol(v);
        if (n >= 1) return static_cast<std::size_t>(n);
    } catch (const std::exception &) {
    }
    throw ConfigError(std::string("CTE_WORKERS must be a positive integer, got '") + v + "'");
}

/// Flag, then spec file, then CTE_WORKERS, then 1.
std::size_t resolve_workers(std::optional<std::size_t> flag, std::optional<std::size_t> spec) {
    if (flag) return std::max<std::size_t>(*flag, 1);
    if (spec) return std::max<std::size_t>(*spec, 1);
    return env_workers();
}

fs::path with_suffix(const fs::path &path, const std::string &suffix) { return fs::path(path.string() + suffix); }

// ---------------------------------------------------------------- generate

struct GenerateArgs {
    std::string kind = "classification";
    std::size_t n = 1000;
    std::size_t d = 8;
    std::uint64_t seed = 0;
    std::string out;
};

void cmd_generate(const Context &ctx, const GenerateArgs &a) {
    const Dataset data = generate_dataset(a.kind, a.n, a.d, a.seed);
    write_csv(data, a.out);
    RunManifest m = start_manifest(ctx, "generate");
    m.config = Json{{"kind", a.kind}, {"n", a.n}, {"d", a.d}};
    m.seeds = Json{{"seed", a.seed}};
    m.artifacts = {a.out};
    write_manifest(m, manifest_path(a.out));
    ctx.out << "rows=" << data.rows() << " cols=" << data.cols() << "\n";
}

// -------------------------------------------------------------- preprocess

struct PreprocessArgs {
    std::string data;
    std::string label = "label";
    std::uint64_t seed = 0;
    std::string out_dir;
};

void cmd_preprocess(const Context &ctx, const PreprocessArgs &a) {
    const Dataset raw = load_table(a.data, a.label);
    const DataSplit split = split_75_25(raw, a.seed);
    const PreprocessResult res = fit_apply_preprocess(subset(raw, split.train_indices), {subset(raw, split.valid_indices)}, {});
    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    write_csv(res.train, dir / "train.csv", a.label);
    write_csv(res.others.front(), dir / "valid.csv", a.label);
    const Json spec = to_json(res.spec);
    validate_json(spec, "preprocess");
    write_json_file(dir / "preprocess.json", spec);

    RunManifest m = start_manifest(ctx, "preprocess");
    m.config = Json{{"label", a.label}, {"split", "75/25"}, {"preprocess", spec}};
    m.seeds = Json{{"split", a.seed}};
    m.add_input(a.data);
    m.artifacts = {(dir / "train.csv").string(), (dir / "valid.csv").string(), (dir / "preprocess.json").string()};
    write_manifest(m, manifest_path(dir / "preprocess.json"));
    ctx.out << "train=" << res.train.rows() << " valid=" << res.others.front().rows() << " cols=" << res.train.cols() << "\n";
}

// ------------------------------------------------------------------- train

struct TrainArgs {
    std::string data;
    std::string label = "label";
    std::vector<std::size_t> hidden{128, 64};
    std::string activation = "relu";
    int epochs = 50;
    std::size_t batch = 64;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    std::string out;
};

void cmd_train(const Context &ctx, const TrainArgs &a) {
    const Dataset data = load_table(a.data, a.label);
    if (!data.has_labels()) throw ConfigError("train: column '" + a.label + "' not found in " + a.data);
    TrainConfig cfg;
    cfg.hidden = a.hidden;
    cfg.activation = activation_from_string(a.activation);
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.learning_rate = a.lr;
    cfg.seed = a.seed;
    TrainReport report;
    const MLPModel model = train(data, cfg, &report);
    save_weights(model, a.out);

    RunManifest m = start_manifest(ctx, "train");
    m.config = Json{{"label", a.label},   {"hidden", a.hidden},   {"activation", a.activation}, {"epochs", a.epochs},
                    {"batch_size", a.batch}, {"learning_rate", a.lr}, {"task", to_string(data.task)}};
    m.seeds = Json{{"seed", a.seed}};
    m.add_input(a.data);
    m.artifacts = {a.out};
    write_manifest(m, manifest_path(a.out));
    ctx.out << "loss=" << report.final_loss << " score=" << report.training_score << "\n";
}

// ---------------------------------------------------------------- compress

struct CompressArgs {
    std::string data;
    std::string label = "label";
    std::string method = "kt";
    std::optional<std::size_t> size;
    std::uint64_t seed = 0;
    std::optional<double> sigma;
    int g = 4;
    std::string out;
};

void cmd_compress(const Context &ctx, const CompressArgs &a) {
    const Dataset data = load_table(a.data, a.label);
    CompressorConfig cfg;
    cfg.method = compression_method_from_string(a.method);
    cfg.seed = a.seed;
    cfg.oversample_g = a.g;
    cfg.sigma = a.sigma;
    if (a.size) {
        if (*a.size == 0 || *a.size > data.rows()) {
            throw ConfigError("compress: --size must be in [1, " + std::to_string(data.rows()) + "], got " + std::to_string(*a.size));
        }
        cfg.target_size = a.size;
    }
    const CoresetSelection sel = compress(data, cfg);
    const Json doc = to_json(sel, false);
    validate_json(doc, "coreset_selection");
    write_json_file(a.out, doc);
    write_json_file(with_suffix(a.out, ".timing.json"), Json{{"elapsed_seconds", sel.elapsed_seconds}});

    RunManifest m = start_manifest(ctx, "compress");
    m.config = Json{{"method", a.method}, {"size", a.size ? Json(*a.size) : Json(nullptr)}, {"sigma", sel.sigma}, {"g", a.g},
                    {"delta", cfg.delta}, {"label", a.label}};
    m.seeds = Json{{"compress", a.seed}};
    m.add_input(a.data);
    m.artifacts = {a.out, with_suffix(a.out, ".timing.json").string()};
    write_manifest(m, manifest_path(a.out));
    ctx.out << "size=" << sel.indices.size() << " elapsed=" << sel.elapsed_seconds << "\n";
}

// ---------------------------------------------------------------- distance

struct DistanceArgs {
    std::string data;
    std::string coreset;
    std::string label = "label";
    int bins = 32;
    std::optional<double> sigma;
    std::string out;
};

Dataset coreset_rows(const Dataset &data, const CoresetSelection &sel) {
    for (const auto i : sel.indices) {
        if (i >= data.rows()) {
            throw BoundsError("coreset index " + std::to_string(i) + " out of range for " + std::to_string(data.rows()) + " rows");
        }
    }
    return subset(data, sel.indices);
}

void cmd_distance(const Context &ctx, const DistanceArgs &a) {
    const Dataset data = load_table(a.data, a.label);
    require_file(a.coreset);
    const CoresetSelection sel = coreset_from_json(read_json_file(a.coreset));
    const Dataset core = coreset_rows(data, sel);
    const double sigma = a.sigma.value_or(default_bandwidth(data.cols()));
    const DiscrepancyReport r = discrepancy(data.features, core.features, GaussianKernel(sigma), a.bins);
    const Json doc = to_json(r);
    validate_json(doc, "discrepancy_report");
    write_json_file(a.out, doc);

    RunManifest m = start_manifest(ctx, "distance");
    m.config = Json{{"bins", a.bins}, {"sigma", sigma}, {"label", a.label}};
    m.add_input(a.data);
    m.add_input(a.coreset);
    m.artifacts = {a.out};
    write_manifest(m, manifest_path(a.out));
    ctx.out << std::setprecision(6) << "mmd_unbiased=" << r.mmd_unbiased << " mmd_biased_sq=" << r.mmd_biased_sq
            << " tv_top3=" << r.tv_top3 << " kl_top3=" << r.kl_top3 << " wasserstein=" << r.wasserstein << "\n";
}

// ----------------------------------------------------------------- explain

struct ExplainArgs {
    std::string model;
    std::string data;
    std::string background;
    std::string estimator;
    std::string config;
    std::string label = "label";
    std::optional<std::size_t> foreground_rows;
    std::optional<std::uint64_t> seed;
    std::optional<int> npermutations;
    std::optional<std::size_t> nsamples;
    std::optional<int> n_steps;
    std::optional<std::size_t> workers;
    std::string out;
};

/// Built-in defaults, overridden by the config file, overridden by flags.
ExplainConfig explain_config(const ExplainArgs &a) {
    ExplainConfig cfg;
    if (!a.config.empty()) {
        require_file(a.config);
        const Json j = read_json_file(a.config);
        if (!j.is_object()) throw ConfigError("explain config must be a JSON object");
        for (const auto &[key, v] : j.items()) {
            if (key == "npermutations") cfg.npermutations = v.get<int>();
            else if (key == "shap_nsamples") cfg.shap_nsamples = v.get<std::size_t>();
            else if (key == "n_steps") cfg.n_steps = v.get<int>();
            else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
            else if (key == "chunk_rows") cfg.chunk_rows = v.get<std::size_t>();
            else if (key == "exhaustive") cfg.exhaustive = v.get<bool>();
            else if (key == "workers") cfg.workers = v.get<std::size_t>();
            else if (key == "loss") cfg.loss = loss_from_string(v.get<std::string>());
            else throw ConfigError("explain config: unknown key '" + key + "'");
        }
    }
    if (a.seed) cfg.seed = *a.seed;
    if (a.npermutations) cfg.npermutations = *a.npermutations;
    if (a.nsamples) cfg.shap_nsamples = *a.nsamples;
    if (a.n_steps) cfg.n_steps = *a.n_steps;
    if (a.workers) cfg.workers = *a.workers;
    if (cfg.npermutations < 1 || cfg.n_steps < 1 || cfg.shap_nsamples < 1 || cfg.chunk_rows < 1 || cfg.workers < 1) {
        throw ConfigError("explain config: counts must be positive");
    }
    return cfg;
}

Json config_json(const ExplainConfig &c) {
    return Json{{"npermutations", c.npermutations}, {"shap_nsamples", c.shap_nsamples}, {"n_steps", c.n_steps},
                {"loss", c.loss ? Json(to_string(*c.loss)) : Json(nullptr)},
                {"exhaustive", c.exhaustive},       {"chunk_rows", c.chunk_rows},       {"workers", c.workers}};
}

void cmd_explain(const Context &ctx, const ExplainArgs &a) {
    const Estimator estimator = estimator_from_string(a.estimator);
    require_file(a.model);
    const MLPModel model = load_weights(a.model);
    const Dataset data = load_table(a.data, a.label);
    if (data.cols() != model.input_dim()) {
        throw ShapeError("explain: data has " + std::to_string(data.cols()) + " features, model expects " +
                         std::to_string(model.input_dim()));
    }
    Dataset background;
    require_file(a.background);
    if (fs::path(a.background).extension() == ".json") {
        background = coreset_rows(data, coreset_from_json(read_json_file(a.background)));
    } else {
        background = load_table(a.background, a.label);
    }
    if (background.cols() != model.input_dim()) throw ShapeError("explain: background width does not match the model");
    if (is_global(estimator)) {
        const Dataset &labelled = uses_coreset_foreground(estimator) ? background : data;
        if (!labelled.has_labels()) throw ConfigError("explain: " + a.estimator + " needs labels (column '" + a.label + "')");
        if (model.head() == Head::softmax && labelled.task != TaskKind::classification) {
            throw ConfigError("explain: classification model with non-class labels");
        }
    }
    Dataset foreground = data;
    if (a.foreground_rows && *a.foreground_rows < data.rows()) {
        IndexList rows(*a.foreground_rows);
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        foreground = subset(data, rows);
    }
    const ExplainConfig cfg = explain_config(a);
    std::optional<EffectGrid> grid;
    if (estimator == Estimator::feature_effects) grid = EffectGrid::from_data(data.features);

    const Explanation e = run_estimator(estimator, model, foreground, background, cfg, grid);
    const Json doc = to_json(e);
    validate_json(doc, "explanation");
    write_json_file(a.out, doc);
    const fs::path csv = fs::path(a.out).replace_extension(".csv");
    write_text_file(csv, explanation_csv(e));

    RunManifest m = start_manifest(ctx, "explain");
    m.config = Json{{"estimator", a.estimator},
                    {"label", a.label},
                    {"foreground_rows", foreground.rows()},
                    {"background_rows", background.rows()},
                    {"explain", config_json(cfg)}};
    m.seeds = Json{{"explain", cfg.seed}};
    m.add_input(a.model);
    m.add_input(a.data);
    m.add_input(a.background);
    if (!a.config.empty()) m.add_input(a.config);
    m.artifacts = {a.out, csv.string()};
    write_manifest(m, manifest_path(a.out));
    ctx.out << "estimator=" << a.estimator << " shape=";
    for (std::size_t i = 0; i < e.shape.size(); ++i) ctx.out << (i ? "x" : "") << e.shape[i];
    ctx.out << "\n";
}

// --------------------------------------------------------------- benchmark

struct DatasetEntry {
    std::string id;
    std::string kind = "classification";
    std::size_t n = 5000;
    std::size_t d = 8;
    std::uint64_t seed = 0;
    std::string path;
    std::string label = "label";
    std::vector<Estimator> estimators;
};

struct BenchmarkSpec {
    std::uint64_t seed = 0;
    std::optional<std::size_t> workers;
    int repeats = 33;
    int ground_truth_repeats = 3;
    std::optional<std::size_t> topk;
    std::optional<std::size_t> coreset_size;
    std::optional<std::size_t> foreground_rows;
    int oversample_g = 4;
    std::vector<CompressionMethod> methods{CompressionMethod::iid, CompressionMethod::kt, CompressionMethod::kmedoids};
    std::vector<Estimator> estimators;
    ExplainConfig explain;
    TrainConfig model;
    std::vector<DatasetEntry> datasets;
};

template <typename T>
std::optional<T> optional_field(const Json &j, const char *key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

BenchmarkSpec parse_benchmark_spec(const Json &j) {
    validate_json(j, "benchmark_spec");
    BenchmarkSpec s;
    s.seed = j.value("seed", s.seed);
    s.workers = optional_field<std::size_t>(j, "workers");
    s.repeats = j.value("repeats", s.repeats);
    s.ground_truth_repeats = j.value("ground_truth_repeats", s.ground_truth_repeats);
    s.topk = optional_field<std::size_t>(j, "topk");
    s.coreset_size = optional_field<std::size_t>(j, "coreset_size");
    s.foreground_rows = optional_field<std::size_t>(j, "foreground_rows");
    s.oversample_g = j.value("oversample_g", s.oversample_g);
    if (j.contains("methods")) {
        s.methods.clear();
        for (const auto &m : j.at("methods")) s.methods.push_back(compression_method_from_string(m.get<std::string>()));
    }
    for (const auto &e : j.at("estimators")) s.estimators.push_back(estimator_from_string(e.get<std::string>()));

    s.explain.seed = s.seed;
    if (j.contains("explain")) {
        const Json &e = j.at("explain");
        s.explain.npermutations = e.value("npermutations", s.explain.npermutations);
        s.explain.shap_nsamples = e.value("shap_nsamples", s.explain.shap_nsamples);
        s.explain.n_steps = e.value("n_steps", s.explain.n_steps);
        s.explain.seed = e.value("seed", s.explain.seed);
        s.explain.chunk_rows = e.value("chunk_rows", s.explain.chunk_rows);
    }
    s.model.seed = s.seed;
    if (j.contains("model")) {
        const Json &m = j.at("model");
        s.model.hidden = m.value("hidden", s.model.hidden);
        if (m.contains("activation")) s.model.activation = activation_from_string(m.at("activation").get<std::string>());
        s.model.epochs = m.value("epochs", s.model.epochs);
        s.model.batch_size = m.value("batch_size", s.model.batch_size);
        s.model.learning_rate = m.value("learning_rate", s.model.learning_rate);
        s.model.seed = m.value("seed", s.model.seed);
    }
    std::set<std::string> ids;
    for (const auto &dj : j.at("datasets")) {
        DatasetEntry d;
        d.id = dj.at("id").get<std::string>();
        if (!ids.insert(d.id).second) throw ConfigError("benchmark spec: duplicate dataset id '" + d.id + "'");
        d.kind = dj.value("kind", d.kind);
        d.n = dj.value("n", d.n);
        d.d = dj.value("d", d.d);
        d.seed = dj.value("seed", s.seed);
        d.path = dj.value("path", d.path);
        d.label = dj.value("label", d.label);
        if (d.path.empty() && d.kind == "mixture") throw ConfigError("benchmark spec: dataset '" + d.id + "' has no labels to train on");
        if (dj.contains("estimators")) {
            for (const auto &e : dj.at("estimators")) d.estimators.push_back(estimator_from_string(e.get<std::string>()));
        } else {
            d.estimators = s.estimators;
        }
        s.datasets.push_back(std::move(d));
    }
    return s;
}

/// Every setting that affects results, with defaults filled in. Workers are
/// excluded: they never change the output.
Json effective_json(const BenchmarkSpec &s) {
    Json methods = Json::array();
    for (const auto m : s.methods) methods.push_back(to_string(m));
    Json datasets = Json::array();
    for (const auto &d : s.datasets) {
        Json est = Json::array();
        for (const auto e : d.estimators) est.push_back(to_string(e));
        Json dj{{"id", d.id}, {"label", d.label}, {"estimators", est}};
        if (d.path.empty()) {
            dj.update(Json{{"kind", d.kind}, {"n", d.n}, {"d", d.d}, {"seed", d.seed}});
        } else {
            dj["path"] = d.path;
            dj["sha256"] = sha256_file(d.path);
        }
        datasets.push_back(dj);
    }
    const auto opt = [](const std::optional<std::size_t> &v) { return v ? Json(*v) : Json(nullptr); };
    return Json{{"seed", s.seed},
                {"repeats", s.repeats},
                {"ground_truth_repeats", s.ground_truth_repeats},
                {"topk", opt(s.topk)},
                {"coreset_size", opt(s.coreset_size)},
                {"foreground_rows", opt(s.foreground_rows)},
                {"oversample_g", s.oversample_g},
                {"methods", methods},
                {"explain",
                 Json{{"npermutations", s.explain.npermutations},
                      {"shap_nsamples", s.explain.shap_nsamples},
                      {"n_steps", s.explain.n_steps},
                      {"seed", s.explain.seed},
                      {"chunk_rows", s.explain.chunk_rows}}},
                {"model",
                 Json{{"hidden", s.model.hidden},
                      {"activation", to_string(s.model.activation)},
                      {"epochs", s.model.epochs},
                      {"batch_size", s.model.batch_size},
                      {"learning_rate", s.model.learning_rate},
                      {"seed", s.model.seed}}},
                {"datasets", datasets},
                {"tool_version", kToolVersion}};
}

/// Raw data -> 75/25 split -> preprocessing fitted on train -> model trained on train.
BenchData prepare_dataset(const DatasetEntry &entry, const BenchmarkSpec &spec) {
    Dataset raw = entry.path.empty() ? generate_dataset(entry.kind, entry.n, entry.d, entry.seed) : load_table(entry.path, entry.label);
    if (!raw.has_labels()) throw ConfigError("benchmark: dataset '" + entry.id + "' has no labels");
    const DataSplit split = split_75_25(raw, spec.seed);
    const PreprocessResult pre = fit_apply_preprocess(subset(raw, split.train_indices), {subset(raw, split.valid_indices)}, {});
    BenchData out;
    out.dataset_id = entry.id;
    out.model = train(pre.train, spec.model);
    out.valid = pre.others.front();
    return out;
}

struct BenchmarkArgs {
    std::string spec;
    std::optional<std::size_t> workers;
    std::string out_dir;
};

std::string record_key(const std::string &dataset, Estimator e, CompressionMethod m, std::uint64_t seed) {
    return dataset + "|" + to_string(e) + "|" + to_string(m) + "|" + std::to_string(seed);
}

/// Trials finished by an earlier run with the same spec hash.
std::map<std::string, TrialRecord> load_partial(const fs::path &path, const std::string &hash) {
    std::map<std::string, TrialRecord> out;
    if (!fs::exists(path)) return out;
    std::ifstream in(path);
    std::string line;
    if (!std::getline(in, line)) return out;
    try {
        if (Json::parse(line).value("spec_hash", "") != hash) return out;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const Json j = Json::parse(line);
            const Json timing = j.at("timing");
            TrialRecord r = record_from_json(j.at("record"), &timing);
            out[record_key(r.dataset, r.estimator, r.method, r.seed)] = std::move(r);
        }
    } catch (const std::exception &) {
        // A torn last line from an interrupted run: keep what parsed.
    }
    return out;
}

std::optional<GroundTruth> load_truth(const fs::path &path, const std::string &hash) {
    if (!fs::exists(path)) return std::nullopt;
    try {
        const Json j = read_json_file(path);
        if (j.value("spec_hash", "") != hash) return std::nullopt;
        GroundTruth t;
        t.explanation = explanation_from_json(j.at("explanation"));
        t.elapsed_seconds = j.at("seconds").get<double>();
        t.background_rows = j.at("background_rows").get<std::size_t>();
        t.runs = j.at("runs").get<int>();
        return t;
    } catch (const std::exception &) {
        return std::nullopt;
    }
}

void cmd_benchmark(const Context &ctx, const BenchmarkArgs &a) {
    require_file(a.spec);
    const BenchmarkSpec spec = parse_benchmark_spec(read_json_file(a.spec));
    const std::size_t workers = resolve_workers(a.workers, spec.workers);
    const Json effective = effective_json(spec);
    const std::string hash = sha256_hex(effective.dump());

    const fs::path dir(a.out_dir);
    fs::create_directories(dir / "models");
    fs::create_directories(dir / "truth");
    const fs::path partial_path = dir / "records.partial.jsonl";
    std::map<std::string, TrialRecord> done = load_partial(partial_path, hash);
    {
        // Rewrite the partial file so it holds only records valid for this spec.
        std::ofstream partial(partial_path, std::ios::trunc);
        partial << Json{{"spec_hash", hash}}.dump() << "\n";
        for (const auto &[key, r] : done) partial << Json{{"record", to_json(r)}, {"timing", timing_json(r)}}.dump() << "\n";
    }
    if (!done.empty()) ctx.out << "resuming with " << done.size() << " completed trials\n";
    std::ofstream partial(partial_path, std::ios::app);

    std::vector<BenchResult> results;
    Json cells = Json::array();
    std::vector<std::string> artifacts;
    std::string records_text;
    std::string timings_text;
    for (const auto &entry : spec.datasets) {
        const BenchData data = prepare_dataset(entry, spec);
        const fs::path model_file = dir / "models" / (entry.id + ".json");
        save_weights(data.model, model_file);
        artifacts.push_back(model_file.string());
        for (const Estimator e : entry.estimators) {
            TrialSpec ts;
            ts.dataset_id = entry.id;
            ts.model_file = model_file.string();
            ts.estimator = e;
            ts.compressor.oversample_g = spec.oversample_g;
            ts.compressor.target_size = spec.coreset_size;
            ts.methods = spec.methods;
            ts.repeats = spec.repeats;
            ts.topk = spec.topk;
            ts.ground_truth_repeats = spec.ground_truth_repeats;
            ts.explain = spec.explain;
            ts.explain.workers = workers;
            ts.foreground_rows = spec.foreground_rows;
            ts.seed = spec.seed;

            const fs::path truth_file = dir / "truth" / (entry.id + "__" + to_string(e) + ".json");
            std::optional<GroundTruth> truth = load_truth(truth_file, hash);
            if (!truth) {
                truth = compute_ground_truth(ts, data);
                write_json_file(truth_file, Json{{"spec_hash", hash},
                                                 {"seconds", truth->elapsed_seconds},
                                                 {"background_rows", truth->background_rows},
                                                 {"runs", truth->runs},
                                                 {"explanation", to_json(truth->explanation)}});
            }
            artifacts.push_back(truth_file.string());
            ctx.out << entry.id << " " << to_string(e) << ": ground truth on " << truth->background_rows << " rows ("
                    << std::fixed << std::setprecision(2) << truth->elapsed_seconds << " s)\n"
                    << std::defaultfloat;

            std::vector<TrialRecord> completed;
            for (const auto m : spec.methods) {
                for (int r = 0; r < spec.repeats; ++r) {
                    const auto it = done.find(record_key(entry.id, e, m, static_cast<std::uint64_t>(r)));
                    if (it != done.end()) completed.push_back(it->second);
                }
            }
            BenchResult res = run_trials(ts, data, *truth, workers, completed, [&](const TrialRecord &r) {
                partial << Json{{"record", to_json(r)}, {"timing", timing_json(r)}}.dump() << "\n";
                partial.flush();
            });
            for (const auto &r : res.records) {
                const Json rec = to_json(r);
                validate_json(rec, "trial_record");
                records_text += rec.dump() + "\n";
                timings_text += timing_json(r).dump() + "\n";
            }
            cells.push_back(aggregate_json(res, *truth));
            for (const auto &agg : res.aggregates) {
                ctx.out << "  " << std::setw(8) << std::left << to_string(agg.method) << std::right << " mae=" << agg.mae.mean
                        << " sd=" << agg.mae.sd << " failures=" << agg.failures << "\n";
            }
            results.push_back(std::move(res));
        }
    }
    partial.close();

    write_text_file(dir / "records.jsonl", records_text);
    write_text_file(dir / "timings.jsonl", timings_text);
    const Json aggregate{{"cells", cells}};
    validate_json(aggregate, "aggregate");
    write_json_file(dir / "aggregate.json", aggregate);
    write_text_file(dir / "summary.csv", summary_csv(summarize(results)));
    fs::remove(partial_path);

    RunManifest m = start_manifest(ctx, "benchmark");
    m.config = effective;
    m.config["spec_hash"] = hash;
    m.config["workers"] = workers;
    m.seeds = Json{{"seed", spec.seed}, {"explain", spec.explain.seed}, {"model", spec.model.seed}};
    m.add_input(a.spec);
    for (const auto &d : spec.datasets) {
        if (!d.path.empty()) m.add_input(d.path);
    }
    for (const char *name : {"records.jsonl", "timings.jsonl", "aggregate.json", "summary.csv"}) {
        artifacts.push_back((dir / name).string());
    }
    m.artifacts = artifacts;
    write_manifest(m, manifest_path(dir / "records.jsonl"));
    ctx.out << "wrote " << (dir / "records.jsonl").string() << "\n";
}

// ------------------------------------------------------------------ report

struct ReportArgs {
    std::string in_dir;
    std::string out;
};

std::vector<Json> read_jsonl(const fs::path &path) {
    std::vector<Json> out;
    std::ifstream in(path);
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(Json::parse(line));
        } catch (const Json::parse_error &e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

/// Regroups records into (dataset, estimator) cells in order of appearance.
std::vector<BenchResult> results_from_records(const std::vector<TrialRecord> &records) {
    std::vector<BenchResult> out;
    std::map<std::pair<std::string, Estimator>, std::size_t> cell;
    std::vector<std::vector<CompressionMethod>> methods;
    for (const auto &r : records) {
        const auto key = std::make_pair(r.dataset, r.estimator);
        auto it = cell.find(key);
        if (it == cell.end()) {
            it = cell.emplace(key, out.size()).first;
            BenchResult res;
            res.dataset = r.dataset;
            res.estimator = r.estimator;
            out.push_back(std::move(res));
            methods.emplace_back();
        }
        out[it->second].records.push_back(r);
        auto &ms = methods[it->second];
        if (std::find(ms.begin(), ms.end(), r.method) == ms.end()) ms.push_back(r.method);
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i].aggregates = aggregate_records(out[i].records, methods[i]);
    return out;
}

void cmd_report(const Context &ctx, const ReportArgs &a) {
    const fs::path dir(a.in_dir);
    const fs::path records_path = dir / "records.jsonl";
    if (!fs::is_regular_file(records_path)) throw ConfigError("report: no records.jsonl in " + a.in_dir);
    const std::vector<Json> lines = read_jsonl(records_path);
    if (lines.empty()) throw ConfigError("report: " + records_path.string() + " is empty");
    std::map<std::string, Json> timings;
    if (fs::is_regular_file(dir / "timings.jsonl")) {
        for (const auto &t : read_jsonl(dir / "timings.jsonl")) {
            timings[record_key(t.at("dataset").get<std::string>(), estimator_from_string(t.at("estimator").get<std::string>()),
                               compression_method_from_string(t.at("method").get<std::string>()), t.at("seed").get<std::uint64_t>())] = t;
        }
    }
    std::vector<TrialRecord> records;
    for (const auto &j : lines) {
        TrialRecord r = record_from_json(j);
        const auto it = timings.find(record_key(r.dataset, r.estimator, r.method, r.seed));
        if (it != timings.end()) r = record_from_json(j, &it->second);
        records.push_back(std::move(r));
    }
    const SummaryTable table = summarize(results_from_records(records));
    const Json doc = to_json(table);
    validate_json(doc, "summary");
    write_json_file(a.out, doc);
    const fs::path csv = fs::path(a.out).replace_extension(".csv");
    write_text_file(csv, summary_csv(table));

    RunManifest m = start_manifest(ctx, "report");
    m.add_input(records_path);
    if (fs::is_regular_file(dir / "timings.jsonl")) m.add_input(dir / "timings.jsonl");
    m.artifacts = {a.out, csv.string()};
    write_manifest(m, manifest_path(a.out));

    ctx.out << std::left << std::setw(16) << "dataset" << std::setw(22) << "estimator" << std::setw(10) << "method" << std::right
            << std::setw(12) << "mae" << std::setw(12) << "sd" << std::setw(8) << "rank" << "\n";
    for (const auto &r : table.rows) {
        ctx.out << std::left << std::setw(16) << r.dataset << std::setw(22) << r.estimator << std::setw(10) << to_string(r.method)
                << std::right << std::setw(12) << std::setprecision(4) << r.mae.mean << std::setw(12) << r.mae.sd << std::setw(8)
                << r.rank << "\n";
    }
    for (const auto &c : table.comparisons) {
        ctx.out << c.dataset << " " << c.estimator << ": kt vs iid " << std::fixed << std::setprecision(1) << c.improvement_percent
                << "% (welch p=" << std::setprecision(4) << c.welch_p << ", sd ratio=" << std::setprecision(2) << c.sd_ratio << ")\n"
                << std::defaultfloat;
    }
    ctx.out << "average ranks:";
    for (const auto &[method, rank] : table.average_ranks) ctx.out << " " << to_string(method) << "=" << std::setprecision(3) << rank;
    ctx.out << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Compress-then-explain: coresets and model explanations for tabular data", "cte"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    GenerateArgs gen;
    auto *g = app.add_subcommand("generate", "Write a synthetic dataset as CSV");
    g->add_option("--kind", gen.kind, "classification, regression or mixture")
        ->check(CLI::IsMember({"classification", "regression", "mixture"}))
        ->capture_default_str();
    g->add_option("--n", gen.n, "Rows")->capture_default_str()->check(CLI::PositiveNumber);
    g->add_option("--d", gen.d, "Features")->capture_default_str()->check(CLI::PositiveNumber);
    g->add_option("--seed", gen.seed)->capture_default_str();
    g->add_option("--out", gen.out, "Output CSV")->required();

    PreprocessArgs pre;
    auto *p = app.add_subcommand("preprocess", "Split 75/25, impute, encode and standardize");
    p->add_option("--data", pre.data, "Raw CSV")->required();
    p->add_option("--label", pre.label, "Label column")->capture_default_str();
    p->add_option("--seed", pre.seed, "Split seed")->capture_default_str();
    p->add_option("--out-dir", pre.out_dir)->required();

    TrainArgs tr;
    auto *t = app.add_subcommand("train", "Train an MLP and write its weights");
    t->add_option("--data", tr.data, "Preprocessed training CSV")->required();
    t->add_option("--label", tr.label)->capture_default_str();
    t->add_option("--hidden", tr.hidden, "Hidden layer widths, comma separated")->delimiter(',')->capture_default_str();
    t->add_option("--activation", tr.activation)->check(CLI::IsMember({"relu", "tanh"}))->capture_default_str();
    t->add_option("--epochs", tr.epochs)->check(CLI::PositiveNumber)->capture_default_str();
    t->add_option("--batch", tr.batch)->check(CLI::PositiveNumber)->capture_default_str();
    t->add_option("--lr", tr.lr)->check(CLI::PositiveNumber)->capture_default_str();
    t->add_option("--seed", tr.seed)->capture_default_str();
    t->add_option("--out", tr.out, "Weights JSON")->required();

    CompressArgs co;
    auto *c = app.add_subcommand("compress", "Select a coreset");
    c->add_option("--data", co.data, "Preprocessed CSV")->required();
    c->add_option("--label", co.label, "Label column to exclude if present")->capture_default_str();
    c->add_option("--method", co.method)->check(CLI::IsMember({"iid", "kt", "kmedoids"}))->capture_default_str();
    c->add_option("--size", co.size, "Coreset size (default: natural size)");
    c->add_option("--seed", co.seed)->capture_default_str();
    c->add_option("--sigma", co.sigma, "Kernel bandwidth (default: sqrt(2d))")->check(CLI::PositiveNumber);
    c->add_option("--g", co.g, "Compress++ oversampling")->check(CLI::NonNegativeNumber)->capture_default_str();
    c->add_option("--out", co.out, "Coreset JSON")->required();

    DistanceArgs di;
    auto *d = app.add_subcommand("distance", "Discrepancy between a dataset and a coreset");
    d->add_option("--data", di.data)->required();
    d->add_option("--coreset", di.coreset, "Coreset JSON")->required();
    d->add_option("--label", di.label)->capture_default_str();
    d->add_option("--bins", di.bins, "Histogram bins")->check(CLI::PositiveNumber)->capture_default_str();
    d->add_option("--sigma", di.sigma, "MMD bandwidth (default: sqrt(2d))")->check(CLI::PositiveNumber);
    d->add_option("--out", di.out)->required();

    ExplainArgs ex;
    auto *e = app.add_subcommand("explain", "Explain a model with a given background");
    e->add_option("--model", ex.model)->required();
    e->add_option("--data", ex.data, "Instances to explain (foreground)")->required();
    e->add_option("--background", ex.background, "Coreset JSON (rows of --data) or CSV")->required();
    e->add_option("--estimator", ex.estimator)
        ->required()
        ->check(CLI::IsMember({"kernel_shap", "permutation_shap", "kernel_sage", "permutation_sage", "kernel_sage_fg",
                               "permutation_sage_fg", "expected_gradients", "feature_effects"}));
    e->add_option("--config", ex.config, "Explainer settings JSON");
    e->add_option("--label", ex.label)->capture_default_str();
    e->add_option("--foreground-rows", ex.foreground_rows, "Explain only the first rows")->check(CLI::PositiveNumber);
    e->add_option("--seed", ex.seed);
    e->add_option("--npermutations", ex.npermutations)->check(CLI::PositiveNumber);
    e->add_option("--nsamples", ex.nsamples, "KernelSHAP coalition budget")->check(CLI::PositiveNumber);
    e->add_option("--n-steps", ex.n_steps, "Expected-gradients quadrature nodes")->check(CLI::PositiveNumber);
    e->add_option("--workers", ex.workers)->check(CLI::PositiveNumber);
    e->add_option("--out", ex.out, "Explanation JSON; a CSV is written alongside")->required();

    BenchmarkArgs be;
    auto *b = app.add_subcommand("benchmark", "Run ground truth and repeated trials per the spec");
    b->add_option("--spec", be.spec)->required();
    b->add_option("--workers", be.workers)->check(CLI::PositiveNumber);
    b->add_option("--out-dir", be.out_dir)->required();

    ReportArgs re;
    auto *r = app.add_subcommand("report", "Summarize benchmark records");
    r->add_option("--in-dir", re.in_dir)->required();
    r->add_option("--out", re.out, "Summary JSON; a CSV is written alongside")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::Success &s) {
        return app.exit(s, out, err);
    } catch (const CLI::ParseError &pe) {
        app.exit(pe, out, err);
        return 2;
    }

    const Context ctx{out, err, args};
    try {
        if (g->parsed()) cmd_generate(ctx, gen);
        else if (p->parsed()) cmd_preprocess(ctx, pre);
        else if (t->parsed()) cmd_train(ctx, tr);
        else if (c->parsed()) cmd_compress(ctx, co);
        else if (d->parsed()) cmd_distance(ctx, di);
        else if (e->parsed()) cmd_explain(ctx, ex);
        else if (b->parsed()) cmd_benchmark(ctx, be);
        else if (r->parsed()) cmd_report(ctx, re);
    } catch (const std::exception &ex_) {
        err << "error: " << ex_.what() << "\n";
        return 1;
    }
    return 0;
}

int run_cli(int argc, char **argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace cte
