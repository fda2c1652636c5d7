#include "cte/bench.hpp"
#include "cte/metrics.hpp"
#include "cte/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace cte {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

bool is_local(Estimator e) {
    return e == Estimator::kernel_shap || e == Estimator::permutation_shap || e == Estimator::expected_gradients;
}

Explanation from_matrix(Estimator e, const Matrix &m) {
    Explanation out;
    out.estimator = e;
    out.values.assign(m.data(), m.data() + m.size());
    out.shape = {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
    return out;
}

Explanation from_global(Estimator e, const GlobalImportance &g) {
    Explanation out;
    out.estimator = e;
    out.values.assign(g.values.data(), g.values.data() + g.values.size());
    out.stderr_values.assign(g.stderr_values.data(), g.stderr_values.data() + g.stderr_values.size());
    out.shape = {static_cast<std::size_t>(g.values.size())};
    return out;
}

Dataset foreground_for(const TrialSpec &spec, const Dataset &valid) {
    if (is_local(spec.estimator) && spec.foreground_rows && *spec.foreground_rows < valid.rows()) {
        IndexList rows(*spec.foreground_rows);
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        return subset(valid, rows);
    }
    return valid;
}

}  // namespace

void TrialSpec::validate() const {
    if (repeats < 1) throw ConfigError("trial spec: repeats must be >= 1");
    if (ground_truth_repeats < 1) throw ConfigError("trial spec: ground_truth_repeats must be >= 1");
    if (methods.empty()) throw ConfigError("trial spec: no compression methods");
    if (topk && *topk == 0) throw ConfigError("trial spec: topk must be >= 1");
    if (foreground_rows && *foreground_rows == 0) throw ConfigError("trial spec: foreground_rows must be >= 1");
}

std::size_t TrialSpec::coreset_size(std::size_t n) const { return compressor.target_size.value_or(natural_coreset_size(n)); }

std::size_t TrialSpec::topk_for(std::size_t d) const { return std::min(topk.value_or(d <= 8 ? 3 : 5), d); }

Explanation run_estimator(Estimator e, const MLPModel &model, const Dataset &foreground, const Dataset &background,
                          const ExplainConfig &config, const std::optional<EffectGrid> &grid) {
    const ModelFunction f = ModelFunction::from_model(model);
    switch (e) {
        case Estimator::kernel_shap:
        case Estimator::permutation_shap:
            return from_matrix(e, explain_local(e, f, foreground.features, background.features, config).values);
        case Estimator::expected_gradients:
            return from_matrix(e, expected_gradients(model, foreground.features, background.features, config).values);
        case Estimator::kernel_sage: return from_global(e, kernel_sage(f, foreground, background.features, config));
        case Estimator::permutation_sage: return from_global(e, permutation_sage(f, foreground, background.features, config));
        case Estimator::kernel_sage_fg: return from_global(e, kernel_sage(f, background, background.features, config));
        case Estimator::permutation_sage_fg:
            return from_global(e, permutation_sage(f, background, background.features, config));
        case Estimator::feature_effects: {
            const FeatureEffects fx = feature_effects(f, background.features, grid, config.chunk_rows);
            Explanation out;
            out.estimator = e;
            out.values = fx.flatten();
            out.shape = {out.values.size()};
            out.grid = fx.grid;
            return out;
        }
    }
    throw ConfigError("run_estimator: unknown estimator");
}

GroundTruth compute_ground_truth(const TrialSpec &spec, const BenchData &data) {
    spec.validate();
    const Dataset &valid = data.valid;
    if (valid.rows() == 0) throw ConfigError("ground truth: empty validation set");
    if (valid.cols() != data.model.input_dim()) {
        throw ShapeError("ground truth: data has " + std::to_string(valid.cols()) + " features, model expects " +
                         std::to_string(data.model.input_dim()));
    }
    const auto start = Clock::now();
    const std::size_t limit = 20 * spec.coreset_size(valid.rows());
    Dataset background = valid;
    if (valid.rows() > limit) {
        Rng rng(derive_seed(spec.seed, "truncate"));
        IndexList rows = rng.sample_without_replacement(valid.rows(), limit);
        std::sort(rows.begin(), rows.end());
        background = subset(valid, rows);
    }
    const Dataset foreground = foreground_for(spec, valid);
    std::optional<EffectGrid> grid;
    if (spec.estimator == Estimator::feature_effects) grid = EffectGrid::from_data(valid.features);

    GroundTruth truth;
    truth.background_rows = background.rows();
    truth.runs = is_stochastic(spec.estimator) ? spec.ground_truth_repeats : 1;
    for (int r = 0; r < truth.runs; ++r) {
        ExplainConfig cfg = spec.explain;
        if (r > 0) cfg.seed = derive_seed(spec.explain.seed, "truth", static_cast<std::uint64_t>(r));
        Explanation run = run_estimator(spec.estimator, data.model, foreground, background, cfg, grid);
        if (r == 0) {
            truth.explanation = std::move(run);
            continue;
        }
        for (std::size_t i = 0; i < run.values.size(); ++i) truth.explanation.values[i] += run.values[i];
        for (std::size_t i = 0; i < run.stderr_values.size(); ++i) truth.explanation.stderr_values[i] += run.stderr_values[i];
    }
    const double scale = 1.0 / static_cast<double>(truth.runs);
    for (double &v : truth.explanation.values) v *= scale;
    for (double &v : truth.explanation.stderr_values) v *= scale;
    truth.elapsed_seconds = seconds_since(start);
    return truth;
}

double explanation_mae(const Explanation &estimate, const Explanation &truth) {
    if (estimate.shape != truth.shape) {
        throw ShapeError("mae: explanation shapes differ");
    }
    return mae(estimate.values, truth.values);
}

std::optional<double> explanation_topk(const Explanation &estimate, const Explanation &truth, std::size_t k) {
    if (estimate.estimator == Estimator::feature_effects) return std::nullopt;
    if (estimate.shape != truth.shape) {
        throw ShapeError("topk: explanation shapes differ");
    }
    if (estimate.shape.size() == 1) return topk_precision(estimate.values, truth.values, k);
    const std::size_t rows = estimate.shape[0];
    const std::size_t cols = estimate.shape[1];
    double total = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        const std::span<const double> a(estimate.values.data() + i * cols, cols);
        const std::span<const double> b(truth.values.data() + i * cols, cols);
        total += topk_precision(a, b, k);
    }
    return rows == 0 ? 0.0 : total / static_cast<double>(rows);
}

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)> &task) {
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    task(i);
                } catch (...) {
                    const std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto &t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::vector<MethodAggregate> aggregate_records(const std::vector<TrialRecord> &records, const std::vector<CompressionMethod> &methods) {
    std::vector<MethodAggregate> out;
    for (const CompressionMethod m : methods) {
        MethodAggregate agg;
        agg.method = m;
        std::vector<double> maes, topks, cs, es;
        for (const auto &r : records) {
            if (r.method != m) continue;
            if (r.failed) {
                ++agg.failures;
                continue;
            }
            maes.push_back(r.mae);
            if (r.topk_precision) topks.push_back(*r.topk_precision);
            cs.push_back(r.compress_seconds);
            es.push_back(r.explain_seconds);
        }
        agg.mae = summarize_values(maes);
        agg.topk = summarize_values(topks);
        agg.compress_seconds = summarize_values(cs);
        agg.explain_seconds = summarize_values(es);
        out.push_back(agg);
    }
    return out;
}

const MethodAggregate &BenchResult::aggregate(CompressionMethod m) const {
    for (const auto &a : aggregates) {
        if (a.method == m) return a;
    }
    throw ConfigError("bench result has no aggregate for " + to_string(m));
}

std::vector<double> BenchResult::mae_values(CompressionMethod m) const {
    std::vector<double> out;
    for (const auto &r : records) {
        if (r.method == m && !r.failed) out.push_back(r.mae);
    }
    return out;
}

BenchResult run_trials(const TrialSpec &spec, const BenchData &data, const GroundTruth &truth, std::size_t workers,
                       const std::vector<TrialRecord> &completed, const std::function<void(const TrialRecord &)> &on_record) {
    spec.validate();
    const Dataset &valid = data.valid;
    const Dataset foreground = foreground_for(spec, valid);
    const std::size_t size = spec.coreset_size(valid.rows());
    const std::size_t k = spec.topk_for(valid.cols());

    struct Task {
        CompressionMethod method;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (const CompressionMethod m : spec.methods) {
        for (int r = 0; r < spec.repeats; ++r) tasks.push_back({m, static_cast<std::uint64_t>(r)});
    }

    std::vector<TrialRecord> records(tasks.size());
    std::vector<char> done(tasks.size(), 0);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        for (const auto &c : completed) {
            if (c.method == tasks[t].method && c.seed == tasks[t].seed && c.estimator == spec.estimator && c.dataset == data.dataset_id) {
                records[t] = c;
                done[t] = 1;
                break;
            }
        }
    }

    ExplainConfig cfg = spec.explain;
    if (workers > 1) cfg.workers = 1;
    std::mutex record_mutex;

    parallel_for(tasks.size(), workers, [&](std::size_t t) {
        if (done[t]) return;
        TrialRecord rec;
        rec.dataset = data.dataset_id;
        rec.estimator = spec.estimator;
        rec.method = tasks[t].method;
        rec.seed = tasks[t].seed;
        rec.size = size;
        try {
            CompressorConfig cc = spec.compressor;
            cc.method = tasks[t].method;
            cc.seed = tasks[t].seed;
            cc.target_size = size;
            const auto c0 = Clock::now();
            const CoresetSelection sel = compress(valid, cc);
            rec.compress_seconds = cc.method == CompressionMethod::iid ? 0.0 : seconds_since(c0);
            const Dataset coreset = subset(valid, sel.indices);
            const auto e0 = Clock::now();
            const Explanation est = run_estimator(spec.estimator, data.model, foreground, coreset, cfg, truth.explanation.grid);
            rec.explain_seconds = seconds_since(e0);
            rec.mae = explanation_mae(est, truth.explanation);
            rec.topk_precision = explanation_topk(est, truth.explanation, k);
        } catch (const std::exception &err) {
            rec.failed = true;
            rec.error = err.what();
        }
        if (on_record) {
            const std::lock_guard lock(record_mutex);
            on_record(rec);
        }
        records[t] = std::move(rec);
    });

    BenchResult out;
    out.dataset = data.dataset_id;
    out.estimator = spec.estimator;
    out.records = std::move(records);
    out.aggregates = aggregate_records(out.records, spec.methods);
    return out;
}

std::vector<BoundRecord> bound_check(const ModelFunction &f, const Matrix &full, const Matrix &coreset, std::size_t n_draws,
                                     std::uint64_t seed, double c_f) {
    if (full.cols() != coreset.cols()) throw ShapeError("bound_check: samples have different dimensions");
    if (full.rows() == 0 || coreset.rows() == 0) throw ConfigError("bound_check: empty sample");
    const auto d = static_cast<std::size_t>(full.cols());
    const GaussianKernel kernel(default_bandwidth(1));
    Rng rng(derive_seed(seed, "bound"));
    std::vector<BoundRecord> out;
    out.reserve(n_draws);
    for (std::size_t t = 0; t < n_draws; ++t) {
        const auto row = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(full.rows())));
        const std::size_t j = rng.index(d);
        Coalition s(d, 1);
        s[j] = 0;
        const auto x = row_span(full, row);
        BoundRecord rec;
        rec.constant = c_f;
        rec.lhs = std::abs(marginalize(f, x, s, full) - marginalize(f, x, s, coreset));
        const IndexList col{j};
        rec.rhs = c_f * std::sqrt(mmd_biased_sq(select_columns(full, col), select_columns(coreset, col), kernel));
        rec.satisfied = rec.lhs <= rec.rhs + 1e-12;
        out.push_back(rec);
    }
    return out;
}

BoundRecord global_bound_check(const std::function<Matrix(const Matrix &)> &g, const Matrix &full, const Matrix &coreset,
                               double sigma) {
    const Matrix gf = g(full);
    const Matrix gc = g(coreset);
    if (gf.cols() != gc.cols()) throw ShapeError("global_bound_check: explanation widths differ");
    BoundRecord rec;
    rec.constant = std::max(gf.rowwise().norm().maxCoeff(), gc.rowwise().norm().maxCoeff());
    rec.lhs = (gf.colwise().mean() - gc.colwise().mean()).norm();
    rec.rhs = rec.constant * std::sqrt(mmd_biased_sq(full, coreset, GaussianKernel(sigma)));
    rec.satisfied = rec.lhs <= rec.rhs + 1e-12;
    return rec;
}

SummaryTable summarize(const std::vector<BenchResult> &results) {
    if (results.empty()) throw ConfigError("summarize: no results");
    SummaryTable table;
    std::map<CompressionMethod, std::vector<double>> ranks;
    std::vector<CompressionMethod> method_order;
    for (const auto &res : results) {
        std::vector<double> means;
        const std::size_t first = table.rows.size();
        for (const auto &agg : res.aggregates) {
            SummaryRow row;
            row.dataset = res.dataset;
            row.estimator = to_string(res.estimator);
            row.method = agg.method;
            for (const auto &r : res.records) {
                if (r.method == agg.method) row.size = r.size;
            }
            row.mae = agg.mae;
            row.topk = agg.topk;
            row.seconds = agg.compress_seconds.mean + agg.explain_seconds.mean;
            means.push_back(agg.mae.mean);
            table.rows.push_back(row);
            if (std::find(method_order.begin(), method_order.end(), agg.method) == method_order.end()) {
                method_order.push_back(agg.method);
            }
        }
        const auto r = average_ranks(means);
        for (std::size_t i = 0; i < r.size(); ++i) {
            table.rows[first + i].rank = r[i];
            ranks[table.rows[first + i].method].push_back(r[i]);
        }
        const auto has = [&](CompressionMethod m) {
            return std::any_of(res.aggregates.begin(), res.aggregates.end(), [m](const auto &a) { return a.method == m; });
        };
        if (has(CompressionMethod::iid) && has(CompressionMethod::kt)) {
            SummaryTable::Comparison c;
            c.dataset = res.dataset;
            c.estimator = to_string(res.estimator);
            const auto &iid = res.aggregate(CompressionMethod::iid);
            const auto &kt = res.aggregate(CompressionMethod::kt);
            c.improvement_percent = improvement_percent(iid.mae.mean, kt.mae.mean);
            const auto a = res.mae_values(CompressionMethod::kt);
            const auto b = res.mae_values(CompressionMethod::iid);
            c.welch_p = a.size() >= 2 && b.size() >= 2 ? welch_less(a, b).p_less : 1.0;
            c.sd_ratio = iid.mae.sd > 0.0 ? kt.mae.sd / iid.mae.sd : 0.0;
            table.comparisons.push_back(c);
        }
    }
    for (const CompressionMethod m : method_order) {
        const auto &v = ranks[m];
        table.average_ranks.emplace_back(m, summarize_values(v).mean);
    }
    return table;
}

std::string summary_csv(const SummaryTable &table) {
    std::ostringstream out;
    out.precision(17);
    out << "dataset,estimator,method,size,mae_mean,mae_sd,topk_mean,seconds\n";
    for (const auto &r : table.rows) {
        out << r.dataset << ',' << r.estimator << ',' << to_string(r.method) << ',' << r.size << ',' << r.mae.mean << ','
            << r.mae.sd << ',';
        if (r.topk.count > 0) out << r.topk.mean;
        out << ',' << r.seconds << '\n';
    }
    return out.str();
}

}  // namespace cte
