#include "cte/data.hpp"
#include "cte/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace cte {

Matrix gather_rows(const Matrix &source, std::span<const std::size_t> indices) {
    Matrix out(static_cast<Eigen::Index>(indices.size()), source.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = source.row(static_cast<Eigen::Index>(indices[i]));
    }
    return out;
}

Matrix select_columns(const Matrix &source, std::span<const std::size_t> columns) {
    Matrix out(source.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) {
        out.col(static_cast<Eigen::Index>(j)) = source.col(static_cast<Eigen::Index>(columns[j]));
    }
    return out;
}

std::string to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::classification: return "classification";
        case TaskKind::regression: return "regression";
        case TaskKind::unlabeled: return "unlabeled";
    }
    return "unlabeled";
}

TaskKind task_kind_from_string(const std::string &name) {
    if (name == "classification") return TaskKind::classification;
    if (name == "regression") return TaskKind::regression;
    if (name == "unlabeled") return TaskKind::unlabeled;
    throw ConfigError("unknown task kind: " + name);
}

int Dataset::num_classes() const {
    if (task != TaskKind::classification || !labels || labels->size() == 0) {
        return 0;
    }
    return static_cast<int>(labels->maxCoeff()) + 1;
}

Dataset Dataset::from_matrix(Matrix features) {
    Dataset data;
    const auto d = static_cast<std::size_t>(features.cols());
    data.features = std::move(features);
    for (std::size_t j = 0; j < d; ++j) {
        data.feature_names.push_back("x" + std::to_string(j));
    }
    data.categorical.assign(d, false);
    data.levels.assign(d, {});
    return data;
}

Dataset Dataset::from_matrix(Matrix features, Vector labels, TaskKind task) {
    Dataset data = from_matrix(std::move(features));
    data.labels = std::move(labels);
    data.task = task;
    data.validate();
    return data;
}

void Dataset::validate() const {
    if (rows() < 1 || cols() < 1) {
        throw ConfigError("dataset must have n >= 1 and d >= 1");
    }
    if (feature_names.size() != cols()) {
        throw ConfigError("feature_names length does not match d");
    }
    if (labels) {
        if (static_cast<std::size_t>(labels->size()) != rows()) {
            throw ConfigError("labels length does not match n");
        }
        if (task == TaskKind::classification) {
            for (const double y : *labels) {
                if (y < 0 || y != std::floor(y)) {
                    throw ConfigError("class labels must be integers in 0..C-1");
                }
            }
        }
    }
    if (preprocessed && !features.allFinite()) {
        throw ConfigError("preprocessed dataset contains NaN or infinite values");
    }
}

namespace {

struct Cell {
    std::string text;
    bool quoted = false;
};

std::vector<Cell> split_csv_line(const std::string &line, std::size_t line_number) {
    std::vector<Cell> cells;
    Cell current;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.text.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                current.text.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
            current.quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(current));
            current = Cell{};
        } else {
            current.text.push_back(c);
        }
    }
    if (in_quotes) {
        throw ParseError("line " + std::to_string(line_number) + ": unterminated quoted cell");
    }
    cells.push_back(std::move(current));
    return cells;
}

std::string trim(const std::string &s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

bool is_missing(const Cell &cell) {
    const std::string t = trim(cell.text);
    return t.empty() || t == "NA";
}

double parse_real(const std::string &text, std::size_t line_number, const std::string &column) {
    const std::string t = trim(text);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc{} || ptr != t.data() + t.size()) {
        throw ParseError("line " + std::to_string(line_number) + ", column '" + column + "': cannot parse '" + t + "' as a number");
    }
    return value;
}

}  // namespace

Dataset parse_csv(const std::string &text, const std::optional<std::string> &label_column) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_number = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_number;
        if (!trim(line).empty()) {
            for (auto &cell : split_csv_line(line, line_number)) {
                header.push_back(trim(cell.text));
            }
            break;
        }
    }
    if (header.empty()) {
        throw ParseError("CSV has no header row");
    }
    std::vector<std::vector<Cell>> rows;
    std::vector<std::size_t> row_lines;
    while (std::getline(in, line)) {
        ++line_number;
        if (trim(line).empty()) {
            continue;
        }
        auto cells = split_csv_line(line, line_number);
        if (cells.size() != header.size()) {
            throw ParseError("line " + std::to_string(line_number) + " (data row " + std::to_string(rows.size() + 1) + "): expected " +
                             std::to_string(header.size()) + " columns, got " + std::to_string(cells.size()));
        }
        rows.push_back(std::move(cells));
        row_lines.push_back(line_number);
    }
    if (rows.empty()) {
        throw ParseError("CSV has no data rows");
    }

    std::optional<std::size_t> label_index;
    if (label_column) {
        const auto it = std::find(header.begin(), header.end(), *label_column);
        if (it == header.end()) {
            throw ConfigError("label column '" + *label_column + "' not found in CSV header");
        }
        label_index = static_cast<std::size_t>(it - header.begin());
    }

    const std::size_t n = rows.size();
    Dataset data;
    std::vector<std::size_t> feature_columns;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (label_index && c == *label_index) {
            continue;
        }
        feature_columns.push_back(c);
    }
    if (feature_columns.empty()) {
        throw ConfigError("CSV has no feature columns");
    }
    const std::size_t d = feature_columns.size();
    data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    data.categorical.assign(d, false);
    data.levels.assign(d, {});

    for (std::size_t j = 0; j < d; ++j) {
        const std::size_t c = feature_columns[j];
        data.feature_names.push_back(header[c]);
        bool categorical = false;
        for (const auto &row : rows) {
            if (row[c].quoted && !is_missing(row[c])) {
                categorical = true;
                break;
            }
        }
        data.categorical[j] = categorical;
        if (categorical) {
            std::set<std::string> level_set;
            for (const auto &row : rows) {
                if (!is_missing(row[c])) {
                    level_set.insert(row[c].text);
                }
            }
            data.levels[j].assign(level_set.begin(), level_set.end());
        }
        for (std::size_t i = 0; i < n; ++i) {
            const Cell &cell = rows[i][c];
            double value = std::numeric_limits<double>::quiet_NaN();
            if (!is_missing(cell)) {
                if (categorical) {
                    const auto &lv = data.levels[j];
                    value = static_cast<double>(std::lower_bound(lv.begin(), lv.end(), cell.text) - lv.begin());
                } else {
                    value = parse_real(cell.text, row_lines[i], header[c]);
                }
            }
            data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value;
        }
    }

    if (label_index) {
        const std::size_t c = *label_index;
        Vector labels(static_cast<Eigen::Index>(n));
        bool quoted = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (is_missing(rows[i][c])) {
                throw ParseError("line " + std::to_string(row_lines[i]) + ": missing label");
            }
            quoted = quoted || rows[i][c].quoted;
        }
        if (quoted) {
            std::set<std::string> level_set;
            for (const auto &row : rows) {
                level_set.insert(row[c].text);
            }
            const std::vector<std::string> lv(level_set.begin(), level_set.end());
            for (std::size_t i = 0; i < n; ++i) {
                labels[static_cast<Eigen::Index>(i)] = static_cast<double>(std::lower_bound(lv.begin(), lv.end(), rows[i][c].text) - lv.begin());
            }
            data.task = TaskKind::classification;
        } else {
            bool integral = true;
            std::set<double> distinct;
            for (std::size_t i = 0; i < n; ++i) {
                const double y = parse_real(rows[i][c].text, row_lines[i], header[c]);
                labels[static_cast<Eigen::Index>(i)] = y;
                integral = integral && y >= 0 && y == std::floor(y) && y < 64;
                distinct.insert(y);
            }
            data.task = (integral && distinct.size() <= 32) ? TaskKind::classification : TaskKind::regression;
        }
        data.labels = std::move(labels);
    }
    data.validate();
    return data;
}

Dataset load_csv(const std::filesystem::path &path, const std::optional<std::string> &label_column) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open CSV file: " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_csv(buffer.str(), label_column);
}

void write_csv(const Dataset &data, const std::filesystem::path &path, const std::string &label_name) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("cannot write CSV file: " + path.string());
    }
    out << std::setprecision(17);
    for (std::size_t j = 0; j < data.cols(); ++j) {
        out << (j ? "," : "") << data.feature_names[j];
    }
    if (data.labels) {
        out << "," << label_name;
    }
    out << "\n";
    for (std::size_t i = 0; i < data.rows(); ++i) {
        for (std::size_t j = 0; j < data.cols(); ++j) {
            const double v = data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (j) out << ",";
            if (std::isnan(v)) {
                out << "NA";
            } else if (data.categorical[j]) {
                out << '"' << data.levels[j][static_cast<std::size_t>(v)] << '"';
            } else {
                out << v;
            }
        }
        if (data.labels) {
            out << "," << (*data.labels)[static_cast<Eigen::Index>(i)];
        }
        out << "\n";
    }
}

namespace {

void check_compatible(const Dataset &reference, const Dataset &other) {
    if (other.cols() != reference.cols() || other.feature_names != reference.feature_names) {
        throw ShapeError("datasets must share d and feature_names");
    }
}

/// Mean and population standard deviation over non-NaN values.
std::pair<double, double> column_moments(const Matrix &m, Eigen::Index j) {
    double sum = 0.0;
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (!std::isnan(m(i, j))) {
            sum += m(i, j);
            ++count;
        }
    }
    const double mean = count ? sum / static_cast<double>(count) : 0.0;
    double ss = 0.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double v = std::isnan(m(i, j)) ? mean : m(i, j);
        ss += (v - mean) * (v - mean);
    }
    return {mean, std::sqrt(ss / static_cast<double>(m.rows()))};
}

}  // namespace

Dataset apply_preprocess(const Dataset &data, const PreprocessSpec &spec) {
    if (!spec.fitted) {
        throw ConfigError("apply_preprocess: spec has no fitted statistics");
    }
    if (data.preprocessed) {
        throw ConfigError("apply_preprocess: dataset is already preprocessed");
    }
    const FittedStats &stats = *spec.fitted;
    if (data.feature_names != stats.input_names) {
        throw ShapeError("apply_preprocess: feature names differ from the fitted training data");
    }
    const auto n = static_cast<Eigen::Index>(data.rows());
    const std::size_t d_out = stats.kept_columns.size();

    Dataset out;
    out.features.resize(n, static_cast<Eigen::Index>(d_out));
    out.labels = data.labels;
    out.task = data.task;
    out.categorical.assign(d_out, false);
    out.levels.assign(d_out, {});
    out.preprocessed = true;

    for (std::size_t k = 0; k < d_out; ++k) {
        const std::size_t j = stats.kept_columns[k];
        const std::string &name = data.feature_names[j];
        out.feature_names.push_back(name);
        const auto col = static_cast<Eigen::Index>(j);
        const auto enc_it = stats.encodings.find(name);
        for (Eigen::Index i = 0; i < n; ++i) {
            double v = data.features(i, col);
            if (!std::isnan(v) && data.categorical[j]) {
                const std::string &level = data.levels[j][static_cast<std::size_t>(v)];
                if (enc_it != stats.encodings.end()) {
                    const auto lv = enc_it->second.find(level);
                    v = lv == enc_it->second.end() ? stats.global_target_mean : lv->second;
                } else {
                    v = std::numeric_limits<double>::quiet_NaN();
                }
            }
            if (std::isnan(v)) {
                v = stats.means[k];
            }
            if (spec.standardize) {
                const double sd = stats.stds[k] > 0 ? stats.stds[k] : 1.0;
                v = (v - stats.means[k]) / sd;
            }
            out.features(i, static_cast<Eigen::Index>(k)) = v;
        }
    }
    out.validate();
    return out;
}

PreprocessResult fit_apply_preprocess(const Dataset &train, const std::vector<Dataset> &others, PreprocessSpec spec) {
    if (train.preprocessed) {
        throw ConfigError("fit_apply_preprocess: training data is already preprocessed");
    }
    for (const auto &o : others) {
        check_compatible(train, o);
    }
    const std::size_t d = train.cols();
    const auto n = static_cast<Eigen::Index>(train.rows());
    const bool any_categorical = std::find(train.categorical.begin(), train.categorical.end(), true) != train.categorical.end();
    if (any_categorical && spec.categorical_encoding == CategoricalEncoding::target_encode && !train.labels) {
        throw ConfigError("target encoding requires labeled training data");
    }

    FittedStats stats;
    stats.input_names = train.feature_names;
    if (train.labels) {
        stats.global_target_mean = train.labels->mean();
    }

    for (std::size_t j = 0; j < d; ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        std::set<double> unique;
        std::size_t missing = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = train.features(i, col);
            if (std::isnan(v)) {
                ++missing;
            } else {
                unique.insert(v);
            }
        }
        bool degenerate = unique.size() <= 1;
        if (train.categorical[j] && missing == 0 && unique.size() == static_cast<std::size_t>(n)) {
            degenerate = true;
        }
        if (spec.drop_degenerate && degenerate) {
            stats.dropped.push_back(train.feature_names[j]);
        } else {
            stats.kept_columns.push_back(j);
        }
    }
    if (stats.kept_columns.empty()) {
        throw ConfigError("preprocessing removed every feature");
    }

    // Encoded (but not yet imputed or scaled) training columns, for the moments.
    Matrix encoded(n, static_cast<Eigen::Index>(stats.kept_columns.size()));
    for (std::size_t k = 0; k < stats.kept_columns.size(); ++k) {
        const std::size_t j = stats.kept_columns[k];
        const auto col = static_cast<Eigen::Index>(j);
        if (train.categorical[j] && spec.categorical_encoding == CategoricalEncoding::target_encode) {
            const std::size_t nlevels = train.levels[j].size();
            std::vector<double> sums(nlevels, 0.0);
            std::vector<double> counts(nlevels, 0.0);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double v = train.features(i, col);
                if (!std::isnan(v)) {
                    sums[static_cast<std::size_t>(v)] += (*train.labels)[i];
                    counts[static_cast<std::size_t>(v)] += 1.0;
                }
            }
            auto &enc = stats.encodings[train.feature_names[j]];
            for (std::size_t l = 0; l < nlevels; ++l) {
                enc[train.levels[j][l]] = (sums[l] + spec.smoothing * stats.global_target_mean) / (counts[l] + spec.smoothing);
            }
            for (Eigen::Index i = 0; i < n; ++i) {
                const double v = train.features(i, col);
                encoded(i, static_cast<Eigen::Index>(k)) =
                    std::isnan(v) ? v : enc[train.levels[j][static_cast<std::size_t>(v)]];
            }
        } else if (train.categorical[j]) {
            // ordinal codes by training level order; unseen levels become missing
            auto &enc = stats.encodings[train.feature_names[j]];
            for (std::size_t l = 0; l < train.levels[j].size(); ++l) {
                enc[train.levels[j][l]] = static_cast<double>(l);
            }
            encoded.col(static_cast<Eigen::Index>(k)) = train.features.col(col);
        } else {
            encoded.col(static_cast<Eigen::Index>(k)) = train.features.col(col);
        }
        const auto [mean, sd] = column_moments(encoded, static_cast<Eigen::Index>(k));
        stats.means.push_back(mean);
        stats.stds.push_back(sd);
    }
    if (spec.categorical_encoding == CategoricalEncoding::none) {
        // unseen levels in other splits are imputed rather than mapped to the target mean
        stats.global_target_mean = std::numeric_limits<double>::quiet_NaN();
    }

    spec.fitted = stats;
    PreprocessResult result;
    result.train = apply_preprocess(train, spec);
    for (const auto &o : others) {
        result.others.push_back(apply_preprocess(o, spec));
    }
    result.spec = std::move(spec);
    return result;
}

DataSplit split_75_25(std::size_t n, std::uint64_t seed) {
    if (n < 4) {
        throw ConfigError("split_75_25 requires n >= 4");
    }
    Rng rng(derive_seed(seed, "split"));
    auto order = rng.permutation(n);
    const std::size_t n_train = (3 * n) / 4;
    DataSplit split;
    split.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.valid_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(split.train_indices.begin(), split.train_indices.end());
    std::sort(split.valid_indices.begin(), split.valid_indices.end());
    return split;
}

DataSplit split_75_25(const Dataset &data, std::uint64_t seed) {
    return split_75_25(data.rows(), seed);
}

Dataset subset(const Dataset &data, std::span<const std::size_t> indices) {
    if (indices.empty()) {
        throw ConfigError("subset: empty index list");
    }
    for (const std::size_t i : indices) {
        if (i >= data.rows()) {
            throw BoundsError("subset: index " + std::to_string(i) + " out of range for n=" + std::to_string(data.rows()));
        }
    }
    Dataset out = data;
    out.features = gather_rows(data.features, indices);
    if (data.labels) {
        Vector y(static_cast<Eigen::Index>(indices.size()));
        for (std::size_t i = 0; i < indices.size(); ++i) {
            y[static_cast<Eigen::Index>(i)] = (*data.labels)[static_cast<Eigen::Index>(indices[i])];
        }
        out.labels = std::move(y);
    }
    return out;
}

Dataset select_features(const Dataset &data, std::span<const std::size_t> columns) {
    for (const std::size_t j : columns) {
        if (j >= data.cols()) {
            throw BoundsError("select_features: column out of range");
        }
    }
    Dataset out;
    out.features = select_columns(data.features, columns);
    out.labels = data.labels;
    out.task = data.task;
    out.preprocessed = data.preprocessed;
    for (const std::size_t j : columns) {
        out.feature_names.push_back(data.feature_names[j]);
        out.categorical.push_back(data.categorical[j]);
        out.levels.push_back(data.levels[j]);
    }
    return out;
}

}  // namespace cte
