#include "iids/data.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "iids/error.hpp"
#include "iids/rng.hpp"

namespace iids {

namespace {

std::vector<std::string> default_names(Eigen::Index cols) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(cols));
    for (Eigen::Index j = 0; j < cols; ++j) names.push_back("f" + std::to_string(j));
    return names;
}

}  // namespace

DataTable::DataTable(Matrix features, std::vector<int> labels, std::vector<std::string> column_names,
                     MissingMask missing_mask)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      column_names_(std::move(column_names)),
      missing_(std::move(missing_mask)) {
    if (column_names_.empty() && features_.cols() > 0) column_names_ = default_names(features_.cols());
    if (missing_.size() == 0) missing_ = MissingMask::Constant(features_.rows(), features_.cols(), false);

    if (static_cast<std::size_t>(features_.rows()) != labels_.size()) {
        throw std::invalid_argument("DataTable: feature rows (" + std::to_string(features_.rows()) +
                                    ") != label count (" + std::to_string(labels_.size()) + ")");
    }
    if (column_names_.size() != static_cast<std::size_t>(features_.cols())) {
        throw std::invalid_argument("DataTable: column name count does not match feature columns");
    }
    if (missing_.rows() != features_.rows() || missing_.cols() != features_.cols()) {
        throw std::invalid_argument("DataTable: missing mask shape does not match features");
    }
    for (const int y : labels_) {
        if (y != kNormal && y != kAttack) {
            throw std::invalid_argument("DataTable: label " + std::to_string(y) + " is not 0 or 1");
        }
    }
}

DataTable::DataTable(Matrix features, std::vector<int> labels)
    : DataTable(std::move(features), std::move(labels), {}, {}) {}

std::pair<std::size_t, std::size_t> DataTable::class_counts() const noexcept {
    const auto attack = static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), kAttack));
    return {labels_.size() - attack, attack};
}

DataTable DataTable::subset(std::span<const std::size_t> rows) const {
    Matrix f(static_cast<Eigen::Index>(rows.size()), features_.cols());
    MissingMask m(f.rows(), f.cols());
    std::vector<int> y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= labels_.size()) throw std::out_of_range("DataTable::subset: row index out of range");
        const auto r = static_cast<Eigen::Index>(rows[i]);
        f.row(static_cast<Eigen::Index>(i)) = features_.row(r);
        m.row(static_cast<Eigen::Index>(i)) = missing_.row(r);
        y[i] = labels_[rows[i]];
    }
    return DataTable(std::move(f), std::move(y), column_names_, std::move(m));
}

// ---------------------------------------------------------------------------
// Ingestion

IngestConfig IngestConfig::from_key_values(const KeyValues& kv) {
    IngestConfig cfg;
    if (auto it = kv.find("label_column"); it != kv.end()) cfg.label_column = it->second;
    if (auto it = kv.find("exclude"); it != kv.end()) cfg.exclude = split_list(it->second);
    if (auto it = kv.find("missing"); it != kv.end()) cfg.missing_token = it->second;
    if (auto it = kv.find("label_map"); it != kv.end()) {
        for (const auto& entry : split_list(it->second)) {
            const auto eq = entry.find('=');
            if (eq == std::string::npos) throw InputError("label_map entry '" + entry + "' is not text=0|1");
            const auto value = trim(std::string_view(entry).substr(eq + 1));
            if (value != "0" && value != "1") {
                throw InputError("label_map entry '" + entry + "' must map to 0 or 1");
            }
            cfg.label_map[trim(std::string_view(entry).substr(0, eq))] = value == "1" ? kAttack : kNormal;
        }
    }
    if (cfg.label_column.empty()) throw InputError("label_column must not be empty");
    return cfg;
}

IngestConfig IngestConfig::from_file(const std::filesystem::path& path) {
    return from_key_values(read_key_values(path));
}

namespace {

/// RFC 4180-style reader: quoted fields may contain delimiters, doubled
/// quotes and newlines.
class CsvReader {
public:
    explicit CsvReader(std::string text) : text_(std::move(text)) {
        if (text_.starts_with("\xEF\xBB\xBF")) pos_ = 3;
    }

    bool next_record(std::vector<std::string>& fields) {
        fields.clear();
        if (pos_ >= text_.size()) return false;
        std::string field;
        bool quoted = false;
        while (pos_ < text_.size()) {
            const char c = text_[pos_++];
            if (quoted) {
                if (c == '"') {
                    if (pos_ < text_.size() && text_[pos_] == '"') {
                        field.push_back('"');
                        ++pos_;
                    } else {
                        quoted = false;
                    }
                } else {
                    field.push_back(c);
                }
            } else if (c == '"') {
                quoted = true;
            } else if (c == ',') {
                fields.push_back(std::move(field));
                field.clear();
            } else if (c == '\n') {
                break;
            } else if (c != '\r') {
                field.push_back(c);
            }
        }
        fields.push_back(std::move(field));
        ++records_;
        return true;
    }

    std::size_t records() const noexcept { return records_; }

private:
    std::string text_;
    std::size_t pos_ = 0;
    std::size_t records_ = 0;
};

std::optional<double> parse_number(std::string_view s) {
    double value = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    return value;
}

bool is_blank_line(const std::vector<std::string>& fields) {
    return fields.size() == 1 && trim(fields.front()).empty();
}

}  // namespace

DataTable load_csv(const std::filesystem::path& path, const IngestConfig& config) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read data file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    CsvReader reader(std::move(buf).str());

    std::vector<std::string> header;
    if (!reader.next_record(header) || is_blank_line(header)) {
        throw InputError("'" + path.string() + "' has no header row");
    }
    for (auto& h : header) h = trim(h);
    const auto label_it = std::find(header.begin(), header.end(), config.label_column);
    if (label_it == header.end()) {
        throw InputError("'" + path.string() + "' has no label column '" + config.label_column + "'");
    }
    const auto label_col = static_cast<std::size_t>(label_it - header.begin());
    const std::size_t n_cols = header.size();

    // Column-major cell storage: cells[c][r].
    std::vector<std::vector<std::string>> cells(n_cols);
    std::vector<std::string> record;
    std::size_t line = 1;
    while (reader.next_record(record)) {
        ++line;
        if (is_blank_line(record)) continue;
        if (record.size() != n_cols) {
            throw InputError(path.string() + ":" + std::to_string(line) + ": expected " +
                             std::to_string(n_cols) + " fields, found " + std::to_string(record.size()));
        }
        for (std::size_t c = 0; c < n_cols; ++c) cells[c].push_back(trim(record[c]));
    }
    const std::size_t n_rows = cells[label_col].size();

    std::vector<int> labels(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) {
        const auto& raw = cells[label_col][r];
        std::optional<int> y;
        if (!config.label_map.empty()) {
            if (auto it = config.label_map.find(raw); it != config.label_map.end()) y = it->second;
        } else if (auto v = parse_number(raw); v && (*v == 0.0 || *v == 1.0)) {
            y = static_cast<int>(*v);
        }
        if (!y) {
            throw InputError("row " + std::to_string(r + 1) + ": label '" + raw +
                             "' does not map to 0 or 1");
        }
        labels[r] = *y;
    }

    auto is_missing_cell = [&](const std::string& s) {
        return s.empty() || (!config.missing_token.empty() && s == config.missing_token);
    };

    std::vector<std::size_t> kept;
    std::vector<std::vector<double>> values;
    for (std::size_t c = 0; c < n_cols; ++c) {
        if (c == label_col) continue;
        if (std::find(config.exclude.begin(), config.exclude.end(), header[c]) != config.exclude.end()) {
            std::clog << "[data] excluding column '" << header[c] << "'\n";
            continue;
        }
        std::vector<double> col(n_rows, 0.0);
        bool numeric = true;
        for (std::size_t r = 0; r < n_rows && numeric; ++r) {
            const auto& s = cells[c][r];
            if (is_missing_cell(s)) {
                col[r] = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            if (auto v = parse_number(s)) {
                col[r] = *v;
            } else {
                numeric = false;
            }
        }
        if (!numeric) {
            std::clog << "[data] dropping non-numeric column '" << header[c] << "'\n";
            continue;
        }
        kept.push_back(c);
        values.push_back(std::move(col));
    }
    if (kept.empty()) throw InputError("'" + path.string() + "' has no usable numeric feature columns");

    Matrix features(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(kept.size()));
    MissingMask missing = MissingMask::Constant(features.rows(), features.cols(), false);
    std::vector<std::string> names;
    for (std::size_t j = 0; j < kept.size(); ++j) {
        names.push_back(header[kept[j]]);
        for (std::size_t r = 0; r < n_rows; ++r) {
            const double v = values[j][r];
            const auto ri = static_cast<Eigen::Index>(r);
            const auto ci = static_cast<Eigen::Index>(j);
            if (std::isnan(v)) {
                missing(ri, ci) = true;
                features(ri, ci) = 0.0;
            } else {
                features(ri, ci) = v;
            }
        }
    }
    return DataTable(std::move(features), std::move(labels), std::move(names), std::move(missing));
}

// ---------------------------------------------------------------------------
// Preprocessing

Preprocessor fit_preprocessor(const DataTable& train) {
    if (train.empty()) throw std::invalid_argument("fit_preprocessor: empty training table");
    const auto n = static_cast<Eigen::Index>(train.rows());
    const auto f = static_cast<Eigen::Index>(train.cols());
    Preprocessor prep{Vector(f), Vector(f), Vector(f)};
    const auto& x = train.features();
    const auto& miss = train.missing_mask();

    for (Eigen::Index j = 0; j < f; ++j) {
        double sum = 0.0;
        Eigen::Index present = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!miss(i, j)) {
                sum += x(i, j);
                ++present;
            }
        }
        if (present == 0) {
            throw InputError("column '" + train.column_names()[static_cast<std::size_t>(j)] +
                             "' has no observed values; cannot impute");
        }
        const double impute = sum / static_cast<double>(present);
        prep.impute_means[j] = impute;

        auto value = [&](Eigen::Index i) { return miss(i, j) ? impute : x(i, j); };
        double total = 0.0;
        double lo = value(0);
        double hi = lo;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = value(i);
            total += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double mean = total / static_cast<double>(n);
        prep.scale_means[j] = mean;
        if (lo == hi) {
            prep.scale_stds[j] = 0.0;
            continue;
        }
        double ss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = value(i) - mean;
            ss += d * d;
        }
        prep.scale_stds[j] = std::sqrt(ss / static_cast<double>(n));
    }
    return prep;
}

DataTable apply_preprocessor(const Preprocessor& prep, const DataTable& table) {
    if (prep.size() != table.cols() || prep.scale_means.size() != prep.impute_means.size() ||
        prep.scale_stds.size() != prep.impute_means.size()) {
        throw std::invalid_argument("apply_preprocessor: table has " + std::to_string(table.cols()) +
                                    " columns, preprocessor expects " + std::to_string(prep.size()));
    }
    Matrix out = table.features();
    const auto& miss = table.missing_mask();
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
        const double sd = prep.scale_stds[j];
        const double divisor = sd == 0.0 ? 1.0 : sd;
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            const double v = miss(i, j) ? prep.impute_means[j] : out(i, j);
            out(i, j) = (v - prep.scale_means[j]) / divisor;
        }
    }
    return DataTable(std::move(out), table.labels(), table.column_names(), {});
}

// ---------------------------------------------------------------------------
// Splitting

std::size_t stratified_test_count(std::size_t class_count, double test_fraction) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(class_count) * test_fraction + 0.5));
}

namespace {

std::array<std::vector<std::size_t>, 2> rows_by_class(std::span<const int> labels) {
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != kNormal && labels[i] != kAttack) {
            throw std::invalid_argument("label at row " + std::to_string(i) + " is not 0 or 1");
        }
        by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    return by_class;
}

}  // namespace

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split_indices(
    std::span<const int> labels, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("stratified_split: test_fraction must lie in (0, 1)");
    }
    auto by_class = rows_by_class(labels);
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    for (std::size_t c = 0; c < 2; ++c) {
        auto& rows = by_class[c];
        if (rows.size() < 2) {
            throw std::invalid_argument("stratified_split: class " + std::to_string(c) + " has " +
                                        std::to_string(rows.size()) + " instance(s), need at least 2");
        }
        Rng rng(derive_seed(seed, c));
        rng.shuffle(std::span(rows));
        const std::size_t n_test = stratified_test_count(rows.size(), test_fraction);
        test.insert(test.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
        train.insert(train.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {std::move(train), std::move(test)};
}

std::pair<DataTable, DataTable> stratified_split(const DataTable& table, double test_fraction,
                                                 std::uint64_t seed) {
    const auto [train, test] = stratified_split_indices(table.labels(), test_fraction, seed);
    return {table.subset(train), table.subset(test)};
}

std::vector<Fold> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("stratified_kfold: k must be at least 2");
    auto by_class = rows_by_class(labels);
    std::vector<std::vector<std::size_t>> validation(k);
    std::size_t offset = 0;
    for (std::size_t c = 0; c < 2; ++c) {
        auto& rows = by_class[c];
        if (rows.size() < k) {
            throw std::invalid_argument("stratified_kfold: k = " + std::to_string(k) + " exceeds the " +
                                        std::to_string(rows.size()) + " instances of class " +
                                        std::to_string(c));
        }
        Rng rng(derive_seed(seed, c));
        rng.shuffle(std::span(rows));
        for (std::size_t p = 0; p < rows.size(); ++p) validation[(offset + p) % k].push_back(rows[p]);
        // Start the next class where this one stopped so total fold sizes stay balanced.
        offset = (offset + rows.size()) % k;
    }

    std::vector<Fold> folds(k);
    std::vector<std::size_t> fold_of(labels.size());
    for (std::size_t f = 0; f < k; ++f) {
        for (const auto r : validation[f]) fold_of[r] = f;
    }
    for (std::size_t f = 0; f < k; ++f) {
        std::sort(validation[f].begin(), validation[f].end());
        folds[f].validation = std::move(validation[f]);
        folds[f].train.reserve(labels.size() - folds[f].validation.size());
    }
    for (std::size_t r = 0; r < labels.size(); ++r) {
        for (std::size_t f = 0; f < k; ++f) {
            if (fold_of[r] != f) folds[f].train.push_back(r);
        }
    }
    return folds;
}

// ---------------------------------------------------------------------------
// PCA

PcaResult pca_project(const DataTable& table, std::size_t k) {
    const auto n = static_cast<Eigen::Index>(table.rows());
    const auto f = static_cast<Eigen::Index>(table.cols());
    if (k == 0 || static_cast<Eigen::Index>(k) > f) {
        throw std::invalid_argument("pca_project: k = " + std::to_string(k) + " must be in [1, " +
                                    std::to_string(f) + "]");
    }
    if (n < 2) throw std::invalid_argument("pca_project: need at least two rows");
    if (table.missing_mask().any()) {
        throw std::invalid_argument("pca_project: table has missing cells; preprocess it first");
    }

    const Vector mean = table.features().colwise().mean();
    const Matrix centered = table.features().rowwise() - mean.transpose();
    Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    const double total = sv.squaredNorm();
    if (!(total > 0.0)) throw std::invalid_argument("pca_project: data has zero variance");

    const auto kk = static_cast<Eigen::Index>(k);
    PcaResult result;
    result.components.resize(kk, f);
    for (Eigen::Index c = 0; c < kk; ++c) {
        Vector v = svd.matrixV().col(c);
        // Sign convention: the largest-magnitude loading is positive.
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0) v = -v;
        result.components.row(c) = v.transpose();
        const double s = c < sv.size() ? sv[c] : 0.0;
        result.explained_variance_ratio.push_back(s * s / total);
    }
    result.projected = centered * result.components.transpose();
    return result;
}

// ---------------------------------------------------------------------------
// Synthetic data

DataTable synthesize_imbalanced(std::size_t n_normal, std::size_t n_attack, std::size_t n_features,
                                std::uint64_t seed, const SynthOptions& options) {
    if (n_normal == 0 || n_attack == 0 || n_features == 0) {
        throw std::invalid_argument("synthesize_imbalanced: counts must be positive");
    }
    const std::size_t n = n_normal + n_attack;
    std::vector<int> labels(n, kNormal);
    std::fill(labels.begin() + static_cast<std::ptrdiff_t>(n_normal), labels.end(), kAttack);
    Rng rng(seed);
    rng.shuffle(std::span(labels));

    const double m = options.margin;
    Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_features));
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const bool attack = labels[i] == kAttack;
        // Normal rows fill a disc, attack rows the surrounding annulus.
        const double radius = attack ? rng.uniform(0.5 + m, 1.0) : rng.uniform(0.0, 0.5 - m);
        if (n_features == 1) {
            const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
            x(r, 0) = sign * radius + options.noise * rng.normal();
        } else {
            const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
            x(r, 0) = radius * std::cos(angle) + options.noise * rng.normal();
            x(r, 1) = radius * std::sin(angle) + options.noise * rng.normal();
            for (std::size_t j = 2; j < n_features; ++j) x(r, static_cast<Eigen::Index>(j)) = rng.normal();
        }
    }
    for (std::size_t j = 0; j < n_features; ++j) {
        const auto c = static_cast<Eigen::Index>(j);
        x.col(c) = x.col(c).array() * (1.0 + 0.5 * static_cast<double>(j)) + static_cast<double>(j);
    }
    return DataTable(std::move(x), std::move(labels));
}

}  // namespace iids
