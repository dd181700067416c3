#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "iids/kv_config.hpp"

namespace iids {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MissingMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum Label : int { kNormal = 0, kAttack = 1 };

/// Numeric feature matrix with binary labels. Rows are instances, columns features.
class DataTable {
public:
    DataTable() = default;
    DataTable(Matrix features, std::vector<int> labels, std::vector<std::string> column_names,
              MissingMask missing_mask);
    /// Table with no missing cells and generated column names `f0..f{F-1}`.
    DataTable(Matrix features, std::vector<int> labels);

    const Matrix& features() const noexcept { return features_; }
    const std::vector<int>& labels() const noexcept { return labels_; }
    const std::vector<std::string>& column_names() const noexcept { return column_names_; }
    const MissingMask& missing_mask() const noexcept { return missing_; }

    std::size_t rows() const noexcept { return labels_.size(); }
    std::size_t cols() const noexcept { return static_cast<std::size_t>(features_.cols()); }
    bool empty() const noexcept { return labels_.empty(); }
    bool is_missing(std::size_t row, std::size_t col) const {
        return missing_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
    }
    double at(std::size_t row, std::size_t col) const {
        return features_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
    }

    /// Per-class row counts {normal, attack}.
    std::pair<std::size_t, std::size_t> class_counts() const noexcept;

    /// Rows in the given order (duplicates allowed).
    DataTable subset(std::span<const std::size_t> rows) const;

private:
    Matrix features_;
    std::vector<int> labels_;
    std::vector<std::string> column_names_;
    MissingMask missing_;
};

/// Ingestion options. Read from a key-value file with keys
/// `label_column`, `exclude` (comma list), `missing` (sentinel token) and
/// `label_map` (comma list of `text=0|1`).
struct IngestConfig {
    std::string label_column = "label";
    std::vector<std::string> exclude;
    /// Cells equal to this token (after trimming) count as missing, as do empty cells.
    std::string missing_token;
    /// Text label -> class id. Empty means labels are parsed as numbers.
    std::map<std::string, int, std::less<>> label_map;

    static IngestConfig from_key_values(const KeyValues& kv);
    static IngestConfig from_file(const std::filesystem::path& path);
};

DataTable load_csv(const std::filesystem::path& path, const IngestConfig& config = {});

/// Fitted mean imputation and standard scaling statistics.
struct Preprocessor {
    Vector impute_means;
    Vector scale_means;
    /// Population standard deviations; zero marks a constant column.
    Vector scale_stds;

    std::size_t size() const noexcept { return static_cast<std::size_t>(impute_means.size()); }
    bool is_constant(std::size_t col) const { return scale_stds[static_cast<Eigen::Index>(col)] == 0.0; }
};

Preprocessor fit_preprocessor(const DataTable& train);
DataTable apply_preprocessor(const Preprocessor& prep, const DataTable& table);

/// round-half-up(count * fraction): the number of rows of a class that go to the test side.
std::size_t stratified_test_count(std::size_t class_count, double test_fraction);

/// Returns (train, test) with per-class test counts from stratified_test_count.
/// Both partitions keep the original relative row order.
std::pair<DataTable, DataTable> stratified_split(const DataTable& table, double test_fraction,
                                                 std::uint64_t seed);

/// Row indices of each side; the DataTable overload is built on this.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split_indices(
    std::span<const int> labels, double test_fraction, std::uint64_t seed);

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

std::vector<Fold> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed);
inline std::vector<Fold> stratified_kfold(const DataTable& table, std::size_t k, std::uint64_t seed) {
    return stratified_kfold(table.labels(), k, seed);
}

struct PcaResult {
    /// k x F, rows are orthonormal principal directions.
    Matrix components;
    std::vector<double> explained_variance_ratio;
    /// I x k projection of the centered data.
    Matrix projected;
};

PcaResult pca_project(const DataTable& table, std::size_t k);

struct SynthOptions {
    /// Std. dev. of Gaussian jitter added to the informative coordinates.
    double noise = 0.05;
    /// Half-width of the empty band between the classes before jitter.
    double margin = 0.05;
};

/// Two-class radial data: normal rows lie in a disc of radius 0.5 - margin and
/// attack rows in an annulus out to 1 over the first two features; every
/// further feature is distractor noise. Columns are shifted and
/// rescaled so that standardization matters.
DataTable synthesize_imbalanced(std::size_t n_normal, std::size_t n_attack, std::size_t n_features,
                                std::uint64_t seed, const SynthOptions& options = {});

}  // namespace iids
