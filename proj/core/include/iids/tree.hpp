#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iids/data.hpp"

namespace iids {

struct TreeParams {
    /// 0 means unlimited.
    std::size_t max_depth = 0;
    std::size_t min_leaf_size = 1;
    /// 0 means "all features".
    std::size_t features_per_split = 0;
    std::uint64_t seed = 0;

    void validate(std::size_t n_features) const;
};

struct SplitCandidate {
    std::size_t feature = 0;
    double threshold = 0.0;
    /// Weighted Gini decrease, normalized by the node's total weight.
    double gain = 0.0;
};

/// Gains closer than this are treated as ties (lowest feature, then lowest
/// threshold, wins).
inline constexpr double kGainTieTolerance = 1e-12;

/// 1 - sum p_i^2 over the weighted class counts.
double gini(std::span<const double> weighted_counts);

/// Best split of all rows of `table` over `candidate_features`; thresholds are
/// midpoints between consecutive distinct values and both children must hold
/// at least `min_leaf_size` rows. Returns nullopt when no legal split lowers
/// impurity.
std::optional<SplitCandidate> best_split(const DataTable& table, std::span<const double> weights,
                                         std::span<const std::size_t> candidate_features,
                                         std::size_t min_leaf_size);

class TreeModel {
public:
    struct Node {
        /// -1 for leaves.
        int feature = -1;
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        /// Weighted fraction of class 1 among the training rows reaching this node.
        double attack_probability = 0.0;

        bool is_leaf() const noexcept { return feature < 0; }
    };

    struct Prediction {
        int label;
        double attack_score;
    };

    TreeModel() = default;
    TreeModel(std::vector<Node> nodes, std::size_t n_features);

    Prediction predict(std::span<const double> row) const;
    /// Row `r` of `x` without copying.
    Prediction predict(const Matrix& x, Eigen::Index r) const;

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    std::size_t n_features() const noexcept { return n_features_; }
    /// Number of edges on the longest root-to-leaf path.
    std::size_t depth() const noexcept { return depth_; }
    std::size_t leaf_count() const noexcept;

    std::string to_json() const;
    static TreeModel from_json(std::string_view text);

    friend bool operator==(const TreeModel& a, const TreeModel& b) noexcept;

private:
    std::vector<Node> nodes_;
    std::size_t n_features_ = 0;
    std::size_t depth_ = 0;
};

bool operator==(const TreeModel::Node& a, const TreeModel::Node& b) noexcept;

/// Leaf label for a class-1 probability; equal weight goes to class 0.
inline int leaf_label(double attack_probability) noexcept { return attack_probability > 0.5 ? 1 : 0; }

/// Row order of every column sorted by value (ties by row index). Computing it
/// once per table lets repeated fits (boosting rounds, bagging members) skip
/// the per-fit sort.
class ColumnOrder {
public:
    explicit ColumnOrder(const Matrix& features);

    std::span<const std::uint32_t> column(std::size_t feature) const { return order_[feature]; }
    std::size_t cols() const noexcept { return order_.size(); }
    std::size_t rows() const noexcept { return order_.empty() ? 0 : order_.front().size(); }

private:
    std::vector<std::vector<std::uint32_t>> order_;
};

TreeModel fit_tree(const DataTable& table, std::span<const double> weights, const TreeParams& params);
/// Unit weights.
TreeModel fit_tree(const DataTable& table, const TreeParams& params);

/// Fits on the multiset of `rows` (duplicates allowed, e.g. a bootstrap
/// sample); weights[i] belongs to rows[i]. Avoids materializing the subset.
TreeModel fit_tree_on_rows(const DataTable& table, std::span<const std::size_t> rows,
                           std::span<const double> weights, const TreeParams& params);
TreeModel fit_tree_on_rows(const DataTable& table, const ColumnOrder& order,
                           std::span<const std::size_t> rows, std::span<const double> weights,
                           const TreeParams& params);

inline TreeModel::Prediction predict_tree(const TreeModel& model, std::span<const double> row) {
    return model.predict(row);
}

}  // namespace iids
