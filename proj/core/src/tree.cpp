#include "iids/tree.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "iids/rng.hpp"

namespace iids {

void TreeParams::validate(std::size_t n_features) const {
    if (min_leaf_size < 1) throw std::invalid_argument("TreeParams: min_leaf_size must be >= 1");
    if (features_per_split > n_features) {
        throw std::invalid_argument("TreeParams: features_per_split (" + std::to_string(features_per_split) +
                                    ") exceeds feature count (" + std::to_string(n_features) + ")");
    }
}

double gini(std::span<const double> weighted_counts) {
    double total = 0.0;
    for (const double c : weighted_counts) {
        if (c < 0.0 || !std::isfinite(c)) throw std::invalid_argument("gini: counts must be finite and >= 0");
        total += c;
    }
    if (!(total > 0.0)) throw std::invalid_argument("gini: all counts are zero");
    double sum_sq = 0.0;
    for (const double c : weighted_counts) {
        const double p = c / total;
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

namespace {

/// Two-class Gini without argument checks; zero weight counts as pure.
inline double gini2(double w0, double w1) noexcept {
    const double w = w0 + w1;
    if (!(w > 0.0)) return 0.0;
    const double p0 = w0 / w;
    const double p1 = w1 / w;
    return 1.0 - p0 * p0 - p1 * p1;
}

inline double midpoint(double lo, double hi) noexcept {
    const double mid = 0.5 * (lo + hi);
    // Adjacent doubles can round the midpoint up to `hi`, which would send
    // `hi` left under the <= rule.
    return mid < hi ? mid : lo;
}

struct ScanResult {
    double gain = kGainTieTolerance;
    double threshold = 0.0;
    std::size_t feature = 0;
    bool found = false;
};

/// Scans one feature whose node samples are listed in value order and keeps
/// the best strictly-improving midpoint in `best`.
template <class ValueAt, class WeightAt, class LabelAt>
void scan_feature(std::size_t feature, std::span<const std::uint32_t> sorted, ValueAt value_at,
                  WeightAt weight_at, LabelAt label_at, double total0, double total1,
                  std::size_t min_leaf, ScanResult& best) {
    const std::size_t n = sorted.size();
    if (n < 2 * min_leaf) return;
    const double total = total0 + total1;
    const double inv_total = 1.0 / total;
    // With s = w0^2 + w1^2, a child's weighted Gini is w - s / w, so the
    // decrease is (s_L / w_L + s_R / w_R - s_parent / w_parent) / w_parent.
    const double parent_term = (total0 * total0 + total1 * total1) * inv_total;
    double left0 = 0.0;
    double left1 = 0.0;
    const std::size_t last = n - min_leaf;
    for (std::size_t i = 0; i < last; ++i) {
        const auto s = sorted[i];
        const double w = weight_at(s);
        const bool attack = label_at(s) == kAttack;
        left0 += attack ? 0.0 : w;
        left1 += attack ? w : 0.0;
        if (i + 1 < min_leaf) continue;
        const double v = value_at(s);
        const double v_next = value_at(sorted[i + 1]);
        if (!(v < v_next)) continue;
        const double right0 = total0 - left0;
        const double right1 = total1 - left1;
        const double wl = left0 + left1;
        const double wr = right0 + right1;
        const double term_l = wl > 0.0 ? (left0 * left0 + left1 * left1) / wl : 0.0;
        const double term_r = wr > 0.0 ? (right0 * right0 + right1 * right1) / wr : 0.0;
        const double gain = (term_l + term_r - parent_term) * inv_total;
        if (gain > best.gain + (best.found ? kGainTieTolerance : 0.0)) {
            best.gain = gain;
            best.threshold = midpoint(v, v_next);
            best.feature = feature;
            best.found = true;
        }
    }
}

std::vector<std::uint32_t> sorted_rows(const Matrix& x, Eigen::Index col) {
    std::vector<std::uint32_t> idx(static_cast<std::size_t>(x.rows()));
    std::iota(idx.begin(), idx.end(), 0u);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return x(a, col) < x(b, col); });
    return idx;
}

}  // namespace

std::optional<SplitCandidate> best_split(const DataTable& table, std::span<const double> weights,
                                         std::span<const std::size_t> candidate_features,
                                         std::size_t min_leaf_size) {
    if (candidate_features.empty()) throw std::invalid_argument("best_split: empty candidate feature set");
    if (weights.size() != table.rows()) throw std::invalid_argument("best_split: weight count != row count");
    if (min_leaf_size < 1) throw std::invalid_argument("best_split: min_leaf_size must be >= 1");
    double total0 = 0.0;
    double total1 = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
            throw std::invalid_argument("best_split: weights must be finite and non-negative");
        }
        (table.labels()[i] == kAttack ? total1 : total0) += weights[i];
    }
    if (!(total0 + total1 > 0.0)) throw std::invalid_argument("best_split: all weights are zero");

    std::vector<std::size_t> features(candidate_features.begin(), candidate_features.end());
    std::sort(features.begin(), features.end());
    const auto& x = table.features();
    ScanResult best;
    for (const auto f : features) {
        if (f >= table.cols()) throw std::invalid_argument("best_split: feature index out of range");
        const auto col = static_cast<Eigen::Index>(f);
        const auto order = sorted_rows(x, col);
        scan_feature(
            f, order, [&](std::uint32_t r) { return x(r, col); }, [&](std::uint32_t r) { return weights[r]; },
            [&](std::uint32_t r) { return table.labels()[r]; }, total0, total1, min_leaf_size, best);
    }
    if (!best.found) return std::nullopt;
    return SplitCandidate{best.feature, best.threshold, best.gain};
}

// ---------------------------------------------------------------------------
// TreeModel

bool operator==(const TreeModel::Node& a, const TreeModel::Node& b) noexcept {
    return a.feature == b.feature && a.threshold == b.threshold && a.left == b.left && a.right == b.right &&
           a.attack_probability == b.attack_probability;
}

bool operator==(const TreeModel& a, const TreeModel& b) noexcept {
    return a.n_features_ == b.n_features_ && a.nodes_ == b.nodes_;
}

TreeModel::TreeModel(std::vector<Node> nodes, std::size_t n_features)
    : nodes_(std::move(nodes)), n_features_(n_features) {
    if (nodes_.empty()) throw std::invalid_argument("TreeModel: no nodes");
    const auto n = static_cast<int>(nodes_.size());
    for (const auto& node : nodes_) {
        if (!(node.attack_probability >= 0.0 && node.attack_probability <= 1.0)) {
            throw std::invalid_argument("TreeModel: node probability outside [0, 1]");
        }
        if (node.is_leaf()) continue;
        if (static_cast<std::size_t>(node.feature) >= n_features_) {
            throw std::invalid_argument("TreeModel: split feature out of range");
        }
        if (node.left <= 0 || node.right <= 0 || node.left >= n || node.right >= n || node.left == node.right) {
            throw std::invalid_argument("TreeModel: internal node needs two valid children");
        }
    }
    // Depth by traversal; also rejects cycles.
    std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
    std::size_t visited = 0;
    while (!stack.empty()) {
        const auto [id, d] = stack.back();
        stack.pop_back();
        if (++visited > nodes_.size()) throw std::invalid_argument("TreeModel: node graph is not a tree");
        depth_ = std::max(depth_, d);
        const auto& node = nodes_[static_cast<std::size_t>(id)];
        if (!node.is_leaf()) {
            stack.emplace_back(node.right, d + 1);
            stack.emplace_back(node.left, d + 1);
        }
    }
}

std::size_t TreeModel::leaf_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.is_leaf(); }));
}

TreeModel::Prediction TreeModel::predict(std::span<const double> row) const {
    if (row.size() != n_features_) {
        throw std::invalid_argument("predict_tree: row has " + std::to_string(row.size()) +
                                    " features, model expects " + std::to_string(n_features_));
    }
    const Node* node = &nodes_.front();
    while (!node->is_leaf()) {
        const double v = row[static_cast<std::size_t>(node->feature)];
        node = &nodes_[static_cast<std::size_t>(v <= node->threshold ? node->left : node->right)];
    }
    return {leaf_label(node->attack_probability), node->attack_probability};
}

TreeModel::Prediction TreeModel::predict(const Matrix& x, Eigen::Index r) const {
    if (static_cast<std::size_t>(x.cols()) != n_features_) {
        throw std::invalid_argument("predict_tree: table has " + std::to_string(x.cols()) +
                                    " features, model expects " + std::to_string(n_features_));
    }
    const Node* node = &nodes_.front();
    while (!node->is_leaf()) {
        const double v = x(r, node->feature);
        node = &nodes_[static_cast<std::size_t>(v <= node->threshold ? node->left : node->right)];
    }
    return {leaf_label(node->attack_probability), node->attack_probability};
}

std::string TreeModel::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : nodes_) {
        if (n.is_leaf()) {
            nodes.push_back({{"p", n.attack_probability}});
        } else {
            nodes.push_back({{"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right},
                             {"p", n.attack_probability}});
        }
    }
    nlohmann::json doc = {{"format", "iids-tree/1"}, {"n_features", n_features_}, {"nodes", std::move(nodes)}};
    return doc.dump();
}

TreeModel TreeModel::from_json(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("tree JSON: ") + e.what());
    }
    if (doc.value("format", "") != "iids-tree/1") throw std::invalid_argument("tree JSON: unknown format tag");
    std::vector<Node> nodes;
    try {
        for (const auto& j : doc.at("nodes")) {
            Node n;
            n.attack_probability = j.at("p").get<double>();
            if (j.contains("feature")) {
                n.feature = j.at("feature").get<int>();
                n.threshold = j.at("threshold").get<double>();
                n.left = j.at("left").get<int>();
                n.right = j.at("right").get<int>();
            }
            nodes.push_back(n);
        }
        return TreeModel(std::move(nodes), doc.at("n_features").get<std::size_t>());
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("tree JSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Fitting

ColumnOrder::ColumnOrder(const Matrix& features) {
    if (features.rows() > static_cast<Eigen::Index>(std::numeric_limits<std::uint32_t>::max())) {
        throw std::invalid_argument("ColumnOrder: too many rows");
    }
    order_.reserve(static_cast<std::size_t>(features.cols()));
    for (Eigen::Index c = 0; c < features.cols(); ++c) order_.push_back(sorted_rows(features, c));
}

namespace {

/// Greedy CART growth over a sample multiset. Every feature keeps the node's
/// samples as a contiguous value-sorted segment; splitting stably partitions
/// each segment, so no node ever re-sorts.
class TreeBuilder {
public:
    TreeBuilder(const DataTable& table, const ColumnOrder& order, std::span<const std::size_t> rows,
                std::span<const double> weights, const TreeParams& params)
        : x_(table.features()),
          params_(params),
          rng_(derive_seed(params.seed, 0x7472656575ULL)),
          n_features_(table.cols()) {
        const std::size_t m = rows.size();
        rows_.resize(m);
        weights_.assign(weights.begin(), weights.end());
        labels_.resize(m);
        for (std::size_t s = 0; s < m; ++s) {
            rows_[s] = static_cast<std::uint32_t>(rows[s]);
            labels_[s] = static_cast<std::uint8_t>(table.labels()[rows[s]]);
        }

        // Counting sort of samples into each column's global row order.
        const std::size_t n_rows = table.rows();
        std::vector<std::uint32_t> offsets(n_rows + 1, 0);
        for (const auto r : rows_) ++offsets[r + 1];
        std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
        std::vector<std::uint32_t> by_row(m);
        {
            std::vector<std::uint32_t> fill(offsets.begin(), offsets.end() - 1);
            for (std::uint32_t s = 0; s < m; ++s) by_row[fill[rows_[s]]++] = s;
        }
        sorted_.resize(n_features_);
        for (std::size_t f = 0; f < n_features_; ++f) {
            auto& out = sorted_[f];
            out.reserve(m);
            for (const auto r : order.column(f)) {
                for (auto k = offsets[r]; k < offsets[r + 1]; ++k) out.push_back(by_row[k]);
            }
        }
        goes_left_.resize(m);
        scratch_.resize(m);
    }

    TreeModel build() {
        struct Pending {
            int node;
            std::size_t begin;
            std::size_t end;
            std::size_t depth;
        };
        std::vector<TreeModel::Node> nodes(1);
        std::vector<Pending> stack{{0, 0, rows_.size(), 0}};
        std::vector<std::size_t> features(n_features_);

        while (!stack.empty()) {
            const Pending cur = stack.back();
            stack.pop_back();
            const auto segment = std::span(sorted_.front()).subspan(cur.begin, cur.end - cur.begin);
            double w0 = 0.0;
            double w1 = 0.0;
            std::size_t c1 = 0;
            for (const auto s : segment) {
                if (labels_[s] == kAttack) {
                    w1 += weights_[s];
                    ++c1;
                } else {
                    w0 += weights_[s];
                }
            }
            auto& node = nodes[static_cast<std::size_t>(cur.node)];
            node.attack_probability = (w0 + w1 > 0.0) ? w1 / (w0 + w1)
                                                       : static_cast<double>(c1) / static_cast<double>(segment.size());
            node.attack_probability = std::clamp(node.attack_probability, 0.0, 1.0);

            const bool depth_exhausted = params_.max_depth != 0 && cur.depth >= params_.max_depth;
            if (depth_exhausted || w0 <= 0.0 || w1 <= 0.0 || segment.size() < 2 * params_.min_leaf_size) {
                continue;
            }

            const auto candidates = choose_features(features);
            ScanResult best;
            for (const auto f : candidates) {
                const auto col = static_cast<Eigen::Index>(f);
                scan_feature(
                    f, std::span(sorted_[f]).subspan(cur.begin, cur.end - cur.begin),
                    [&](std::uint32_t s) { return x_(rows_[s], col); },
                    [&](std::uint32_t s) { return weights_[s]; }, [&](std::uint32_t s) { return labels_[s]; },
                    w0, w1, params_.min_leaf_size, best);
            }
            if (!best.found) continue;

            const auto split_col = static_cast<Eigen::Index>(best.feature);
            std::size_t n_left = 0;
            for (const auto s : segment) {
                goes_left_[s] = x_(rows_[s], split_col) <= best.threshold;
                n_left += goes_left_[s];
            }
            for (std::size_t f = 0; f < n_features_; ++f) partition(sorted_[f], cur.begin, cur.end);

            node.feature = static_cast<int>(best.feature);
            node.threshold = best.threshold;
            node.left = static_cast<int>(nodes.size());
            node.right = node.left + 1;
            const int left = node.left;
            const int right = node.right;
            nodes.emplace_back();
            nodes.emplace_back();
            const std::size_t mid = cur.begin + n_left;
            stack.push_back({right, mid, cur.end, cur.depth + 1});
            stack.push_back({left, cur.begin, mid, cur.depth + 1});
        }
        return TreeModel(std::move(nodes), n_features_);
    }

private:
    std::span<const std::size_t> choose_features(std::vector<std::size_t>& buffer) {
        std::iota(buffer.begin(), buffer.end(), std::size_t{0});
        const std::size_t k = params_.features_per_split;
        if (k == 0 || k >= n_features_) return buffer;
        for (std::size_t i = 0; i < k; ++i) {
            const auto j = i + static_cast<std::size_t>(rng_.below(n_features_ - i));
            std::swap(buffer[i], buffer[j]);
        }
        std::sort(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(k));
        return std::span(buffer).first(k);
    }

    void partition(std::vector<std::uint32_t>& list, std::size_t begin, std::size_t end) {
        std::size_t l = begin;
        std::size_t r = 0;
        for (std::size_t i = begin; i < end; ++i) {
            const auto s = list[i];
            if (goes_left_[s]) {
                list[l++] = s;
            } else {
                scratch_[r++] = s;
            }
        }
        std::copy_n(scratch_.begin(), r, list.begin() + static_cast<std::ptrdiff_t>(l));
    }

    const Matrix& x_;
    TreeParams params_;
    Rng rng_;
    std::size_t n_features_;
    std::vector<std::uint32_t> rows_;
    std::vector<double> weights_;
    std::vector<std::uint8_t> labels_;
    std::vector<std::vector<std::uint32_t>> sorted_;
    std::vector<std::uint8_t> goes_left_;
    std::vector<std::uint32_t> scratch_;
};

void check_fit_inputs(const DataTable& table, std::span<const std::size_t> rows, std::span<const double> weights,
                      const TreeParams& params) {
    if (table.empty() || table.cols() == 0) throw std::invalid_argument("fit_tree: empty table");
    if (rows.empty()) throw std::invalid_argument("fit_tree: no rows to fit");
    if (weights.size() != rows.size()) throw std::invalid_argument("fit_tree: weight count != row count");
    params.validate(table.cols());
    for (const auto r : rows) {
        if (r >= table.rows()) throw std::invalid_argument("fit_tree: row index out of range");
    }
    for (const double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("fit_tree: weights must be >= 0");
    }
}

}  // namespace

TreeModel fit_tree_on_rows(const DataTable& table, const ColumnOrder& order, std::span<const std::size_t> rows,
                           std::span<const double> weights, const TreeParams& params) {
    check_fit_inputs(table, rows, weights, params);
    if (order.cols() != table.cols() || order.rows() != table.rows()) {
        throw std::invalid_argument("fit_tree: column order does not belong to this table");
    }
    return TreeBuilder(table, order, rows, weights, params).build();
}

TreeModel fit_tree_on_rows(const DataTable& table, std::span<const std::size_t> rows,
                           std::span<const double> weights, const TreeParams& params) {
    check_fit_inputs(table, rows, weights, params);
    const ColumnOrder order(table.features());
    return TreeBuilder(table, order, rows, weights, params).build();
}

TreeModel fit_tree(const DataTable& table, std::span<const double> weights, const TreeParams& params) {
    if (weights.size() != table.rows()) throw std::invalid_argument("fit_tree: weight count != row count");
    std::vector<std::size_t> rows(table.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return fit_tree_on_rows(table, rows, weights, params);
}

TreeModel fit_tree(const DataTable& table, const TreeParams& params) {
    const std::vector<double> weights(table.rows(), 1.0);
    return fit_tree(table, weights, params);
}

}  // namespace iids
