#include "iids/ensemble.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "iids/parallel.hpp"
#include "iids/rng.hpp"

namespace iids {

std::string_view to_string(EnsembleKind kind) noexcept {
    switch (kind) {
        case EnsembleKind::kBagging: return "Bagging";
        case EnsembleKind::kAdaBoost: return "AdaBoost";
        case EnsembleKind::kRUSBoost: return "RUSBoost";
    }
    return "?";
}

EnsembleKind ensemble_kind_from_string(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "bagging") return EnsembleKind::kBagging;
    if (lower == "adaboost") return EnsembleKind::kAdaBoost;
    if (lower == "rusboost") return EnsembleKind::kRUSBoost;
    throw std::invalid_argument("unknown ensemble kind '" + std::string(name) + "'");
}

void EnsembleParams::validate(std::size_t n_features) const {
    if (n_learners < 1) throw std::invalid_argument("EnsembleParams: n_learners must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
        throw std::invalid_argument("EnsembleParams: learning_rate must lie in (0, 1]");
    }
    if (!(undersample_ratio > 0.0) || !std::isfinite(undersample_ratio)) {
        throw std::invalid_argument("EnsembleParams: undersample_ratio must be > 0");
    }
    tree.validate(n_features);
}

EnsembleModel::EnsembleModel(EnsembleKind kind, std::vector<EnsembleMember> members, std::vector<BoostRound> rounds)
    : kind_(kind), members_(std::move(members)), rounds_(std::move(rounds)) {
    if (members_.empty()) throw std::invalid_argument("EnsembleModel: no members");
    const auto f = members_.front().tree.n_features();
    for (const auto& m : members_) {
        if (m.tree.n_features() != f) throw std::invalid_argument("EnsembleModel: members disagree on feature count");
        if (!std::isfinite(m.weight)) throw std::invalid_argument("EnsembleModel: member weight is not finite");
        if (kind_ == EnsembleKind::kBagging && m.weight != 1.0) {
            throw std::invalid_argument("EnsembleModel: bagging member weights must be 1");
        }
    }
}

bool operator==(const EnsembleModel& a, const EnsembleModel& b) noexcept {
    if (a.kind_ != b.kind_ || a.members_.size() != b.members_.size()) return false;
    for (std::size_t i = 0; i < a.members_.size(); ++i) {
        if (a.members_[i].weight != b.members_[i].weight || !(a.members_[i].tree == b.members_[i].tree)) return false;
    }
    return true;
}

std::string EnsembleModel::to_json() const {
    nlohmann::json members = nlohmann::json::array();
    for (const auto& m : members_) {
        members.push_back({{"weight", m.weight}, {"tree", nlohmann::json::parse(m.tree.to_json())}});
    }
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& r : rounds_) {
        rounds.push_back({{"error", r.error},
                          {"alpha", r.alpha},
                          {"subset_normal", r.subset_normal},
                          {"subset_attack", r.subset_attack}});
    }
    nlohmann::json doc = {{"format", "iids-ensemble/1"},
                          {"kind", std::string(to_string(kind_))},
                          {"members", std::move(members)},
                          {"rounds", std::move(rounds)}};
    return doc.dump();
}

EnsembleModel EnsembleModel::from_json(std::string_view text) {
    try {
        const auto doc = nlohmann::json::parse(text);
        if (doc.value("format", "") != "iids-ensemble/1") {
            throw std::invalid_argument("ensemble JSON: unknown format tag");
        }
        std::vector<EnsembleMember> members;
        for (const auto& m : doc.at("members")) {
            members.push_back({TreeModel::from_json(m.at("tree").dump()), m.at("weight").get<double>()});
        }
        std::vector<BoostRound> rounds;
        for (const auto& r : doc.value("rounds", nlohmann::json::array())) {
            rounds.push_back({r.at("error").get<double>(), r.at("alpha").get<double>(),
                              r.at("subset_normal").get<std::size_t>(), r.at("subset_attack").get<std::size_t>()});
        }
        return EnsembleModel(ensemble_kind_from_string(doc.at("kind").get<std::string>()), std::move(members),
                             std::move(rounds));
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("ensemble JSON: ") + e.what());
    }
}

double boosting_alpha(double weighted_error, double learning_rate) {
    const double e = std::max(weighted_error, kPerfectRoundError);
    return learning_rate * 0.5 * std::log((1.0 - e) / e);
}

double boosting_reweight(std::span<double> weights, std::span<const int> labels, std::span<const int> predictions,
                         double alpha) {
    if (weights.size() != labels.size() || labels.size() != predictions.size()) {
        throw std::invalid_argument("boosting_reweight: length mismatch");
    }
    // y*h = +1 when correct, -1 when wrong.
    const double shrink = std::exp(-alpha);
    const double grow = std::exp(alpha);
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        weights[i] *= labels[i] == predictions[i] ? shrink : grow;
        total += weights[i];
    }
    for (auto& w : weights) w /= total;
    return total;
}

std::size_t rus_majority_sample_size(std::size_t minority_count, std::size_t majority_count, double ratio) {
    const auto k = static_cast<std::size_t>(std::floor(static_cast<double>(minority_count) * ratio + 0.5));
    return std::min(k, majority_count);
}

namespace {

void require_trainable(const DataTable& table, const EnsembleParams& params, EnsembleKind expected,
                       std::string_view who) {
    if (params.kind != expected) {
        throw std::invalid_argument(std::string(who) + ": params.kind is " + std::string(to_string(params.kind)));
    }
    if (table.empty()) throw std::invalid_argument(std::string(who) + ": empty table");
    params.validate(table.cols());
}

TreeParams member_tree_params(const EnsembleParams& params, std::size_t index) {
    TreeParams tp = params.tree;
    tp.seed = derive_seed(derive_seed(params.seed, index), 0x74726565ULL);
    return tp;
}

/// Shared AdaBoost/RUSBoost loop. `undersample` selects the RUSBoost
/// per-round training subset; errors and reweighting always use the full table.
EnsembleModel boost(const DataTable& table, const EnsembleParams& params, bool undersample) {
    const std::size_t n = table.rows();
    const auto [n_normal, n_attack] = table.class_counts();
    if (n_normal == 0 || n_attack == 0) {
        throw std::invalid_argument(std::string(to_string(params.kind)) + ": table holds a single class");
    }
    const ColumnOrder order(table.features());
    const auto& labels = table.labels();

    // Ties in class size make class 1 the minority.
    const int minority = n_attack <= n_normal ? kAttack : kNormal;
    std::vector<std::size_t> minority_rows;
    std::vector<std::size_t> majority_rows;
    for (std::size_t i = 0; i < n; ++i) (labels[i] == minority ? minority_rows : majority_rows).push_back(i);
    const std::size_t majority_take =
        rus_majority_sample_size(minority_rows.size(), majority_rows.size(), params.undersample_ratio);

    std::vector<double> weights(n, 1.0 / static_cast<double>(n));
    std::vector<std::size_t> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
    std::vector<int> predicted(n);

    std::vector<EnsembleMember> members;
    std::vector<BoostRound> rounds;
    for (std::size_t t = 0; t < params.n_learners; ++t) {
        const TreeParams tp = member_tree_params(params, t);
        BoostRound round;
        TreeModel tree;
        if (undersample) {
            Rng rng(derive_seed(params.seed ^ 0x5255534253ULL, t));
            std::vector<std::size_t> pool = majority_rows;
            for (std::size_t i = 0; i < majority_take; ++i) {
                const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
                std::swap(pool[i], pool[j]);
            }
            std::vector<std::size_t> subset(minority_rows);
            subset.insert(subset.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(majority_take));
            std::sort(subset.begin(), subset.end());
            std::vector<double> sub_w(subset.size());
            double total = 0.0;
            for (std::size_t i = 0; i < subset.size(); ++i) total += sub_w[i] = weights[subset[i]];
            for (auto& w : sub_w) w /= total;
            tree = fit_tree_on_rows(table, order, subset, sub_w, tp);
            const std::size_t sub_attack = minority == kAttack ? minority_rows.size() : majority_take;
            round.subset_attack = sub_attack;
            round.subset_normal = subset.size() - sub_attack;
        } else {
            tree = fit_tree_on_rows(table, order, all_rows, weights, tp);
            round.subset_normal = n_normal;
            round.subset_attack = n_attack;
        }

        double error = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            predicted[i] = tree.predict(table.features(), static_cast<Eigen::Index>(i)).label;
            if (predicted[i] != labels[i]) error += weights[i];
        }
        round.error = error;
        if (error >= 0.5) {
            if (members.empty()) {
                // Keep the first learner so the model is never empty.
                round.alpha = params.learning_rate;
                members.push_back({std::move(tree), round.alpha});
                rounds.push_back(round);
            }
            break;
        }
        round.alpha = boosting_alpha(error, params.learning_rate);
        members.push_back({std::move(tree), round.alpha});
        rounds.push_back(round);
        if (error <= kPerfectRoundError) break;
        boosting_reweight(weights, labels, predicted, round.alpha);
    }
    return EnsembleModel(params.kind, std::move(members), std::move(rounds));
}

}  // namespace

EnsembleModel fit_bagging(const DataTable& table, const EnsembleParams& params) {
    require_trainable(table, params, EnsembleKind::kBagging, "fit_bagging");
    const std::size_t n = table.rows();
    const ColumnOrder order(table.features());
    std::vector<std::size_t> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
    const std::vector<double> unit(n, 1.0);

    std::vector<std::optional<TreeModel>> trees(params.n_learners);
    parallel_for(params.n_learners, params.threads, [&](std::size_t m) {
        const TreeParams tp = member_tree_params(params, m);
        if (!params.bootstrap) {
            trees[m] = fit_tree_on_rows(table, order, all_rows, unit, tp);
            return;
        }
        Rng rng(derive_seed(params.seed, m));
        std::vector<std::size_t> sample(n);
        for (auto& r : sample) r = static_cast<std::size_t>(rng.below(n));
        trees[m] = fit_tree_on_rows(table, order, sample, unit, tp);
    });

    std::vector<EnsembleMember> members;
    members.reserve(trees.size());
    for (auto& t : trees) members.push_back({std::move(*t), 1.0});
    return EnsembleModel(EnsembleKind::kBagging, std::move(members));
}

EnsembleModel fit_adaboost(const DataTable& table, const EnsembleParams& params) {
    require_trainable(table, params, EnsembleKind::kAdaBoost, "fit_adaboost");
    return boost(table, params, false);
}

EnsembleModel fit_rusboost(const DataTable& table, const EnsembleParams& params) {
    require_trainable(table, params, EnsembleKind::kRUSBoost, "fit_rusboost");
    return boost(table, params, true);
}

EnsembleModel fit_ensemble(const DataTable& table, const EnsembleParams& params) {
    switch (params.kind) {
        case EnsembleKind::kBagging: return fit_bagging(table, params);
        case EnsembleKind::kAdaBoost: return fit_adaboost(table, params);
        case EnsembleKind::kRUSBoost: return fit_rusboost(table, params);
    }
    throw std::invalid_argument("fit_ensemble: bad kind");
}

Predictions predict_ensemble(const EnsembleModel& model, const Matrix& features) {
    if (static_cast<std::size_t>(features.cols()) != model.n_features()) {
        throw std::invalid_argument("predict_ensemble: table has " + std::to_string(features.cols()) +
                                    " features, model expects " + std::to_string(model.n_features()));
    }
    const auto n = static_cast<std::size_t>(features.rows());
    Predictions out{std::vector<int>(n), std::vector<double>(n)};
    const auto& members = model.members();
    const bool bagging = model.kind() == EnsembleKind::kBagging;
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        if (bagging) {
            std::size_t votes = 0;
            double prob = 0.0;
            for (const auto& m : members) {
                const auto p = m.tree.predict(features, r);
                votes += static_cast<std::size_t>(p.label);
                prob += p.attack_score;
            }
            out.labels[i] = 2 * votes > members.size() ? kAttack : kNormal;
            out.scores[i] = prob / static_cast<double>(members.size());
        } else {
            double margin = 0.0;
            for (const auto& m : members) {
                margin += m.weight * (m.tree.predict(features, r).label == kAttack ? 1.0 : -1.0);
            }
            out.labels[i] = margin > 0.0 ? kAttack : kNormal;
            out.scores[i] = 1.0 / (1.0 + std::exp(-margin));
        }
    }
    return out;
}

Predictions predict_ensemble(const EnsembleModel& model, const DataTable& table) {
    return predict_ensemble(model, table.features());
}

}  // namespace iids
