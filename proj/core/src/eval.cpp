#include "iids/eval.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <stdexcept>

#include "iids/parallel.hpp"

namespace iids {

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred) {
    if (y_true.size() != y_pred.size()) {
        throw std::invalid_argument("confusion: " + std::to_string(y_true.size()) + " labels vs " +
                                    std::to_string(y_pred.size()) + " predictions");
    }
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i];
        const int p = y_pred[i];
        if ((t != 0 && t != 1) || (p != 0 && p != 1)) {
            throw std::invalid_argument("confusion: label at position " + std::to_string(i) + " is not 0 or 1");
        }
        if (t == kAttack) {
            (p == kAttack ? cm.tp : cm.fn) += 1;
        } else {
            (p == kAttack ? cm.fp : cm.tn) += 1;
        }
    }
    return cm;
}

EvalReport metrics(const ConfusionMatrix& cm, std::string model_name) {
    if (cm.total() == 0) throw std::invalid_argument("metrics: empty confusion matrix");
    const auto tp = static_cast<double>(cm.tp);
    const auto tn = static_cast<double>(cm.tn);
    const auto fp = static_cast<double>(cm.fp);
    const auto fn = static_cast<double>(cm.fn);
    EvalReport r;
    r.model_name = std::move(model_name);
    r.matrix = cm;
    r.accuracy = (tp + tn) / (tp + tn + fp + fn);
    r.precision = cm.tp + cm.fp == 0 ? 0.0 : tp / (tp + fp);
    r.recall = cm.tp + cm.fn == 0 ? 0.0 : tp / (tp + fn);
    r.f_score = r.precision + r.recall == 0.0 ? 0.0 : 2.0 * (r.precision * r.recall) / (r.precision + r.recall);
    return r;
}

std::vector<int> fit_and_predict(const ModelSpec& spec, const DataTable& train, const DataTable& validation) {
    if (const auto* tp = std::get_if<TreeParams>(&spec)) {
        const TreeModel tree = fit_tree(train, *tp);
        std::vector<int> out(validation.rows());
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = tree.predict(validation.features(), static_cast<Eigen::Index>(i)).label;
        }
        return out;
    }
    const auto& ep = std::get<EnsembleParams>(spec);
    return predict_ensemble(fit_ensemble(train, ep), validation).labels;
}

double cv_error(const Classifier& classifier, const DataTable& table, std::size_t k, std::uint64_t seed,
                std::size_t threads) {
    const auto folds = stratified_kfold(table, k, seed);
    std::vector<double> errors(folds.size());
    parallel_for(folds.size(), threads, [&](std::size_t f) {
        const DataTable train_raw = table.subset(folds[f].train);
        const DataTable valid_raw = table.subset(folds[f].validation);
        const Preprocessor prep = fit_preprocessor(train_raw);
        const DataTable train = apply_preprocessor(prep, train_raw);
        const DataTable valid = apply_preprocessor(prep, valid_raw);
        const auto predicted = classifier(train, valid);
        if (predicted.size() != valid.rows()) throw std::logic_error("cv_error: classifier returned wrong length");
        std::size_t wrong = 0;
        for (std::size_t i = 0; i < predicted.size(); ++i) wrong += predicted[i] != valid.labels()[i];
        errors[f] = static_cast<double>(wrong) / static_cast<double>(predicted.size());
    });
    double sum = 0.0;
    for (const double e : errors) sum += e;
    return sum / static_cast<double>(errors.size());
}

double cv_error(const ModelSpec& spec, const DataTable& table, std::size_t k, std::uint64_t seed,
                std::size_t threads) {
    ModelSpec inner = spec;
    // Parallelism goes to the folds when there is more than one worker.
    if (auto* ep = std::get_if<EnsembleParams>(&inner); ep && threads != 1) ep->threads = 1;
    return cv_error([&](const DataTable& train,
                        const DataTable& validation) { return fit_and_predict(inner, train, validation); },
                    table, k, seed, threads);
}

std::size_t comparison_row(std::string_view name) {
    const auto it = std::find(kComparisonRows.begin(), kComparisonRows.end(), name);
    if (it == kComparisonRows.end()) throw std::invalid_argument("unknown model name '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - kComparisonRows.begin());
}

std::vector<EvalReport> compare_models(const DataTable& train, const DataTable& test,
                                       std::span<const NamedModel> models, std::size_t threads) {
    std::vector<const NamedModel*> ordered;
    for (const auto& m : models) {
        comparison_row(m.name);
        ordered.push_back(&m);
    }
    std::stable_sort(ordered.begin(), ordered.end(), [](const NamedModel* a, const NamedModel* b) {
        return comparison_row(a->name) < comparison_row(b->name);
    });

    const Preprocessor prep = fit_preprocessor(train);
    const DataTable train_s = apply_preprocessor(prep, train);
    const DataTable test_s = apply_preprocessor(prep, test);
    std::vector<EvalReport> reports;
    for (const auto* m : ordered) {
        ModelSpec spec = m->spec;
        if (auto* ep = std::get_if<EnsembleParams>(&spec)) ep->threads = threads;
        const auto predicted = fit_and_predict(spec, train_s, test_s);
        reports.push_back(metrics(confusion(test_s.labels(), predicted), m->name));
    }
    return reports;
}

std::vector<NamedModel> baseline_models(std::uint64_t seed, std::size_t threads) {
    TreeParams dt;
    dt.seed = seed;

    EnsembleParams bag;
    bag.kind = EnsembleKind::kBagging;
    bag.n_learners = 100;
    bag.seed = seed;
    bag.threads = threads;

    EnsembleParams boost = bag;
    boost.kind = EnsembleKind::kAdaBoost;
    boost.learning_rate = 1.0;
    boost.tree.max_depth = 4;

    EnsembleParams rus = boost;
    rus.kind = EnsembleKind::kRUSBoost;
    rus.undersample_ratio = 1.0;

    return {{"DT", dt},
            {"Bagging Ensemble Trees", bag},
            {"Boosting Ensemble Trees", boost},
            {"RUSBoosting Ensemble Trees", rus}};
}

SearchSpace default_ensemble_space() {
    return SearchSpace({
        Dimension::categorical("kind", {"Bagging", "AdaBoost", "RUSBoost"}),
        Dimension::integer("n_learners", 10, 500, true),
        Dimension::integer("min_leaf_size", 1, 1000, true),
        Dimension::continuous("learning_rate", 0.001, 1.0, true),
    });
}

SearchSpace default_tree_space() {
    return SearchSpace({
        Dimension::integer("min_leaf_size", 1, 1000, true),
        Dimension::integer("max_depth", 1, 100, true),
    });
}

namespace {

double value_of(const HyperPoint& p, const SearchSpace& space, std::string_view name, double fallback) {
    const auto i = space.find(name);
    return i < space.size() ? p.values.at(i) : fallback;
}

}  // namespace

EnsembleParams ensemble_params_from_point(const HyperPoint& p, const SearchSpace& space, std::uint64_t seed,
                                          std::size_t threads) {
    if (!is_valid(p, space)) throw std::invalid_argument("ensemble_params_from_point: point outside search space");
    EnsembleParams ep;
    const auto kind_dim = space.find("kind");
    if (kind_dim < space.size()) {
        ep.kind = ensemble_kind_from_string(space.dimensions()[kind_dim].levels.at(static_cast<std::size_t>(p.values[kind_dim])));
    }
    ep.n_learners = static_cast<std::size_t>(value_of(p, space, "n_learners", 100));
    ep.learning_rate = value_of(p, space, "learning_rate", 1.0);
    ep.tree.min_leaf_size = static_cast<std::size_t>(value_of(p, space, "min_leaf_size", 1));
    ep.tree.max_depth = static_cast<std::size_t>(value_of(p, space, "max_depth", 0));
    ep.seed = seed;
    ep.threads = threads;
    return ep;
}

TreeParams tree_params_from_point(const HyperPoint& p, const SearchSpace& space, std::uint64_t seed) {
    if (!is_valid(p, space)) throw std::invalid_argument("tree_params_from_point: point outside search space");
    TreeParams tp;
    tp.min_leaf_size = static_cast<std::size_t>(value_of(p, space, "min_leaf_size", 1));
    tp.max_depth = static_cast<std::size_t>(value_of(p, space, "max_depth", 0));
    tp.seed = seed;
    return tp;
}

std::string reports_to_csv(std::span<const EvalReport> reports) {
    std::string out = "algorithm,accuracy,precision,recall,fscore\n";
    for (const auto& r : reports) {
        out += fmt::format("{},{:.1f},{:.1f},{:.1f},{:.3f}\n", r.model_name, 100.0 * r.accuracy, 100.0 * r.precision,
                           100.0 * r.recall, r.f_score);
    }
    return out;
}

std::string reports_to_json(std::span<const EvalReport> reports) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : reports) {
        rows.push_back({{"algorithm", r.model_name},
                        {"accuracy", r.accuracy},
                        {"precision", r.precision},
                        {"recall", r.recall},
                        {"fscore", r.f_score},
                        {"confusion", {{"tp", r.matrix.tp}, {"tn", r.matrix.tn}, {"fp", r.matrix.fp}, {"fn", r.matrix.fn}}}});
    }
    return rows.dump(2) + "\n";
}

}  // namespace iids
