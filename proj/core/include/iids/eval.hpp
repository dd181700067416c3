#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "iids/bayesopt.hpp"
#include "iids/data.hpp"
#include "iids/ensemble.hpp"
#include "iids/tree.hpp"

namespace iids {

/// Positive class is Attack (label 1).
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    std::size_t total() const noexcept { return tp + tn + fp + fn; }
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct EvalReport {
    std::string model_name;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f_score = 0.0;
    ConfusionMatrix matrix;
};

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred);

/// Accuracy, precision, recall and F-score; a zero denominator yields 0.
EvalReport metrics(const ConfusionMatrix& cm, std::string model_name = {});

/// A single tree or an ensemble.
using ModelSpec = std::variant<TreeParams, EnsembleParams>;

/// Trains on the first table and returns label predictions for the second.
using Classifier = std::function<std::vector<int>(const DataTable& train, const DataTable& validation)>;

std::vector<int> fit_and_predict(const ModelSpec& spec, const DataTable& train, const DataTable& validation);

/// Mean validation misclassification rate over k stratified folds. The
/// preprocessor is fitted on each fold's training part only. Folds run on up
/// to `threads` workers; the result does not depend on the worker count.
double cv_error(const Classifier& classifier, const DataTable& table, std::size_t k, std::uint64_t seed,
                std::size_t threads = 1);
double cv_error(const ModelSpec& spec, const DataTable& table, std::size_t k, std::uint64_t seed,
                std::size_t threads = 1);

/// Row names of the comparison table, in display order.
inline constexpr std::array<std::string_view, 6> kComparisonRows{
    "DT",
    "Optimized DT",
    "Bagging Ensemble Trees",
    "Boosting Ensemble Trees",
    "RUSBoosting Ensemble Trees",
    "Optimized Ensemble Trees",
};

/// Position in kComparisonRows; throws std::invalid_argument for unknown names.
std::size_t comparison_row(std::string_view name);

struct NamedModel {
    std::string name;
    ModelSpec spec;
};

/// Fits the preprocessor on `train`, trains every model on it and scores on
/// `test`. Reports come back in kComparisonRows order.
std::vector<EvalReport> compare_models(const DataTable& train, const DataTable& test,
                                       std::span<const NamedModel> models, std::size_t threads = 1);

/// Defaults for the four unoptimized rows.
std::vector<NamedModel> baseline_models(std::uint64_t seed, std::size_t threads = 1);

// ---------------------------------------------------------------------------
// Search spaces for the two optimized rows

/// kind {Bagging, AdaBoost, RUSBoost}; n_learners log [10, 500];
/// min_leaf_size log [1, 1000]; learning_rate log [0.001, 1].
SearchSpace default_ensemble_space();
/// min_leaf_size log [1, 1000]; max_depth log [1, 100].
SearchSpace default_tree_space();

EnsembleParams ensemble_params_from_point(const HyperPoint& p, const SearchSpace& space, std::uint64_t seed,
                                          std::size_t threads = 1);
TreeParams tree_params_from_point(const HyperPoint& p, const SearchSpace& space, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Report export

/// `algorithm,accuracy,precision,recall,fscore`; percentages to one decimal, F-score to three.
std::string reports_to_csv(std::span<const EvalReport> reports);
std::string reports_to_json(std::span<const EvalReport> reports);

}  // namespace iids
