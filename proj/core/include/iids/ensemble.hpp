#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "iids/data.hpp"
#include "iids/tree.hpp"

namespace iids {

enum class EnsembleKind { kBagging, kAdaBoost, kRUSBoost };

std::string_view to_string(EnsembleKind kind) noexcept;
/// Accepts "Bagging", "AdaBoost", "RUSBoost" (case-insensitive).
EnsembleKind ensemble_kind_from_string(std::string_view name);

struct EnsembleParams {
    EnsembleKind kind = EnsembleKind::kBagging;
    std::size_t n_learners = 100;
    /// Shrinkage on alpha; boosting only.
    double learning_rate = 1.0;
    TreeParams tree;
    /// Majority rows kept per minority row; RUSBoost only.
    double undersample_ratio = 1.0;
    /// Bagging only: false trains every member on the full table.
    bool bootstrap = true;
    std::uint64_t seed = 0;
    /// Bagging member parallelism (0 = hardware concurrency). Never affects results.
    std::size_t threads = 1;

    void validate(std::size_t n_features) const;
};

/// Per-round boosting diagnostics.
struct BoostRound {
    double error = 0.0;
    double alpha = 0.0;
    /// Class counts of the rows the round's tree was trained on.
    std::size_t subset_normal = 0;
    std::size_t subset_attack = 0;
};

struct EnsembleMember {
    TreeModel tree;
    double weight = 1.0;
};

class EnsembleModel {
public:
    EnsembleModel(EnsembleKind kind, std::vector<EnsembleMember> members, std::vector<BoostRound> rounds = {});

    EnsembleKind kind() const noexcept { return kind_; }
    const std::vector<EnsembleMember>& members() const noexcept { return members_; }
    const std::vector<BoostRound>& rounds() const noexcept { return rounds_; }
    std::size_t trained_rounds() const noexcept { return members_.size(); }
    std::size_t n_features() const noexcept { return members_.front().tree.n_features(); }

    std::string to_json() const;
    static EnsembleModel from_json(std::string_view text);

    friend bool operator==(const EnsembleModel& a, const EnsembleModel& b) noexcept;

private:
    EnsembleKind kind_;
    std::vector<EnsembleMember> members_;
    std::vector<BoostRound> rounds_;
};

struct Predictions {
    std::vector<int> labels;
    /// Attack score in [0, 1].
    std::vector<double> scores;
};

EnsembleModel fit_bagging(const DataTable& table, const EnsembleParams& params);
EnsembleModel fit_adaboost(const DataTable& table, const EnsembleParams& params);
EnsembleModel fit_rusboost(const DataTable& table, const EnsembleParams& params);
/// Dispatches on params.kind.
EnsembleModel fit_ensemble(const DataTable& table, const EnsembleParams& params);

Predictions predict_ensemble(const EnsembleModel& model, const DataTable& table);
Predictions predict_ensemble(const EnsembleModel& model, const Matrix& features);

/// Cap applied when a round's weighted error is at or below kPerfectRoundError.
inline constexpr double kPerfectRoundError = 1e-10;

/// learning_rate * 0.5 * ln((1 - error) / error); errors at or below
/// kPerfectRoundError use kPerfectRoundError.
double boosting_alpha(double weighted_error, double learning_rate);

/// Multiplies weights[i] by exp(-alpha * y_i * h_i) (labels and predictions in
/// {0, 1}, mapped to -1/+1) and renormalizes to sum 1. Returns the normalizer.
double boosting_reweight(std::span<double> weights, std::span<const int> labels,
                         std::span<const int> predictions, double alpha);

/// Majority rows drawn per RUSBoost round: round-half-up(minority * ratio),
/// capped at the majority count.
std::size_t rus_majority_sample_size(std::size_t minority_count, std::size_t majority_count, double ratio);

}  // namespace iids
