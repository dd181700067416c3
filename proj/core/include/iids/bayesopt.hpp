#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "iids/rng.hpp"

namespace iids {

// ---------------------------------------------------------------------------
// Search space

struct Dimension {
    enum class Type { kCategorical, kInteger, kContinuous };

    std::string name;
    Type type = Type::kContinuous;
    std::vector<std::string> levels;
    double min = 0.0;
    double max = 1.0;
    bool log_scale = false;

    static Dimension categorical(std::string name, std::vector<std::string> levels);
    static Dimension integer(std::string name, long long min, long long max, bool log_scale = false);
    static Dimension continuous(std::string name, double min, double max, bool log_scale = false);

    /// Width of this dimension's block in the encoded vector.
    std::size_t encoded_size() const noexcept { return type == Type::kCategorical ? levels.size() : 1; }
};

class SearchSpace {
public:
    SearchSpace() = default;
    explicit SearchSpace(std::vector<Dimension> dimensions);

    const std::vector<Dimension>& dimensions() const noexcept { return dims_; }
    std::size_t size() const noexcept { return dims_.size(); }
    std::size_t encoded_size() const noexcept { return encoded_size_; }
    /// Index of the named dimension, or size() when absent.
    std::size_t find(std::string_view name) const noexcept;

private:
    std::vector<Dimension> dims_;
    std::size_t encoded_size_ = 0;
};

/// One value per dimension: level id, integer or real, stored as double.
struct HyperPoint {
    std::vector<double> values;

    friend bool operator==(const HyperPoint&, const HyperPoint&) = default;
};

bool is_valid(const HyperPoint& p, const SearchSpace& space) noexcept;
Eigen::VectorXd encode_point(const HyperPoint& p, const SearchSpace& space);
HyperPoint decode_point(const Eigen::VectorXd& v, const SearchSpace& space);
/// Maps a point of the unit cube (one coordinate per dimension) to a valid HyperPoint.
HyperPoint point_from_unit(std::span<const double> u, const SearchSpace& space);
HyperPoint sample_point(const SearchSpace& space, Rng& rng);
std::string describe(const HyperPoint& p, const SearchSpace& space);

// ---------------------------------------------------------------------------
// Gaussian process

struct KernelConfig {
    double amplitude2 = 1.0;
    std::vector<double> length_scales;

    /// Unit amplitude and unit length-scale in every dimension.
    static KernelConfig unit(std::size_t dims);
};

/// Matern-5/2: a^2 (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r), r the
/// length-scaled Euclidean distance.
double matern52(const KernelConfig& kernel, const Eigen::Ref<const Eigen::VectorXd>& a,
                const Eigen::Ref<const Eigen::VectorXd>& b);

/// Noise never drops below this; it keeps K + noise I positive definite.
inline constexpr double kMinNoiseVariance = 1e-10;

class GPSurrogate {
public:
    struct Posterior {
        double mean;
        double variance;
    };

    Posterior predict(const Eigen::VectorXd& x) const;
    double log_marginal_likelihood() const noexcept { return log_marginal_likelihood_; }

    const Eigen::MatrixXd& design() const noexcept { return x_; }
    const Eigen::VectorXd& targets() const noexcept { return y_; }
    double target_mean() const noexcept { return y_mean_; }
    const KernelConfig& kernel() const noexcept { return kernel_; }
    /// Noise variance actually used, including any jitter added for stability.
    double noise_variance() const noexcept { return noise_; }
    /// Lower-triangular Cholesky factor of K + noise I.
    Eigen::MatrixXd factor() const { return llt_.matrixL(); }

private:
    friend GPSurrogate gp_fit(const Eigen::MatrixXd&, const Eigen::VectorXd&, const KernelConfig&, double);

    Eigen::MatrixXd x_;
    Eigen::VectorXd y_;
    double y_mean_ = 0.0;
    KernelConfig kernel_;
    double noise_ = kMinNoiseVariance;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd alpha_;
    double log_marginal_likelihood_ = 0.0;
};

/// Conditions a zero-mean GP on mean-centered targets. Throws NumericalError
/// when the covariance stays indefinite after jitter escalation to 1e-4.
GPSurrogate gp_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelConfig& kernel,
                   double noise_variance);

inline GPSurrogate::Posterior gp_predict(const GPSurrogate& s, const Eigen::VectorXd& x) { return s.predict(x); }

/// Minimization EI with exploration margin xi.
double expected_improvement(double mean, double variance, double f_best, double xi);

struct KernelFit {
    KernelConfig kernel;
    double noise_variance = kMinNoiseVariance;
    double log_marginal_likelihood = 0.0;
};

/// Hyperparameter grids searched by fit_kernel.
struct KernelGrid {
    std::vector<double> amplitude2;
    std::vector<double> length_scale;

    /// amplitude^2 in 10^[-6, 2], length-scale in 10^[-2, 1]; both include 1.
    static const KernelGrid& standard();
};

inline const std::vector<double> kDefaultNoiseGrid{1e-10, 1e-8, 1e-6, 1e-5, 1e-4, 1e-3};

/// Log marginal likelihood of (x, y) under the given hyperparameters, or
/// -infinity when the covariance cannot be factorized.
double log_marginal_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelConfig& kernel,
                               double noise_variance);

/// Maximizes the log marginal likelihood by coordinate search over the
/// standard grids. The unit kernel with noise_grid.front() is the first
/// candidate and is only replaced by a strictly better one; three further
/// restarts begin from seeded random grid positions.
KernelFit fit_kernel(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::span<const double> noise_grid,
                     std::uint64_t seed);

/// Index of the candidate with the largest EI; ties go to the earliest.
std::size_t best_candidate(const GPSurrogate& s, std::span<const Eigen::VectorXd> encoded_candidates,
                           double f_best, double xi);

/// Draws n_candidates random points (redrawing up to 10 times any point that
/// is already in `evaluated`), scores EI against the surrogate's best target
/// and returns the argmax.
HyperPoint suggest_next(const GPSurrogate& s, const SearchSpace& space, Rng& rng, std::size_t n_candidates,
                        double xi, std::span<const HyperPoint> evaluated = {});

// ---------------------------------------------------------------------------
// Optimization loop

/// Value recorded for an objective call that throws or returns a non-finite value.
inline constexpr double kFailedObjective = 1.0;
/// Lower clamp applied before taking logs of objective values.
inline constexpr double kLogTargetFloor = 1e-4;

struct Trial {
    std::size_t iteration = 0;  // 1-based
    HyperPoint point;
    double objective = 0.0;
    double duration_s = 0.0;
    bool failed = false;
    std::string note;
};

struct OptimizationTrace {
    std::vector<Trial> trials;
    std::vector<double> best_so_far;

    /// Index of the first trial reaching the final minimum.
    std::size_t best_index() const;
};

struct OptimizeOptions {
    std::size_t budget = 30;
    std::size_t n_init = 5;
    double xi = 0.01;
    std::uint64_t seed = 0;
    std::size_t n_candidates = 2000;
    std::vector<double> noise_grid = kDefaultNoiseGrid;
    /// Fit the surrogate to log(max(objective, kLogTargetFloor)) rather than the
    /// raw values. Suits non-negative objectives such as error rates, where a
    /// few poor trials would otherwise swamp the differences near the optimum.
    /// The trace always records raw values.
    bool log_targets = true;
    /// Called after every trial; for progress reporting.
    std::function<void(const Trial&, double best_so_far)> on_trial;
};

using Objective = std::function<double(const HyperPoint&)>;

/// Randomized Halton points (Cranley-Patterson shift drawn from `seed`).
std::vector<HyperPoint> initial_design(const SearchSpace& space, std::size_t count, std::uint64_t seed);

OptimizationTrace optimize(const Objective& objective, const SearchSpace& space, const OptimizeOptions& options);
/// Uniform random points; the baseline BO has to beat.
OptimizationTrace random_search(const Objective& objective, const SearchSpace& space, std::size_t budget,
                                std::uint64_t seed);

/// Trace CSV: iteration,kind,n_learners,min_leaf_size,learning_rate,objective,best_so_far,duration_s.
/// Columns are filled from dimensions of the same name; a space without a
/// `kind` dimension reports kind `Tree` and n_learners 1. Durations are
/// written as 0 when `include_timing` is false.
std::string trace_to_csv(const OptimizationTrace& trace, const SearchSpace& space, bool include_timing = true);

}  // namespace iids
