#include "iids/bayesopt.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "iids/error.hpp"

namespace iids {

// ---------------------------------------------------------------------------
// Search space

Dimension Dimension::categorical(std::string name, std::vector<std::string> levels) {
    Dimension d;
    d.name = std::move(name);
    d.type = Type::kCategorical;
    d.levels = std::move(levels);
    d.min = 0.0;
    d.max = static_cast<double>(d.levels.size()) - 1.0;
    return d;
}

Dimension Dimension::integer(std::string name, long long min, long long max, bool log_scale) {
    Dimension d;
    d.name = std::move(name);
    d.type = Type::kInteger;
    d.min = static_cast<double>(min);
    d.max = static_cast<double>(max);
    d.log_scale = log_scale;
    return d;
}

Dimension Dimension::continuous(std::string name, double min, double max, bool log_scale) {
    Dimension d;
    d.name = std::move(name);
    d.type = Type::kContinuous;
    d.min = min;
    d.max = max;
    d.log_scale = log_scale;
    return d;
}

SearchSpace::SearchSpace(std::vector<Dimension> dimensions) : dims_(std::move(dimensions)) {
    if (dims_.empty()) throw std::invalid_argument("SearchSpace: no dimensions");
    for (const auto& d : dims_) {
        if (d.type == Dimension::Type::kCategorical) {
            if (d.levels.size() < 2) throw std::invalid_argument("SearchSpace: '" + d.name + "' needs >= 2 levels");
        } else {
            if (!(d.min < d.max)) throw std::invalid_argument("SearchSpace: '" + d.name + "' needs min < max");
            if (d.log_scale && !(d.min > 0.0)) {
                throw std::invalid_argument("SearchSpace: log-scaled '" + d.name + "' needs min > 0");
            }
        }
        if (find(d.name) != static_cast<std::size_t>(&d - dims_.data())) {
            throw std::invalid_argument("SearchSpace: duplicate dimension '" + d.name + "'");
        }
        encoded_size_ += d.encoded_size();
    }
}

std::size_t SearchSpace::find(std::string_view name) const noexcept {
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (dims_[i].name == name) return i;
    }
    return dims_.size();
}

namespace {

double forward(const Dimension& d, double v) { return d.log_scale ? std::log(v) : v; }

double to_unit(const Dimension& d, double v) {
    const double lo = forward(d, d.min);
    const double hi = forward(d, d.max);
    return (forward(d, v) - lo) / (hi - lo);
}

double from_unit(const Dimension& d, double t) {
    const double lo = forward(d, d.min);
    const double hi = forward(d, d.max);
    const double raw = lo + t * (hi - lo);
    return d.log_scale ? std::exp(raw) : raw;
}

double decode_scalar(const Dimension& d, double t) {
    double v = from_unit(d, std::clamp(t, 0.0, 1.0));
    if (d.type == Dimension::Type::kInteger) v = std::floor(v + 0.5);
    return std::clamp(v, d.min, d.max);
}

bool value_valid(const Dimension& d, double v) {
    if (!std::isfinite(v)) return false;
    switch (d.type) {
        case Dimension::Type::kCategorical:
            return v == std::floor(v) && v >= 0.0 && v < static_cast<double>(d.levels.size());
        case Dimension::Type::kInteger:
            return v == std::floor(v) && v >= d.min && v <= d.max;
        case Dimension::Type::kContinuous:
            return v >= d.min && v <= d.max;
    }
    return false;
}

}  // namespace

bool is_valid(const HyperPoint& p, const SearchSpace& space) noexcept {
    if (p.values.size() != space.size()) return false;
    for (std::size_t i = 0; i < space.size(); ++i) {
        if (!value_valid(space.dimensions()[i], p.values[i])) return false;
    }
    return true;
}

Eigen::VectorXd encode_point(const HyperPoint& p, const SearchSpace& space) {
    if (p.values.size() != space.size()) throw std::invalid_argument("encode_point: dimension count mismatch");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.encoded_size()));
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < space.size(); ++i) {
        const auto& d = space.dimensions()[i];
        const double v = p.values[i];
        if (!value_valid(d, v)) {
            throw std::invalid_argument("encode_point: value " + fmt::format("{}", v) + " outside domain of '" +
                                        d.name + "'");
        }
        if (d.type == Dimension::Type::kCategorical) {
            out[at + static_cast<Eigen::Index>(v)] = 1.0;
            at += static_cast<Eigen::Index>(d.levels.size());
        } else {
            out[at++] = to_unit(d, v);
        }
    }
    return out;
}

HyperPoint decode_point(const Eigen::VectorXd& v, const SearchSpace& space) {
    if (static_cast<std::size_t>(v.size()) != space.encoded_size()) {
        throw std::invalid_argument("decode_point: vector has " + std::to_string(v.size()) + " entries, space needs " +
                                    std::to_string(space.encoded_size()));
    }
    HyperPoint p;
    Eigen::Index at = 0;
    for (const auto& d : space.dimensions()) {
        if (d.type == Dimension::Type::kCategorical) {
            const auto width = static_cast<Eigen::Index>(d.levels.size());
            Eigen::Index best = 0;
            for (Eigen::Index k = 1; k < width; ++k) {
                if (v[at + k] > v[at + best]) best = k;
            }
            p.values.push_back(static_cast<double>(best));
            at += width;
        } else {
            p.values.push_back(decode_scalar(d, v[at++]));
        }
    }
    return p;
}

HyperPoint point_from_unit(std::span<const double> u, const SearchSpace& space) {
    if (u.size() != space.size()) throw std::invalid_argument("point_from_unit: dimension count mismatch");
    HyperPoint p;
    for (std::size_t i = 0; i < space.size(); ++i) {
        const auto& d = space.dimensions()[i];
        if (d.type == Dimension::Type::kCategorical) {
            const auto levels = static_cast<double>(d.levels.size());
            p.values.push_back(std::min(std::floor(u[i] * levels), levels - 1.0));
        } else {
            p.values.push_back(decode_scalar(d, u[i]));
        }
    }
    return p;
}

HyperPoint sample_point(const SearchSpace& space, Rng& rng) {
    std::vector<double> u(space.size());
    for (auto& x : u) x = rng.uniform();
    return point_from_unit(u, space);
}

std::string describe(const HyperPoint& p, const SearchSpace& space) {
    std::string out;
    for (std::size_t i = 0; i < space.size() && i < p.values.size(); ++i) {
        const auto& d = space.dimensions()[i];
        if (!out.empty()) out += ' ';
        out += d.name + '=';
        if (d.type == Dimension::Type::kCategorical) {
            out += d.levels.at(static_cast<std::size_t>(p.values[i]));
        } else {
            out += fmt::format("{:g}", p.values[i]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gaussian process

KernelConfig KernelConfig::unit(std::size_t dims) { return KernelConfig{1.0, std::vector<double>(dims, 1.0)}; }

double matern52(const KernelConfig& kernel, const Eigen::Ref<const Eigen::VectorXd>& a,
                const Eigen::Ref<const Eigen::VectorXd>& b) {
    double r2 = 0.0;
    for (Eigen::Index k = 0; k < a.size(); ++k) {
        const double d = (a[k] - b[k]) / kernel.length_scales[static_cast<std::size_t>(k)];
        r2 += d * d;
    }
    const double sr = std::sqrt(5.0 * r2);
    return kernel.amplitude2 * (1.0 + sr + 5.0 * r2 / 3.0) * std::exp(-sr);
}

namespace {

void check_kernel(const KernelConfig& kernel, Eigen::Index dims) {
    if (!(kernel.amplitude2 > 0.0)) throw std::invalid_argument("KernelConfig: amplitude must be positive");
    if (static_cast<Eigen::Index>(kernel.length_scales.size()) != dims) {
        throw std::invalid_argument("KernelConfig: need one length-scale per encoded dimension");
    }
    for (const double l : kernel.length_scales) {
        if (!(l > 0.0)) throw std::invalid_argument("KernelConfig: length-scales must be positive");
    }
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const KernelConfig& kernel) {
    const auto n = x.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = kernel.amplitude2;
        for (Eigen::Index j = 0; j < i; ++j) k(i, j) = k(j, i) = matern52(kernel, x.row(i).transpose(), x.row(j).transpose());
    }
    return k;
}

constexpr double kLogTwoPi = 1.8378770664093454836;

}  // namespace

GPSurrogate gp_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelConfig& kernel,
                   double noise_variance) {
    if (x.rows() == 0) throw std::invalid_argument("gp_fit: need at least one observation");
    if (y.size() != x.rows()) throw std::invalid_argument("gp_fit: target count != design rows");
    if (!(noise_variance >= 0.0)) throw std::invalid_argument("gp_fit: noise variance must be >= 0");
    check_kernel(kernel, x.cols());

    GPSurrogate s;
    s.x_ = x;
    s.y_ = y;
    s.y_mean_ = y.mean();
    s.kernel_ = kernel;
    const Eigen::MatrixXd k = covariance(x, kernel);
    const double base = std::max(noise_variance, kMinNoiseVariance);

    bool ok = false;
    for (const double jitter : {0.0, 1e-10, 1e-8, 1e-6, 1e-4}) {
        s.noise_ = base + jitter;
        Eigen::MatrixXd kn = k;
        kn.diagonal().array() += s.noise_;
        s.llt_.compute(kn);
        if (s.llt_.info() == Eigen::Success) {
            ok = true;
            break;
        }
    }
    if (!ok) throw NumericalError("gp_fit: covariance is not positive definite even with 1e-4 jitter");

    const Eigen::VectorXd centered = y.array() - s.y_mean_;
    s.alpha_ = s.llt_.solve(centered);
    const Eigen::MatrixXd l = s.llt_.matrixL();
    const double log_det_half = l.diagonal().array().log().sum();
    s.log_marginal_likelihood_ = -0.5 * centered.dot(s.alpha_) - log_det_half -
                                 0.5 * static_cast<double>(x.rows()) * kLogTwoPi;
    return s;
}

GPSurrogate::Posterior GPSurrogate::predict(const Eigen::VectorXd& x) const {
    if (x.size() != x_.cols()) {
        throw std::invalid_argument("gp_predict: query has " + std::to_string(x.size()) + " entries, expected " +
                                    std::to_string(x_.cols()));
    }
    Eigen::VectorXd ks(x_.rows());
    for (Eigen::Index i = 0; i < x_.rows(); ++i) ks[i] = matern52(kernel_, x_.row(i).transpose(), x);
    const double mean = ks.dot(alpha_) + y_mean_;
    const Eigen::VectorXd v = llt_.matrixL().solve(ks);
    const double var = kernel_.amplitude2 - v.squaredNorm();
    return {mean, std::max(var, 0.0)};
}

double expected_improvement(double mean, double variance, double f_best, double xi) {
    const double improvement = f_best - mean - xi;
    if (!(variance > 0.0)) return std::max(0.0, improvement);
    const double sigma = std::sqrt(variance);
    const double z = improvement / sigma;
    const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    return std::max(0.0, improvement * cdf + sigma * pdf);
}

// ---------------------------------------------------------------------------
// Kernel hyperparameters

const KernelGrid& KernelGrid::standard() {
    static const KernelGrid grid = [] {
        KernelGrid g;
        for (int i = -12; i <= 4; ++i) g.amplitude2.push_back(std::pow(10.0, 0.5 * i));
        for (int i = -8; i <= 4; ++i) g.length_scale.push_back(std::pow(10.0, 0.25 * i));
        return g;
    }();
    return grid;
}

double log_marginal_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelConfig& kernel,
                               double noise_variance) {
    const auto n = x.rows();
    Eigen::MatrixXd k = covariance(x, kernel);
    k.diagonal().array() += std::max(noise_variance, kMinNoiseVariance);
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const Eigen::VectorXd centered = y.array() - y.mean();
    const Eigen::VectorXd alpha = llt.solve(centered);
    const Eigen::MatrixXd l = llt.matrixL();
    const double value = -0.5 * centered.dot(alpha) - l.diagonal().array().log().sum() -
                         0.5 * static_cast<double>(n) * kLogTwoPi;
    return std::isfinite(value) ? value : -std::numeric_limits<double>::infinity();
}

KernelFit fit_kernel(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::span<const double> noise_grid,
                     std::uint64_t seed) {
    if (x.rows() < 2) throw std::invalid_argument("fit_kernel: need at least two observations");
    if (y.size() != x.rows()) throw std::invalid_argument("fit_kernel: target count != design rows");
    if (noise_grid.empty()) throw std::invalid_argument("fit_kernel: empty noise grid");
    const auto& grid = KernelGrid::standard();
    const std::size_t d = static_cast<std::size_t>(x.cols());
    const auto index_of_one = [](const std::vector<double>& g) {
        return static_cast<std::size_t>(std::min_element(g.begin(), g.end(),
                                                         [](double a, double b) {
                                                             return std::abs(std::log(a)) < std::abs(std::log(b));
                                                         }) -
                                        g.begin());
    };

    // State: [amplitude index, length-scale index per dim..., noise index].
    using State = std::vector<std::size_t>;
    const std::size_t n_coords = d + 2;
    auto sizes = [&](std::size_t c) {
        if (c == 0) return grid.amplitude2.size();
        if (c == n_coords - 1) return noise_grid.size();
        return grid.length_scale.size();
    };
    auto evaluate = [&](const State& s) {
        KernelConfig k;
        k.amplitude2 = grid.amplitude2[s[0]];
        for (std::size_t j = 0; j < d; ++j) k.length_scales.push_back(grid.length_scale[s[1 + j]]);
        return log_marginal_likelihood(x, y, k, noise_grid[s.back()]);
    };

    State start(n_coords, index_of_one(grid.length_scale));
    start[0] = index_of_one(grid.amplitude2);
    start.back() = 0;
    std::vector<State> starts{start};
    Rng rng(seed);
    for (int r = 0; r < 3; ++r) {
        State s(n_coords);
        for (std::size_t c = 0; c < n_coords; ++c) s[c] = static_cast<std::size_t>(rng.below(sizes(c)));
        starts.push_back(std::move(s));
    }

    State best_state = start;
    double best = evaluate(start);
    for (auto state : starts) {
        double value = evaluate(state);
        for (int sweep = 0; sweep < 25; ++sweep) {
            bool improved = false;
            for (std::size_t c = 0; c < n_coords; ++c) {
                const std::size_t keep = state[c];
                std::size_t arg = keep;
                for (std::size_t i = 0; i < sizes(c); ++i) {
                    if (i == keep) continue;
                    state[c] = i;
                    const double v = evaluate(state);
                    if (v > value + 1e-12) {
                        value = v;
                        arg = i;
                        improved = true;
                    }
                }
                state[c] = arg;
            }
            if (!improved) break;
        }
        if (value > best + 1e-12) {
            best = value;
            best_state = state;
        }
    }
    if (!std::isfinite(best)) throw NumericalError("fit_kernel: no candidate covariance could be factorized");

    KernelFit fit;
    fit.kernel.amplitude2 = grid.amplitude2[best_state[0]];
    for (std::size_t j = 0; j < d; ++j) fit.kernel.length_scales.push_back(grid.length_scale[best_state[1 + j]]);
    fit.noise_variance = noise_grid[best_state.back()];
    fit.log_marginal_likelihood = best;
    return fit;
}

// ---------------------------------------------------------------------------
// Acquisition

std::size_t best_candidate(const GPSurrogate& s, std::span<const Eigen::VectorXd> encoded_candidates,
                           double f_best, double xi) {
    if (encoded_candidates.empty()) throw std::invalid_argument("best_candidate: no candidates");
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < encoded_candidates.size(); ++i) {
        const auto post = s.predict(encoded_candidates[i]);
        const double ei = expected_improvement(post.mean, post.variance, f_best, xi);
        if (ei > best) {
            best = ei;
            arg = i;
        }
    }
    return arg;
}

HyperPoint suggest_next(const GPSurrogate& s, const SearchSpace& space, Rng& rng, std::size_t n_candidates,
                        double xi, std::span<const HyperPoint> evaluated) {
    if (n_candidates == 0) throw std::invalid_argument("suggest_next: n_candidates must be positive");
    const double f_best = s.targets().minCoeff();
    std::vector<HyperPoint> points;
    std::vector<Eigen::VectorXd> encoded;
    points.reserve(n_candidates);
    encoded.reserve(n_candidates);
    auto seen = [&](const HyperPoint& p) { return std::find(evaluated.begin(), evaluated.end(), p) != evaluated.end(); };
    for (std::size_t c = 0; c < n_candidates; ++c) {
        HyperPoint p = sample_point(space, rng);
        for (int retry = 0; retry < 10 && seen(p); ++retry) p = sample_point(space, rng);
        encoded.push_back(encode_point(p, space));
        points.push_back(std::move(p));
    }
    return points[best_candidate(s, encoded, f_best, xi)];
}

// ---------------------------------------------------------------------------
// Loop

std::size_t OptimizationTrace::best_index() const {
    if (trials.empty()) throw std::logic_error("OptimizationTrace: no trials");
    std::size_t arg = 0;
    for (std::size_t i = 1; i < trials.size(); ++i) {
        if (trials[i].objective < trials[arg].objective) arg = i;
    }
    return arg;
}

namespace {

double radical_inverse(std::uint64_t index, std::uint64_t base) {
    double result = 0.0;
    double f = 1.0 / static_cast<double>(base);
    while (index > 0) {
        result += f * static_cast<double>(index % base);
        index /= base;
        f /= static_cast<double>(base);
    }
    return result;
}

constexpr std::uint64_t kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

class TraceRecorder {
public:
    TraceRecorder(const Objective& objective, const std::function<void(const Trial&, double)>& on_trial)
        : objective_(objective), on_trial_(on_trial) {}

    void evaluate(const HyperPoint& p) {
        Trial t;
        t.iteration = trace_.trials.size() + 1;
        t.point = p;
        const auto start = std::chrono::steady_clock::now();
        try {
            t.objective = objective_(p);
            if (!std::isfinite(t.objective)) {
                t.failed = true;
                t.note = "objective returned a non-finite value";
            }
        } catch (const std::exception& e) {
            t.failed = true;
            t.note = e.what();
        }
        if (t.failed) t.objective = kFailedObjective;
        t.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const double best = trace_.best_so_far.empty() ? t.objective : std::min(trace_.best_so_far.back(), t.objective);
        trace_.best_so_far.push_back(best);
        trace_.trials.push_back(std::move(t));
        if (on_trial_) on_trial_(trace_.trials.back(), best);
    }

    OptimizationTrace& trace() noexcept { return trace_; }

private:
    const Objective& objective_;
    const std::function<void(const Trial&, double)>& on_trial_;
    OptimizationTrace trace_;
};

}  // namespace

std::vector<HyperPoint> initial_design(const SearchSpace& space, std::size_t count, std::uint64_t seed) {
    if (space.size() > std::size(kPrimes)) throw std::invalid_argument("initial_design: too many dimensions");
    Rng rng(derive_seed(seed, 0x68616c746f6eULL));
    std::vector<double> shift(space.size());
    for (auto& s : shift) s = rng.uniform();
    std::vector<HyperPoint> out;
    std::vector<double> u(space.size());
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = 0; j < space.size(); ++j) {
            const double h = radical_inverse(i + 1, kPrimes[j]) + shift[j];
            u[j] = h - std::floor(h);
        }
        out.push_back(point_from_unit(u, space));
    }
    return out;
}

OptimizationTrace optimize(const Objective& objective, const SearchSpace& space, const OptimizeOptions& options) {
    if (options.n_init < 1 || options.budget < options.n_init) {
        throw std::invalid_argument("optimize: need budget >= n_init >= 1");
    }
    if (options.xi < 0.0) throw std::invalid_argument("optimize: xi must be >= 0");
    TraceRecorder rec(objective, options.on_trial);
    for (const auto& p : initial_design(space, options.n_init, options.seed)) rec.evaluate(p);

    while (rec.trace().trials.size() < options.budget) {
        const auto& trials = rec.trace().trials;
        const std::size_t iter = trials.size();
        const auto n = static_cast<Eigen::Index>(trials.size());
        Eigen::MatrixXd x(n, static_cast<Eigen::Index>(space.encoded_size()));
        Eigen::VectorXd y(n);
        std::vector<HyperPoint> evaluated;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& t = trials[static_cast<std::size_t>(i)];
            x.row(i) = encode_point(t.point, space).transpose();
            y[i] = options.log_targets ? std::log(std::max(t.objective, kLogTargetFloor)) : t.objective;
            evaluated.push_back(t.point);
        }
        Rng rng(derive_seed(options.seed, 0x10000 + iter));
        HyperPoint next;
        try {
            const KernelFit fit = fit_kernel(x, y, options.noise_grid, derive_seed(options.seed, iter));
            const GPSurrogate gp = gp_fit(x, y, fit.kernel, fit.noise_variance);
            next = suggest_next(gp, space, rng, options.n_candidates, options.xi, evaluated);
        } catch (const NumericalError&) {
            next = sample_point(space, rng);
        }
        rec.evaluate(next);
    }
    return std::move(rec.trace());
}

OptimizationTrace random_search(const Objective& objective, const SearchSpace& space, std::size_t budget,
                                std::uint64_t seed) {
    if (budget < 1) throw std::invalid_argument("random_search: budget must be positive");
    const std::function<void(const Trial&, double)> none;
    TraceRecorder rec(objective, none);
    Rng rng(derive_seed(seed, 0x72616e646f6dULL));
    for (std::size_t i = 0; i < budget; ++i) rec.evaluate(sample_point(space, rng));
    return std::move(rec.trace());
}

std::string trace_to_csv(const OptimizationTrace& trace, const SearchSpace& space, bool include_timing) {
    const std::size_t kind = space.find("kind");
    const std::size_t learners = space.find("n_learners");
    const std::size_t leaf = space.find("min_leaf_size");
    const std::size_t rate = space.find("learning_rate");
    const auto has = [&](std::size_t i) { return i < space.size(); };

    std::string out = "iteration,kind,n_learners,min_leaf_size,learning_rate,objective,best_so_far,duration_s\n";
    for (std::size_t i = 0; i < trace.trials.size(); ++i) {
        const auto& t = trace.trials[i];
        const auto& v = t.point.values;
        const std::string kind_s =
            has(kind) ? space.dimensions()[kind].levels.at(static_cast<std::size_t>(v[kind])) : std::string("Tree");
        const std::string learners_s = has(learners) ? fmt::format("{:.0f}", v[learners]) : std::string("1");
        const std::string leaf_s = has(leaf) ? fmt::format("{:.0f}", v[leaf]) : std::string();
        const std::string rate_s = has(rate) ? fmt::format("{:.6g}", v[rate]) : std::string();
        out += fmt::format("{},{},{},{},{},{:.6f},{:.6f},{:.3f}\n", t.iteration, kind_s, learners_s, leaf_s, rate_s,
                           t.objective, trace.best_so_far[i], include_timing ? t.duration_s : 0.0);
    }
    return out;
}

}  // namespace iids
