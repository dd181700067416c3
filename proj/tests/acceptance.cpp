// Acceptance harness: one PASS/FAIL/SKIP line per criterion.
//
// The reference dataset is read from IIDS_REFERENCE_CSV (ingestion options
// from IIDS_REFERENCE_CONFIG, if set); criteria that need it are skipped
// when it is absent.

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "iids/bayesopt.hpp"
#include "iids/commands.hpp"
#include "iids/data.hpp"
#include "iids/ensemble.hpp"
#include "iids/eval.hpp"
#include "iids/rng.hpp"
#include "iids/tree.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace iids;
namespace fs = std::filesystem;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
    Status status;
    std::string detail;
};

Outcome pass_if(bool ok, std::string detail) { return {ok ? Status::kPass : Status::kFail, std::move(detail)}; }

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::optional<fs::path> reference_csv() {
    const char* p = std::getenv("IIDS_REFERENCE_CSV");
    if (p == nullptr || *p == '\0' || !fs::is_regular_file(p)) return std::nullopt;
    return fs::path(p);
}

IngestConfig reference_ingest() {
    const char* p = std::getenv("IIDS_REFERENCE_CONFIG");
    return p != nullptr && *p != '\0' ? IngestConfig::from_file(p) : IngestConfig{};
}

// ---------------------------------------------------------------------------

Outcome holdout_reproduction() {
    const auto path = reference_csv();
    if (!path) return {Status::kSkip, "IIDS_REFERENCE_CSV not set or unreadable; reference dataset unavailable"};
    const auto t0 = Clock::now();
    const DataTable all = load_csv(*path, reference_ingest());
    const std::uint64_t seed = 42;
    const auto [train, test] = stratified_split(all, 0.2, derive_seed(seed, 1));

    const SearchSpace space = default_ensemble_space();
    OptimizeOptions opts;
    opts.seed = derive_seed(seed, 2);
    const auto objective = [&](const HyperPoint& p) {
        return cv_error(ModelSpec{ensemble_params_from_point(p, space, derive_seed(seed, 3))}, train, 5,
                        derive_seed(seed, 4), 0);
    };
    const auto trace = optimize(objective, space, opts);
    const auto& best = trace.trials[trace.best_index()];
    std::vector<NamedModel> models{{"DT", TreeParams{}},
                                   {"Optimized Ensemble Trees",
                                    ensemble_params_from_point(best.point, space, derive_seed(seed, 3), 0)}};
    const auto reports = compare_models(train, test, models);
    const auto& dt = reports[0];
    const auto& opt = reports[1];
    const bool ok = opt.accuracy >= 0.974 && opt.precision >= 0.946 && opt.f_score >= 0.960 &&
                    opt.accuracy > dt.accuracy;
    return pass_if(ok, fmt::format("optimized acc {:.2f}% prec {:.2f}% F {:.3f} (best {}), DT acc {:.2f}%, {:.0f} s",
                                   100 * opt.accuracy, 100 * opt.precision, opt.f_score, describe(best.point, space),
                                   100 * dt.accuracy, seconds_since(t0)));
}

Outcome bo_vs_random() {
    const auto t0 = Clock::now();
    int wins = 0;
    bool monotone = true;
    bool within_budget = true;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const DataTable all = synthesize_imbalanced(2487, 1110, 20, seed);
        const auto [train, test] = stratified_split(all, 0.2, derive_seed(seed, 1));
        const SearchSpace space = default_ensemble_space();
        const auto objective = [&](const HyperPoint& p) {
            return cv_error(ModelSpec{ensemble_params_from_point(p, space, derive_seed(seed, 3))}, train, 5,
                            derive_seed(seed, 4), 1);
        };
        OptimizeOptions opts;
        opts.budget = 30;
        opts.seed = derive_seed(seed, 2);
        const auto bo = optimize(objective, space, opts);
        const auto rs = random_search(objective, space, 30, derive_seed(seed, 5));

        for (std::size_t i = 1; i < bo.best_so_far.size(); ++i) monotone = monotone && bo.best_so_far[i] <= bo.best_so_far[i - 1];
        within_budget = within_budget && bo.trials.size() == 30 && bo.best_index() < 30;
        const double bo_final = bo.best_so_far.back();
        const double rs_final = rs.best_so_far.back();
        wins += bo_final <= rs_final;
        per_seed += fmt::format(" s{}:{:.4f}@{}/{:.4f}", seed, bo_final, bo.best_index() + 1, rs_final);
    }
    return pass_if(monotone && within_budget && wins >= 3,
                   fmt::format("BO <= random in {}/5 seeds; BO final@iter/random:{}; {:.0f} s", wins, per_seed,
                               seconds_since(t0)));
}

Outcome metrics_oracle() {
    const auto t0 = Clock::now();
    Rng rng(2718);
    double worst = 0.0;
    bool counts_ok = true;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(rng.below(500));
        std::vector<int> truth(n), pred(n);
        for (std::size_t i = 0; i < n; ++i) {
            truth[i] = static_cast<int>(rng.below(2));
            pred[i] = static_cast<int>(rng.below(2));
        }
        const auto c = oracle::recount(truth, pred);
        const auto r = metrics(confusion(truth, pred));
        counts_ok = counts_ok && r.matrix.tp == c.tp && r.matrix.tn == c.tn && r.matrix.fp == c.fp && r.matrix.fn == c.fn;
        const auto d = [](std::size_t a, std::size_t b) { return static_cast<double>(a) / static_cast<double>(b); };
        const double acc = d(c.tp + c.tn, n);
        const double prec = c.tp + c.fp ? d(c.tp, c.tp + c.fp) : 0.0;
        const double rec = c.tp + c.fn ? d(c.tp, c.tp + c.fn) : 0.0;
        const double f = c.tp ? d(2 * c.tp, 2 * c.tp + c.fp + c.fn) : 0.0;
        worst = std::max({worst, std::abs(r.accuracy - acc), std::abs(r.precision - prec), std::abs(r.recall - rec),
                          std::abs(r.f_score - f)});
    }
    const double elapsed = seconds_since(t0);
    return pass_if(counts_ok && worst <= 1e-12 && elapsed < 1.0,
                   fmt::format("1000 matrices, max deviation {:.2e}, {:.3f} s", worst, elapsed));
}

Outcome tree_oracle() {
    const auto t0 = Clock::now();
    Rng rng(1618);
    int mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto rows = static_cast<Eigen::Index>(2 + rng.below(199));
        const auto cols = static_cast<Eigen::Index>(1 + rng.below(8));
        const bool coarse = rng.below(2) == 0;
        Matrix x(rows, cols);
        std::vector<int> y(static_cast<std::size_t>(rows));
        std::vector<double> w(static_cast<std::size_t>(rows), 1.0);
        oracle::Dense dense(static_cast<std::size_t>(rows), std::vector<double>(static_cast<std::size_t>(cols)));
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) {
                x(i, j) = coarse ? static_cast<double>(rng.below(6)) : rng.uniform(-3.0, 3.0);
                dense[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = x(i, j);
            }
            y[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(2));
        }
        std::vector<std::size_t> feats(static_cast<std::size_t>(cols));
        std::iota(feats.begin(), feats.end(), std::size_t{0});
        const std::size_t min_leaf = 1 + static_cast<std::size_t>(rng.below(3));
        const auto got = best_split(DataTable(x, y), w, feats, min_leaf);
        const auto want = oracle::exhaustive_split(dense, y, w, feats, min_leaf, kGainTieTolerance);
        const bool same = got.has_value() == want.has_value() &&
                          (!got || (got->feature == want->feature && got->threshold == want->threshold &&
                                    std::abs(got->gain - want->gain) <= 1e-9));
        mismatches += !same;
    }
    const double elapsed = seconds_since(t0);
    return pass_if(mismatches == 0 && elapsed < 30.0,
                   fmt::format("200 tables, {} mismatches, {:.2f} s", mismatches, elapsed));
}

Outcome gp_suite() {
    std::vector<std::string> failures;
    const auto col = [](std::initializer_list<double> v) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
        Eigen::Index i = 0;
        for (double x : v) m(i++, 0) = x;
        return m;
    };
    const auto vec1 = [](double v) { return Eigen::VectorXd::Constant(1, v); };

    // Interpolation at training points.
    Eigen::MatrixXd x(5, 2);
    x << 0.1, 0.2, 0.4, 0.9, 0.7, 0.5, 0.95, 0.05, 0.3, 0.6;
    Eigen::VectorXd y(5);
    y << 0.3, -1.2, 0.8, 2.0, -0.4;
    KernelConfig k = KernelConfig::unit(2);
    k.length_scales = {0.2, 0.2};
    const auto gp = gp_fit(x, y, k, 1e-10);
    double interp = 0.0;
    for (Eigen::Index i = 0; i < 5; ++i) interp = std::max(interp, std::abs(gp.predict(x.row(i).transpose()).mean - y[i]));
    if (interp > 1e-6) failures.push_back(fmt::format("interpolation {:.2e}", interp));

    // Clamped variance over many queries, including the training inputs.
    Rng rng(99);
    double min_var = INFINITY;
    for (int q = 0; q < 2000; ++q) {
        Eigen::VectorXd p(2);
        p << rng.uniform(-0.5, 1.5), rng.uniform(-0.5, 1.5);
        if (q < 5) p = x.row(q).transpose();
        min_var = std::min(min_var, gp.predict(p).variance);
    }
    if (min_var < 0.0) failures.push_back(fmt::format("negative variance {:.2e}", min_var));

    // Two-point posterior against the dense oracle.
    const auto two = gp_fit(col({0.0, 1.0}), Eigen::Vector2d(0.0, 1.0), KernelConfig::unit(1), 1e-10);
    double two_err = 0.0;
    for (double q : {0.5, 0.1, 0.8, -0.4, 1.6}) {
        const auto want = oracle::two_point_posterior(0.0, 0.0, 1.0, 1.0, two.noise_variance(), q);
        const auto got = two.predict(vec1(q));
        two_err = std::max({two_err, std::abs(got.mean - want[0]), std::abs(got.variance - std::max(0.0, want[1]))});
    }
    if (two_err > 1e-8) failures.push_back(fmt::format("two-point {:.2e}", two_err));

    // Expected improvement spot checks.
    const double ei0 = expected_improvement(0.3, 0.0, 0.3, 0.0);
    const double ei1 = expected_improvement(0.5, 1.0, 0.5, 0.0);
    const double ei2 = expected_improvement(0.2, 0.0025, 0.3, 0.0);
    const double ei2_want = 0.1 * oracle::normal_cdf(2.0) + 0.05 * oracle::normal_pdf(2.0);
    if (ei0 != 0.0) failures.push_back(fmt::format("EI(sigma=0) = {}", ei0));
    if (std::abs(ei1 - 0.39894) > 1e-5) failures.push_back(fmt::format("EI(mean=f_best, sigma=1) = {}", ei1));
    if (std::abs(ei2 - ei2_want) > 1e-8) failures.push_back(fmt::format("EI(0.2, 0.05, 0.3) = {}", ei2));

    std::string detail = fmt::format("interp {:.1e}, min var {:.1e}, two-point {:.1e}, EI(s=0) {}, EI(0,1) {:.6f}",
                                     interp, min_var, two_err, ei0, ei1);
    for (const auto& f : failures) detail += "; FAILED " + f;
    return pass_if(failures.empty(), detail);
}

Outcome imbalance() {
    const auto t0 = Clock::now();
    bool balanced = true;
    std::vector<double> rus_recall, ada_recall;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SynthOptions opts;
        opts.noise = 0.15;
        const DataTable all = synthesize_imbalanced(1800, 200, 10, 500 + seed, opts);
        const auto [raw_train, raw_test] = stratified_split(all, 0.3, seed);
        const auto prep = fit_preprocessor(raw_train);
        const DataTable train = apply_preprocessor(prep, raw_train);
        const DataTable test = apply_preprocessor(prep, raw_test);

        EnsembleParams p;
        p.n_learners = 50;
        p.tree.max_depth = 4;
        p.seed = seed;
        p.kind = EnsembleKind::kRUSBoost;
        const auto rus = fit_rusboost(train, p);
        for (const auto& r : rus.rounds()) balanced = balanced && r.subset_normal == r.subset_attack;
        p.kind = EnsembleKind::kAdaBoost;
        const auto ada = fit_adaboost(train, p);

        const auto recall = [&](const EnsembleModel& m) {
            return metrics(confusion(test.labels(), predict_ensemble(m, test).labels)).recall;
        };
        rus_recall.push_back(recall(rus));
        ada_recall.push_back(recall(ada));
    }
    const auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return (v[4] + v[5]) / 2.0;
    };
    const double rus_m = median(rus_recall);
    const double ada_m = median(ada_recall);
    return pass_if(balanced && rus_m >= ada_m,
                   fmt::format("rounds balanced: {}; median minority recall RUSBoost {:.4f} vs AdaBoost {:.4f} (9:1, 10 "
                               "seeds); {:.1f} s",
                               balanced ? "yes" : "no", rus_m, ada_m, seconds_since(t0)));
}

Outcome determinism() {
    const auto t0 = Clock::now();
    testutil::TempDir dir;
    std::vector<std::string> reference;
    const std::vector<std::string> files{"baseline_report.csv", "trace_ensemble.csv", "trace_dt.csv",
                                         "optimized_report.csv"};
    std::string detail;
    bool ok = true;
    for (std::size_t threads : {1u, 2u, 8u}) {
        for (int rerun = 0; rerun < (threads == 1 ? 2 : 1); ++rerun) {
            cli::RunConfig c;
            c.synthetic = true;
            c.seed = 2024;
            c.budget = 10;
            c.threads = threads;
            c.timing = false;
            c.out = dir / fmt::format("t{}_{}", threads, rerun);
            std::ostringstream out, err;
            if (cli::cmd_baseline(c, out, err) != cli::kOk || cli::cmd_optimize(c, out, err) != cli::kOk) {
                return {Status::kFail, "command failed: " + err.str()};
            }
            std::vector<std::string> contents;
            for (const auto& f : files) contents.push_back(testutil::read_text(c.out / f));
            if (reference.empty()) {
                reference = contents;
            } else if (contents != reference) {
                ok = false;
                detail += fmt::format(" threads={} rerun={} differs;", threads, rerun);
            }
        }
    }
    return pass_if(ok, fmt::format("baseline + optimize (budget 10) at 1 (x2), 2, 8 threads:{} {:.0f} s",
                                   ok ? " all CSVs byte-identical;" : detail, seconds_since(t0)));
}

Outcome dataset_integrity() {
    const auto path = reference_csv();
    if (!path) return {Status::kSkip, "IIDS_REFERENCE_CSV not set or unreadable; reference dataset unavailable"};
    const DataTable t = load_csv(*path, reference_ingest());
    const auto [normal, attack] = t.class_counts();
    return pass_if(normal == 24871 && attack == 11104,
                   fmt::format("{} Normal, {} Attack rows", normal, attack));
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"holdout_reproduction", holdout_reproduction},
        {"bo_vs_random_search", bo_vs_random},
        {"metrics_oracle", metrics_oracle},
        {"tree_oracle", tree_oracle},
        {"gp_suite", gp_suite},
        {"imbalance_handling", imbalance},
        {"determinism", determinism},
        {"dataset_integrity", dataset_integrity},
    };
    std::vector<std::string> only(argv + 1, argv + argc);

    int failed = 0;
    int skipped = 0;
    int ran = 0;
    for (const auto& [name, run] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {Status::kFail, std::string("exception: ") + e.what()};
        }
        const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
        std::cout << fmt::format("[{}] {}: {}", tag, name, o.detail) << std::endl;
        failed += o.status == Status::kFail;
        skipped += o.status == Status::kSkip;
        ++ran;
    }
    if (failed > 0) return 1;
    // Lets a test driver report a run where every selected criterion was skipped.
    return ran > 0 && skipped == ran ? 77 : 0;
}
