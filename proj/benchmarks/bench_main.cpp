#include <benchmark/benchmark.h>

#include "iids/bayesopt.hpp"
#include "iids/data.hpp"
#include "iids/ensemble.hpp"
#include "iids/eval.hpp"
#include "iids/tree.hpp"

namespace {

const iids::DataTable& desk_table() {
    static const iids::DataTable t = iids::synthesize_imbalanced(2487, 1110, 20, 1);
    return t;
}

void BM_FitTree(benchmark::State& state) {
    iids::TreeParams p;
    p.min_leaf_size = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(iids::fit_tree(desk_table(), p));
}
BENCHMARK(BM_FitTree)->Arg(1)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_FitEnsemble(benchmark::State& state) {
    iids::EnsembleParams p;
    p.kind = static_cast<iids::EnsembleKind>(state.range(0));
    p.n_learners = 50;
    if (p.kind != iids::EnsembleKind::kBagging) p.tree.max_depth = 4;
    for (auto _ : state) benchmark::DoNotOptimize(iids::fit_ensemble(desk_table(), p));
    state.SetLabel(std::string(iids::to_string(p.kind)));
}
BENCHMARK(BM_FitEnsemble)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_CvErrorTree(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(iids::cv_error(iids::ModelSpec{iids::TreeParams{}}, desk_table(), 5, 3));
    }
}
BENCHMARK(BM_CvErrorTree)->Unit(benchmark::kMillisecond);

Eigen::MatrixXd design(Eigen::Index n, Eigen::Index d) {
    iids::Rng rng(7);
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.uniform();
    return x;
}

void BM_GpFitPredict(benchmark::State& state) {
    const Eigen::MatrixXd x = design(state.range(0), 6);
    const Eigen::VectorXd y = x.rowwise().sum().array().sin();
    const Eigen::VectorXd q = Eigen::VectorXd::Constant(6, 0.5);
    for (auto _ : state) {
        const auto gp = iids::gp_fit(x, y, iids::KernelConfig::unit(6), 1e-6);
        benchmark::DoNotOptimize(gp.predict(q));
    }
}
BENCHMARK(BM_GpFitPredict)->Arg(10)->Arg(30);

void BM_FitKernel(benchmark::State& state) {
    const Eigen::MatrixXd x = design(state.range(0), 6);
    const Eigen::VectorXd y = x.rowwise().sum().array().sin();
    for (auto _ : state) benchmark::DoNotOptimize(iids::fit_kernel(x, y, iids::kDefaultNoiseGrid, 1));
}
BENCHMARK(BM_FitKernel)->Arg(10)->Arg(30)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
