#include <CLI11.hpp>

#include <iostream>

#include "iids/commands.hpp"
#include "iids/error.hpp"

namespace {

struct Overrides {
    std::string config;
    std::string data;
    std::string out;
    std::uint64_t seed = 0;
    std::size_t folds = 0;
    std::size_t budget = 0;
    std::size_t n_init = 0;
    std::size_t threads = 0;
    bool synthetic = false;
    bool no_timing = false;
    bool skip_dt = false;
};

void add_common(CLI::App& cmd, Overrides& o) {
    cmd.add_option("--config", o.config, "key = value configuration file");
    cmd.add_option("--data", o.data, "input CSV");
    cmd.add_option("--out", o.out, "output directory");
    cmd.add_option("--seed", o.seed, "master seed");
    cmd.add_option("--folds", o.folds, "cross-validation folds")->check(CLI::Range(2, 1000));
    cmd.add_option("--budget", o.budget, "optimization evaluations")->check(CLI::PositiveNumber);
    cmd.add_option("--n-init", o.n_init, "initial design size")->check(CLI::PositiveNumber);
    cmd.add_option("--threads", o.threads, "worker threads (0 = all cores)");
    cmd.add_flag("--synthetic", o.synthetic, "use the synthetic stand-in dataset");
    cmd.add_flag("--no-timing", o.no_timing, "write 0 for trace durations");
    cmd.add_flag("--skip-dt", o.skip_dt, "skip the single-tree optimization");
}

iids::cli::RunConfig build_config(const CLI::App& cmd, const Overrides& o) {
    iids::cli::RunConfig cfg;
    if (!o.config.empty()) cfg.apply(iids::read_key_values(o.config));
    if (cmd.count("--data")) cfg.data = o.data;
    if (cmd.count("--out")) cfg.out = o.out;
    if (cmd.count("--seed")) cfg.seed = o.seed;
    if (cmd.count("--folds")) cfg.folds = o.folds;
    if (cmd.count("--budget")) cfg.budget = o.budget;
    if (cmd.count("--n-init")) cfg.n_init = o.n_init;
    if (cmd.count("--threads")) cfg.threads = o.threads;
    if (o.synthetic) cfg.synthetic = true;
    if (o.no_timing) cfg.timing = false;
    if (o.skip_dt) cfg.optimize_dt = false;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tree-ensemble intrusion detection with Bayesian hyperparameter search"};
    app.require_subcommand(1);

    using Command = int (*)(const iids::cli::RunConfig&, std::ostream&, std::ostream&);
    struct Entry {
        const char* name;
        const char* help;
        Command run;
    };
    const Entry entries[] = {
        {"pca", "project onto the first two principal components", iids::cli::cmd_pca},
        {"baseline", "train and score the unoptimized models", iids::cli::cmd_baseline},
        {"optimize", "tune the ensemble and tree with Bayesian optimization", iids::cli::cmd_optimize},
        {"report", "merge baseline and optimized reports", iids::cli::cmd_report},
    };
    Overrides overrides;
    for (const auto& e : entries) add_common(*app.add_subcommand(e.name, e.help), overrides);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : iids::cli::kInputError;
    }

    for (const auto& e : entries) {
        const CLI::App* cmd = app.get_subcommand(e.name);
        if (!cmd->parsed()) continue;
        iids::cli::RunConfig cfg;
        const int status = iids::cli::run_guarded(e.name, std::cerr, [&] {
            cfg = build_config(*cmd, overrides);
            return 0;
        });
        if (status != 0) return status;
        return e.run(cfg, std::cout, std::cerr);
    }
    return iids::cli::kInternalFailure;
}
