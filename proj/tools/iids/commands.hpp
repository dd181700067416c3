#pragma once

#include <cstdint>
#include <functional>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include "iids/data.hpp"
#include "iids/kv_config.hpp"

namespace iids::cli {

enum ExitCode : int {
    kOk = 0,
    kInputError = 2,
    kMissingDependency = 3,
    kInternalFailure = 4,
};

/// A file produced by an earlier command is absent.
class MissingInputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::filesystem::path data;
    IngestConfig ingest;
    bool synthetic = false;
    std::size_t synthetic_normal = 2487;
    std::size_t synthetic_attack = 1110;
    std::size_t synthetic_features = 20;
    double synthetic_noise = SynthOptions{}.noise;

    std::filesystem::path out = "out";
    std::uint64_t seed = 42;
    double test_fraction = 0.2;
    std::size_t folds = 5;
    std::size_t threads = 1;

    std::size_t budget = 30;
    std::size_t n_init = 5;
    double xi = 0.01;
    std::size_t n_candidates = 2000;
    bool optimize_dt = true;
    /// false writes 0 into the trace duration column, making traces byte-reproducible.
    bool timing = true;

    // Search-space bounds.
    long long n_learners_min = 10;
    long long n_learners_max = 500;
    long long min_leaf_min = 1;
    long long min_leaf_max = 1000;
    double learning_rate_min = 0.001;
    double learning_rate_max = 1.0;
    long long max_depth_min = 1;
    long long max_depth_max = 100;

    /// Applies `key = value` entries over the current values. Unknown keys
    /// and malformed values throw InputError.
    void apply(const KeyValues& kv);
    /// Range checks; also requires `data` to exist unless `synthetic` is set.
    void validate() const;
};

/// Loads the dataset (or synthesizes the stand-in) described by the config.
DataTable load_dataset(const RunConfig& config);

int cmd_pca(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_baseline(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_optimize(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_report(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Runs a command body, mapping exceptions to exit codes and messages on `err`.
int run_guarded(const char* command, std::ostream& err, const std::function<int()>& body);

}  // namespace iids::cli
