#include "iids/commands.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "iids/bayesopt.hpp"
#include "iids/error.hpp"
#include "iids/eval.hpp"
#include "iids/rng.hpp"

namespace iids::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

namespace {

template <class T>
T parse_value(std::string_view key, const std::string& text) {
    T value{};
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        throw InputError("config key '" + std::string(key) + "': cannot parse '" + text + "'");
    }
    return value;
}

bool parse_bool(std::string_view key, const std::string& text) {
    if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
    if (text == "0" || text == "false" || text == "no" || text == "off") return false;
    throw InputError("config key '" + std::string(key) + "': expected a boolean, got '" + text + "'");
}

}  // namespace

void RunConfig::apply(const KeyValues& kv) {
    KeyValues ingest_keys;
    for (const auto& [key, value] : kv) {
        if (key == "label_column" || key == "exclude" || key == "missing" || key == "label_map") {
            ingest_keys[key] = value;
        } else if (key == "data") {
            data = value;
        } else if (key == "synthetic") {
            synthetic = parse_bool(key, value);
        } else if (key == "synthetic_normal") {
            synthetic_normal = parse_value<std::size_t>(key, value);
        } else if (key == "synthetic_attack") {
            synthetic_attack = parse_value<std::size_t>(key, value);
        } else if (key == "synthetic_features") {
            synthetic_features = parse_value<std::size_t>(key, value);
        } else if (key == "synthetic_noise") {
            synthetic_noise = parse_value<double>(key, value);
        } else if (key == "out") {
            out = value;
        } else if (key == "seed") {
            seed = parse_value<std::uint64_t>(key, value);
        } else if (key == "test_fraction") {
            test_fraction = parse_value<double>(key, value);
        } else if (key == "folds") {
            folds = parse_value<std::size_t>(key, value);
        } else if (key == "threads") {
            threads = parse_value<std::size_t>(key, value);
        } else if (key == "budget") {
            budget = parse_value<std::size_t>(key, value);
        } else if (key == "n_init") {
            n_init = parse_value<std::size_t>(key, value);
        } else if (key == "xi") {
            xi = parse_value<double>(key, value);
        } else if (key == "n_candidates") {
            n_candidates = parse_value<std::size_t>(key, value);
        } else if (key == "optimize_dt") {
            optimize_dt = parse_bool(key, value);
        } else if (key == "timing") {
            timing = parse_bool(key, value);
        } else if (key == "n_learners_min") {
            n_learners_min = parse_value<long long>(key, value);
        } else if (key == "n_learners_max") {
            n_learners_max = parse_value<long long>(key, value);
        } else if (key == "min_leaf_min") {
            min_leaf_min = parse_value<long long>(key, value);
        } else if (key == "min_leaf_max") {
            min_leaf_max = parse_value<long long>(key, value);
        } else if (key == "learning_rate_min") {
            learning_rate_min = parse_value<double>(key, value);
        } else if (key == "learning_rate_max") {
            learning_rate_max = parse_value<double>(key, value);
        } else if (key == "max_depth_min") {
            max_depth_min = parse_value<long long>(key, value);
        } else if (key == "max_depth_max") {
            max_depth_max = parse_value<long long>(key, value);
        } else {
            throw InputError("unknown config key '" + key + "'");
        }
    }
    if (!ingest_keys.empty()) {
        // Only the keys present here override earlier ingestion settings.
        const IngestConfig parsed = IngestConfig::from_key_values(ingest_keys);
        if (ingest_keys.contains("label_column")) ingest.label_column = parsed.label_column;
        if (ingest_keys.contains("exclude")) ingest.exclude = parsed.exclude;
        if (ingest_keys.contains("missing")) ingest.missing_token = parsed.missing_token;
        if (ingest_keys.contains("label_map")) ingest.label_map = parsed.label_map;
    }
}

void RunConfig::validate() const {
    auto fail = [](const std::string& msg) { throw InputError(msg); };
    if (!synthetic) {
        if (data.empty()) fail("no dataset given: pass --data PATH or --synthetic");
        if (!fs::is_regular_file(data)) fail("data file '" + data.string() + "' does not exist");
    } else if (synthetic_normal < 2 || synthetic_attack < 2 || synthetic_features < 1) {
        fail("synthetic data needs at least 2 rows per class and 1 feature");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("test_fraction must lie in (0, 1)");
    if (folds < 2) fail("folds must be >= 2");
    if (n_init < 1 || budget < n_init) fail("need budget >= n_init >= 1");
    if (xi < 0.0) fail("xi must be >= 0");
    if (n_candidates < 1) fail("n_candidates must be >= 1");
    if (!(synthetic_noise >= 0.0)) fail("synthetic_noise must be >= 0");
    if (n_learners_min < 1 || n_learners_min >= n_learners_max) fail("need 1 <= n_learners_min < n_learners_max");
    if (min_leaf_min < 1 || min_leaf_min >= min_leaf_max) fail("need 1 <= min_leaf_min < min_leaf_max");
    if (!(learning_rate_min > 0.0 && learning_rate_min < learning_rate_max && learning_rate_max <= 1.0)) {
        fail("need 0 < learning_rate_min < learning_rate_max <= 1");
    }
    if (max_depth_min < 1 || max_depth_min >= max_depth_max) fail("need 1 <= max_depth_min < max_depth_max");
    if (out.empty()) fail("output directory must not be empty");
}

DataTable load_dataset(const RunConfig& config) {
    if (config.synthetic) {
        SynthOptions opts;
        opts.noise = config.synthetic_noise;
        return synthesize_imbalanced(config.synthetic_normal, config.synthetic_attack, config.synthetic_features,
                                     config.seed, opts);
    }
    return load_csv(config.data, config.ingest);
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

/// Exclusive claim on an output directory for the lifetime of a command.
class OutputLock {
public:
    explicit OutputLock(const fs::path& dir) : path_(dir / ".iids.lock") {
        fs::create_directories(dir);
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (f == nullptr) {
            throw InputError("output directory '" + dir.string() + "' is locked by another run (remove " +
                             path_.string() + " if stale)");
        }
        std::fclose(f);
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;
    ~OutputLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }

private:
    fs::path path_;
};

/// Writes through a temporary file so readers never see partial output.
void write_file(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        f << content;
        if (!f) throw std::runtime_error("write to '" + tmp.string() + "' failed");
    }
    fs::rename(tmp, path);
}

std::uint64_t split_seed(const RunConfig& c) { return derive_seed(c.seed, 0x73706c6974ULL); }
std::uint64_t cv_seed(const RunConfig& c) { return derive_seed(c.seed, 0x6376ULL); }
std::uint64_t model_seed(const RunConfig& c) { return derive_seed(c.seed, 0x6d6f64656cULL); }
std::uint64_t bo_seed(const RunConfig& c, std::uint64_t which) { return derive_seed(c.seed, 0x626f00ULL + which); }

std::pair<DataTable, DataTable> holdout(const RunConfig& config, std::ostream& err) {
    const DataTable table = load_dataset(config);
    const auto [normal, attack] = table.class_counts();
    err << fmt::format("[data] {} rows ({} normal, {} attack), {} features\n", table.rows(), normal, attack,
                       table.cols());
    return stratified_split(table, config.test_fraction, split_seed(config));
}

SearchSpace ensemble_space(const RunConfig& c) {
    return SearchSpace({
        Dimension::categorical("kind", {"Bagging", "AdaBoost", "RUSBoost"}),
        Dimension::integer("n_learners", c.n_learners_min, c.n_learners_max, true),
        Dimension::integer("min_leaf_size", c.min_leaf_min, c.min_leaf_max, true),
        Dimension::continuous("learning_rate", c.learning_rate_min, c.learning_rate_max, true),
    });
}

SearchSpace tree_space(const RunConfig& c) {
    return SearchSpace({
        Dimension::integer("min_leaf_size", c.min_leaf_min, c.min_leaf_max, true),
        Dimension::integer("max_depth", c.max_depth_min, c.max_depth_max, true),
    });
}

struct CsvRow {
    std::string name;
    std::vector<std::string> values;
};

std::vector<CsvRow> read_report_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInputError("missing input '" + path.string() + "'; run the producing command first");
    std::string line;
    std::getline(in, line);
    if (line != "algorithm,accuracy,precision,recall,fscore") {
        throw InputError("'" + path.string() + "' does not have the report header");
    }
    std::vector<CsvRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_list(line, ',');
        if (fields.size() != 5) throw InputError("'" + path.string() + "': malformed row '" + line + "'");
        rows.push_back({fields[0], {fields.begin() + 1, fields.end()}});
    }
    return rows;
}

}  // namespace

int run_guarded(const char* command, std::ostream& err, const std::function<int()>& body) {
    try {
        return body();
    } catch (const InputError& e) {
        err << command << ": " << e.what() << '\n';
        return kInputError;
    } catch (const MissingInputError& e) {
        err << command << ": " << e.what() << '\n';
        return kMissingDependency;
    } catch (const std::exception& e) {
        err << command << ": internal failure: " << e.what() << '\n';
        return kInternalFailure;
    }
}

// ---------------------------------------------------------------------------
// Commands

int cmd_pca(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return run_guarded("pca", err, [&] {
        config.validate();
        const DataTable table = load_dataset(config);
        if (table.cols() < 2) throw InputError("PCA needs at least two feature columns");
        const DataTable scaled = apply_preprocessor(fit_preprocessor(table), table);
        const PcaResult pca = pca_project(scaled, 2);

        std::string csv = "pc1,pc2,label\n";
        csv.reserve(csv.size() + table.rows() * 32);
        for (Eigen::Index i = 0; i < pca.projected.rows(); ++i) {
            csv += fmt::format("{:.6f},{:.6f},{}\n", pca.projected(i, 0), pca.projected(i, 1),
                               table.labels()[static_cast<std::size_t>(i)]);
        }
        const OutputLock lock(config.out);
        write_file(config.out / "pca.csv", csv);
        out << fmt::format("rows: {}\nfeatures: {}\nexplained_variance_ratio: pc1={:.4f} pc2={:.4f} (sum {:.4f})\n",
                           table.rows(), table.cols(), pca.explained_variance_ratio[0],
                           pca.explained_variance_ratio[1],
                           pca.explained_variance_ratio[0] + pca.explained_variance_ratio[1]);
        return kOk;
    });
}

int cmd_baseline(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return run_guarded("baseline", err, [&] {
        config.validate();
        const auto [train, test] = holdout(config, err);
        const OutputLock lock(config.out);

        std::vector<EvalReport> reports;
        std::string csv = "algorithm,accuracy,precision,recall,fscore\n";
        bool any_failed = false;
        for (const auto& model : baseline_models(model_seed(config), config.threads)) {
            try {
                auto r = compare_models(train, test, std::span(&model, 1), config.threads);
                csv += reports_to_csv(r).substr(csv.find('\n') + 1);
                reports.push_back(std::move(r.front()));
                err << fmt::format("[baseline] {}: accuracy {:.4f}\n", model.name, reports.back().accuracy);
            } catch (const std::exception& e) {
                any_failed = true;
                csv += model.name + ",NA,NA,NA,NA\n";
                err << "[baseline] " << model.name << " failed: " << e.what() << '\n';
            }
        }
        write_file(config.out / "baseline_report.csv", csv);
        write_file(config.out / "baseline_report.json", reports_to_json(reports));
        out << csv;
        return any_failed ? kInternalFailure : kOk;
    });
}

int cmd_optimize(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return run_guarded("optimize", err, [&] {
        config.validate();
        const auto [train, test] = holdout(config, err);
        const OutputLock lock(config.out);

        OptimizeOptions opts;
        opts.budget = config.budget;
        opts.n_init = config.n_init;
        opts.xi = config.xi;
        opts.n_candidates = config.n_candidates;

        auto progress = [&](std::string tag, const SearchSpace& space) {
            return [&err, tag, &space](const Trial& t, double best) {
                err << fmt::format("[{}] {:>3} {:<60} error {:.5f} best {:.5f}{}\n", tag, t.iteration,
                                   describe(t.point, space), t.objective, best, t.failed ? " (failed: " + t.note + ")" : "");
            };
        };

        std::vector<NamedModel> finalists;
        nlohmann::json best_json = nlohmann::json::object();

        const SearchSpace ens_space = ensemble_space(config);
        opts.seed = bo_seed(config, 1);
        opts.on_trial = progress("bo-ensemble", ens_space);
        const auto ens_objective = [&](const HyperPoint& p) {
            return cv_error(ModelSpec{ensemble_params_from_point(p, ens_space, model_seed(config))}, train,
                            config.folds, cv_seed(config), config.threads);
        };
        const OptimizationTrace ens_trace = optimize(ens_objective, ens_space, opts);
        write_file(config.out / "trace_ensemble.csv", trace_to_csv(ens_trace, ens_space, config.timing));
        const auto& ens_best = ens_trace.trials[ens_trace.best_index()];
        finalists.push_back({"Optimized Ensemble Trees",
                             ensemble_params_from_point(ens_best.point, ens_space, model_seed(config))});
        best_json["Optimized Ensemble Trees"] = {{"hyperparameters", describe(ens_best.point, ens_space)},
                                                 {"cv_error", ens_best.objective},
                                                 {"iteration", ens_best.iteration}};

        if (config.optimize_dt) {
            const SearchSpace dt_space = tree_space(config);
            opts.seed = bo_seed(config, 2);
            opts.on_trial = progress("bo-tree", dt_space);
            const auto dt_objective = [&](const HyperPoint& p) {
                return cv_error(ModelSpec{tree_params_from_point(p, dt_space, model_seed(config))}, train,
                                config.folds, cv_seed(config), config.threads);
            };
            const OptimizationTrace dt_trace = optimize(dt_objective, dt_space, opts);
            write_file(config.out / "trace_dt.csv", trace_to_csv(dt_trace, dt_space, config.timing));
            const auto& dt_best = dt_trace.trials[dt_trace.best_index()];
            finalists.push_back({"Optimized DT", tree_params_from_point(dt_best.point, dt_space, model_seed(config))});
            best_json["Optimized DT"] = {{"hyperparameters", describe(dt_best.point, dt_space)},
                                         {"cv_error", dt_best.objective},
                                         {"iteration", dt_best.iteration}};
        }

        const auto reports = compare_models(train, test, finalists, config.threads);
        const std::string csv = reports_to_csv(reports);
        write_file(config.out / "optimized_report.csv", csv);
        nlohmann::json doc = {{"reports", nlohmann::json::parse(reports_to_json(reports))}, {"best", best_json}};
        write_file(config.out / "optimized_report.json", doc.dump(2) + "\n");
        out << csv;
        return kOk;
    });
}

int cmd_report(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return run_guarded("report", err, [&] {
        const fs::path baseline = config.out / "baseline_report.csv";
        const fs::path optimized = config.out / "optimized_report.csv";
        std::map<std::size_t, CsvRow> rows;
        for (const auto& path : {baseline, optimized}) {
            for (auto& row : read_report_csv(path)) {
                std::size_t idx = 0;
                try {
                    idx = comparison_row(row.name);
                } catch (const std::invalid_argument&) {
                    throw InputError("'" + path.string() + "': unknown algorithm '" + row.name + "'");
                }
                rows[idx] = std::move(row);
            }
        }
        for (std::size_t i = 0; i < kComparisonRows.size(); ++i) {
            if (!rows.contains(i)) {
                throw MissingInputError("no row for '" + std::string(kComparisonRows[i]) + "' in " +
                                        baseline.string() + " or " + optimized.string());
            }
        }

        // Flag the best value of each column with '*'; ties are all flagged.
        for (std::size_t col = 0; col < 4; ++col) {
            double best = -1.0;
            for (const auto& [_, row] : rows) {
                double v = 0.0;
                const auto& s = row.values[col];
                if (std::from_chars(s.data(), s.data() + s.size(), v).ec == std::errc()) best = std::max(best, v);
            }
            for (auto& [_, row] : rows) {
                double v = 0.0;
                auto& s = row.values[col];
                if (std::from_chars(s.data(), s.data() + s.size(), v).ec == std::errc() && v == best) s += '*';
            }
        }

        std::string csv = "algorithm,accuracy,precision,recall,fscore\n";
        for (const auto& [_, row] : rows) {
            csv += row.name;
            for (const auto& v : row.values) csv += ',' + v;
            csv += '\n';
        }
        const OutputLock lock(config.out);
        write_file(config.out / "final_report.csv", csv);
        out << csv;
        return kOk;
    });
}

}  // namespace iids::cli
