#include <doctest.h>

#include <sstream>

#include "iids/commands.hpp"
#include "iids/error.hpp"
#include "iids/eval.hpp"
#include "test_util.hpp"

using namespace iids;
using namespace iids::cli;
using testutil::read_text;
using testutil::TempDir;

namespace {

RunConfig small_config(const std::filesystem::path& out) {
    RunConfig c;
    c.synthetic = true;
    c.synthetic_normal = 120;
    c.synthetic_attack = 60;
    c.synthetic_features = 5;
    c.out = out;
    c.seed = 7;
    c.folds = 3;
    c.budget = 6;
    c.n_init = 3;
    c.n_candidates = 200;
    c.timing = false;
    return c;
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("config file keys and validation") {
    RunConfig c;
    c.apply(parse_key_values("seed = 9\nfolds = 4\nbudget = 12\nlabel_column = type\nlabel_map = normal=0,attack=1\n"
                             "synthetic = true\nn_learners_max = 50\n",
                             "cfg"));
    CHECK(c.seed == 9);
    CHECK(c.folds == 4);
    CHECK(c.budget == 12);
    CHECK(c.ingest.label_column == "type");
    CHECK(c.ingest.label_map.at("attack") == 1);
    CHECK(c.synthetic);
    CHECK(c.n_learners_max == 50);
    CHECK_NOTHROW(c.validate());

    CHECK_THROWS_AS(c.apply(parse_key_values("colour = blue\n", "cfg")), InputError);
    CHECK_THROWS_AS(c.apply(parse_key_values("folds = many\n", "cfg")), InputError);
    RunConfig bad = c;
    bad.folds = 1;
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = c;
    bad.n_init = 20;
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = c;
    bad.synthetic = false;
    bad.data = "/definitely/not/here.csv";
    CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("pca command") {
    TempDir dir;
    RunConfig c = small_config(dir / "out");
    c.synthetic_normal = 60;
    c.synthetic_attack = 40;
    std::ostringstream out, err;
    REQUIRE(cmd_pca(c, out, err) == kOk);
    const std::string csv = read_text(dir / "out/pca.csv");
    CHECK(csv.starts_with("pc1,pc2,label\n"));
    CHECK(line_count(csv) == 101);
    CHECK(csv.find('\r') == std::string::npos);
    CHECK(out.str().find("explained_variance_ratio") != std::string::npos);
    CHECK_FALSE(std::filesystem::exists(dir / "out/.iids.lock"));
}

TEST_CASE("missing data file exits 2 without output") {
    TempDir dir;
    RunConfig c = small_config(dir / "out");
    c.synthetic = false;
    c.data = dir / "absent.csv";
    std::ostringstream out, err;
    CHECK(cmd_pca(c, out, err) == kInputError);
    CHECK(cmd_baseline(c, out, err) == kInputError);
    CHECK_FALSE(std::filesystem::exists(dir / "out"));
    CHECK(err.str().find("absent.csv") != std::string::npos);
}

TEST_CASE("malformed data exits 2") {
    TempDir dir;
    testutil::write_text(dir / "bad.csv", "a,b\n1,2\n");
    RunConfig c = small_config(dir / "out");
    c.synthetic = false;
    c.data = dir / "bad.csv";
    std::ostringstream out, err;
    CHECK(cmd_pca(c, out, err) == kInputError);
}

TEST_CASE("lock file blocks a concurrent run") {
    TempDir dir;
    RunConfig c = small_config(dir / "out");
    std::filesystem::create_directories(dir / "out");
    testutil::write_text(dir / "out/.iids.lock", "");
    std::ostringstream out, err;
    CHECK(cmd_pca(c, out, err) == kInputError);
    CHECK(err.str().find("locked") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "out/.iids.lock"));
}

TEST_CASE("baseline, optimize and report pipeline") {
    TempDir dir;
    const RunConfig c = small_config(dir / "out");
    std::ostringstream out, err;

    CHECK(cmd_report(c, out, err) == kMissingDependency);

    REQUIRE(cmd_baseline(c, out, err) == kOk);
    const std::string baseline = read_text(dir / "out/baseline_report.csv");
    CHECK(line_count(baseline) == 5);
    CHECK(baseline.find("DT,") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "out/baseline_report.json"));

    std::ostringstream err2;
    CHECK(cmd_report(c, out, err2) == kMissingDependency);
    CHECK(err2.str().find("optimized_report.csv") != std::string::npos);

    REQUIRE(cmd_optimize(c, out, err) == kOk);
    const std::string trace = read_text(dir / "out/trace_ensemble.csv");
    CHECK(line_count(trace) == 7);
    CHECK(line_count(read_text(dir / "out/trace_dt.csv")) == 7);
    CHECK(line_count(read_text(dir / "out/optimized_report.csv")) == 3);

    REQUIRE(cmd_report(c, out, err) == kOk);
    const std::string report = read_text(dir / "out/final_report.csv");
    std::istringstream lines(report);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "algorithm,accuracy,precision,recall,fscore");
    std::vector<std::string> names;
    double best_acc = -1.0;
    std::vector<std::pair<double, bool>> acc;
    while (std::getline(lines, line)) {
        const auto fields = split_list(line, ',');
        REQUIRE(fields.size() == 5);
        names.push_back(fields[0]);
        const bool flagged = fields[1].ends_with('*');
        const double v = std::stod(flagged ? fields[1].substr(0, fields[1].size() - 1) : fields[1]);
        acc.emplace_back(v, flagged);
        best_acc = std::max(best_acc, v);
    }
    CHECK(names == std::vector<std::string>(kComparisonRows.begin(), kComparisonRows.end()));
    for (const auto& [v, flagged] : acc) CHECK(flagged == (v == best_acc));

    // Reruns reproduce every artifact byte for byte.
    const std::string first_trace = trace;
    const std::string first_opt = read_text(dir / "out/optimized_report.csv");
    REQUIRE(cmd_baseline(c, out, err) == kOk);
    REQUIRE(cmd_optimize(c, out, err) == kOk);
    CHECK(read_text(dir / "out/baseline_report.csv") == baseline);
    CHECK(read_text(dir / "out/trace_ensemble.csv") == first_trace);
    CHECK(read_text(dir / "out/optimized_report.csv") == first_opt);
}

TEST_CASE("optimize with budget equal to n_init and a different seed") {
    TempDir dir;
    RunConfig c = small_config(dir / "a");
    c.budget = 3;
    c.optimize_dt = false;
    std::ostringstream out, err;
    REQUIRE(cmd_optimize(c, out, err) == kOk);
    const std::string a = read_text(dir / "a/trace_ensemble.csv");
    CHECK(line_count(a) == 4);
    CHECK_FALSE(std::filesystem::exists(dir / "a/trace_dt.csv"));

    c.out = dir / "b";
    c.seed = 8;
    REQUIRE(cmd_optimize(c, out, err) == kOk);
    const std::string b = read_text(dir / "b/trace_ensemble.csv");
    CHECK(a != b);
    CHECK(a.substr(0, a.find('\n')) == b.substr(0, b.find('\n')));
}
