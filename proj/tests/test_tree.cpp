#include <doctest.h>

#include <array>
#include <numeric>

#include "iids/data.hpp"
#include "iids/rng.hpp"
#include "iids/tree.hpp"
#include "oracles.hpp"

using namespace iids;

namespace {

DataTable separable4() {
    Matrix x(4, 1);
    x << 1, 2, 3, 4;
    return DataTable(x, {0, 0, 1, 1});
}

oracle::Dense to_dense(const Matrix& m) {
    oracle::Dense d(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
    return d;
}

double training_accuracy(const TreeModel& m, const DataTable& t) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < t.rows(); ++i)
        ok += m.predict(t.features(), static_cast<Eigen::Index>(i)).label == t.labels()[i];
    return static_cast<double>(ok) / static_cast<double>(t.rows());
}

}  // namespace

TEST_CASE("gini impurity") {
    CHECK(gini(std::array{2.0, 2.0}) == doctest::Approx(0.5));
    CHECK(gini(std::array{4.0, 0.0}) == 0.0);
    CHECK(gini(std::array{3.0, 1.0}) == doctest::Approx(0.375));
    CHECK_THROWS(gini(std::array{0.0, 0.0}));
}

TEST_CASE("best_split basics") {
    const DataTable t = separable4();
    const std::vector<double> w(4, 1.0);
    const std::vector<std::size_t> f{0};
    const auto s = best_split(t, w, f, 1);
    REQUIRE(s);
    CHECK(s->feature == 0);
    CHECK(s->threshold == 2.5);
    CHECK(s->gain == doctest::Approx(0.5));

    const DataTable pure(t.features(), {1, 1, 1, 1});
    CHECK_FALSE(best_split(pure, w, f, 1));

    Matrix x(4, 2);
    x << 7, 1, 7, 2, 7, 3, 7, 4;
    const auto s2 = best_split(DataTable(x, {0, 0, 1, 1}), w, std::vector<std::size_t>{0, 1}, 1);
    REQUIRE(s2);
    CHECK(s2->feature == 1);
}

TEST_CASE("best_split equals exhaustive enumeration on random tables") {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const auto rows = static_cast<Eigen::Index>(2 + rng.below(199));
        const auto cols = static_cast<Eigen::Index>(1 + rng.below(8));
        const bool coarse = rng.below(2) == 0;  // few distinct values provoke ties
        Matrix x(rows, cols);
        std::vector<int> y(static_cast<std::size_t>(rows));
        std::vector<double> w(static_cast<std::size_t>(rows));
        const bool weighted = rng.below(2) == 0;
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j)
                x(i, j) = coarse ? static_cast<double>(rng.below(5)) : rng.normal();
            y[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(2));
            w[static_cast<std::size_t>(i)] = weighted ? rng.uniform(0.1, 2.0) : 1.0;
        }
        const std::size_t min_leaf = 1 + static_cast<std::size_t>(rng.below(4));
        std::vector<std::size_t> feats;
        for (std::size_t j = 0; j < static_cast<std::size_t>(cols); ++j)
            if (rng.below(4) != 0 || feats.empty()) feats.push_back(j);

        const DataTable t(x, y);
        const auto got = best_split(t, w, feats, min_leaf);
        const auto want = oracle::exhaustive_split(to_dense(x), y, w, feats, min_leaf, kGainTieTolerance);
        INFO("trial " << trial);
        REQUIRE(got.has_value() == want.has_value());
        if (got) {
            CHECK(got->feature == want->feature);
            CHECK(got->threshold == want->threshold);
            CHECK(got->gain == doctest::Approx(want->gain).epsilon(1e-9));
        }
    }
}

TEST_CASE("best_split is invariant to uniform weight scaling") {
    Rng rng(8);
    Matrix x(60, 3);
    std::vector<int> y(60);
    std::vector<double> w(60), w10(60);
    for (int i = 0; i < 60; ++i) {
        for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
        y[i] = static_cast<int>(rng.below(2));
        w[i] = rng.uniform(0.5, 1.5);
        w10[i] = 10.0 * w[i];
    }
    const DataTable t(x, y);
    const std::vector<std::size_t> f{0, 1, 2};
    const auto a = best_split(t, w, f, 2);
    const auto b = best_split(t, w10, f, 2);
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->feature == b->feature);
    CHECK(a->threshold == b->threshold);
    CHECK(a->gain == doctest::Approx(b->gain).epsilon(1e-12));
}

TEST_CASE("fit_tree on the separable example") {
    const DataTable t = separable4();
    const TreeModel full = fit_tree(t, TreeParams{});
    CHECK(training_accuracy(full, t) == 1.0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(full.predict(t.features(), static_cast<Eigen::Index>(i)).label == t.labels()[i]);

    TreeParams stump;
    stump.max_depth = 1;
    const TreeModel s = fit_tree(t, stump);
    CHECK(s.depth() == 1);
    CHECK(s.leaf_count() == 2);

    const auto p = full.predict(std::array{4.0});
    CHECK(p.label == 1);
    CHECK(p.attack_score == 1.0);
}

TEST_CASE("single-leaf tree reads out the class distribution") {
    Matrix x(4, 1);
    x << 1, 1, 1, 1;
    const TreeModel m = fit_tree(DataTable(x, {0, 0, 0, 1}), TreeParams{});
    CHECK(m.leaf_count() == 1);
    const auto p = m.predict(std::array{1.0});
    CHECK(p.label == 0);
    CHECK(p.attack_score == doctest::Approx(0.25));
}

TEST_CASE("fit_tree is deterministic and respects its bounds") {
    const DataTable t = synthesize_imbalanced(300, 150, 6, 4);
    TreeParams p;
    p.features_per_split = 3;
    p.seed = 99;
    CHECK(fit_tree(t, p) == fit_tree(t, p));

    std::size_t previous_leaves = 0;
    for (std::size_t depth : {1u, 2u, 4u, 8u}) {
        TreeParams q;
        q.max_depth = depth;
        const TreeModel m = fit_tree(t, q);
        CHECK(m.depth() <= depth);
        CHECK(m.leaf_count() >= previous_leaves);
        previous_leaves = m.leaf_count();
    }

    TreeParams leafy;
    leafy.min_leaf_size = 25;
    const TreeModel m = fit_tree(t, leafy);
    // Count training rows per leaf by routing them.
    std::vector<std::size_t> reach(m.nodes().size(), 0);
    for (Eigen::Index i = 0; i < t.features().rows(); ++i) {
        int n = 0;
        while (!m.nodes()[static_cast<std::size_t>(n)].is_leaf()) {
            const auto& node = m.nodes()[static_cast<std::size_t>(n)];
            n = t.features()(i, node.feature) <= node.threshold ? node.left : node.right;
        }
        ++reach[static_cast<std::size_t>(n)];
    }
    for (std::size_t k = 0; k < reach.size(); ++k)
        if (m.nodes()[k].is_leaf()) CHECK(reach[k] >= 25);
}

TEST_CASE("fit_tree_on_rows matches fitting the materialized subset") {
    const DataTable t = synthesize_imbalanced(80, 40, 4, 12);
    Rng rng(3);
    std::vector<std::size_t> rows(120);
    for (auto& r : rows) r = static_cast<std::size_t>(rng.below(120));
    const std::vector<double> w(rows.size(), 1.0);
    TreeParams p;
    p.seed = 5;
    CHECK(fit_tree_on_rows(t, rows, w, p) == fit_tree(t.subset(rows), p));
}

TEST_CASE("tree JSON round trip and validation") {
    const DataTable t = synthesize_imbalanced(50, 30, 3, 2);
    const TreeModel m = fit_tree(t, TreeParams{});
    CHECK(TreeModel::from_json(m.to_json()) == m);
    CHECK_THROWS(TreeModel::from_json("{}"));
    CHECK_THROWS(TreeModel({TreeModel::Node{0, 1.0, 5, 6, 0.5}}, 1));

    TreeParams bad;
    bad.min_leaf_size = 0;
    CHECK_THROWS(bad.validate(3));
    bad = TreeParams{};
    bad.features_per_split = 4;
    CHECK_THROWS(bad.validate(3));
}
