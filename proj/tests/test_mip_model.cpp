#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "fairmip/mip_model.hpp"
#include "fairmip/tree_solver.hpp"
#include "test_support.hpp"

using namespace fairmip;
using testsup::kMiss;
using testsup::make_dataset;

namespace {

TabularDataset tiny_batch() {
    return make_dataset({{0.1, 0.9}, {0.4, 0.2}, {0.7, kMiss}, {1.0, 0.5}}, {0, 1, 1, 0},
                        {0, 0, 1, 1}, true);
}

ModelConfig depth1_cfg(FairnessMetric metric = FairnessMetric::AccuracyDiff,
                       double lambda = 0.5) {
    ModelConfig cfg;
    cfg.depth = 1;
    cfg.lambda = lambda;
    cfg.metric = metric;
    return cfg;
}

std::size_t count_kind(const MipProgram& p, VarKind kind) {
    std::size_t n = 0;
    for (const auto& v : p.vars) n += v.kind == kind;
    return n;
}

bool contains_tag(const std::vector<std::string>& tags, const std::string& want) {
    return std::find(tags.begin(), tags.end(), want) != tags.end();
}

} // namespace

TEST_CASE("build_program emits the expected variable counts") {
    const MipProgram p = build_program(tiny_batch(), depth1_cfg());
    // depth 1, n=4, d=2: p:2 c:1 u:2 w-family:16 z:8 binaries; q, 2 loss,
    // 4 fairness counts and one epigraph variable continuous.
    CHECK(count_kind(p, VarKind::Binary) == 29);
    CHECK(count_kind(p, VarKind::Continuous) == 8);
    CHECK(p.vars.size() == 37);

    // Every variable is referenced by at least one constraint.
    std::vector<bool> used(p.vars.size(), false);
    for (const auto& c : p.constraints) {
        for (const auto& t : c.terms) used[t.var] = true;
    }
    CHECK(std::count(used.begin(), used.end(), false) == 0);

    // Equalized odds doubles the fairness families.
    const MipProgram eo = build_program(tiny_batch(), depth1_cfg(FairnessMetric::EqualizedOdds));
    CHECK(count_kind(eo, VarKind::Continuous) == 1 + 2 + 8 + 2);
}

TEST_CASE("lambda zero drops the fairness term from the objective") {
    const MipProgram p = build_program(tiny_batch(), depth1_cfg(FairnessMetric::AccuracyDiff, 0.0));
    for (const auto& t : p.objective) {
        CHECK(p.vars[t.var].name.rfind("loss_", 0) == 0);
        CHECK(t.coef == 0.25); // 1/n
    }
    CHECK(p.objective.size() == 2);
}

TEST_CASE("the FNR variant zeroes the predict-1 side and divides by positives") {
    // Batch positives: group 0 has 1 (row 1), group 1 has 1 (row 2).
    const MipProgram p = build_program(tiny_batch(), depth1_cfg(FairnessMetric::FnrDiff, 1.0));
    for (const auto& c : p.constraints) {
        if (c.tag == "fair_1" || c.tag == "fair_2" || c.tag == "fair_4" || c.tag == "fair_5") {
            // Zeroed side: only the count variable and u_l appear.
            for (const auto& t : c.terms) {
                const std::string& name = p.vars[t.var].name;
                CHECK((name[0] == 'f' || name[0] == 'u'));
            }
        }
        if (c.tag == "lfair_1") {
            for (const auto& t : c.terms) {
                const std::string& name = p.vars[t.var].name;
                if (name[0] == 'f') CHECK(std::abs(t.coef) == 1.0); // 1/#positives per group
            }
        }
    }
}

TEST_CASE("assignment_from_tree reproduces the routing walkthrough") {
    // Scaled analog of the worked routing example: the third feature sends
    // the row right at the root, the missing fourth feature sends it right
    // again, landing in the last leaf whose label is 0.
    const TabularDataset batch = make_dataset(
        {{0.0, 1.0, 0.55, kMiss}, {0.9, 0.9, 0.9, 0.8}, {0.1, 0.1, 0.1, 0.1},
         {0.2, 0.2, 0.6, kMiss}},
        {0, 0, 1, 0}, {0, 1, 0, 1}, true);
    MiaTree t;
    t.depth = 2;
    t.branches = {{2, 0.5, true}, {0, 0.5, true}, {3, 0.5, false}};
    t.leaves = {0, 0, 0, 0};
    t = fit_leaves(t, batch);
    REQUIRE(t.leaves[3] == 0); // rows 0 and 3 land there, both labeled 0

    ModelConfig cfg;
    cfg.depth = 2;
    const MipProgram p = build_program(batch, cfg);
    const TreeAssignment a = assignment_from_tree(t, batch, cfg);
    CHECK(a[p.var_z(0, 0)] == 0.0);
    CHECK(a[p.var_z(0, 1)] == 0.0);
    CHECK(a[p.var_z(0, 2)] == 0.0);
    CHECK(a[p.var_z(0, 3)] == 1.0);
    CHECK(a[p.var_u(3)] == 0.0);
    CHECK(check_feasibility(p, a).empty());
}

TEST_CASE("an empty leaf keeps label 1 and zero loss") {
    const TabularDataset batch =
        make_dataset({{0.1}, {0.2}, {0.3}, {0.4}}, {0, 0, 1, 1}, {0, 1, 0, 1}, true);
    MiaTree t;
    t.depth = 1;
    t.branches = {{0, 1.0, false}}; // everything routes left
    t.leaves = {0, 0};
    t = fit_leaves(t, batch);
    CHECK(t.leaves[1] == 1);

    const ModelConfig cfg = depth1_cfg();
    const MipProgram p = build_program(batch, cfg);
    const TreeAssignment a = assignment_from_tree(t, batch, cfg);
    CHECK(a[p.var_loss(1)] == 0.0);
    CHECK(check_feasibility(p, a).empty());
}

TEST_CASE("induced assignments are feasible across randomized instances") {
    std::mt19937_64 rng(61);
    for (int t = 0; t < 150; ++t) {
        const std::size_t n = 4 + rng_below(rng, 10);
        const std::size_t d = 1 + rng_below(rng, 3);
        const int depth = 1 + static_cast<int>(rng_below(rng, 2));
        const TabularDataset batch = testsup::random_batch(rng, n, d, 0.25);
        ModelConfig cfg;
        cfg.depth = depth;
        cfg.lambda = static_cast<double>(rng_below(rng, 3));
        cfg.metric = static_cast<FairnessMetric>(rng_below(rng, 4));
        const MiaTree tree = testsup::random_fitted_tree(rng, batch, depth);
        const MipProgram p = build_program(batch, cfg);
        const TreeAssignment a = assignment_from_tree(tree, batch, cfg);
        const auto violated = check_feasibility(p, a);
        CHECK(violated.empty());
        CHECK(objective_value(p, a) ==
              doctest::Approx(evaluate_objective(tree, batch, cfg.lambda, cfg.metric))
                  .epsilon(1e-12));
    }
}

TEST_CASE("flipping a leaf label against the majority is caught") {
    std::mt19937_64 rng(62);
    const TabularDataset batch = testsup::random_batch(rng, 10, 2, 0.2);
    const ModelConfig cfg = depth1_cfg();
    const MipProgram p = build_program(batch, cfg);
    MiaTree tree = testsup::random_fitted_tree(rng, batch, 1);

    for (std::size_t leaf = 0; leaf < tree.n_leaf(); ++leaf) {
        MiaTree mutated = tree;
        mutated.leaves[leaf] = 1 - mutated.leaves[leaf];
        const TreeAssignment a = assignment_from_tree(mutated, batch, cfg);
        const auto violated = check_feasibility(p, a);
        CHECK((contains_tag(violated, "leaf_1") || contains_tag(violated, "leaf_2")));
    }
}

TEST_CASE("misrouting a point is caught by the or-encoding") {
    std::mt19937_64 rng(63);
    const TabularDataset batch = testsup::random_batch(rng, 8, 2, 0.2);
    const ModelConfig cfg = depth1_cfg();
    const MipProgram p = build_program(batch, cfg);
    const MiaTree tree = testsup::random_fitted_tree(rng, batch, 1);
    TreeAssignment a = assignment_from_tree(tree, batch, cfg);

    // Send row 0 the other way at the root and move its leaf indicator along.
    const double w = a[p.var_w(0, 0)];
    a[p.var_w(0, 0)] = 1.0 - w;
    a[p.var_z(0, w > 0.5 ? 0 : 1)] = 0.0;
    a[p.var_z(0, w > 0.5 ? 1 : 0)] = 1.0;
    const auto violated = check_feasibility(p, a);
    CHECK(contains_tag(violated, "branch_6"));
}

TEST_CASE("check_feasibility flags domain violations and missing coverage") {
    const TabularDataset batch = tiny_batch();
    const ModelConfig cfg = depth1_cfg();
    const MipProgram p = build_program(batch, cfg);
    std::mt19937_64 rng(64);
    const MiaTree tree = testsup::random_fitted_tree(rng, batch, 1);
    TreeAssignment a = assignment_from_tree(tree, batch, cfg);
    a[p.var_u(0)] = 0.5; // fractional binary
    CHECK(contains_tag(check_feasibility(p, a), "var_domain"));

    TreeAssignment short_a(p.vars.size() - 1, 0.0);
    CHECK_THROWS_AS(check_feasibility(p, short_a), DataError);

    // A program with no constraints accepts anything in range.
    MipProgram empty = p;
    empty.constraints.clear();
    CHECK(check_feasibility(empty, assignment_from_tree(tree, batch, cfg)).empty());
}

TEST_CASE("enumerating candidate trees reaches the solver optimum") {
    std::mt19937_64 rng(65);
    for (int t = 0; t < 10; ++t) {
        const std::size_t n = 6 + rng_below(rng, 7); // up to 12
        const TabularDataset batch = testsup::random_batch(rng, n, 2, 0.25);
        ModelConfig cfg = depth1_cfg(static_cast<FairnessMetric>(t % 4), 0.5 * (t % 3));
        const MipProgram p = build_program(batch, cfg);

        double best = std::numeric_limits<double>::infinity();
        double best_lfair = 0.0, best_gap = 0.0;
        for (std::size_t j = 0; j < batch.n_cols; ++j) {
            for (const SplitCandidate& c : enumerate_candidates(batch, static_cast<int>(j))) {
                MiaTree tree;
                tree.depth = 1;
                tree.branches = {{static_cast<int>(j), c.threshold, c.missing_left}};
                tree.leaves = {0, 0};
                tree = fit_leaves(tree, batch);
                const TreeAssignment a = assignment_from_tree(tree, batch, cfg);
                REQUIRE(check_feasibility(p, a).empty());
                const double obj = objective_value(p, a);
                if (obj < best) {
                    best = obj;
                    // Epigraph variables at induced assignments equal the
                    // exact gap.
                    best_lfair = a[p.var_lfair(0)];
                    const auto preds = predict(tree, batch);
                    best_gap = cfg.metric == FairnessMetric::EqualizedOdds
                                   ? fairness_value(FairnessMetric::FprDiff, preds,
                                                    batch.labels, batch.groups)
                                   : fairness_value(cfg.metric, preds, batch.labels,
                                                    batch.groups);
                }
            }
        }
        SolverConfig scfg;
        const SolveResult res = solve(batch, scfg, cfg);
        CHECK(res.proven_optimal);
        CHECK(std::abs(res.objective - best) < 1e-12);
        CHECK(best_lfair == doctest::Approx(best_gap).epsilon(1e-12));
    }
}

TEST_CASE("build_program validates its inputs") {
    const TabularDataset batch = tiny_batch();
    ModelConfig cfg = depth1_cfg();

    TabularDataset unscaled = batch;
    unscaled.scaling.clear();
    CHECK_THROWS_AS(build_program(unscaled, cfg), DataError);

    TabularDataset one_group = batch;
    one_group.groups.assign(one_group.n_rows, 0);
    CHECK_THROWS_AS(build_program(one_group, cfg), DataError);

    TabularDataset empty;
    empty.scaling.assign(1, {0.0, 1.0});
    CHECK_THROWS_AS(build_program(empty, cfg), DataError);

    cfg.big_m = 3.0; // below n+1
    CHECK_THROWS_AS(build_program(batch, cfg), ConfigError);

    cfg = depth1_cfg();
    cfg.eps_tol = 0.0;
    CHECK_THROWS_AS(build_program(batch, cfg), ConfigError);

    std::mt19937_64 rng(66);
    MiaTree wrong_depth = testsup::random_fitted_tree(rng, batch, 2);
    CHECK_THROWS_AS(assignment_from_tree(wrong_depth, batch, depth1_cfg()), DataError);
}

TEST_CASE("LP export round-trips to an identical program") {
    for (FairnessMetric metric : {FairnessMetric::AccuracyDiff, FairnessMetric::EqualizedOdds}) {
        const MipProgram p = build_program(tiny_batch(), depth1_cfg(metric, 0.7));
        const std::string text = write_lp(p);
        const MipProgram back = parse_lp_text(text);
        CHECK(structurally_equal(p, back));
        CHECK(back.vars.size() == p.vars.size());
    }
}

TEST_CASE("the LP file declares all 29 binaries of the small instance") {
    const MipProgram p = build_program(tiny_batch(), depth1_cfg());
    const std::string text = write_lp(p);
    const auto binaries_at = text.find("Binaries");
    REQUIRE(binaries_at != std::string::npos);
    const auto end_at = text.find("End", binaries_at);
    std::size_t count = 0;
    std::istringstream section(text.substr(binaries_at + 8, end_at - binaries_at - 8));
    std::string tok;
    while (section >> tok) ++count;
    CHECK(count == 29);
}

TEST_CASE("export_lp writes a parseable file and rejects empty programs") {
    const MipProgram p = build_program(tiny_batch(), depth1_cfg());
    const std::string path = testsup::write_temp("prog.lp", "");
    export_lp(p, path);
    const MipProgram back = parse_lp(path);
    CHECK(structurally_equal(p, back));

    MipProgram empty;
    CHECK_THROWS_AS(write_lp(empty), DataError);
}

TEST_CASE("constraint tags follow the documented family names") {
    const MipProgram p = build_program(tiny_batch(), depth1_cfg(FairnessMetric::EqualizedOdds));
    const std::set<std::string> expected{
        "one_hot", "branch_1", "branch_2", "branch_3", "branch_4", "branch_5", "branch_6",
        "branch_7", "leaf_1", "leaf_2", "loss_1", "loss_2", "fair_1", "fair_2", "fair_3",
        "fair_4", "fair_5", "fair_6", "lfair_1", "lfair_2"};
    std::set<std::string> seen;
    for (const auto& c : p.constraints) seen.insert(c.tag);
    CHECK(seen == expected);
}
