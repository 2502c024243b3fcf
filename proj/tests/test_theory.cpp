#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fairmip/theory.hpp"
#include "fairmip/theory_suite.hpp"
#include "test_support.hpp"

using namespace fairmip;

namespace {

// Product joint: x and m independent within and across groups.
FiniteJoint product_joint() {
    FiniteJoint j;
    j.missing_coord = 0;
    const double px[2] = {0.25, 0.75};
    const double pm[2] = {0.5, 0.5};
    for (int s = 0; s < 2; ++s) {
        for (int x = 0; x < 2; ++x) {
            for (int m = 0; m < 2; ++m) {
                j.atoms.push_back({s, {static_cast<double>(x)}, m, 0, 0.5 * px[x] * pm[m]});
            }
        }
    }
    j.validate();
    return j;
}

// Brute-force independence oracle: P(X=x | M=1) must equal P(X=x | M=0)
// whenever both conditionals exist. A distinct route from the factorization
// test in check_mcar.
bool independent_by_conditionals(const FiniteJoint& j, McarScope scope) {
    double mass_m[2] = {0.0, 0.0};
    std::map<std::vector<double>, double> cond[2];
    for (const auto& a : j.atoms) {
        if (scope && a.s != *scope) continue;
        mass_m[a.m] += a.prob;
        cond[a.m][a.x] += a.prob;
    }
    if (mass_m[0] <= 0.0 || mass_m[1] <= 0.0) return true; // degenerate marginal
    std::set<std::vector<double>> support;
    for (int m = 0; m < 2; ++m) {
        for (const auto& [x, _] : cond[m]) support.insert(x);
    }
    for (const auto& x : support) {
        const double p0 = (cond[0].count(x) ? cond[0][x] : 0.0) / mass_m[0];
        const double p1 = (cond[1].count(x) ? cond[1][x] : 0.0) / mass_m[1];
        if (std::abs(p0 - p1) > 1e-9) return false;
    }
    return true;
}

} // namespace

TEST_CASE("check_mcar accepts product distributions at every scope") {
    const FiniteJoint j = product_joint();
    CHECK(check_mcar(j, std::nullopt));
    CHECK(check_mcar(j, 0));
    CHECK(check_mcar(j, 1));
}

TEST_CASE("first counterexample: groups factorize, the population does not") {
    const auto [first, second] = mcar_scope_counterexamples();
    CHECK(check_mcar(first, 0));
    CHECK(check_mcar(first, 1));
    CHECK_FALSE(check_mcar(first, std::nullopt));

    const McarReport rep = check_mcar_detail(first, std::nullopt);
    bool found = false;
    for (const McarCell& c : rep.cells) {
        if (c.m == 1 && c.x == std::vector<double>{1.0}) {
            found = true;
            CHECK(std::abs(c.joint_prob - 0.41) < 1e-12);
            CHECK(std::abs(c.product_prob - 0.25) < 1e-12);
        }
    }
    CHECK(found);

    // Reversed construction: uniform population cells, skewed groups.
    CHECK(check_mcar(second, std::nullopt));
    CHECK_FALSE(check_mcar(second, 0));
    CHECK_FALSE(check_mcar(second, 1));
    const McarReport pop = check_mcar_detail(second, std::nullopt);
    for (const McarCell& c : pop.cells) CHECK(std::abs(c.joint_prob - 0.25) < 1e-12);
}

TEST_CASE("check_mcar rejects an empty scope") {
    FiniteJoint j;
    j.missing_coord = 0;
    j.atoms.push_back({0, {0.0}, 0, 0, 1.0});
    CHECK_THROWS_AS(check_mcar(j, 1), DataError);
}

TEST_CASE("check_mcar agrees with the conditional-law independence oracle") {
    std::mt19937_64 rng(41);
    int scopes_checked = 0;
    for (int t = 0; t < 300; ++t) {
        // Random joints with dyadic masses, not necessarily MCAR anywhere.
        FiniteJoint j;
        j.missing_coord = 0;
        static const double kVals[] = {0.0, 0.5, 1.0};
        const std::size_t n_atoms = 1 + rng_below(rng, 4);
        std::vector<double> w(n_atoms);
        // Masses in 1/16 units summing to 16 exactly.
        std::size_t left = 16;
        for (std::size_t a = 0; a < n_atoms; ++a) {
            const std::size_t take =
                a + 1 == n_atoms ? left : 1 + rng_below(rng, left - (n_atoms - a - 1));
            w[a] = static_cast<double>(take) / 16.0;
            left -= take;
        }
        for (std::size_t a = 0; a < n_atoms; ++a) {
            j.atoms.push_back({static_cast<int>(rng_below(rng, 2)),
                               {kVals[rng_below(rng, 3)]},
                               static_cast<int>(rng_below(rng, 2)),
                               static_cast<int>(rng_below(rng, 2)), w[a]});
        }
        j.validate();

        for (McarScope scope : {McarScope{}, McarScope{0}, McarScope{1}}) {
            bool has_scope = !scope.has_value();
            for (const auto& atom : j.atoms) has_scope = has_scope || atom.s == *scope;
            if (!has_scope) continue;
            CHECK(check_mcar(j, scope, 1e-9) == independent_by_conditionals(j, scope));
            ++scopes_checked;
        }
    }
    CHECK(scopes_checked > 500);
}

TEST_CASE("mismatch bound with identical fills reduces to the train gap") {
    std::mt19937_64 rng(42);
    for (int t = 0; t < 50; ++t) {
        const FiniteJoint j = random_group_mcar_joint(rng);
        const FillMap fill = constant_fill_map(0.25);
        const auto chk = verify_mismatch_bound(j, ThresholdClass{1}, 0.5, fill, fill);
        CHECK(chk.holds);
        CHECK(std::abs(chk.lhs - chk.rhs) < 1e-12); // zero TV term
    }
}

TEST_CASE("mismatch bound is tight on the two-point construction") {
    FiniteJoint j;
    j.missing_coord = 1;
    j.atoms.push_back({0, {0.0, 0.0}, 1, 0, 0.5});
    j.atoms.push_back({1, {1.0, 0.0}, 1, 0, 0.5});
    const auto chk = verify_mismatch_bound(j, ThresholdClass{1}, 0.5, constant_fill_map(0.0),
                                           indicator_fill_map(0.5));
    CHECK(chk.lhs == 1.0);
    CHECK(chk.rhs == 1.0);
    CHECK(chk.holds);
}

TEST_CASE("mismatch bound holds on 1000 randomized group-MCAR joints") {
    static const double kVals[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::mt19937_64 rng(43);
    int held = 0;
    for (int t = 0; t < 1000; ++t) {
        const FiniteJoint j = random_group_mcar_joint(rng);
        CHECK(j.atoms.size() <= 8);
        const ThresholdClass cls{static_cast<int>(rng_below(rng, 2))};
        const double a = kVals[rng_below(rng, 5)];
        const FillMap f_train = constant_fill_map(kVals[rng_below(rng, 5)]);
        const FillMap f_test = constant_fill_map(kVals[rng_below(rng, 5)]);
        if (verify_mismatch_bound(j, cls, a, f_train, f_test).holds) ++held;
    }
    CHECK(held == 1000);
}

TEST_CASE("mismatch bound rejects joints that are not group-MCAR") {
    FiniteJoint j;
    j.missing_coord = 0;
    // Within group 0, M depends on X.
    j.atoms.push_back({0, {0.0}, 0, 0, 0.25});
    j.atoms.push_back({0, {1.0}, 1, 0, 0.25});
    j.atoms.push_back({1, {0.0}, 0, 0, 0.25});
    j.atoms.push_back({1, {0.0}, 1, 0, 0.25});
    CHECK_THROWS_AS(verify_mismatch_bound(j, ThresholdClass{0}, 0.5, constant_fill_map(0.0),
                                          constant_fill_map(1.0)),
                    DataError);
}

TEST_CASE("conformal_scan with a vacuous constraint returns the unconstrained best") {
    const NoUniversalFillWitness w = no_universal_fill_witness();
    const std::vector<FillMap> fills{w.fill};
    const auto grid = exhaustive_threshold_grid(w.joint, w.h2, fills);
    const auto res = conformal_scan(w.joint, w.h2, fills, 1.0, grid);
    REQUIRE(res.size() == 1);
    CHECK(res[0].feasible);
    CHECK(res[0].min_feasible_risk == 0.0);
}

TEST_CASE("no fill rescues the observed-axis class") {
    const NoUniversalFillWitness w = no_universal_fill_witness();
    std::vector<FillMap> fills;
    for (int k = 0; k <= 10; ++k) fills.push_back(constant_fill_map(k / 10.0));
    for (double pivot : {0.0, 0.5, 1.0}) fills.push_back(indicator_fill_map(pivot));
    const auto grid = exhaustive_threshold_grid(w.joint, w.h1, fills);
    const auto res = conformal_scan(w.joint, w.h1, fills, 0.4, grid);
    for (const auto& r : res) {
        CHECK(r.feasible);
        CHECK(r.min_feasible_risk == 1.0);
    }
}

TEST_CASE("the witness fill makes the hidden-axis class perfect and fair") {
    const NoUniversalFillWitness w = no_universal_fill_witness();
    const std::vector<FillMap> fills{w.fill};
    const auto grid = exhaustive_threshold_grid(w.joint, w.h2, fills);
    const auto res = conformal_scan(w.joint, w.h2, fills, 0.4, grid);
    REQUIRE(res.size() == 1);
    CHECK(res[0].feasible);
    CHECK(res[0].min_feasible_risk == 0.0);
}

TEST_CASE("constant fill zero leaves the hidden-axis class unfair everywhere") {
    const NoUniversalFillWitness w = no_universal_fill_witness();
    const std::vector<FillMap> fills{constant_fill_map(0.0)};
    const auto grid = exhaustive_threshold_grid(w.joint, w.h2, fills);
    const auto res = conformal_scan(w.joint, w.h2, fills, 0.4, grid);
    REQUIRE(res.size() == 1);
    // Both groups collapse onto the same hidden value, so every threshold
    // has gap 1: infeasible, reported as the 0-1 worst case.
    CHECK_FALSE(res[0].feasible);
    CHECK(res[0].min_feasible_risk == 1.0);
}

TEST_CASE("conformal_scan is invariant to atom and grid permutations") {
    const NoUniversalFillWitness w = no_universal_fill_witness();
    std::vector<FillMap> fills;
    for (int k = 0; k <= 4; ++k) fills.push_back(constant_fill_map(k / 4.0));
    auto grid = exhaustive_threshold_grid(w.joint, w.h2, fills);
    const auto base = conformal_scan(w.joint, w.h2, fills, 0.4, grid);

    FiniteJoint shuffled = w.joint;
    std::reverse(shuffled.atoms.begin(), shuffled.atoms.end());
    std::reverse(grid.begin(), grid.end());
    const auto perm = conformal_scan(shuffled, w.h2, fills, 0.4, grid);
    REQUIRE(base.size() == perm.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(base[i].feasible == perm[i].feasible);
        CHECK(base[i].min_feasible_risk == perm[i].min_feasible_risk);
        if (base[i].feasible) CHECK(base[i].argmin_threshold == perm[i].argmin_threshold);
    }
}

TEST_CASE("the bundled theory suite passes and the fault injection trips it") {
    TheorySuiteOptions opt;
    opt.mc_samples = 200000; // lighter than the CLI default; tolerance is wide
    const TheorySuiteResult res = run_theory_suite(opt);
    CHECK(res.all_pass);
    CHECK(res.checks.size() >= 10);

    TheorySuiteOptions bad = opt;
    bad.inject_fault = true;
    CHECK_FALSE(run_theory_suite(bad).all_pass);
}
