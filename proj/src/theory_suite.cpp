#include "fairmip/theory_suite.hpp"

#include <cmath>

#include "fairmip/imputation.hpp"
#include "fairmip/metrics.hpp"

namespace fairmip {

double rng_normal(std::mt19937_64& rng) {
    const double u1 = 1.0 - rng_unit(rng); // (0, 1]
    const double u2 = rng_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

FiniteJoint random_group_mcar_joint(std::mt19937_64& rng) {
    // Dyadic probability grids keep every atom mass and the total exact.
    static const double kGroupProb[] = {0.25, 0.5, 0.75};
    static const double kMissProb[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    static const double kWeight[] = {0.25, 0.5, 0.75};
    static const double kValue[] = {0.0, 0.25, 0.5, 0.75, 1.0};

    const double ps0 = kGroupProb[rng_below(rng, 3)];
    FiniteJoint j;
    j.missing_coord = 1;
    for (int s = 0; s < 2; ++s) {
        const double group_mass = s == 0 ? ps0 : 1.0 - ps0;
        const double p_miss = kMissProb[rng_below(rng, 5)];
        const double w1 = kWeight[rng_below(rng, 3)];
        for (int combo = 0; combo < 2; ++combo) {
            const double w = combo == 0 ? w1 : 1.0 - w1;
            const double x_obs = kValue[rng_below(rng, 5)];
            const double x_ms = kValue[rng_below(rng, 5)];
            const int y = static_cast<int>(rng_below(rng, 2));
            for (int m = 0; m < 2; ++m) {
                const double p = group_mass * w * (m == 1 ? p_miss : 1.0 - p_miss);
                if (p > 0.0) j.atoms.push_back({s, {x_obs, x_ms}, m, y, p});
            }
        }
    }
    j.validate();
    return j;
}

namespace {

void push(TheorySuiteResult& out, std::string name, double expected, double computed,
          double tol) {
    TheoryCheck c;
    c.name = std::move(name);
    c.expected = expected;
    c.computed = computed;
    c.pass = std::abs(expected - computed) <= tol;
    out.checks.push_back(std::move(c));
}

// Monte Carlo estimate of the constant-fill discrimination on the normal
// mixture with the given moments.
double mc_constant_fill_disc(const MixtureMoments& mm, std::uint64_t samples,
                             std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double alpha = optimal_constant(mm.p0_ms, mm.p1_ms, mm.m0, mm.m1);
    double sum[2] = {0.0, 0.0};
    std::uint64_t cnt[2] = {0, 0};
    for (std::uint64_t i = 0; i < samples; ++i) {
        const int s = rng_unit(rng) < mm.p1_ms ? 1 : 0;
        const double mean = s == 0 ? mm.m0 : mm.m1;
        const double sd = std::sqrt(s == 0 ? mm.var0 : mm.var1);
        const double x = mean + sd * rng_normal(rng);
        const double err = alpha - x;
        sum[s] += err * err;
        ++cnt[s];
    }
    const double l0 = cnt[0] ? sum[0] / static_cast<double>(cnt[0]) : 0.0;
    const double l1 = cnt[1] ? sum[1] / static_cast<double>(cnt[1]) : 0.0;
    return std::abs(l0 - l1);
}

} // namespace

TheorySuiteResult run_theory_suite(const TheorySuiteOptions& opt) {
    TheorySuiteResult out;

    // --- scoped MCAR counterexamples ---
    const auto [first, second] = mcar_scope_counterexamples();
    push(out, "scoped_mcar/groups_hold",
         1.0, (check_mcar(first, 0) && check_mcar(first, 1)) ? 1.0 : 0.0, 0.0);
    push(out, "scoped_mcar/population_fails", 1.0, check_mcar(first, std::nullopt) ? 0.0 : 1.0,
         0.0);
    const McarReport rep = check_mcar_detail(first, std::nullopt);
    double joint_11 = -1.0, product_11 = -1.0;
    for (const McarCell& cell : rep.cells) {
        if (cell.m == 1 && cell.x.size() == 1 && cell.x[0] == 1.0) {
            joint_11 = cell.joint_prob;
            product_11 = cell.product_prob;
        }
    }
    push(out, "scoped_mcar/population_joint_x1_m1", 0.41, joint_11, 1e-12);
    push(out, "scoped_mcar/population_product_x1_m1", 0.25, product_11, 1e-12);
    push(out, "scoped_mcar/reversed_population_holds", 1.0,
         check_mcar(second, std::nullopt) ? 1.0 : 0.0, 0.0);
    push(out, "scoped_mcar/reversed_groups_fail", 1.0,
         (!check_mcar(second, 0) && !check_mcar(second, 1)) ? 1.0 : 0.0, 0.0);

    // --- constant-fill discrimination: closed form and Monte Carlo ---
    const MixtureMoments mm{0.3, 0.7, 0.0, 1.0, 1.0, 2.0};
    push(out, "constant_fill_disc/closed_form", 0.6, optimal_constant_disc(mm), 1e-12);
    push(out, "constant_fill_disc/monte_carlo", 0.6,
         mc_constant_fill_disc(mm, opt.mc_samples, opt.seed), 0.02);

    // --- mismatch bound: tight two-point construction, then random joints ---
    {
        FiniteJoint j;
        j.missing_coord = 1;
        j.atoms.push_back({0, {0.0, 0.0}, 1, 0, 0.5});
        j.atoms.push_back({1, {1.0, 0.0}, 1, 0, 0.5});
        const MismatchBoundCheck chk = verify_mismatch_bound(
            j, ThresholdClass{1}, 0.5, constant_fill_map(0.0), indicator_fill_map(0.5));
        push(out, "mismatch_bound/tight_lhs", 1.0, chk.lhs, 1e-12);
        push(out, "mismatch_bound/tight_rhs", 1.0, chk.rhs, 1e-12);
        push(out, "mismatch_bound/tight_holds", 1.0, chk.holds ? 1.0 : 0.0, 0.0);
    }
    {
        static const double kValue[] = {0.0, 0.25, 0.5, 0.75, 1.0};
        std::mt19937_64 rng(opt.seed);
        int held = 0;
        for (int t = 0; t < opt.random_joints; ++t) {
            const FiniteJoint j = random_group_mcar_joint(rng);
            const ThresholdClass cls{static_cast<int>(rng_below(rng, 2))};
            const double threshold = kValue[rng_below(rng, 5)];
            const FillMap f_train = constant_fill_map(kValue[rng_below(rng, 5)]);
            const FillMap f_test = constant_fill_map(kValue[rng_below(rng, 5)]);
            if (verify_mismatch_bound(j, cls, threshold, f_train, f_test).holds) ++held;
        }
        push(out, "mismatch_bound/random_joints_held",
             static_cast<double>(opt.random_joints), static_cast<double>(held), 0.0);
    }

    // --- no universally conformal fill ---
    {
        const NoUniversalFillWitness w = no_universal_fill_witness();
        std::vector<FillMap> fills;
        const int n_const = std::max(2, opt.fill_grid_size);
        for (int k = 0; k < n_const; ++k) {
            fills.push_back(constant_fill_map(static_cast<double>(k) / (n_const - 1)));
        }
        for (double pivot : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            fills.push_back(indicator_fill_map(pivot));
        }
        const double eps = 0.4;

        const auto grid1 = exhaustive_threshold_grid(w.joint, w.h1, fills);
        const auto res1 = conformal_scan(w.joint, w.h1, fills, eps, grid1);
        double worst = 0.0, best = 2.0;
        for (const auto& r : res1) {
            worst = std::max(worst, r.min_feasible_risk);
            best = std::min(best, r.min_feasible_risk);
        }
        push(out, "no_universal_fill/h1_min_over_fills", 1.0, best, 0.0);
        push(out, "no_universal_fill/h1_max_over_fills", 1.0, worst, 0.0);

        const std::vector<FillMap> witness{w.fill};
        const auto grid2 = exhaustive_threshold_grid(w.joint, w.h2, witness);
        const auto res2 = conformal_scan(w.joint, w.h2, witness, eps, grid2);
        push(out, "no_universal_fill/h2_witness_risk", 0.0, res2.at(0).min_feasible_risk, 0.0);
    }

    if (opt.inject_fault && !out.checks.empty()) {
        out.checks.front().computed += 1.0;
        out.checks.front().pass = false;
    }
    out.all_pass = true;
    for (const TheoryCheck& c : out.checks) out.all_pass = out.all_pass && c.pass;
    return out;
}

} // namespace fairmip
