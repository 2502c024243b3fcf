#include <doctest.h>

#include <cmath>

#include "fairmip/imputation.hpp"
#include "fairmip/theory_suite.hpp"
#include "test_support.hpp"

using namespace fairmip;
using testsup::kMiss;
using testsup::make_dataset;

TEST_CASE("mean fill stores the observed mean and fills with it") {
    const TabularDataset ds =
        make_dataset({{1.0}, {2.0}, {kMiss}, {3.0}}, {0, 1, 0, 1}, {0, 0, 1, 1});
    const FittedImputer f = fit(Imputer::mean_fill(), ds);
    CHECK(f.feature_means[0] == 2.0);
    const std::vector<double> out = transform(f, ds);
    CHECK(out[0] == 1.0);
    CHECK(out[2] == 2.0);
}

TEST_CASE("per-group mean fill keeps one mean per group") {
    const TabularDataset ds =
        make_dataset({{0.0}, {2.0}, {4.0}, {kMiss}, {kMiss}}, {0, 1, 0, 1, 0}, {0, 0, 1, 0, 1});
    const FittedImputer f = fit(Imputer::per_group_mean_fill(), ds);
    CHECK(f.group_means[0] == 1.0); // group 0: {0, 2}
    CHECK(f.group_means[1] == 4.0); // group 1: {4}
    const std::vector<double> out = transform(f, ds);
    CHECK(out[3] == 1.0);
    CHECK(out[4] == 4.0);
}

TEST_CASE("fit rejects features without observed values") {
    const TabularDataset all_missing = make_dataset({{kMiss}, {kMiss}}, {0, 1}, {0, 1});
    CHECK_THROWS_AS(fit(Imputer::knn_fill(1), all_missing), DataError);
    CHECK_THROWS_AS(fit(Imputer::mean_fill(), all_missing), DataError);

    // Per-group variant also needs observations within each group.
    const TabularDataset one_side = make_dataset({{1.0}, {kMiss}}, {0, 1}, {0, 1});
    CHECK_THROWS_AS(fit(Imputer::per_group_mean_fill(), one_side), DataError);
    CHECK_NOTHROW(fit(Imputer::mean_fill(), one_side));
}

TEST_CASE("transform passes complete matrices through untouched") {
    std::mt19937_64 rng(31);
    const TabularDataset ds = testsup::random_batch(rng, 20, 3, 0.0);
    for (const Imputer& imp : {Imputer::mean_fill(), Imputer::per_group_mean_fill(),
                               Imputer::knn_fill(3)}) {
        CHECK(transform(fit(imp, ds), ds) == ds.values);
    }
}

TEST_CASE("transform is idempotent on its own output") {
    std::mt19937_64 rng(32);
    const TabularDataset ds = testsup::random_batch(rng, 25, 3, 0.25);
    const FittedImputer f = fit(Imputer::mean_fill(), ds);
    const std::vector<double> once = transform(f, ds);
    TabularDataset complete = ds;
    complete.values = once;
    complete.missing.assign(ds.n_rows * ds.n_cols, 0);
    CHECK(transform(f, complete) == once);
}

TEST_CASE("knn with a zero-distance duplicate copies that row's value") {
    // Query duplicates training row 1 on the observed feature.
    const TabularDataset train = make_dataset(
        {{0.9, 5.0}, {0.2, 7.0}, {0.5, 9.0}}, {0, 1, 0}, {0, 1, 0});
    const FittedImputer f = fit(Imputer::knn_fill(1), train);
    const TabularDataset query = make_dataset({{0.2, kMiss}}, {0}, {0});
    CHECK(transform(f, query)[1] == 7.0);
}

TEST_CASE("knn averages the k nearest rows under co-observed distance") {
    // Distances from the query 0.0 on feature 0: 0.1, 0.2, 5 -> k=2 picks
    // values {0, 1} for feature 1, filling 0.5.
    const TabularDataset train = make_dataset(
        {{0.1, 0.0}, {0.2, 1.0}, {5.0, 10.0}}, {0, 1, 0}, {0, 1, 0});
    const FittedImputer f = fit(Imputer::knn_fill(2), train);
    const TabularDataset query = make_dataset({{0.0, kMiss}}, {0}, {0});
    CHECK(transform(f, query)[1] == 0.5);
}

TEST_CASE("knn errors when a query shares no observed feature with training rows") {
    const TabularDataset train = make_dataset({{1.0}, {2.0}}, {0, 1}, {0, 1});
    const FittedImputer f = fit(Imputer::knn_fill(1), train);
    const TabularDataset query = make_dataset({{kMiss}}, {0}, {0});
    CHECK_THROWS_AS(transform(f, query), DataError);
}

TEST_CASE("knn with k = n equals mean fill when training data are complete") {
    std::mt19937_64 rng(33);
    const TabularDataset train = testsup::random_batch(rng, 15, 2, 0.0);
    const FittedImputer knn = fit(Imputer::knn_fill(15), train);
    const FittedImputer mean = fit(Imputer::mean_fill(), train);
    TabularDataset query = testsup::random_batch(rng, 10, 2, 0.0);
    // Mask feature 1 on every query row; feature 0 stays observed.
    for (std::size_t i = 0; i < query.n_rows; ++i) query.missing[i * 2 + 1] = 1;
    const std::vector<double> via_knn = transform(knn, query);
    const std::vector<double> via_mean = transform(mean, query);
    REQUIRE(via_knn.size() == via_mean.size());
    for (std::size_t k = 0; k < via_knn.size(); ++k) {
        // Identical up to summation order (neighbors accumulate by distance
        // rank, the mean by row order).
        CHECK(std::abs(via_knn[k] - via_mean[k]) < 1e-12);
    }
}

TEST_CASE("imputer_disc averages squared errors over masked cells per group") {
    // Constant fill 1.0; group 0 truths {0,0} -> errors {1,1}; group 1
    // truths {1,-1} -> errors {0,2} squared {0,4}.
    const std::vector<double> truth{0.0, 0.0, 1.0, -1.0};
    const std::vector<std::uint8_t> mask{1, 1, 1, 1};
    const std::vector<std::uint8_t> groups{0, 0, 1, 1};
    FittedImputer f;
    f.kind = Imputer::Kind::ConstantFill;
    f.n_cols = 1;
    f.feature_means = {1.0};
    const ImputerDisc d = imputer_disc(f, truth, mask, groups, 4, 1);
    CHECK(d.l0 == 1.0);
    CHECK(d.l1 == 2.0);
    CHECK(d.disc == 1.0);

    // A group with no masked cells cannot be scored.
    const std::vector<std::uint8_t> mask_one_side{1, 1, 0, 0};
    CHECK_THROWS_AS(imputer_disc(f, truth, mask_one_side, groups, 4, 1), DataError);
}

TEST_CASE("perfect imputation scores zero everywhere") {
    const TabularDataset train = make_dataset({{2.0}, {2.0}, {2.0}, {2.0}}, {0, 1, 0, 1},
                                              {0, 0, 1, 1});
    const FittedImputer f = fit(Imputer::mean_fill(), train);
    const std::vector<double> truth{2.0, 2.0, 2.0, 2.0};
    const std::vector<std::uint8_t> mask{1, 0, 0, 1};
    const std::vector<std::uint8_t> groups{0, 0, 1, 1};
    const ImputerDisc d = imputer_disc(f, truth, mask, groups, 4, 1);
    CHECK(d.l0 == 0.0);
    CHECK(d.l1 == 0.0);
    CHECK(d.disc == 0.0);
}

TEST_CASE("optimal_constant is the missing-weighted mean") {
    CHECK(optimal_constant(0.5, 0.5, 3.0, 3.0) == 3.0);
    CHECK(optimal_constant(1.0, 0.0, -2.0, 99.0) == -2.0);
    CHECK(optimal_constant(0.25, 0.75, 0.0, 1.0) == 0.75);
    CHECK_THROWS_AS(optimal_constant(0.4, 0.4, 0.0, 1.0), DataError);
}

TEST_CASE("optimal_constant minimizes the mixture squared error on a grid") {
    // Two-point mixture with masses 0.25/0.75 at means 0 and 1.
    const auto mixture_mse = [](double alpha) {
        return 0.25 * alpha * alpha + 0.75 * (alpha - 1.0) * (alpha - 1.0);
    };
    double best = 0.0, best_val = mixture_mse(0.0);
    for (int k = 1; k <= 10000; ++k) {
        const double a = static_cast<double>(k) / 10000.0;
        if (mixture_mse(a) < best_val) {
            best_val = mixture_mse(a);
            best = a;
        }
    }
    CHECK(std::abs(best - optimal_constant(0.25, 0.75, 0.0, 1.0)) <= 1e-4);
}

TEST_CASE("optimal_constant_disc closed form") {
    CHECK(optimal_constant_disc({0.5, 0.5, 2.0, 2.0, 1.0, 1.0}) == 0.0); // equal means+vars
    CHECK(optimal_constant_disc({0.5, 0.5, 0.0, 1.0, 1.0, 1.0}) == 0.0); // symmetric
    CHECK(std::abs(optimal_constant_disc({0.3, 0.7, 0.0, 1.0, 1.0, 2.0}) - 0.6) < 1e-15);
    CHECK_THROWS_AS(optimal_constant_disc({0.3, 0.3, 0.0, 1.0, 1.0, 1.0}), DataError);
}

TEST_CASE("optimal_constant_disc agrees with a Monte Carlo of the mixture") {
    const MixtureMoments mm{0.3, 0.7, 0.0, 1.0, 1.0, 2.0};
    std::mt19937_64 rng(34);
    const double alpha = optimal_constant(mm.p0_ms, mm.p1_ms, mm.m0, mm.m1);
    double sum[2] = {0.0, 0.0};
    std::size_t cnt[2] = {0, 0};
    for (int i = 0; i < 200000; ++i) {
        const int s = rng_unit(rng) < mm.p1_ms ? 1 : 0;
        const double sd = std::sqrt(s == 0 ? mm.var0 : mm.var1);
        const double x = (s == 0 ? mm.m0 : mm.m1) + sd * rng_normal(rng);
        sum[s] += (alpha - x) * (alpha - x);
        ++cnt[s];
    }
    const double disc = std::abs(sum[0] / cnt[0] - sum[1] / cnt[1]);
    CHECK(std::abs(disc - optimal_constant_disc(mm)) < 0.05);
}

TEST_CASE("mean fill disc equals the closed form on empirical moments") {
    // Single feature with nothing else observed: the training mean is the
    // optimal constant for the all-masked mixture with p_s = group share,
    // so the measured disc must equal the formula on the empirical moments.
    std::mt19937_64 rng(35);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 60;
        std::vector<std::vector<double>> rows;
        std::vector<int> labels, groups;
        std::vector<double> truth;
        for (std::size_t i = 0; i < n; ++i) {
            const int g = i < 2 ? static_cast<int>(i) : static_cast<int>(rng_below(rng, 2));
            const double x = (g == 0 ? 0.0 : 1.0) + rng_unit(rng) * (g == 0 ? 1.0 : 2.0);
            truth.push_back(x);
            rows.push_back({x});
            labels.push_back(0);
            groups.push_back(g);
        }
        const TabularDataset ds = make_dataset(rows, labels, groups);
        const FittedImputer f = fit(Imputer::mean_fill(), ds);

        double m[2] = {0.0, 0.0}, v[2] = {0.0, 0.0};
        std::size_t cnt[2] = {0, 0};
        for (std::size_t i = 0; i < n; ++i) {
            m[groups[i]] += truth[i];
            ++cnt[groups[i]];
        }
        m[0] /= static_cast<double>(cnt[0]);
        m[1] /= static_cast<double>(cnt[1]);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = truth[i] - m[groups[i]];
            v[groups[i]] += d * d;
        }
        v[0] /= static_cast<double>(cnt[0]);
        v[1] /= static_cast<double>(cnt[1]);
        const double p0 = static_cast<double>(cnt[0]) / static_cast<double>(n);

        // The training mean coincides with the optimal constant here.
        CHECK(std::abs(f.feature_means[0] - optimal_constant(p0, 1.0 - p0, m[0], m[1])) < 1e-12);

        const std::vector<std::uint8_t> full_mask(n, 1);
        const ImputerDisc d =
            imputer_disc(f, truth, full_mask,
                         std::vector<std::uint8_t>(groups.begin(), groups.end()), n, 1);
        const double expected = optimal_constant_disc({p0, 1.0 - p0, m[0], m[1], v[0], v[1]});
        CHECK(std::abs(d.disc - expected) < 1e-9);
    }
}

TEST_CASE("per-group mean fill dominates mean fill when only means differ") {
    // Equal variances, different means: the shared-mean imputer carries the
    // whole mean-gap term, the per-group one none of it.
    std::vector<std::vector<double>> rows;
    std::vector<int> labels, groups;
    std::vector<double> truth;
    for (int i = 0; i < 16; ++i) {
        const int g = i % 2;
        const double base = g == 0 ? 0.0 : 5.0;
        const double wiggle = (i / 2) % 2 == 0 ? -0.5 : 0.5;
        truth.push_back(base + wiggle);
        rows.push_back({base + wiggle});
        labels.push_back(0);
        groups.push_back(g);
    }
    TabularDataset ds = make_dataset(rows, labels, groups);
    const std::vector<std::uint8_t> mask(16, 1);
    const std::vector<std::uint8_t> grp(groups.begin(), groups.end());

    const ImputerDisc mean_disc =
        imputer_disc(fit(Imputer::mean_fill(), ds), truth, mask, grp, 16, 1);
    const ImputerDisc group_disc =
        imputer_disc(fit(Imputer::per_group_mean_fill(), ds), truth, mask, grp, 16, 1);
    CHECK(group_disc.disc <= mean_disc.disc);
    CHECK(group_disc.disc == 0.0);
}
