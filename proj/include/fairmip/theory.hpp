#pragma once

// Exact checks on finite joint distributions of (S, X, M, Y): scoped MCAR
// factorization tests, the train/test imputation-mismatch bound, and
// exhaustive conformality scans over threshold classifiers. Everything here
// is closed-form arithmetic on small atom lists; the working tolerance is
// 1e-12.

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "fairmip/common.hpp"

namespace fairmip {

// One support point of the joint law. Coordinates store the complete
// underlying x; the incomplete view hides missing_coord wherever m = 1.
struct JointAtom {
    int s = 0;
    std::vector<double> x;
    int m = 0;
    int y = 0;
    double prob = 0.0;
};

struct FiniteJoint {
    std::vector<JointAtom> atoms;
    int missing_coord = 0; // coordinate replaced by * when m = 1

    std::size_t dim() const { return atoms.empty() ? 0 : atoms.front().x.size(); }
    void validate() const; // probabilities sum to 1 within 1e-12, shapes agree
};

// Scope of an independence test: population, or one group's conditional law.
using McarScope = std::optional<int>;

// Exact factorization test P(M=m, X=x) = P(M=m) P(X=x) on the scoped
// sub-distribution.
bool check_mcar(const FiniteJoint& j, McarScope scope, double tol = 1e-12);

struct McarCell {
    std::vector<double> x;
    int m = 0;
    double joint_prob = 0.0;
    double product_prob = 0.0;
};

struct McarReport {
    bool mcar = true;
    double max_gap = 0.0;
    std::vector<McarCell> cells; // full contingency table, all (x, m) pairs
};

McarReport check_mcar_detail(const FiniteJoint& j, McarScope scope, double tol = 1e-12);

// The two scope-reversal constructions: first, every group is MCAR but the
// population is not; second, the population is MCAR but neither group is.
std::pair<FiniteJoint, FiniteJoint> mcar_scope_counterexamples();

// Predictor family 1[x_axis >= a], a in [0,1].
struct ThresholdClass {
    int axis = 0;
};

// Fill rule for the missing coordinate; receives the observed coordinates
// in order (missing_coord excluded).
using FillMap = std::function<double(const std::vector<double>& x_obs)>;

FillMap constant_fill_map(double value);
// 1[x_obs[0] <= pivot] fill (the indicator fills used by the witnesses).
FillMap indicator_fill_map(double pivot);

struct MismatchBoundCheck {
    double lhs = 0.0; // test-time group-risk gap
    double rhs = 0.0; // train-time gap + sum_s p_s * TV_s
    bool holds = false;
};

// Requires per-group MCAR; evaluates both sides of the mismatch bound
// exactly for the 0-1 loss (K = 1) and threshold predictor 1[x_axis >= a].
MismatchBoundCheck verify_mismatch_bound(const FiniteJoint& j, const ThresholdClass& cls,
                                         double threshold, const FillMap& f_train,
                                         const FillMap& f_test);

struct ConformalScanResult {
    double min_feasible_risk = 0.0;
    double argmin_threshold = 0.0; // smallest threshold attaining the minimum
    bool feasible = false;
};

// For each fill, exhaustively minimizes risk over the threshold grid subject
// to |L0 - L1| <= eps. The grid must contain every breakpoint induced by the
// atoms' (imputed) axis values for the scan to be exact.
std::vector<ConformalScanResult> conformal_scan(const FiniteJoint& j, const ThresholdClass& cls,
                                                const std::vector<FillMap>& fills, double eps,
                                                const std::vector<double>& threshold_grid);

// Exhaustive grid for a finite joint: atom axis values under every fill,
// midpoints of consecutive values, and the interval endpoints 0 and 1.
std::vector<double> exhaustive_threshold_grid(const FiniteJoint& j, const ThresholdClass& cls,
                                              const std::vector<FillMap>& fills);

struct NoUniversalFillWitness {
    FiniteJoint joint;
    ThresholdClass h1; // no fill is conformal for this class (eps, delta < 0.5)
    ThresholdClass h2; // the returned fill is conformal for this one
    FillMap fill;
};

NoUniversalFillWitness no_universal_fill_witness();

} // namespace fairmip
