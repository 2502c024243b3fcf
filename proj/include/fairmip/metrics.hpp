#pragma once

// Group-conditional risks, confusion-matrix fairness metrics and total
// variation distance. Pure functions over immutable inputs.

#include <cstdint>
#include <span>
#include <string>

#include "fairmip/common.hpp"

namespace fairmip {

enum class FairnessMetric { AccuracyDiff, FprDiff, FnrDiff, EqualizedOdds };

std::string metric_name(FairnessMetric m);
FairnessMetric metric_from_name(const std::string& name);

struct GroupRisks {
    double l0 = 0.0;
    double l1 = 0.0;
    double disc = 0.0; // |l0 - l1|
};

struct GroupConfusion {
    long tp = 0, fp = 0, tn = 0, fn = 0;
};

struct ConfusionByGroup {
    GroupConfusion g0, g1;
};

// Counters for the empty-denominator convention: a rate whose denominator
// is zero evaluates to 0 and bumps this diagnostic instead of aborting.
struct RateDiagnostics {
    int empty_denominators = 0;
};

// Fraction of mismatches under 0-1 loss.
double zero_one_risk(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> labels);

// Per-group 0-1 risk; both groups must be nonempty.
GroupRisks group_risks(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> labels,
                       std::span<const std::uint8_t> groups);

ConfusionByGroup confusion_by_group(std::span<const std::uint8_t> preds,
                                    std::span<const std::uint8_t> labels,
                                    std::span<const std::uint8_t> groups);

// AccuracyDiff = |err0 - err1|, FprDiff = |fpr0 - fpr1|, FnrDiff = |fnr0 - fnr1|,
// EqualizedOdds = FprDiff + FnrDiff.
double fairness_value(FairnessMetric metric, std::span<const std::uint8_t> preds,
                      std::span<const std::uint8_t> labels, std::span<const std::uint8_t> groups,
                      RateDiagnostics* diag = nullptr);

// Same metric computed from precomputed counts; fairness_value delegates
// here, so callers holding counts get bit-identical values.
double fairness_from_confusion(FairnessMetric metric, const ConfusionByGroup& c,
                               RateDiagnostics* diag = nullptr);

// Half the L1 distance between two probability vectors on a shared support.
double tv_distance(std::span<const double> p, std::span<const double> q);

// Upper bound on the test-time group-risk gap when the train- and test-time
// fills differ: |l0_train - l1_train| + K * (p0*tv0 + p1*tv1).
double mismatch_disc_bound(double l0_train, double l1_train, double loss_bound, double p0,
                           double p1, double tv0, double tv1);

} // namespace fairmip
