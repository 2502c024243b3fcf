#include "fairmip/metrics.hpp"

#include <cmath>
#include <cstdlib>

namespace fairmip {

std::string metric_name(FairnessMetric m) {
    switch (m) {
    case FairnessMetric::AccuracyDiff: return "accuracy_diff";
    case FairnessMetric::FprDiff: return "fpr_diff";
    case FairnessMetric::FnrDiff: return "fnr_diff";
    case FairnessMetric::EqualizedOdds: return "equalized_odds";
    }
    return "accuracy_diff";
}

FairnessMetric metric_from_name(const std::string& name) {
    if (name == "accuracy_diff") return FairnessMetric::AccuracyDiff;
    if (name == "fpr_diff") return FairnessMetric::FprDiff;
    if (name == "fnr_diff") return FairnessMetric::FnrDiff;
    if (name == "equalized_odds") return FairnessMetric::EqualizedOdds;
    throw ConfigError("unknown fairness metric: " + name);
}

double zero_one_risk(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> labels) {
    if (preds.size() != labels.size()) throw DataError("prediction/label length mismatch");
    if (preds.empty()) throw DataError("zero_one_risk over an empty vector");
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] != labels[i]) ++mismatches;
    }
    return static_cast<double>(mismatches) / static_cast<double>(preds.size());
}

GroupRisks group_risks(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> labels,
                       std::span<const std::uint8_t> groups) {
    if (preds.size() != labels.size() || preds.size() != groups.size()) {
        throw DataError("prediction/label/group length mismatch");
    }
    std::size_t n[2] = {0, 0};
    std::size_t bad[2] = {0, 0};
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int g = groups[i];
        ++n[g];
        if (preds[i] != labels[i]) ++bad[g];
    }
    if (n[0] == 0 || n[1] == 0) throw DataError("group_risks requires both groups nonempty");
    GroupRisks r;
    r.l0 = static_cast<double>(bad[0]) / static_cast<double>(n[0]);
    r.l1 = static_cast<double>(bad[1]) / static_cast<double>(n[1]);
    r.disc = std::abs(r.l0 - r.l1);
    return r;
}

ConfusionByGroup confusion_by_group(std::span<const std::uint8_t> preds,
                                    std::span<const std::uint8_t> labels,
                                    std::span<const std::uint8_t> groups) {
    if (preds.size() != labels.size() || preds.size() != groups.size()) {
        throw DataError("prediction/label/group length mismatch");
    }
    ConfusionByGroup c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        GroupConfusion& g = groups[i] == 0 ? c.g0 : c.g1;
        if (labels[i] == 1) {
            preds[i] == 1 ? ++g.tp : ++g.fn;
        } else {
            preds[i] == 1 ? ++g.fp : ++g.tn;
        }
    }
    return c;
}

namespace {

// Empty denominator -> rate 0 plus a diagnostic tick.
double safe_rate(long num, long den, RateDiagnostics* diag) {
    if (den == 0) {
        if (diag) ++diag->empty_denominators;
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

} // namespace

double fairness_from_confusion(FairnessMetric metric, const ConfusionByGroup& c,
                               RateDiagnostics* diag) {
    const long n0 = c.g0.tp + c.g0.fp + c.g0.tn + c.g0.fn;
    const long n1 = c.g1.tp + c.g1.fp + c.g1.tn + c.g1.fn;
    switch (metric) {
    case FairnessMetric::AccuracyDiff: {
        const double e0 = safe_rate(c.g0.fp + c.g0.fn, n0, diag);
        const double e1 = safe_rate(c.g1.fp + c.g1.fn, n1, diag);
        return std::abs(e0 - e1);
    }
    case FairnessMetric::FprDiff: {
        const double f0 = safe_rate(c.g0.fp, c.g0.fp + c.g0.tn, diag);
        const double f1 = safe_rate(c.g1.fp, c.g1.fp + c.g1.tn, diag);
        return std::abs(f0 - f1);
    }
    case FairnessMetric::FnrDiff: {
        const double f0 = safe_rate(c.g0.fn, c.g0.fn + c.g0.tp, diag);
        const double f1 = safe_rate(c.g1.fn, c.g1.fn + c.g1.tp, diag);
        return std::abs(f0 - f1);
    }
    case FairnessMetric::EqualizedOdds:
        return fairness_from_confusion(FairnessMetric::FprDiff, c, diag) +
               fairness_from_confusion(FairnessMetric::FnrDiff, c, diag);
    }
    return 0.0;
}

double fairness_value(FairnessMetric metric, std::span<const std::uint8_t> preds,
                      std::span<const std::uint8_t> labels, std::span<const std::uint8_t> groups,
                      RateDiagnostics* diag) {
    return fairness_from_confusion(metric, confusion_by_group(preds, labels, groups), diag);
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw DataError("tv_distance: support size mismatch");
    double sp = 0.0, sq = 0.0;
    for (double v : p) sp += v;
    for (double v : q) sq += v;
    if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
        throw DataError("tv_distance: inputs must be normalized probability vectors");
    }
    double l1 = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) l1 += std::abs(p[i] - q[i]);
    return 0.5 * l1;
}

double mismatch_disc_bound(double l0_train, double l1_train, double loss_bound, double p0,
                           double p1, double tv0, double tv1) {
    if (l0_train < 0.0 || l1_train < 0.0 || loss_bound < 0.0 || p0 < 0.0 || p1 < 0.0 ||
        tv0 < 0.0 || tv1 < 0.0) {
        throw DataError("mismatch_disc_bound: inputs must be nonnegative");
    }
    return std::abs(l0_train - l1_train) + loss_bound * (p0 * tv0 + p1 * tv1);
}

} // namespace fairmip
