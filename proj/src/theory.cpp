#include "fairmip/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "fairmip/metrics.hpp"

namespace fairmip {

void FiniteJoint::validate() const {
    if (atoms.empty()) throw DataError("finite joint has no atoms");
    const std::size_t d = atoms.front().x.size();
    if (missing_coord < 0 || static_cast<std::size_t>(missing_coord) >= d) {
        throw DataError("missing coordinate out of range");
    }
    double total = 0.0;
    for (const auto& a : atoms) {
        if (a.x.size() != d) throw DataError("atoms have inconsistent dimension");
        if (a.prob < 0.0) throw DataError("negative atom probability");
        if ((a.s != 0 && a.s != 1) || (a.m != 0 && a.m != 1) || (a.y != 0 && a.y != 1)) {
            throw DataError("s, m, y must be binary");
        }
        total += a.prob;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw DataError("atom probabilities sum to " + format_double(total) + ", expected 1");
    }
}

namespace {

std::vector<const JointAtom*> scoped_atoms(const FiniteJoint& j, McarScope scope, double& mass) {
    std::vector<const JointAtom*> out;
    mass = 0.0;
    for (const auto& a : j.atoms) {
        if (scope && a.s != *scope) continue;
        out.push_back(&a);
        mass += a.prob;
    }
    return out;
}

// Observed coordinates in order, missing_coord excluded.
std::vector<double> observed_part(const FiniteJoint& j, const JointAtom& a) {
    std::vector<double> obs;
    obs.reserve(a.x.size() - 1);
    for (std::size_t c = 0; c < a.x.size(); ++c) {
        if (static_cast<int>(c) != j.missing_coord) obs.push_back(a.x[c]);
    }
    return obs;
}

std::vector<double> imputed_vector(const FiniteJoint& j, const JointAtom& a, const FillMap& fill) {
    std::vector<double> x = a.x;
    if (a.m == 1) x[j.missing_coord] = fill(observed_part(j, a));
    return x;
}

} // namespace

McarReport check_mcar_detail(const FiniteJoint& j, McarScope scope, double tol) {
    j.validate();
    double mass = 0.0;
    const auto atoms = scoped_atoms(j, scope, mass);
    if (atoms.empty() || mass <= 0.0) throw DataError("empty scope in MCAR check");

    std::map<std::vector<double>, double> px;
    double pm[2] = {0.0, 0.0};
    std::map<std::pair<std::vector<double>, int>, double> pxm;
    for (const auto* a : atoms) {
        const double p = a->prob / mass;
        px[a->x] += p;
        pm[a->m] += p;
        pxm[{a->x, a->m}] += p;
    }

    McarReport rep;
    for (const auto& [x, p_x] : px) {
        for (int m = 0; m < 2; ++m) {
            McarCell cell;
            cell.x = x;
            cell.m = m;
            auto it = pxm.find({x, m});
            cell.joint_prob = it == pxm.end() ? 0.0 : it->second;
            cell.product_prob = p_x * pm[m];
            rep.max_gap = std::max(rep.max_gap, std::abs(cell.joint_prob - cell.product_prob));
            rep.cells.push_back(std::move(cell));
        }
    }
    rep.mcar = rep.max_gap <= tol;
    return rep;
}

bool check_mcar(const FiniteJoint& j, McarScope scope, double tol) {
    return check_mcar_detail(j, scope, tol).mcar;
}

std::pair<FiniteJoint, FiniteJoint> mcar_scope_counterexamples() {
    // (i) X|S=s and M|S=s are independent Bernoullis with parameter 0.1 for
    // s=0 and 0.9 for s=1, S fair. Each group factorizes; the mixture does
    // not (joint mass at (x=1,m=1) is 0.41 against a product of 0.25).
    FiniteJoint first;
    first.missing_coord = 0;
    const double bern[2] = {0.1, 0.9};
    for (int s = 0; s < 2; ++s) {
        for (int x = 0; x < 2; ++x) {
            for (int m = 0; m < 2; ++m) {
                const double px = x == 1 ? bern[s] : 1.0 - bern[s];
                const double pm = m == 1 ? bern[s] : 1.0 - bern[s];
                first.atoms.push_back({s, {static_cast<double>(x)}, m, 0, 0.5 * px * pm});
            }
        }
    }

    // (ii) Per-group (m,x) tables chosen so the mixture is uniform over the
    // four cells (population factorizes) while neither group does.
    FiniteJoint second;
    second.missing_coord = 0;
    const double t0[2][2] = {{0.1, 0.3}, {0.4, 0.2}};  // [m][x], group 0
    const double t1[2][2] = {{0.4, 0.2}, {0.1, 0.3}};  // [m][x], group 1
    for (int m = 0; m < 2; ++m) {
        for (int x = 0; x < 2; ++x) {
            second.atoms.push_back({0, {static_cast<double>(x)}, m, 0, 0.5 * t0[m][x]});
            second.atoms.push_back({1, {static_cast<double>(x)}, m, 0, 0.5 * t1[m][x]});
        }
    }

    first.validate();
    second.validate();
    return {first, second};
}

FillMap constant_fill_map(double value) {
    return [value](const std::vector<double>&) { return value; };
}

FillMap indicator_fill_map(double pivot) {
    return [pivot](const std::vector<double>& x_obs) {
        if (x_obs.empty()) throw DataError("indicator fill needs an observed coordinate");
        return x_obs[0] <= pivot ? 1.0 : 0.0;
    };
}

MismatchBoundCheck verify_mismatch_bound(const FiniteJoint& j, const ThresholdClass& cls,
                                         double threshold, const FillMap& f_train,
                                         const FillMap& f_test) {
    j.validate();
    if (cls.axis < 0 || static_cast<std::size_t>(cls.axis) >= j.dim()) {
        throw DataError("threshold class axis out of range");
    }
    for (int s = 0; s < 2; ++s) {
        if (!check_mcar(j, s)) {
            throw DataError("mismatch bound requires per-group MCAR; group " +
                            std::to_string(s) + " is not");
        }
    }

    const auto predict = [&](const std::vector<double>& x) {
        return x[cls.axis] >= threshold ? 1 : 0;
    };

    // Group-conditional risk under a fill.
    const auto group_risk = [&](const FillMap& fill, int s) {
        double mass = 0.0, loss = 0.0;
        for (const auto& a : j.atoms) {
            if (a.s != s) continue;
            mass += a.prob;
            if (predict(imputed_vector(j, a, fill)) != a.y) loss += a.prob;
        }
        if (mass <= 0.0) throw DataError("group " + std::to_string(s) + " has zero mass");
        return loss / mass;
    };

    // TV between the conditional laws of (imputed x, y) given M=1, S=s.
    const auto tv_given_missing = [&](int s, double& p_missing) {
        double group_mass = 0.0, missing_mass = 0.0;
        std::map<std::pair<std::vector<double>, int>, std::pair<double, double>> dist;
        for (const auto& a : j.atoms) {
            if (a.s != s) continue;
            group_mass += a.prob;
            if (a.m != 1) continue;
            missing_mass += a.prob;
            dist[{imputed_vector(j, a, f_train), a.y}].first += a.prob;
            dist[{imputed_vector(j, a, f_test), a.y}].second += a.prob;
        }
        p_missing = group_mass > 0.0 ? missing_mass / group_mass : 0.0;
        if (missing_mass <= 0.0) return 0.0;
        double l1 = 0.0;
        for (const auto& [key, pq] : dist) {
            l1 += std::abs(pq.first - pq.second) / missing_mass;
        }
        return 0.5 * l1;
    };

    MismatchBoundCheck out;
    out.lhs = std::abs(group_risk(f_test, 0) - group_risk(f_test, 1));
    double p0 = 0.0, p1 = 0.0;
    const double tv0 = tv_given_missing(0, p0);
    const double tv1 = tv_given_missing(1, p1);
    out.rhs = mismatch_disc_bound(group_risk(f_train, 0), group_risk(f_train, 1), 1.0, p0, p1,
                                  tv0, tv1);
    out.holds = out.lhs <= out.rhs + 1e-12;
    return out;
}

std::vector<ConformalScanResult> conformal_scan(const FiniteJoint& j, const ThresholdClass& cls,
                                                const std::vector<FillMap>& fills, double eps,
                                                const std::vector<double>& threshold_grid) {
    j.validate();
    if (fills.empty() || threshold_grid.empty()) {
        throw DataError("conformal_scan: fill and threshold grids must be nonempty");
    }
    if (cls.axis < 0 || static_cast<std::size_t>(cls.axis) >= j.dim()) {
        throw DataError("threshold class axis out of range");
    }
    double group_mass[2] = {0.0, 0.0};
    for (const auto& a : j.atoms) group_mass[a.s] += a.prob;
    if (group_mass[0] <= 0.0 || group_mass[1] <= 0.0) {
        throw DataError("conformal_scan requires both groups present");
    }

    std::vector<ConformalScanResult> out;
    out.reserve(fills.size());
    for (const auto& fill : fills) {
        // Imputed axis values are fixed per fill; thresholds only re-bucket them.
        std::vector<std::pair<double, const JointAtom*>> imputed;
        imputed.reserve(j.atoms.size());
        for (const auto& a : j.atoms) {
            imputed.emplace_back(imputed_vector(j, a, fill)[cls.axis], &a);
        }
        // No feasible threshold reports the 0-1 worst case, risk 1; the
        // argmin field is meaningful only when feasible is set.
        ConformalScanResult res;
        res.feasible = false;
        res.min_feasible_risk = 1.0;
        res.argmin_threshold = 0.0;
        for (double a : threshold_grid) {
            double risk = 0.0, loss_g[2] = {0.0, 0.0};
            for (const auto& [xv, atom] : imputed) {
                const int pred = xv >= a ? 1 : 0;
                if (pred != atom->y) {
                    risk += atom->prob;
                    loss_g[atom->s] += atom->prob;
                }
            }
            const double gap =
                std::abs(loss_g[0] / group_mass[0] - loss_g[1] / group_mass[1]);
            if (gap > eps + 1e-12) continue;
            // Smallest threshold attaining the minimum, so results do not
            // depend on grid order.
            if (!res.feasible || risk < res.min_feasible_risk - 1e-12 ||
                (std::abs(risk - res.min_feasible_risk) <= 1e-12 && a < res.argmin_threshold)) {
                res.feasible = true;
                res.min_feasible_risk = risk;
                res.argmin_threshold = a;
            }
        }
        out.push_back(res);
    }
    return out;
}

std::vector<double> exhaustive_threshold_grid(const FiniteJoint& j, const ThresholdClass& cls,
                                              const std::vector<FillMap>& fills) {
    j.validate();
    std::vector<double> values{0.0, 1.0};
    for (const auto& a : j.atoms) {
        if (a.m == 0) {
            values.push_back(a.x[cls.axis]);
        } else {
            for (const auto& fill : fills) {
                values.push_back(imputed_vector(j, a, fill)[cls.axis]);
            }
        }
    }
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    std::vector<double> grid = values;
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
        grid.push_back(0.5 * (values[i] + values[i + 1]));
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

NoUniversalFillWitness no_universal_fill_witness() {
    // Two point masses, one per group: the observed coordinate equals the
    // group and fully reveals it, and labels oppose across groups. Any
    // classifier on the observed axis with risk below 1 must split the
    // groups, so no fill can make axis-0 thresholds both fair and accurate;
    // filling the hidden axis with 1[x_obs <= 0] makes it a perfect fair
    // feature for axis-1 thresholds.
    NoUniversalFillWitness w;
    w.joint.missing_coord = 1;
    w.joint.atoms.push_back({0, {0.0, 0.0}, 1, 1, 0.5});
    w.joint.atoms.push_back({1, {1.0, 0.0}, 1, 0, 0.5});
    w.joint.validate();
    w.h1 = ThresholdClass{0};
    w.h2 = ThresholdClass{1};
    w.fill = indicator_fill_map(0.0);
    return w;
}

} // namespace fairmip
