#include "fairmip/mip_model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "fairmip/tree_solver.hpp"

namespace fairmip {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFeasTol = 1e-9;
constexpr double kMSplit = 2.0; // features and thresholds live in [-1, 1]

enum class RateKind { Accuracy, Fpr, Fnr };

RateKind family_rate(FairnessMetric metric, std::size_t family) {
    switch (metric) {
    case FairnessMetric::AccuracyDiff: return RateKind::Accuracy;
    case FairnessMetric::FprDiff: return RateKind::Fpr;
    case FairnessMetric::FnrDiff: return RateKind::Fnr;
    case FairnessMetric::EqualizedOdds: return family == 0 ? RateKind::Fpr : RateKind::Fnr;
    }
    return RateKind::Accuracy;
}

// Per-sample z coefficient in the fairness count that is active when the
// leaf predicts 1 (misclassified / false-positive side).
double fair_coef_pred1(RateKind kind, int y, int s, int group) {
    if (s != group) return 0.0;
    switch (kind) {
    case RateKind::Accuracy:
    case RateKind::Fpr: return y == 0 ? 1.0 : 0.0;
    case RateKind::Fnr: return 0.0;
    }
    return 0.0;
}

// Active when the leaf predicts 0 (misclassified / false-negative side).
double fair_coef_pred0(RateKind kind, int y, int s, int group) {
    if (s != group) return 0.0;
    switch (kind) {
    case RateKind::Accuracy:
    case RateKind::Fnr: return y == 1 ? 1.0 : 0.0;
    case RateKind::Fpr: return 0.0;
    }
    return 0.0;
}

double rate_denominator(RateKind kind, const TabularDataset& batch, int group) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < batch.n_rows; ++i) {
        if (batch.groups[i] != group) continue;
        switch (kind) {
        case RateKind::Accuracy: ++count; break;
        case RateKind::Fpr:
            if (batch.labels[i] == 0) ++count;
            break;
        case RateKind::Fnr:
            if (batch.labels[i] == 1) ++count;
            break;
        }
    }
    return static_cast<double>(count);
}

// Leaves below heap node `node`; with B = 2^D - 1 branch nodes, leaf l has
// heap index B + l.
void collect_leaves(std::size_t node, std::size_t n_branch, std::vector<std::size_t>& out) {
    if (node >= n_branch) {
        out.push_back(node - n_branch);
        return;
    }
    collect_leaves(2 * node + 1, n_branch, out);
    collect_leaves(2 * node + 2, n_branch, out);
}

struct Layout {
    std::size_t B, L, n, d, nf;
    std::size_t base_p, base_q, base_c, base_u, base_wnm, base_w1, base_w2, base_w, base_z,
        base_loss, base_f, base_lfair, total;

    Layout(int depth, std::size_t n_, std::size_t d_, FairnessMetric metric) {
        B = (std::size_t{1} << depth) - 1;
        L = std::size_t{1} << depth;
        n = n_;
        d = d_;
        nf = metric == FairnessMetric::EqualizedOdds ? 2 : 1;
        base_p = 0;
        base_q = base_p + B * d;
        base_c = base_q + B;
        base_u = base_c + B;
        base_wnm = base_u + L;
        base_w1 = base_wnm + n * B;
        base_w2 = base_w1 + n * B;
        base_w = base_w2 + n * B;
        base_z = base_w + n * B;
        base_loss = base_z + n * L;
        base_f = base_loss + L;
        base_lfair = base_f + nf * L * 2;
        total = base_lfair + nf;
    }
};

Layout layout_of(const MipProgram& p) {
    return Layout(p.depth, p.n, p.d, p.metric);
}

} // namespace

int MipProgram::var_p(std::size_t v, std::size_t j) const {
    return static_cast<int>(layout_of(*this).base_p + v * d + j);
}
int MipProgram::var_q(std::size_t v) const { return static_cast<int>(layout_of(*this).base_q + v); }
int MipProgram::var_c(std::size_t v) const { return static_cast<int>(layout_of(*this).base_c + v); }
int MipProgram::var_u(std::size_t l) const { return static_cast<int>(layout_of(*this).base_u + l); }
int MipProgram::var_w_nm(std::size_t i, std::size_t v) const {
    const Layout lay = layout_of(*this);
    return static_cast<int>(lay.base_wnm + i * lay.B + v);
}
int MipProgram::var_w1(std::size_t i, std::size_t v) const {
    const Layout lay = layout_of(*this);
    return static_cast<int>(lay.base_w1 + i * lay.B + v);
}
int MipProgram::var_w2(std::size_t i, std::size_t v) const {
    const Layout lay = layout_of(*this);
    return static_cast<int>(lay.base_w2 + i * lay.B + v);
}
int MipProgram::var_w(std::size_t i, std::size_t v) const {
    const Layout lay = layout_of(*this);
    return static_cast<int>(lay.base_w + i * lay.B + v);
}
int MipProgram::var_z(std::size_t i, std::size_t l) const {
    const Layout lay = layout_of(*this);
    return static_cast<int>(lay.base_z + i * lay.L + l);
}
int MipProgram::var_loss(std::size_t l) const {
    return static_cast<int>(layout_of(*this).base_loss + l);
}
int MipProgram::var_f(std::size_t family, std::size_t l, int group) const {
    const Layout lay = layout_of(*this);
    return static_cast<int>(lay.base_f + (family * lay.L + l) * 2 + group);
}
int MipProgram::var_lfair(std::size_t family) const {
    return static_cast<int>(layout_of(*this).base_lfair + family);
}

namespace {

void validate_batch_and_config(const TabularDataset& batch, const ModelConfig& cfg) {
    if (batch.n_rows == 0) throw DataError("cannot build a program over an empty batch");
    if (!batch.scaled()) throw DataError("batch must be scaled to [0,1] first");
    if (cfg.depth < 1) throw ConfigError("tree depth must be at least 1");
    if (!(cfg.eps_tol > 0.0 && cfg.eps_tol < 1.0)) {
        throw ConfigError("eps_tol must lie in (0, 1)");
    }
    const double required = std::max(2.0, static_cast<double>(batch.n_rows) + 1.0);
    if (cfg.big_m != 0.0 && cfg.big_m < required) {
        throw ConfigError("big_m must be at least max(2, n+1) = " + format_double(required));
    }
    bool has[2] = {false, false};
    for (std::size_t i = 0; i < batch.n_rows; ++i) has[batch.groups[i]] = true;
    if (!has[0] || !has[1]) {
        throw DataError("fairness constraints need both groups in the batch");
    }
}

} // namespace

MipProgram build_program(const TabularDataset& batch, const ModelConfig& cfg) {
    validate_batch_and_config(batch, cfg);

    MipProgram p;
    p.depth = cfg.depth;
    p.n = batch.n_rows;
    p.d = batch.n_cols;
    p.metric = cfg.metric;
    p.lambda = cfg.lambda;
    p.eps_tol = cfg.eps_tol;

    const Layout lay(cfg.depth, batch.n_rows, batch.n_cols, cfg.metric);
    const std::size_t B = lay.B, L = lay.L, n = lay.n, d = lay.d, nf = lay.nf;
    const double m_count = static_cast<double>(n) + 1.0;
    const double eps = cfg.eps_tol;

    // --- variable table, in layout order ---
    p.vars.resize(lay.total);
    auto bin = [&](int idx, std::string name) {
        p.vars[idx] = {std::move(name), VarKind::Binary, 0.0, 1.0};
    };
    auto cont = [&](int idx, std::string name, double lb, double ub) {
        p.vars[idx] = {std::move(name), VarKind::Continuous, lb, ub};
    };
    for (std::size_t v = 0; v < B; ++v) {
        for (std::size_t j = 0; j < d; ++j) {
            bin(p.var_p(v, j), "p_v" + std::to_string(v) + "_j" + std::to_string(j));
        }
    }
    for (std::size_t v = 0; v < B; ++v) cont(p.var_q(v), "q_v" + std::to_string(v), -1.0, 1.0);
    for (std::size_t v = 0; v < B; ++v) bin(p.var_c(v), "c_v" + std::to_string(v));
    for (std::size_t l = 0; l < L; ++l) bin(p.var_u(l), "u_l" + std::to_string(l));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t v = 0; v < B; ++v) {
            const std::string suffix = "_i" + std::to_string(i) + "_v" + std::to_string(v);
            bin(p.var_w_nm(i, v), "wnm" + suffix);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t v = 0; v < B; ++v) {
            bin(p.var_w1(i, v), "w1_i" + std::to_string(i) + "_v" + std::to_string(v));
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t v = 0; v < B; ++v) {
            bin(p.var_w2(i, v), "w2_i" + std::to_string(i) + "_v" + std::to_string(v));
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t v = 0; v < B; ++v) {
            bin(p.var_w(i, v), "w_i" + std::to_string(i) + "_v" + std::to_string(v));
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t l = 0; l < L; ++l) {
            bin(p.var_z(i, l), "z_i" + std::to_string(i) + "_l" + std::to_string(l));
        }
    }
    for (std::size_t l = 0; l < L; ++l) {
        cont(p.var_loss(l), "loss_l" + std::to_string(l), 0.0, kInf);
    }
    for (std::size_t k = 0; k < nf; ++k) {
        for (std::size_t l = 0; l < L; ++l) {
            for (int g = 0; g < 2; ++g) {
                cont(p.var_f(k, l, g), "f" + std::to_string(k) + "_l" + std::to_string(l) + "_g" +
                                           std::to_string(g),
                     0.0, kInf);
            }
        }
    }
    for (std::size_t k = 0; k < nf; ++k) {
        cont(p.var_lfair(k), "lfair" + std::to_string(k), 0.0, kInf);
    }

    auto add = [&](std::string tag, std::vector<LinTerm> terms, Sense sense, double rhs) {
        p.constraints.push_back({std::move(tag), std::move(terms), sense, rhs});
    };
    auto term = [](std::vector<LinTerm>& terms, int var, double coef) {
        if (coef != 0.0) terms.push_back({var, coef});
    };

    // --- one-hot rows for p_v and z_i ---
    for (std::size_t v = 0; v < B; ++v) {
        std::vector<LinTerm> t;
        for (std::size_t j = 0; j < d; ++j) term(t, p.var_p(v, j), 1.0);
        add("one_hot", std::move(t), Sense::Equal, 1.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<LinTerm> t;
        for (std::size_t l = 0; l < L; ++l) term(t, p.var_z(i, l), 1.0);
        add("one_hot", std::move(t), Sense::Equal, 1.0);
    }

    // --- threshold indicator w_nm: active only on observed values ---
    for (std::size_t v = 0; v < B; ++v) {
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<LinTerm> t1, t2;
            term(t1, p.var_q(v), 1.0);
            term(t2, p.var_q(v), 1.0);
            for (std::size_t j = 0; j < d; ++j) {
                const double a = batch.is_missing(i, j) ? 0.0 : batch.value(i, j);
                term(t1, p.var_p(v, j), -a);
                term(t2, p.var_p(v, j), -a);
            }
            term(t1, p.var_w_nm(i, v), -(kMSplit + eps));
            add("branch_1", std::move(t1), Sense::LessEq, -eps);
            term(t2, p.var_w_nm(i, v), -kMSplit);
            add("branch_2", std::move(t2), Sense::GreaterEq, -kMSplit);
        }
    }
    // --- w1 = (feature observed) AND w_nm ---
    for (std::size_t v = 0; v < B; ++v) {
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<LinTerm> t3;
            term(t3, p.var_w1(i, v), 1.0);
            for (std::size_t j = 0; j < d; ++j) {
                term(t3, p.var_p(v, j), batch.is_missing(i, j) ? 1.0 : 0.0);
            }
            term(t3, p.var_w_nm(i, v), -1.0);
            add("branch_3", std::move(t3), Sense::GreaterEq, 0.0);

            std::vector<LinTerm> t4a;
            term(t4a, p.var_w1(i, v), 1.0);
            for (std::size_t j = 0; j < d; ++j) {
                term(t4a, p.var_p(v, j), batch.is_missing(i, j) ? 1.0 : 0.0);
            }
            add("branch_4", std::move(t4a), Sense::LessEq, 1.0);
            add("branch_4", {{p.var_w1(i, v), 1.0}, {p.var_w_nm(i, v), -1.0}}, Sense::LessEq, 0.0);
        }
    }
    // --- w2 = (feature missing) AND c_v ---
    for (std::size_t v = 0; v < B; ++v) {
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<LinTerm> t5a;
            term(t5a, p.var_w2(i, v), 1.0);
            for (std::size_t j = 0; j < d; ++j) {
                term(t5a, p.var_p(v, j), batch.is_missing(i, j) ? -1.0 : 0.0);
            }
            term(t5a, p.var_c(v), -1.0);
            add("branch_5", std::move(t5a), Sense::GreaterEq, -1.0);

            std::vector<LinTerm> t5b;
            term(t5b, p.var_w2(i, v), 1.0);
            for (std::size_t j = 0; j < d; ++j) {
                term(t5b, p.var_p(v, j), batch.is_missing(i, j) ? -1.0 : 0.0);
            }
            add("branch_5", std::move(t5b), Sense::LessEq, 0.0);
            add("branch_5", {{p.var_w2(i, v), 1.0}, {p.var_c(v), -1.0}}, Sense::LessEq, 0.0);
        }
    }
    // --- w = w1 OR w2, including the upper bound that the OR needs ---
    for (std::size_t v = 0; v < B; ++v) {
        for (std::size_t i = 0; i < n; ++i) {
            add("branch_6", {{p.var_w(i, v), 1.0}, {p.var_w1(i, v), -1.0}}, Sense::GreaterEq, 0.0);
            add("branch_6", {{p.var_w(i, v), 1.0}, {p.var_w2(i, v), -1.0}}, Sense::GreaterEq, 0.0);
            add("branch_6",
                {{p.var_w(i, v), 1.0}, {p.var_w1(i, v), -1.0}, {p.var_w2(i, v), -1.0}},
                Sense::LessEq, 0.0);
        }
    }
    // --- leaf ancestry: z_{i,l} consistent with every branch decision ---
    for (std::size_t v = 0; v < B; ++v) {
        std::vector<std::size_t> left_leaves, right_leaves;
        collect_leaves(2 * v + 1, B, left_leaves);
        collect_leaves(2 * v + 2, B, right_leaves);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t l : left_leaves) {
                add("branch_7", {{p.var_z(i, l), 1.0}, {p.var_w(i, v), -1.0}}, Sense::LessEq, 0.0);
            }
            for (std::size_t l : right_leaves) {
                add("branch_7", {{p.var_z(i, l), 1.0}, {p.var_w(i, v), 1.0}}, Sense::LessEq, 1.0);
            }
        }
    }
    // --- majority rule on u_l via the signed leaf count sum (2y-1) z; ties
    // force u_l = 1 ---
    for (std::size_t l = 0; l < L; ++l) {
        std::vector<LinTerm> t1, t2;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = batch.labels[i] == 1 ? 1.0 : -1.0;
            term(t1, p.var_z(i, l), c);
            term(t2, p.var_z(i, l), c);
        }
        term(t1, p.var_u(l), -(m_count + eps));
        add("leaf_1", std::move(t1), Sense::LessEq, -eps);
        term(t2, p.var_u(l), -m_count);
        add("leaf_2", std::move(t2), Sense::GreaterEq, -m_count);
    }
    // --- per-leaf 0-1 loss linearization ---
    for (std::size_t l = 0; l < L; ++l) {
        std::vector<LinTerm> up0, up1, lo0, lo1;
        term(up0, p.var_loss(l), 1.0);
        term(up1, p.var_loss(l), 1.0);
        term(lo0, p.var_loss(l), 1.0);
        term(lo1, p.var_loss(l), 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double y0 = batch.labels[i] == 0 ? 1.0 : 0.0;
            const double y1 = batch.labels[i] == 1 ? 1.0 : 0.0;
            term(up0, p.var_z(i, l), -y0);
            term(up1, p.var_z(i, l), -y1);
            term(lo0, p.var_z(i, l), -y0);
            term(lo1, p.var_z(i, l), -y1);
        }
        add("loss_1", std::move(up0), Sense::LessEq, 0.0);
        add("loss_1", std::move(up1), Sense::LessEq, 0.0);
        term(lo0, p.var_u(l), -m_count);
        add("loss_2", std::move(lo0), Sense::GreaterEq, -m_count);
        term(lo1, p.var_u(l), m_count);
        add("loss_2", std::move(lo1), Sense::GreaterEq, 0.0);
    }
    // --- fairness counts: active side depends on the leaf prediction; the
    // inactive side of each metric variant is pinned to zero ---
    for (std::size_t k = 0; k < nf; ++k) {
        const RateKind kind = family_rate(cfg.metric, k);
        for (std::size_t l = 0; l < L; ++l) {
            for (int g = 0; g < 2; ++g) {
                const int fv = p.var_f(k, l, g);
                const char* lo_tag = g == 0 ? "fair_1" : "fair_4";
                const char* up_tag = g == 0 ? "fair_2" : "fair_5";
                const char* alt_tag = g == 0 ? "fair_3" : "fair_6";

                std::vector<LinTerm> lo, up;
                term(lo, fv, 1.0);
                term(up, fv, 1.0);
                for (std::size_t i = 0; i < n; ++i) {
                    const double a =
                        fair_coef_pred1(kind, batch.labels[i], batch.groups[i], g);
                    term(lo, p.var_z(i, l), -a);
                    term(up, p.var_z(i, l), -a);
                }
                term(lo, p.var_u(l), -m_count);
                add(lo_tag, std::move(lo), Sense::GreaterEq, -m_count);
                term(up, p.var_u(l), m_count);
                add(up_tag, std::move(up), Sense::LessEq, m_count + eps);

                std::vector<LinTerm> alt_lo, alt_up;
                term(alt_lo, fv, 1.0);
                term(alt_up, fv, 1.0);
                for (std::size_t i = 0; i < n; ++i) {
                    const double b =
                        fair_coef_pred0(kind, batch.labels[i], batch.groups[i], g);
                    term(alt_lo, p.var_z(i, l), -b);
                    term(alt_up, p.var_z(i, l), -b);
                }
                term(alt_lo, p.var_u(l), m_count);
                add(alt_tag, std::move(alt_lo), Sense::GreaterEq, 0.0);
                term(alt_up, p.var_u(l), -m_count);
                add(alt_tag, std::move(alt_up), Sense::LessEq, eps);
            }
        }
    }
    // --- epigraph of the absolute rate gap ---
    for (std::size_t k = 0; k < nf; ++k) {
        const RateKind kind = family_rate(cfg.metric, k);
        const double den0 = rate_denominator(kind, batch, 0);
        const double den1 = rate_denominator(kind, batch, 1);
        const double inv0 = den0 > 0.0 ? 1.0 / den0 : 0.0;
        const double inv1 = den1 > 0.0 ? 1.0 / den1 : 0.0;
        std::vector<LinTerm> t1, t2;
        term(t1, p.var_lfair(k), 1.0);
        term(t2, p.var_lfair(k), 1.0);
        for (std::size_t l = 0; l < L; ++l) {
            term(t1, p.var_f(k, l, 0), -inv0);
            term(t1, p.var_f(k, l, 1), inv1);
            term(t2, p.var_f(k, l, 0), inv0);
            term(t2, p.var_f(k, l, 1), -inv1);
        }
        add("lfair_1", std::move(t1), Sense::GreaterEq, 0.0);
        add("lfair_2", std::move(t2), Sense::GreaterEq, 0.0);
    }

    // --- objective: mean leaf loss plus the weighted fairness gap ---
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t l = 0; l < L; ++l) p.objective.push_back({p.var_loss(l), inv_n});
    if (cfg.lambda != 0.0) {
        for (std::size_t k = 0; k < nf; ++k) {
            p.objective.push_back({p.var_lfair(k), cfg.lambda});
        }
    }
    return p;
}

TreeAssignment assignment_from_tree(const MiaTree& tree, const TabularDataset& batch,
                                    const ModelConfig& cfg) {
    validate_batch_and_config(batch, cfg);
    if (tree.depth != cfg.depth) throw DataError("tree depth does not match the model config");
    const Layout lay(cfg.depth, batch.n_rows, batch.n_cols, cfg.metric);
    if (tree.branches.size() != lay.B || tree.leaves.size() != lay.L) {
        throw DataError("malformed tree shape");
    }
    for (const auto& br : tree.branches) {
        if (br.feature < 0 || static_cast<std::size_t>(br.feature) >= batch.n_cols) {
            throw DataError("tree splits on an unknown feature index");
        }
    }

    MipProgram meta;
    meta.depth = cfg.depth;
    meta.n = batch.n_rows;
    meta.d = batch.n_cols;
    meta.metric = cfg.metric;

    TreeAssignment a(lay.total, 0.0);
    for (std::size_t v = 0; v < lay.B; ++v) {
        const BranchSplit& br = tree.branches[v];
        a[meta.var_p(v, br.feature)] = 1.0;
        a[meta.var_q(v)] = br.threshold;
        a[meta.var_c(v)] = br.missing_left ? 1.0 : 0.0;
    }
    for (std::size_t l = 0; l < lay.L; ++l) a[meta.var_u(l)] = tree.leaves[l];

    std::vector<std::size_t> leaf_of(batch.n_rows);
    for (std::size_t i = 0; i < batch.n_rows; ++i) {
        for (std::size_t v = 0; v < lay.B; ++v) {
            const BranchSplit& br = tree.branches[v];
            const bool miss = batch.is_missing(i, br.feature);
            const double q = br.threshold;
            // w_nm compares the threshold against the masked value (0 when
            // missing), exactly as the indicator constraints do.
            const double observed_part = miss ? 0.0 : batch.value(i, br.feature);
            const bool wnm = q >= observed_part;
            const bool w1 = !miss && wnm;
            const bool w2 = miss && br.missing_left;
            const bool w = w1 || w2;
            a[meta.var_w_nm(i, v)] = wnm ? 1.0 : 0.0;
            a[meta.var_w1(i, v)] = w1 ? 1.0 : 0.0;
            a[meta.var_w2(i, v)] = w2 ? 1.0 : 0.0;
            a[meta.var_w(i, v)] = w ? 1.0 : 0.0;
        }
        // Follow the w decisions from the root to a leaf.
        std::size_t node = 0;
        while (node < lay.B) {
            const bool left = a[meta.var_w(i, node)] > 0.5;
            node = 2 * node + (left ? 1 : 2);
        }
        leaf_of[i] = node - lay.B;
        a[meta.var_z(i, leaf_of[i])] = 1.0;
    }

    for (std::size_t l = 0; l < lay.L; ++l) {
        double wrong = 0.0;
        for (std::size_t i = 0; i < batch.n_rows; ++i) {
            if (leaf_of[i] != l) continue;
            const bool predicted_one = tree.leaves[l] != 0;
            if ((batch.labels[i] == 1) != predicted_one) wrong += 1.0;
        }
        a[meta.var_loss(l)] = wrong;
    }

    for (std::size_t k = 0; k < lay.nf; ++k) {
        const RateKind kind = family_rate(cfg.metric, k);
        double total[2] = {0.0, 0.0};
        for (std::size_t l = 0; l < lay.L; ++l) {
            double count[2] = {0.0, 0.0};
            for (std::size_t i = 0; i < batch.n_rows; ++i) {
                if (leaf_of[i] != l) continue;
                const int g = batch.groups[i];
                count[g] += tree.leaves[l] != 0
                                ? fair_coef_pred1(kind, batch.labels[i], g, g)
                                : fair_coef_pred0(kind, batch.labels[i], g, g);
            }
            a[meta.var_f(k, l, 0)] = count[0];
            a[meta.var_f(k, l, 1)] = count[1];
            total[0] += count[0];
            total[1] += count[1];
        }
        const double den0 = rate_denominator(kind, batch, 0);
        const double den1 = rate_denominator(kind, batch, 1);
        const double r0 = den0 > 0.0 ? total[0] / den0 : 0.0;
        const double r1 = den1 > 0.0 ? total[1] / den1 : 0.0;
        a[meta.var_lfair(k)] = std::abs(r0 - r1);
    }
    return a;
}

std::vector<std::string> check_feasibility(const MipProgram& p, const TreeAssignment& a) {
    if (a.size() != p.vars.size()) {
        throw DataError("assignment does not cover all program variables");
    }
    std::vector<std::string> violated;
    for (std::size_t idx = 0; idx < p.vars.size(); ++idx) {
        const VarDef& vd = p.vars[idx];
        const double x = a[idx];
        bool bad = x < vd.lb - kFeasTol || x > vd.ub + kFeasTol;
        if (vd.kind == VarKind::Binary && std::abs(x - std::round(x)) > kFeasTol) bad = true;
        if (bad) violated.push_back("var_domain");
    }
    for (const Constraint& c : p.constraints) {
        double lhs = 0.0;
        for (const LinTerm& t : c.terms) lhs += t.coef * a[t.var];
        const bool bad = (c.sense == Sense::LessEq && lhs > c.rhs + kFeasTol) ||
                         (c.sense == Sense::GreaterEq && lhs < c.rhs - kFeasTol) ||
                         (c.sense == Sense::Equal && std::abs(lhs - c.rhs) > kFeasTol);
        if (bad) violated.push_back(c.tag);
    }
    return violated;
}

double objective_value(const MipProgram& p, const TreeAssignment& a) {
    if (a.size() != p.vars.size()) {
        throw DataError("assignment does not cover all program variables");
    }
    double v = 0.0;
    for (const LinTerm& t : p.objective) v += t.coef * a[t.var];
    return v;
}

// ---------------------------------------------------------------------------
// LP text format
// ---------------------------------------------------------------------------

namespace {

void write_terms(std::ostringstream& out, const MipProgram& p,
                 const std::vector<LinTerm>& terms) {
    for (const LinTerm& t : terms) {
        const double c = t.coef;
        out << (c < 0.0 ? " - " : " + ") << format_double(std::abs(c)) << ' '
            << p.vars[t.var].name;
    }
}

} // namespace

std::string write_lp(const MipProgram& p) {
    if (p.vars.empty()) throw DataError("refusing to export an empty program");
    std::ostringstream out;
    out << "\\ fair tree training program\n";
    out << "Minimize\n obj:";
    write_terms(out, p, p.objective);
    out << "\nSubject To\n";
    std::map<std::string, std::size_t> tag_counter;
    for (const Constraint& c : p.constraints) {
        const std::size_t k = tag_counter[c.tag]++;
        out << ' ' << c.tag << '_' << k << ':';
        write_terms(out, p, c.terms);
        switch (c.sense) {
        case Sense::LessEq: out << " <= "; break;
        case Sense::GreaterEq: out << " >= "; break;
        case Sense::Equal: out << " = "; break;
        }
        out << format_double(c.rhs) << '\n';
    }
    out << "Bounds\n";
    for (const VarDef& v : p.vars) {
        if (v.kind != VarKind::Continuous) continue;
        if (v.lb == 0.0 && v.ub == kInf) continue; // LP default
        out << ' ' << format_double(v.lb) << " <= " << v.name << " <= " << format_double(v.ub)
            << '\n';
    }
    out << "Binaries\n";
    for (const VarDef& v : p.vars) {
        if (v.kind == VarKind::Binary) out << ' ' << v.name << '\n';
    }
    out << "End\n";
    return out.str();
}

void export_lp(const MipProgram& p, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << write_lp(p);
    if (!f) throw DataError("write failed: " + path);
}

namespace {

double parse_num(const std::string& tok) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw DataError("LP parse: bad number '" + tok + "'");
    }
    return v;
}

std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> toks;
    std::istringstream in(line);
    std::string t;
    while (in >> t) toks.push_back(t);
    return toks;
}

struct LpBuilder {
    MipProgram prog;
    std::map<std::string, int> var_index;

    int var(const std::string& name) {
        auto it = var_index.find(name);
        if (it != var_index.end()) return it->second;
        const int idx = static_cast<int>(prog.vars.size());
        prog.vars.push_back({name, VarKind::Continuous, 0.0, kInf});
        var_index.emplace(name, idx);
        return idx;
    }

    // Sequence of [sign coef name] triples starting at toks[from]; stops at a
    // sense token and returns its position (or toks.size()).
    std::size_t read_terms(const std::vector<std::string>& toks, std::size_t from,
                           std::vector<LinTerm>& out) {
        std::size_t i = from;
        while (i < toks.size()) {
            if (toks[i] == "<=" || toks[i] == ">=" || toks[i] == "=") return i;
            if (i + 2 >= toks.size() || (toks[i] != "+" && toks[i] != "-")) {
                throw DataError("LP parse: malformed term near '" + toks[i] + "'");
            }
            const double sign = toks[i] == "-" ? -1.0 : 1.0;
            const double coef = sign * parse_num(toks[i + 1]);
            out.push_back({var(toks[i + 2]), coef});
            i += 3;
        }
        return i;
    }
};

std::string strip_counter_suffix(const std::string& name) {
    const auto pos = name.rfind('_');
    if (pos == std::string::npos) return name;
    for (std::size_t i = pos + 1; i < name.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(name[i]))) return name;
    }
    return pos + 1 < name.size() ? name.substr(0, pos) : name;
}

} // namespace

MipProgram parse_lp_text(const std::string& text) {
    LpBuilder b;
    enum class Section { None, Objective, Constraints, Bounds, Binaries, Done };
    Section section = Section::None;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] == '\\') continue;
        const auto toks = tokenize(line);
        if (toks.empty()) continue;
        if (toks[0] == "Minimize") {
            section = Section::Objective;
            continue;
        }
        if (toks.size() >= 2 && toks[0] == "Subject" && toks[1] == "To") {
            section = Section::Constraints;
            continue;
        }
        if (toks[0] == "Bounds") {
            section = Section::Bounds;
            continue;
        }
        if (toks[0] == "Binaries") {
            section = Section::Binaries;
            continue;
        }
        if (toks[0] == "End") {
            section = Section::Done;
            continue;
        }
        switch (section) {
        case Section::Objective: {
            if (toks[0] != "obj:") throw DataError("LP parse: expected obj: line");
            b.read_terms(toks, 1, b.prog.objective);
            break;
        }
        case Section::Constraints: {
            if (toks[0].empty() || toks[0].back() != ':') {
                throw DataError("LP parse: constraint without a name");
            }
            Constraint c;
            c.tag = strip_counter_suffix(toks[0].substr(0, toks[0].size() - 1));
            const std::size_t sense_at = b.read_terms(toks, 1, c.terms);
            if (sense_at + 1 >= toks.size() + 1 || sense_at >= toks.size()) {
                throw DataError("LP parse: constraint missing sense/rhs");
            }
            const std::string& s = toks[sense_at];
            c.sense = s == "<=" ? Sense::LessEq : s == ">=" ? Sense::GreaterEq : Sense::Equal;
            if (sense_at + 1 >= toks.size()) throw DataError("LP parse: missing rhs");
            c.rhs = parse_num(toks[sense_at + 1]);
            b.prog.constraints.push_back(std::move(c));
            break;
        }
        case Section::Bounds: {
            if (toks.size() != 5 || toks[1] != "<=" || toks[3] != "<=") {
                throw DataError("LP parse: unsupported bounds line");
            }
            const int idx = b.var(toks[2]);
            b.prog.vars[idx].lb = parse_num(toks[0]);
            b.prog.vars[idx].ub = parse_num(toks[4]);
            break;
        }
        case Section::Binaries: {
            for (const auto& name : toks) {
                const int idx = b.var(name);
                b.prog.vars[idx].kind = VarKind::Binary;
                b.prog.vars[idx].lb = 0.0;
                b.prog.vars[idx].ub = 1.0;
            }
            break;
        }
        default:
            throw DataError("LP parse: content outside any section");
        }
    }
    if (b.prog.vars.empty()) throw DataError("LP parse: no variables found");
    return b.prog;
}

MipProgram parse_lp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_lp_text(ss.str());
}

bool structurally_equal(const MipProgram& a, const MipProgram& b) {
    if (a.vars.size() != b.vars.size() || a.constraints.size() != b.constraints.size() ||
        a.objective.size() != b.objective.size()) {
        return false;
    }
    std::map<std::string, const VarDef*> bv;
    for (const auto& v : b.vars) bv[v.name] = &v;
    for (const auto& v : a.vars) {
        auto it = bv.find(v.name);
        if (it == bv.end()) return false;
        const VarDef& o = *it->second;
        if (v.kind != o.kind || v.lb != o.lb || v.ub != o.ub) return false;
    }
    const auto terms_equal = [&](const std::vector<LinTerm>& ta, const std::vector<LinTerm>& tb) {
        if (ta.size() != tb.size()) return false;
        for (std::size_t i = 0; i < ta.size(); ++i) {
            if (a.vars[ta[i].var].name != b.vars[tb[i].var].name) return false;
            if (ta[i].coef != tb[i].coef) return false;
        }
        return true;
    };
    for (std::size_t i = 0; i < a.constraints.size(); ++i) {
        const Constraint& ca = a.constraints[i];
        const Constraint& cb = b.constraints[i];
        if (ca.tag != cb.tag || ca.sense != cb.sense || ca.rhs != cb.rhs) return false;
        if (!terms_equal(ca.terms, cb.terms)) return false;
    }
    return terms_equal(a.objective, b.objective);
}

} // namespace fairmip
