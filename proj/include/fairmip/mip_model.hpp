#pragma once

// Mixed-integer formulation of fairness-regularized MIA tree training:
// variable table, tagged linear constraints and objective for a batch, the
// assignment induced by a concrete tree, feasibility checking, and LP-format
// export/import. This module is the correctness oracle for the native
// search in tree_solver.

#include <cstdint>
#include <string>
#include <vector>

#include "fairmip/dataset.hpp"
#include "fairmip/metrics.hpp"

namespace fairmip {

struct MiaTree; // tree_solver.hpp

struct ModelConfig {
    int depth = 1;
    double lambda = 0.0;
    FairnessMetric metric = FairnessMetric::AccuracyDiff;
    // Single user-facing big-M knob; must cover max(2, n+1) when set.
    // Constraint generation itself uses the tightest valid constants:
    // 2 for split constraints, n+1 for counting constraints.
    double big_m = 0.0; // 0 = derive max(2, n+1) from the batch
    double eps_tol = 1e-6;
};

enum class VarKind : std::uint8_t { Binary, Continuous };

struct VarDef {
    std::string name;
    VarKind kind = VarKind::Continuous;
    double lb = 0.0;
    double ub = 0.0; // +inf allowed
};

struct LinTerm {
    std::int32_t var = 0;
    double coef = 0.0;
};

enum class Sense : std::uint8_t { LessEq, GreaterEq, Equal };

struct Constraint {
    std::string tag; // constraint family name (one_hot, branch_1, ..., lfair_2)
    std::vector<LinTerm> terms;
    Sense sense = Sense::LessEq;
    double rhs = 0.0;
};

struct MipProgram {
    std::vector<VarDef> vars;
    std::vector<Constraint> constraints;
    std::vector<LinTerm> objective; // minimized; no constant term

    // Shape metadata (not recovered by the LP parser).
    int depth = 0;
    std::size_t n = 0;
    std::size_t d = 0;
    FairnessMetric metric = FairnessMetric::AccuracyDiff;
    double lambda = 0.0;
    double eps_tol = 0.0;

    std::size_t n_branch() const { return (std::size_t{1} << depth) - 1; }
    std::size_t n_leaf() const { return std::size_t{1} << depth; }
    // Fairness-count families: one for a single-rate metric, two
    // (fpr then fnr) for equalized odds.
    std::size_t n_fair_families() const {
        return metric == FairnessMetric::EqualizedOdds ? 2 : 1;
    }

    // Variable indices by family.
    int var_p(std::size_t v, std::size_t j) const;
    int var_q(std::size_t v) const;
    int var_c(std::size_t v) const;
    int var_u(std::size_t l) const;
    int var_w_nm(std::size_t i, std::size_t v) const;
    int var_w1(std::size_t i, std::size_t v) const;
    int var_w2(std::size_t i, std::size_t v) const;
    int var_w(std::size_t i, std::size_t v) const;
    int var_z(std::size_t i, std::size_t l) const;
    int var_loss(std::size_t l) const;
    int var_f(std::size_t family, std::size_t l, int group) const;
    int var_lfair(std::size_t family) const;
};

// Assignment of a value to every program variable, aligned with vars.
using TreeAssignment = std::vector<double>;

// Emits the full constraint system for a scaled batch with both groups
// present. Rate denominators that are zero in the batch contribute
// coefficient 0 (mirroring the empty-denominator convention in metrics).
MipProgram build_program(const TabularDataset& batch, const ModelConfig& cfg);

// The assignment a concrete tree induces by simulated routing and exact
// counting. Feasible whenever the tree's leaf labels obey the batch
// majority rule.
TreeAssignment assignment_from_tree(const MiaTree& tree, const TabularDataset& batch,
                                    const ModelConfig& cfg);

// Tags of all constraints violated beyond 1e-9 ("var_domain" covers bound
// or integrality violations). Empty means feasible.
std::vector<std::string> check_feasibility(const MipProgram& p, const TreeAssignment& a);

double objective_value(const MipProgram& p, const TreeAssignment& a);

// Plain-text LP format: objective, constraints, bounds, binary section.
// Constraint names are tag plus a per-tag counter; numbers are written in
// shortest round-trip form so parse_lp(export_lp(p)) reproduces p exactly
// (up to the shape metadata above).
void export_lp(const MipProgram& p, const std::string& path);
std::string write_lp(const MipProgram& p);
MipProgram parse_lp_text(const std::string& text);
MipProgram parse_lp(const std::string& path);

// Structural equality over vars, constraints and objective (metadata
// excluded); used by the export round-trip checks.
bool structurally_equal(const MipProgram& a, const MipProgram& b);

} // namespace fairmip
