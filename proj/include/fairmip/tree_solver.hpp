#pragma once

// Full binary MIA trees: deterministic routing, majority leaf fitting,
// objective evaluation and the native anytime branch-and-bound over the
// discrete split space (feature, threshold, missing direction per branch
// node).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairmip/dataset.hpp"
#include "fairmip/metrics.hpp"
#include "fairmip/mip_model.hpp"

namespace fairmip {

// Threshold below the scaled feature range; with it, observed rows always go
// right and the split degenerates to missing-vs-observed.
inline constexpr double kSentinelThreshold = -1.0;

struct BranchSplit {
    int feature = 0;
    double threshold = kSentinelThreshold;
    bool missing_left = false;
};

struct MiaTree {
    int depth = 0;
    std::vector<BranchSplit> branches; // 2^depth - 1 nodes in heap order
    std::vector<std::uint8_t> leaves;  // 2^depth binary labels

    std::size_t n_branch() const { return (std::size_t{1} << depth) - 1; }
    std::size_t n_leaf() const { return std::size_t{1} << depth; }
};

// Walks the tree: masked values go to the designated missing side, observed
// values left iff value <= threshold. Returns the leaf index.
std::size_t route(const MiaTree& tree, std::span<const double> row_values,
                  std::span<const std::uint8_t> row_mask);

std::vector<std::uint8_t> predict(const MiaTree& tree, const TabularDataset& ds);

// Labels each leaf 1 iff routed y=1 rows are at least as many as y=0 rows
// (empty leaf -> 1).
MiaTree fit_leaves(MiaTree structure, const TabularDataset& batch);

// zero_one_risk + lambda * fairness_value on the batch.
double evaluate_objective(const MiaTree& tree, const TabularDataset& batch, double lambda,
                          FairnessMetric metric);

struct SplitCandidate {
    double threshold = kSentinelThreshold;
    bool missing_left = false;
};

// Midpoints of consecutive distinct observed values plus the sentinel, each
// paired with both missing directions; when the feature has no missing
// entries in the batch the direction is irrelevant and one is kept.
std::vector<SplitCandidate> enumerate_candidates(const TabularDataset& batch, int feature);

struct SolverConfig {
    double t_limit = 60.0;       // seconds
    std::uint64_t seed = 0;      // reserved; the search itself is deterministic
    std::string node_order = "greedy"; // candidate order: "greedy" or "lex"
};

struct SolveResult {
    MiaTree tree;
    double objective = 0.0;
    bool proven_optimal = false;
    std::uint64_t nodes_explored = 0; // candidate assignments expanded
    double wall_time = 0.0;
    std::vector<double> incumbent_trace; // objective at each incumbent update
};

// Branch-and-bound over per-node (feature, threshold, direction) choices in
// breadth-first node order. The incumbent starts from the warm-start tree
// (re-labeled on this batch) when given. On timeout the best incumbent is
// returned with proven_optimal = false; an exhausted search is the exact
// global minimum over the candidate space.
SolveResult solve(const TabularDataset& batch, const SolverConfig& scfg, const ModelConfig& mcfg,
                  const std::optional<MiaTree>& warm_start = std::nullopt);

// JSON round trip for a single tree.
std::string tree_to_json(const MiaTree& tree, const std::vector<std::string>& feature_names);
MiaTree tree_from_json(const std::string& text);

} // namespace fairmip
