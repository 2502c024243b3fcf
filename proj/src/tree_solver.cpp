#include "fairmip/tree_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <json.hpp>

namespace fairmip {

std::size_t route(const MiaTree& tree, std::span<const double> row_values,
                  std::span<const std::uint8_t> row_mask) {
    if (row_values.size() != row_mask.size()) throw DataError("row value/mask size mismatch");
    const std::size_t n_branch = tree.n_branch();
    std::size_t node = 0;
    while (node < n_branch) {
        const BranchSplit& br = tree.branches[node];
        if (br.feature < 0 || static_cast<std::size_t>(br.feature) >= row_values.size()) {
            throw DataError("tree feature index out of range for this row");
        }
        const bool left = row_mask[br.feature] ? br.missing_left
                                               : row_values[br.feature] <= br.threshold;
        node = 2 * node + (left ? 1 : 2);
    }
    return node - n_branch;
}

std::vector<std::uint8_t> predict(const MiaTree& tree, const TabularDataset& ds) {
    std::vector<std::uint8_t> preds(ds.n_rows);
    for (std::size_t i = 0; i < ds.n_rows; ++i) {
        preds[i] = tree.leaves[route(tree, ds.row_values(i), ds.row_mask(i))];
    }
    return preds;
}

MiaTree fit_leaves(MiaTree structure, const TabularDataset& batch) {
    const std::size_t L = structure.n_leaf();
    std::vector<long> pos(L, 0), neg(L, 0);
    for (std::size_t i = 0; i < batch.n_rows; ++i) {
        const std::size_t l = route(structure, batch.row_values(i), batch.row_mask(i));
        batch.labels[i] == 1 ? ++pos[l] : ++neg[l];
    }
    structure.leaves.assign(L, 0);
    for (std::size_t l = 0; l < L; ++l) {
        structure.leaves[l] = pos[l] >= neg[l] ? 1 : 0; // ties and empty leaves predict 1
    }
    return structure;
}

double evaluate_objective(const MiaTree& tree, const TabularDataset& batch, double lambda,
                          FairnessMetric metric) {
    const std::vector<std::uint8_t> preds = predict(tree, batch);
    double obj = zero_one_risk(preds, batch.labels);
    if (lambda != 0.0) {
        obj += lambda * fairness_value(metric, preds, batch.labels, batch.groups);
    }
    return obj;
}

std::vector<SplitCandidate> enumerate_candidates(const TabularDataset& batch, int feature) {
    if (feature < 0 || static_cast<std::size_t>(feature) >= batch.n_cols) {
        throw DataError("feature index out of range");
    }
    std::vector<double> observed;
    bool has_missing = false;
    for (std::size_t i = 0; i < batch.n_rows; ++i) {
        if (batch.is_missing(i, feature)) {
            has_missing = true;
        } else {
            observed.push_back(batch.value(i, feature));
        }
    }
    std::sort(observed.begin(), observed.end());
    observed.erase(std::unique(observed.begin(), observed.end()), observed.end());

    std::vector<double> thresholds{kSentinelThreshold};
    for (std::size_t k = 0; k + 1 < observed.size(); ++k) {
        thresholds.push_back(0.5 * (observed[k] + observed[k + 1]));
    }

    std::vector<SplitCandidate> out;
    for (double t : thresholds) {
        out.push_back({t, false});
        if (has_missing) out.push_back({t, true});
    }
    std::sort(out.begin(), out.end(), [](const SplitCandidate& a, const SplitCandidate& b) {
        if (a.threshold != b.threshold) return a.threshold < b.threshold;
        return a.missing_left < b.missing_left;
    });
    return out;
}

namespace {

struct Move {
    int feature = 0;
    double threshold = 0.0;
    bool missing_left = false;
};

bool move_less(const Move& a, const Move& b) {
    if (a.feature != b.feature) return a.feature < b.feature;
    if (a.threshold != b.threshold) return a.threshold < b.threshold;
    return a.missing_left < b.missing_left;
}

bool sequence_less(const std::vector<BranchSplit>& a, const std::vector<BranchSplit>& b) {
    for (std::size_t k = 0; k < a.size() && k < b.size(); ++k) {
        if (a[k].feature != b[k].feature) return a[k].feature < b[k].feature;
        if (a[k].threshold != b[k].threshold) return a[k].threshold < b[k].threshold;
        if (a[k].missing_left != b[k].missing_left) return a[k].missing_left < b[k].missing_left;
    }
    return false;
}

class Search {
public:
    Search(const TabularDataset& batch, const SolverConfig& scfg, const ModelConfig& mcfg)
        : batch_(batch), scfg_(scfg), mcfg_(mcfg),
          n_branch_((std::size_t{1} << mcfg.depth) - 1),
          n_leaf_(std::size_t{1} << mcfg.depth), start_(Clock::now()) {
        build_moves();
        chosen_.resize(n_branch_);
        pos_.resize(n_leaf_);
        neg_.resize(n_leaf_);
        cell_.resize(n_leaf_ * 4);
    }

    SolveResult run(const std::optional<MiaTree>& warm_start) {
        if (warm_start) {
            if (warm_start->depth != mcfg_.depth) {
                throw DataError("warm-start tree depth does not match the config");
            }
            // Leaf majorities are batch-dependent, so re-fit them here.
            MiaTree seeded = fit_leaves(*warm_start, batch_);
            set_incumbent(seeded,
                          evaluate_objective(seeded, batch_, mcfg_.lambda, mcfg_.metric));
        }
        descend(0);
        if (!have_incumbent_) {
            // Timeout fired before the first full assignment; fall back to
            // the best-ranked move at every node.
            MiaTree t;
            t.depth = mcfg_.depth;
            for (std::size_t k = 0; k < n_branch_; ++k) {
                t.branches.push_back(
                    {moves_[0].feature, moves_[0].threshold, moves_[0].missing_left});
            }
            t = fit_leaves(t, batch_);
            set_incumbent(t, evaluate_objective(t, batch_, mcfg_.lambda, mcfg_.metric));
        }
        SolveResult res;
        res.tree = incumbent_;
        res.objective = incumbent_obj_;
        res.proven_optimal = !timed_out_;
        res.nodes_explored = nodes_explored_;
        res.wall_time = elapsed();
        res.incumbent_trace = trace_;
        return res;
    }

private:
    using Clock = std::chrono::steady_clock;

    void build_moves() {
        for (std::size_t j = 0; j < batch_.n_cols; ++j) {
            for (const SplitCandidate& c : enumerate_candidates(batch_, static_cast<int>(j))) {
                moves_.push_back({static_cast<int>(j), c.threshold, c.missing_left});
            }
        }
        if (moves_.empty()) throw DataError("no split candidates (empty batch?)");
        if (scfg_.node_order == "lex") {
            std::sort(moves_.begin(), moves_.end(), move_less);
            return;
        }
        if (scfg_.node_order != "greedy") {
            throw ConfigError("unknown node_order: " + scfg_.node_order);
        }
        // Rank moves by the objective of the depth-1 tree they induce, so
        // good incumbents appear early under a time limit.
        std::vector<std::pair<double, Move>> ranked;
        ranked.reserve(moves_.size());
        MiaTree probe;
        probe.depth = 1;
        probe.branches.resize(1);
        for (const Move& m : moves_) {
            probe.branches[0] = {m.feature, m.threshold, m.missing_left};
            const MiaTree fitted = fit_leaves(probe, batch_);
            ranked.emplace_back(evaluate_objective(fitted, batch_, mcfg_.lambda, mcfg_.metric),
                                m);
        }
        std::sort(ranked.begin(), ranked.end(),
                  [](const std::pair<double, Move>& a, const std::pair<double, Move>& b) {
                      if (a.first != b.first) return a.first < b.first;
                      return move_less(a.second, b.second);
                  });
        for (std::size_t k = 0; k < ranked.size(); ++k) moves_[k] = ranked[k].second;
    }

    double elapsed() const {
        return std::chrono::duration<double>(Clock::now() - start_).count();
    }

    void set_incumbent(const MiaTree& tree, double obj) {
        incumbent_ = tree;
        incumbent_obj_ = obj;
        have_incumbent_ = true;
        trace_.push_back(obj);
    }

    // Routes row i through the first k assigned branch nodes; returns the
    // leaf index, or npos if an unassigned node is reached first.
    std::size_t route_prefix(std::size_t i, std::size_t k) const {
        std::size_t node = 0;
        while (node < n_branch_) {
            if (node >= k) return npos;
            const BranchSplit& br = chosen_[node];
            const bool left = batch_.is_missing(i, br.feature)
                                  ? br.missing_left
                                  : batch_.value(i, br.feature) <= br.threshold;
            node = 2 * node + (left ? 1 : 2);
        }
        return node - n_branch_;
    }

    // Admissible bound for the prefix [0, k): rows that already reach a leaf
    // contribute their best-case (majority) error; everything else 0 and the
    // fairness term is at least 0.
    double prefix_bound(std::size_t k) {
        std::fill(pos_.begin(), pos_.end(), 0L);
        std::fill(neg_.begin(), neg_.end(), 0L);
        for (std::size_t i = 0; i < batch_.n_rows; ++i) {
            const std::size_t l = route_prefix(i, k);
            if (l == npos) continue;
            batch_.labels[i] == 1 ? ++pos_[l] : ++neg_[l];
        }
        long wrong = 0;
        for (std::size_t l = 0; l < n_leaf_; ++l) wrong += std::min(pos_[l], neg_[l]);
        return static_cast<double>(wrong) / static_cast<double>(batch_.n_rows);
    }

    // Objective of the full assignment without materializing a tree; count
    // layout and rate formulas match metrics exactly, so the value is
    // bit-identical to evaluate_objective on the induced tree.
    double full_objective() {
        std::fill(cell_.begin(), cell_.end(), 0L);
        for (std::size_t i = 0; i < batch_.n_rows; ++i) {
            const std::size_t l = route_prefix(i, n_branch_);
            ++cell_[l * 4 + batch_.groups[i] * 2 + batch_.labels[i]];
        }
        long wrong = 0;
        ConfusionByGroup conf;
        for (std::size_t l = 0; l < n_leaf_; ++l) {
            const long n00 = cell_[l * 4 + 0], n01 = cell_[l * 4 + 1];
            const long n10 = cell_[l * 4 + 2], n11 = cell_[l * 4 + 3];
            const long pos = n01 + n11, neg = n00 + n10;
            const bool u = pos >= neg;
            wrong += u ? neg : pos;
            if (u) {
                conf.g0.tp += n01;
                conf.g0.fp += n00;
                conf.g1.tp += n11;
                conf.g1.fp += n10;
            } else {
                conf.g0.fn += n01;
                conf.g0.tn += n00;
                conf.g1.fn += n11;
                conf.g1.tn += n10;
            }
        }
        double obj = static_cast<double>(wrong) / static_cast<double>(batch_.n_rows);
        if (mcfg_.lambda != 0.0) {
            obj += mcfg_.lambda * fairness_from_confusion(mcfg_.metric, conf);
        }
        return obj;
    }

    void accept_full(double obj) {
        MiaTree t;
        t.depth = mcfg_.depth;
        t.branches = chosen_;
        set_incumbent(fit_leaves(std::move(t), batch_), obj);
    }

    void descend(std::size_t k) {
        if (timed_out_) return;
        if (k == n_branch_) {
            const double obj = full_objective();
            // Equal objectives resolve to the lexicographically smallest
            // (feature, threshold, direction) sequence.
            if (!have_incumbent_ || obj < incumbent_obj_ - 1e-12 ||
                (std::abs(obj - incumbent_obj_) <= 1e-12 &&
                 sequence_less(chosen_, incumbent_.branches))) {
                accept_full(obj);
            }
            return;
        }
        for (const Move& m : moves_) {
            if (elapsed() > scfg_.t_limit) {
                timed_out_ = true;
                return;
            }
            ++nodes_explored_;
            chosen_[k] = {m.feature, m.threshold, m.missing_left};
            if (have_incumbent_ && prefix_bound(k + 1) > incumbent_obj_ + 1e-12) continue;
            descend(k + 1);
            if (timed_out_) return;
        }
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    const TabularDataset& batch_;
    SolverConfig scfg_;
    ModelConfig mcfg_;
    std::size_t n_branch_;
    std::size_t n_leaf_;
    Clock::time_point start_;

    std::vector<Move> moves_;
    std::vector<BranchSplit> chosen_;
    std::vector<long> pos_, neg_;
    std::vector<long> cell_; // per leaf: counts indexed by group*2 + label
    MiaTree incumbent_;
    double incumbent_obj_ = std::numeric_limits<double>::infinity();
    bool have_incumbent_ = false;
    bool timed_out_ = false;
    std::uint64_t nodes_explored_ = 0;
    std::vector<double> trace_;
};

} // namespace

SolveResult solve(const TabularDataset& batch, const SolverConfig& scfg, const ModelConfig& mcfg,
                  const std::optional<MiaTree>& warm_start) {
    if (!(scfg.t_limit > 0.0)) throw ConfigError("t_limit must be positive");
    if (batch.n_rows == 0) throw DataError("cannot train on an empty batch");
    if (!batch.scaled()) throw DataError("batch must be scaled to [0,1] first");
    bool has[2] = {false, false};
    for (std::size_t i = 0; i < batch.n_rows; ++i) has[batch.groups[i]] = true;
    if (!has[0] || !has[1]) throw DataError("training requires both groups in the batch");
    if (mcfg.depth < 1) throw ConfigError("tree depth must be at least 1");

    Search search(batch, scfg, mcfg);
    return search.run(warm_start);
}

std::string tree_to_json(const MiaTree& tree, const std::vector<std::string>& feature_names) {
    nlohmann::json j;
    j["depth"] = tree.depth;
    j["branches"] = nlohmann::json::array();
    for (const BranchSplit& b : tree.branches) {
        j["branches"].push_back({{"feature", b.feature},
                                 {"threshold", b.threshold},
                                 {"missing_left", b.missing_left}});
    }
    j["leaves"] = tree.leaves;
    j["feature_names"] = feature_names;
    return j.dump(2);
}

MiaTree tree_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    MiaTree t;
    t.depth = j.at("depth").get<int>();
    for (const auto& b : j.at("branches")) {
        t.branches.push_back({b.at("feature").get<int>(), b.at("threshold").get<double>(),
                              b.at("missing_left").get<bool>()});
    }
    t.leaves = j.at("leaves").get<std::vector<std::uint8_t>>();
    if (t.branches.size() != t.n_branch() || t.leaves.size() != t.n_leaf()) {
        throw DataError("tree JSON has inconsistent shape");
    }
    return t;
}

} // namespace fairmip
