#pragma once

// Ensemble training loop: one weakly-optimized tree per stratified
// mini-batch under a per-tree time limit, each search warm-started from the
// previous tree, with majority-vote prediction over the ensemble.

#include <cstdint>
#include <string>
#include <vector>

#include "fairmip/dataset.hpp"
#include "fairmip/metrics.hpp"
#include "fairmip/tree_solver.hpp"

namespace fairmip {

struct TrainConfig {
    int n_tree = 30;
    double t_limit = 60.0;
    std::size_t batch_size = 200;
    double lambda = 0.0;
    FairnessMetric metric = FairnessMetric::AccuracyDiff;
    int depth = 3;
    std::uint64_t seed = 0;
};

struct TreeLogEntry {
    int index = 0;
    std::uint64_t batch_seed = 0;
    double objective = 0.0; // on that tree's training batch
    double wall_time = 0.0;
    bool proven_optimal = false;
    std::uint64_t nodes_explored = 0;
    bool warm_started = false;
    double warm_start_objective = 0.0; // warm tree re-fit on the new batch
};

struct TrainLog {
    std::vector<TreeLogEntry> trees;
    double total_solver_time = 0.0;
    double budget = 0.0; // n_tree * t_limit
};

struct ForestModel {
    std::vector<MiaTree> trees;
    TrainConfig config;
    std::vector<ScalePair> scaling;
    std::vector<std::string> feature_names;
};

// Sequential loop: batch i is drawn with seed mix_seed(cfg.seed, i) and
// solved with tree i-1 as warm start (none for the first tree).
ForestModel train(const TabularDataset& ds, const TrainConfig& cfg, TrainLog* log = nullptr);

// Row-wise majority vote; a tie (even ensemble) resolves to 1. Honors the
// FAIRMIP_THREADS worker cap for row partitioning.
std::vector<std::uint8_t> predict_majority(const ForestModel& m, const TabularDataset& ds);

struct EvalReport {
    double accuracy = 0.0;
    double err0 = 0.0, err1 = 0.0;
    double fpr0 = 0.0, fpr1 = 0.0;
    double fnr0 = 0.0, fnr1 = 0.0;
    double accuracy_diff = 0.0;
    double fpr_diff = 0.0;
    double fnr_diff = 0.0;
    double equalized_odds = 0.0;
    std::vector<double> tree_objectives; // per tree, on the evaluated data
};

EvalReport evaluate(const ForestModel& m, const TabularDataset& ds);

struct SweepRow {
    double lambda = 0.0;
    double accuracy = 0.0;
    double accuracy_se = 0.0;
    double metric_value = 0.0;
    double metric_se = 0.0;
};

// One train/evaluate per (lambda, repetition). The given train/test pair is
// pooled and re-split per repetition with seed mix_seed(cfg.seed, rep),
// holding the original test fraction; rows are sorted ascending by lambda.
std::vector<SweepRow> sweep_lambda(const TabularDataset& ds_train, const TabularDataset& ds_test,
                                   const TrainConfig& cfg, const std::vector<double>& lambdas,
                                   int repetitions = 1);

// Versioned JSON persistence; round trips preserve predictions bit-exactly.
void save(const ForestModel& m, const std::string& path);
ForestModel load(const std::string& path);
std::string model_to_json(const ForestModel& m);
ForestModel model_from_json(const std::string& text);

// Worker cap from FAIRMIP_THREADS (>= 1; defaults to 1).
unsigned worker_count();

} // namespace fairmip
