#include "fairmip/forest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace fairmip {

namespace {

constexpr int kModelSchemaVersion = 1;

void check_trainable(const TabularDataset& ds) {
    if (!ds.scaled()) throw DataError("training data must be scaled to [0,1] first");
    bool has_group[2] = {false, false};
    bool has_label[2] = {false, false};
    for (std::size_t i = 0; i < ds.n_rows; ++i) {
        has_group[ds.groups[i]] = true;
        has_label[ds.labels[i]] = true;
    }
    if (!has_group[0] || !has_group[1]) throw DataError("training data needs both groups");
    if (!has_label[0] || !has_label[1]) throw DataError("training data needs both labels");
}

} // namespace

unsigned worker_count() {
    const char* env = std::getenv("FAIRMIP_THREADS");
    if (!env) return 1;
    const long v = std::strtol(env, nullptr, 10);
    if (v < 1) return 1;
    return static_cast<unsigned>(v);
}

ForestModel train(const TabularDataset& ds, const TrainConfig& cfg, TrainLog* log) {
    if (cfg.n_tree < 1) throw ConfigError("n_tree must be at least 1");
    if (cfg.depth < 1) throw ConfigError("depth must be at least 1");
    if (!(cfg.t_limit > 0.0)) throw ConfigError("t_limit must be positive");
    check_trainable(ds);

    ForestModel model;
    model.config = cfg;
    model.scaling = ds.scaling;
    model.feature_names = ds.feature_names;

    ModelConfig mcfg;
    mcfg.depth = cfg.depth;
    mcfg.lambda = cfg.lambda;
    mcfg.metric = cfg.metric;

    SolverConfig scfg;
    scfg.t_limit = cfg.t_limit;
    scfg.seed = cfg.seed;

    if (log) {
        log->trees.clear();
        log->total_solver_time = 0.0;
        log->budget = static_cast<double>(cfg.n_tree) * cfg.t_limit;
    }

    std::optional<MiaTree> warm;
    for (int t = 0; t < cfg.n_tree; ++t) {
        BatchSpec bspec;
        bspec.batch_size = std::min(cfg.batch_size, ds.n_rows);
        bspec.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(t));
        const TabularDataset batch = sample_batch(ds, bspec);

        TreeLogEntry entry;
        entry.index = t;
        entry.batch_seed = bspec.seed;
        entry.warm_started = warm.has_value();
        if (warm) {
            const MiaTree refit = fit_leaves(*warm, batch);
            entry.warm_start_objective =
                evaluate_objective(refit, batch, cfg.lambda, cfg.metric);
        }

        const SolveResult res = solve(batch, scfg, mcfg, warm);
        entry.objective = res.objective;
        entry.wall_time = res.wall_time;
        entry.proven_optimal = res.proven_optimal;
        entry.nodes_explored = res.nodes_explored;
        if (log) {
            log->trees.push_back(entry);
            log->total_solver_time += res.wall_time;
        }

        model.trees.push_back(res.tree);
        warm = res.tree;
    }
    return model;
}

std::vector<std::uint8_t> predict_majority(const ForestModel& m, const TabularDataset& ds) {
    if (m.trees.empty()) throw DataError("model has no trees");
    if (ds.n_cols != m.feature_names.size()) {
        throw DataError("prediction data dimension does not match the model");
    }
    std::vector<std::uint8_t> preds(ds.n_rows);
    const auto predict_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            std::size_t votes = 0;
            for (const MiaTree& t : m.trees) {
                votes += t.leaves[route(t, ds.row_values(i), ds.row_mask(i))];
            }
            // Majority with ties (even ensembles) resolving to 1.
            preds[i] = 2 * votes >= m.trees.size() ? 1 : 0;
        }
    };
    const unsigned workers =
        std::min<unsigned>(worker_count(), std::max<std::size_t>(ds.n_rows, 1));
    if (workers <= 1 || ds.n_rows < 2 * workers) {
        predict_range(0, ds.n_rows);
        return preds;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (ds.n_rows + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(ds.n_rows, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back(predict_range, lo, hi);
    }
    for (auto& th : pool) th.join();
    return preds;
}

EvalReport evaluate(const ForestModel& m, const TabularDataset& ds) {
    const std::vector<std::uint8_t> preds = predict_majority(m, ds);
    const ConfusionByGroup c = confusion_by_group(preds, ds.labels, ds.groups);

    const auto rate = [](long num, long den) {
        return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
    };
    EvalReport r;
    r.accuracy = 1.0 - zero_one_risk(preds, ds.labels);
    r.err0 = rate(c.g0.fp + c.g0.fn, c.g0.tp + c.g0.fp + c.g0.tn + c.g0.fn);
    r.err1 = rate(c.g1.fp + c.g1.fn, c.g1.tp + c.g1.fp + c.g1.tn + c.g1.fn);
    r.fpr0 = rate(c.g0.fp, c.g0.fp + c.g0.tn);
    r.fpr1 = rate(c.g1.fp, c.g1.fp + c.g1.tn);
    r.fnr0 = rate(c.g0.fn, c.g0.fn + c.g0.tp);
    r.fnr1 = rate(c.g1.fn, c.g1.fn + c.g1.tp);
    r.accuracy_diff = fairness_from_confusion(FairnessMetric::AccuracyDiff, c);
    r.fpr_diff = fairness_from_confusion(FairnessMetric::FprDiff, c);
    r.fnr_diff = fairness_from_confusion(FairnessMetric::FnrDiff, c);
    r.equalized_odds = fairness_from_confusion(FairnessMetric::EqualizedOdds, c);
    for (const MiaTree& t : m.trees) {
        r.tree_objectives.push_back(
            evaluate_objective(t, ds, m.config.lambda, m.config.metric));
    }
    return r;
}

namespace {

double metric_of_report(FairnessMetric metric, const EvalReport& r) {
    switch (metric) {
    case FairnessMetric::AccuracyDiff: return r.accuracy_diff;
    case FairnessMetric::FprDiff: return r.fpr_diff;
    case FairnessMetric::FnrDiff: return r.fnr_diff;
    case FairnessMetric::EqualizedOdds: return r.equalized_odds;
    }
    return 0.0;
}

TabularDataset concat(const TabularDataset& a, const TabularDataset& b) {
    if (a.n_cols != b.n_cols) throw DataError("cannot pool datasets of different width");
    TabularDataset out = a;
    out.n_rows = a.n_rows + b.n_rows;
    out.values.insert(out.values.end(), b.values.begin(), b.values.end());
    out.missing.insert(out.missing.end(), b.missing.begin(), b.missing.end());
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    out.groups.insert(out.groups.end(), b.groups.begin(), b.groups.end());
    return out;
}

} // namespace

std::vector<SweepRow> sweep_lambda(const TabularDataset& ds_train, const TabularDataset& ds_test,
                                   const TrainConfig& cfg, const std::vector<double>& lambdas,
                                   int repetitions) {
    if (lambdas.empty()) throw ConfigError("lambda list must be nonempty");
    if (repetitions < 1) throw ConfigError("repetitions must be at least 1");

    std::vector<double> sorted_lambdas = lambdas;
    std::sort(sorted_lambdas.begin(), sorted_lambdas.end());

    const TabularDataset pool = concat(ds_train, ds_test);
    const double test_fraction =
        static_cast<double>(ds_test.n_rows) / static_cast<double>(pool.n_rows);

    std::vector<SweepRow> rows;
    for (double lam : sorted_lambdas) {
        TrainConfig run_cfg = cfg;
        run_cfg.lambda = lam;
        std::vector<double> accs, metrics;
        for (int rep = 0; rep < repetitions; ++rep) {
            TabularDataset tr = ds_train, te = ds_test;
            if (repetitions > 1) {
                // Fresh split of the pooled data per repetition.
                const std::uint64_t split_seed = mix_seed(cfg.seed, 1000 + rep);
                std::tie(tr, te) = train_test_split(pool, test_fraction, split_seed);
            }
            run_cfg.seed = mix_seed(cfg.seed, 2000 + rep);
            const ForestModel model = train(tr, run_cfg);
            const EvalReport rep_eval = evaluate(model, te);
            accs.push_back(rep_eval.accuracy);
            metrics.push_back(metric_of_report(cfg.metric, rep_eval));
        }
        const auto mean_se = [](const std::vector<double>& xs) {
            double mean = 0.0;
            for (double x : xs) mean += x;
            mean /= static_cast<double>(xs.size());
            if (xs.size() < 2) return std::pair<double, double>{mean, 0.0};
            double var = 0.0;
            for (double x : xs) var += (x - mean) * (x - mean);
            var /= static_cast<double>(xs.size() - 1);
            return std::pair<double, double>{mean, std::sqrt(var / xs.size())};
        };
        SweepRow row;
        row.lambda = lam;
        std::tie(row.accuracy, row.accuracy_se) = mean_se(accs);
        std::tie(row.metric_value, row.metric_se) = mean_se(metrics);
        rows.push_back(row);
    }
    return rows;
}

std::string model_to_json(const ForestModel& m) {
    nlohmann::json j;
    j["schema_version"] = kModelSchemaVersion;
    j["config"] = {{"n_tree", m.config.n_tree},
                   {"t_limit", m.config.t_limit},
                   {"batch_size", m.config.batch_size},
                   {"lambda", m.config.lambda},
                   {"metric", metric_name(m.config.metric)},
                   {"depth", m.config.depth},
                   {"seed", m.config.seed}};
    j["feature_names"] = m.feature_names;
    j["scaling"] = nlohmann::json::array();
    for (const ScalePair& s : m.scaling) j["scaling"].push_back({s.min, s.max});
    j["trees"] = nlohmann::json::array();
    for (const MiaTree& t : m.trees) {
        nlohmann::json jt;
        jt["depth"] = t.depth;
        jt["branches"] = nlohmann::json::array();
        for (const BranchSplit& b : t.branches) {
            jt["branches"].push_back({{"feature", b.feature},
                                      {"threshold", b.threshold},
                                      {"missing_left", b.missing_left}});
        }
        jt["leaves"] = t.leaves;
        j["trees"].push_back(std::move(jt));
    }
    return j.dump(2);
}

ForestModel model_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model JSON parse error: ") + e.what());
    }
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != kModelSchemaVersion) {
        throw DataError("unsupported model schema version");
    }
    ForestModel m;
    const auto& c = j.at("config");
    m.config.n_tree = c.at("n_tree").get<int>();
    m.config.t_limit = c.at("t_limit").get<double>();
    m.config.batch_size = c.at("batch_size").get<std::size_t>();
    m.config.lambda = c.at("lambda").get<double>();
    m.config.metric = metric_from_name(c.at("metric").get<std::string>());
    m.config.depth = c.at("depth").get<int>();
    m.config.seed = c.at("seed").get<std::uint64_t>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    for (const auto& s : j.at("scaling")) {
        m.scaling.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
    }
    for (const auto& jt : j.at("trees")) {
        MiaTree t;
        t.depth = jt.at("depth").get<int>();
        for (const auto& b : jt.at("branches")) {
            t.branches.push_back({b.at("feature").get<int>(), b.at("threshold").get<double>(),
                                  b.at("missing_left").get<bool>()});
        }
        t.leaves = jt.at("leaves").get<std::vector<std::uint8_t>>();
        if (t.branches.size() != t.n_branch() || t.leaves.size() != t.n_leaf()) {
            throw DataError("model JSON: tree shape is inconsistent");
        }
        m.trees.push_back(std::move(t));
    }
    if (m.trees.empty()) throw DataError("model JSON contains no trees");
    return m;
}

void save(const ForestModel& m, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << model_to_json(m) << '\n';
    if (!f) throw DataError("write failed: " + path);
}

ForestModel load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return model_from_json(ss.str());
}

} // namespace fairmip
