// fairmip: command-line front end for training and auditing fair MIA-tree
// ensembles on data with missing values.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal
// invariant violation (including failed theory checks).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairmip/dataset.hpp"
#include "fairmip/forest.hpp"
#include "fairmip/imputation.hpp"
#include "fairmip/metrics.hpp"
#include "fairmip/theory_suite.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fairmip;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::string out_dir = "out";
    bool out_dir_set = false;
    bool seed_set = false;
    std::uint64_t seed = 0;
    std::string na_token;
    bool quiet = false;
};

void info(const GlobalOpts& g, const std::string& msg) {
    if (!g.quiet) std::cout << msg << '\n';
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << text;
    if (!f) throw DataError("write failed: " + path);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& context) {
    if (!obj.is_object()) throw ConfigError("config section '" + context + "' must be an object");
    for (const auto& [key, _] : obj.items()) {
        bool known = false;
        for (const char* a : allowed) {
            if (key == a) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError("unknown key '" + key + "' in config section '" + context +
                                      "'");
    }
}

struct RunConfig {
    json raw;

    // data
    std::string csv;
    LoadOptions load_opts;
    std::string balance = "none";
    double test_fraction = 0.0;

    MissingnessSpec missingness;
    bool has_missingness = false;

    TrainConfig train;

    std::vector<double> sweep_lambdas;
    int sweep_repetitions = 1;

    std::vector<std::string> audit_imputers;

    std::string out_dir = "out";
};

RunConfig parse_config(const std::string& path, const GlobalOpts& g) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown_keys(j, {"data", "missingness", "train", "sweep", "audit", "out_dir"},
                        "(top level)");

    RunConfig cfg;
    cfg.raw = j;
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();

    if (j.contains("data")) {
        const json& d = j["data"];
        reject_unknown_keys(d,
                            {"csv", "na_token", "delimiter", "label_col", "group_col",
                             "encodings", "balance", "test_fraction"},
                            "data");
        if (d.contains("csv")) cfg.csv = d["csv"].get<std::string>();
        if (d.contains("na_token")) cfg.load_opts.na_token = d["na_token"].get<std::string>();
        if (d.contains("delimiter")) {
            const std::string delim = d["delimiter"].get<std::string>();
            if (delim.size() != 1) throw ConfigError("delimiter must be a single character");
            cfg.load_opts.delimiter = delim[0];
        }
        if (d.contains("label_col")) cfg.load_opts.label_col = d["label_col"].get<std::string>();
        if (d.contains("group_col")) cfg.load_opts.group_col = d["group_col"].get<std::string>();
        if (d.contains("encodings")) {
            for (const auto& [col, mapping] : d["encodings"].items()) {
                for (const auto& [tok, val] : mapping.items()) {
                    cfg.load_opts.encodings[col][tok] = val.get<double>();
                }
            }
        }
        if (d.contains("balance")) {
            cfg.balance = d["balance"].get<std::string>();
            if (cfg.balance != "none" && cfg.balance != "group" &&
                cfg.balance != "group_label") {
                throw ConfigError("balance must be one of none|group|group_label");
            }
        }
        if (d.contains("test_fraction")) cfg.test_fraction = d["test_fraction"].get<double>();
    }
    if (j.contains("missingness")) {
        const json& m = j["missingness"];
        reject_unknown_keys(m, {"entries"}, "missingness");
        for (const json& e : m.at("entries")) {
            reject_unknown_keys(e, {"feature", "p0", "p1"}, "missingness.entries");
            cfg.missingness.entries.push_back({e.at("feature").get<std::string>(),
                                               e.at("p0").get<double>(),
                                               e.at("p1").get<double>()});
        }
        cfg.has_missingness = true;
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        reject_unknown_keys(
            t, {"n_tree", "t_limit", "batch_size", "lambda", "metric", "depth", "seed"},
            "train");
        if (t.contains("n_tree")) cfg.train.n_tree = t["n_tree"].get<int>();
        if (t.contains("t_limit")) cfg.train.t_limit = t["t_limit"].get<double>();
        if (t.contains("batch_size")) cfg.train.batch_size = t["batch_size"].get<std::size_t>();
        if (t.contains("lambda")) {
            // Accept both JSON numbers and numeric strings for the weight.
            cfg.train.lambda = t["lambda"].is_string()
                                   ? std::stod(t["lambda"].get<std::string>())
                                   : t["lambda"].get<double>();
        }
        if (t.contains("metric")) cfg.train.metric = metric_from_name(t["metric"].get<std::string>());
        if (t.contains("depth")) cfg.train.depth = t["depth"].get<int>();
        if (t.contains("seed")) cfg.train.seed = t["seed"].get<std::uint64_t>();
    }
    if (j.contains("sweep")) {
        const json& s = j["sweep"];
        reject_unknown_keys(s, {"lambdas", "repetitions"}, "sweep");
        cfg.sweep_lambdas = s.at("lambdas").get<std::vector<double>>();
        if (s.contains("repetitions")) cfg.sweep_repetitions = s["repetitions"].get<int>();
    }
    if (j.contains("audit")) {
        reject_unknown_keys(j["audit"], {"imputers"}, "audit");
        cfg.audit_imputers = j["audit"].at("imputers").get<std::vector<std::string>>();
    }

    // Command-line overrides.
    if (g.seed_set) cfg.train.seed = g.seed;
    if (!g.na_token.empty()) cfg.load_opts.na_token = g.na_token;
    if (g.out_dir_set) cfg.out_dir = g.out_dir;
    return cfg;
}

std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a(cfg.raw.dump())); }

// ---------------------------------------------------------------------------
// Data plumbing
// ---------------------------------------------------------------------------

TabularDataset load_data(const RunConfig& cfg, LoadDiagnostics* diag = nullptr) {
    if (cfg.csv.empty()) throw ConfigError("config is missing data.csv");
    if (cfg.load_opts.label_col.empty() || cfg.load_opts.group_col.empty()) {
        throw ConfigError("config is missing data.label_col or data.group_col");
    }
    return load_csv(cfg.csv, cfg.load_opts, diag);
}

// Prepares training-ready data: optional balancing, optional missingness
// injection, then unit scaling.
TabularDataset prepare_training_data(const RunConfig& cfg, LoadDiagnostics* diag = nullptr) {
    TabularDataset ds = load_data(cfg, diag);
    if (cfg.balance == "group") ds = downsample_balanced(ds, false, mix_seed(cfg.train.seed, 9001));
    if (cfg.balance == "group_label") {
        ds = downsample_balanced(ds, true, mix_seed(cfg.train.seed, 9001));
    }
    if (cfg.has_missingness) {
        ds = inject_missingness(ds, cfg.missingness, mix_seed(cfg.train.seed, 9002));
    }
    return scale_unit_interval(ds);
}

json report_to_json(const std::vector<MissingRateCell>& cells, std::size_t dropped) {
    json out;
    out["dropped_rows"] = dropped;
    out["cells"] = json::array();
    for (const MissingRateCell& c : cells) {
        out["cells"].push_back({{"feature", c.feature},
                                {"group", c.group},
                                {"group_size", c.group_size},
                                {"missing_count", c.missing_count},
                                {"rate", c.rate},
                                {"std_error", c.std_error}});
    }
    return out;
}

std::string report_to_csv(const std::vector<MissingRateCell>& cells) {
    std::ostringstream out;
    out << "feature,group,group_size,missing_count,rate,std_error\n";
    for (const MissingRateCell& c : cells) {
        out << c.feature << ',' << c.group << ',' << c.group_size << ',' << c.missing_count
            << ',' << format_double(c.rate) << ',' << format_double(c.std_error) << '\n';
    }
    return out.str();
}

json eval_to_json(const EvalReport& r) {
    return json{{"accuracy", r.accuracy},
                {"per_group",
                 {{"error", {r.err0, r.err1}}, {"fpr", {r.fpr0, r.fpr1}}, {"fnr", {r.fnr0, r.fnr1}}}},
                {"fairness",
                 {{"accuracy_diff", r.accuracy_diff},
                  {"fpr_diff", r.fpr_diff},
                  {"fnr_diff", r.fnr_diff},
                  {"equalized_odds", r.equalized_odds}}},
                {"tree_objectives", r.tree_objectives}};
}

Imputer imputer_from_string(const std::string& s, std::size_t n_cols) {
    if (s == "mean") return Imputer::mean_fill();
    if (s == "group_mean") return Imputer::per_group_mean_fill();
    if (s.rfind("knn", 0) == 0) {
        int k = 5;
        if (s.size() > 3) {
            if (s[3] != ':') throw ConfigError("bad imputer spec: " + s);
            k = std::stoi(s.substr(4));
        }
        return Imputer::knn_fill(k);
    }
    if (s.rfind("constant:", 0) == 0) {
        const double v = std::stod(s.substr(9));
        return Imputer::constant_fill(std::vector<double>(n_cols, v));
    }
    throw ConfigError("unknown imputer '" + s + "' (use mean|group_mean|knn[:k]|constant:v)");
}

// ---------------------------------------------------------------------------
// inject: raw-token CSV pass so untouched cells stay byte-identical
// ---------------------------------------------------------------------------

std::vector<std::string> split_raw(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == delim) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

int cmd_inject(const GlobalOpts& g) {
    const RunConfig cfg = parse_config(g.config_path, g);
    if (!cfg.has_missingness) throw ConfigError("inject needs a missingness section");
    LoadDiagnostics diag;
    const TabularDataset ds = load_data(cfg, &diag);
    const TabularDataset injected =
        inject_missingness(ds, cfg.missingness, mix_seed(cfg.train.seed, 9002));

    // Raw pass mirroring the loader's drop rule, so surviving rows align.
    const std::string text = read_file(cfg.csv);
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    const std::vector<std::string> header = split_raw(line, cfg.load_opts.delimiter);
    int label_idx = -1, group_idx = -1;
    std::vector<int> feature_col; // dataset feature -> original column
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == cfg.load_opts.label_col) label_idx = static_cast<int>(c);
        else if (header[c] == cfg.load_opts.group_col) group_idx = static_cast<int>(c);
        else feature_col.push_back(static_cast<int>(c));
    }

    std::ostringstream out_csv;
    out_csv << line << '\n';
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells = split_raw(line, cfg.load_opts.delimiter);
        const std::string& lt = cells[label_idx];
        const std::string& gt = cells[group_idx];
        if (lt == cfg.load_opts.na_token || lt.empty() || gt == cfg.load_opts.na_token ||
            gt.empty()) {
            continue; // dropped by the loader as well
        }
        for (std::size_t jf = 0; jf < feature_col.size(); ++jf) {
            if (injected.is_missing(row, jf)) cells[feature_col[jf]] = cfg.load_opts.na_token;
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c) out_csv << cfg.load_opts.delimiter;
            out_csv << cells[c];
        }
        out_csv << '\n';
        ++row;
    }
    if (row != ds.n_rows) throw std::logic_error("raw CSV pass disagrees with the loader");

    fs::create_directories(cfg.out_dir);
    write_file(cfg.out_dir + "/injected.csv", out_csv.str());
    const auto cells = missingness_report(injected);
    write_file(cfg.out_dir + "/missingness_report.json",
               report_to_json(cells, diag.dropped_rows).dump(2) + "\n");
    write_file(cfg.out_dir + "/missingness_report.csv", report_to_csv(cells));

    if (!cfg.audit_imputers.empty()) {
        for (std::size_t i = 0; i < ds.values.size(); ++i) {
            if (ds.missing[i]) {
                throw ConfigError(
                    "imputer audit needs a complete input CSV (ground truth at every cell)");
            }
        }
        json audit = json::array();
        for (const std::string& name : cfg.audit_imputers) {
            const Imputer imp = imputer_from_string(name, ds.n_cols);
            const FittedImputer fitted = fit(imp, injected);
            const ImputerDisc disc =
                imputer_disc(fitted, ds.values, injected.missing, injected.groups, ds.n_rows,
                             ds.n_cols, ds.feature_names);
            audit.push_back(
                {{"imputer", name}, {"l0", disc.l0}, {"l1", disc.l1}, {"disc", disc.disc}});
        }
        write_file(cfg.out_dir + "/imputer_audit.json", audit.dump(2) + "\n");
    }
    info(g, "wrote " + cfg.out_dir + "/injected.csv (" + std::to_string(ds.n_rows) + " rows, " +
                std::to_string(diag.dropped_rows) + " dropped)");
    return 0;
}

int cmd_train(const GlobalOpts& g) {
    const RunConfig cfg = parse_config(g.config_path, g);
    const TabularDataset ds = prepare_training_data(cfg);

    TrainLog log;
    const ForestModel model = train(ds, cfg.train, &log);

    fs::create_directories(cfg.out_dir);
    save(model, cfg.out_dir + "/model.json");

    json jlog;
    jlog["budget_seconds"] = log.budget;
    jlog["total_solver_time"] = log.total_solver_time;
    jlog["config_hash"] = config_hash(cfg);
    jlog["trees"] = json::array();
    for (const TreeLogEntry& e : log.trees) {
        jlog["trees"].push_back({{"index", e.index},
                                 {"batch_seed", e.batch_seed},
                                 {"objective", e.objective},
                                 {"wall_time", e.wall_time},
                                 {"proven_optimal", e.proven_optimal},
                                 {"nodes_explored", e.nodes_explored},
                                 {"warm_started", e.warm_started},
                                 {"warm_start_objective", e.warm_start_objective}});
    }
    write_file(cfg.out_dir + "/train_log.json", jlog.dump(2) + "\n");
    info(g, "trained " + std::to_string(model.trees.size()) + " trees in " +
                format_double(log.total_solver_time) + "s solver time (budget " +
                format_double(log.budget) + "s); wrote " + cfg.out_dir + "/model.json");
    return 0;
}

int cmd_predict(const GlobalOpts& g, const std::string& model_path, const std::string& data_path) {
    RunConfig cfg = parse_config(g.config_path, g);
    if (!data_path.empty()) cfg.csv = data_path;
    const ForestModel model = load(model_path);
    TabularDataset ds = load_data(cfg);
    ds = apply_scaling(ds, model.scaling);
    const std::vector<std::uint8_t> preds = predict_majority(model, ds);

    std::ostringstream out;
    out << "row,prediction\n";
    for (std::size_t i = 0; i < preds.size(); ++i) {
        out << i << ',' << static_cast<int>(preds[i]) << '\n';
    }
    fs::create_directories(cfg.out_dir);
    write_file(cfg.out_dir + "/predictions.csv", out.str());
    info(g, "wrote " + cfg.out_dir + "/predictions.csv (" + std::to_string(preds.size()) +
                " rows)");
    return 0;
}

int cmd_evaluate(const GlobalOpts& g, const std::string& model_path,
                 const std::string& data_path) {
    RunConfig cfg = parse_config(g.config_path, g);
    if (!data_path.empty()) cfg.csv = data_path;
    const ForestModel model = load(model_path);
    TabularDataset ds = load_data(cfg);
    ds = apply_scaling(ds, model.scaling);
    const EvalReport rep = evaluate(model, ds);

    json out = eval_to_json(rep);
    out["config_hash"] = config_hash(cfg);
    out["n_rows"] = ds.n_rows;
    fs::create_directories(cfg.out_dir);
    write_file(cfg.out_dir + "/eval_report.json", out.dump(2) + "\n");
    info(g, "accuracy " + format_double(rep.accuracy) + ", wrote " + cfg.out_dir +
                "/eval_report.json");
    return 0;
}

int cmd_sweep(const GlobalOpts& g) {
    const RunConfig cfg = parse_config(g.config_path, g);
    if (cfg.sweep_lambdas.empty()) throw ConfigError("sweep needs a nonempty sweep.lambdas list");
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) {
        throw ConfigError("sweep needs data.test_fraction in (0,1)");
    }
    const TabularDataset ds = prepare_training_data(cfg);
    const auto [tr, te] = train_test_split(ds, cfg.test_fraction, mix_seed(cfg.train.seed, 9003));
    const std::vector<SweepRow> rows =
        sweep_lambda(tr, te, cfg.train, cfg.sweep_lambdas, cfg.sweep_repetitions);

    std::ostringstream out;
    out << "lambda,accuracy,accuracy_se,metric,metric_value,metric_se\n";
    for (const SweepRow& r : rows) {
        out << format_double(r.lambda) << ',' << format_double(r.accuracy) << ','
            << format_double(r.accuracy_se) << ',' << metric_name(cfg.train.metric) << ','
            << format_double(r.metric_value) << ',' << format_double(r.metric_se) << '\n';
    }
    fs::create_directories(cfg.out_dir);
    write_file(cfg.out_dir + "/sweep.csv", out.str());
    info(g, "wrote " + cfg.out_dir + "/sweep.csv (" + std::to_string(rows.size()) + " rows)");
    return 0;
}

int cmd_verify_theory(const GlobalOpts& g, bool inject_fault) {
    TheorySuiteOptions opt;
    opt.inject_fault = inject_fault;
    const TheorySuiteResult res = run_theory_suite(opt);

    json out;
    out["all_pass"] = res.all_pass;
    out["checks"] = json::array();
    for (const TheoryCheck& c : res.checks) {
        out["checks"].push_back({{"name", c.name},
                                 {"expected", c.expected},
                                 {"computed", c.computed},
                                 {"pass", c.pass}});
    }
    const std::string text = out.dump(2) + "\n";
    if (!g.quiet) std::cout << text;
    if (g.out_dir_set || !g.quiet) {
        fs::create_directories(g.out_dir);
        write_file(g.out_dir + "/theory_report.json", text);
    }
    return res.all_pass ? 0 : 3;
}

int cmd_inspect(const GlobalOpts& g, const std::string& model_path) {
    json out;
    if (!model_path.empty()) {
        const ForestModel m = load(model_path);
        out["kind"] = "model";
        out["n_trees"] = m.trees.size();
        out["depth"] = m.config.depth;
        out["lambda"] = m.config.lambda;
        out["metric"] = metric_name(m.config.metric);
        out["feature_names"] = m.feature_names;
        json scaling = json::array();
        for (const ScalePair& s : m.scaling) scaling.push_back({s.min, s.max});
        out["scaling"] = scaling;
    } else {
        const RunConfig cfg = parse_config(g.config_path, g);
        LoadDiagnostics diag;
        const TabularDataset ds = load_data(cfg, &diag);
        out["kind"] = "dataset";
        out["n_rows"] = ds.n_rows;
        out["n_features"] = ds.n_cols;
        out["dropped_rows"] = diag.dropped_rows;
        std::size_t g0 = 0, y1 = 0;
        for (std::size_t i = 0; i < ds.n_rows; ++i) {
            if (ds.groups[i] == 0) ++g0;
            if (ds.labels[i] == 1) ++y1;
        }
        out["group0_rows"] = g0;
        out["group1_rows"] = ds.n_rows - g0;
        out["positive_rows"] = y1;
        out["missingness"] = report_to_json(missingness_report(ds), diag.dropped_rows)["cells"];
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fair decision-tree ensembles on data with missing values"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "run configuration JSON")->expected(1);
    app.add_option("--seed", g.seed, "override the config seed")
        ->each([&g](const std::string&) { g.seed_set = true; });
    app.add_option("--out", g.out_dir, "output directory")
        ->each([&g](const std::string&) { g.out_dir_set = true; });
    app.add_option("--na-token", g.na_token, "override the missing-value token");
    app.add_flag("--quiet", g.quiet, "suppress progress output");

    auto* inject = app.add_subcommand("inject", "erase feature values per-group at random");
    auto* train_cmd = app.add_subcommand("train", "train a fair tree ensemble");
    auto* predict = app.add_subcommand("predict", "predict with a saved model");
    auto* evaluate = app.add_subcommand("evaluate", "evaluate a saved model");
    auto* sweep = app.add_subcommand("sweep", "trace the fairness-accuracy frontier over lambda");
    auto* verify = app.add_subcommand("verify-theory", "run the built-in exactness checks");
    auto* inspect = app.add_subcommand("inspect", "summarize a model or dataset");
    for (CLI::App* sub : {inject, train_cmd, predict, evaluate, sweep, verify, inspect}) {
        sub->fallthrough(); // allow the global flags after the subcommand
    }

    std::string model_path, data_path;
    predict->add_option("--model", model_path, "model JSON path")->required();
    predict->add_option("--data", data_path, "CSV to predict on (overrides config)");
    evaluate->add_option("--model", model_path, "model JSON path")->required();
    evaluate->add_option("--data", data_path, "CSV to evaluate on (overrides config)");

    bool inject_fault = false;
    verify->add_flag("--inject-fault", inject_fault, "test mode: force one check to fail");

    std::string inspect_model;
    inspect->add_option("--model", inspect_model, "model JSON to summarize");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (inject->parsed()) return cmd_inject(g);
        if (train_cmd->parsed()) return cmd_train(g);
        if (predict->parsed()) return cmd_predict(g, model_path, data_path);
        if (evaluate->parsed()) return cmd_evaluate(g, model_path, data_path);
        if (sweep->parsed()) return cmd_sweep(g);
        if (verify->parsed()) return cmd_verify_theory(g, inject_fault);
        if (inspect->parsed()) return cmd_inspect(g, inspect_model);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 3;
    }
    return 1;
}
