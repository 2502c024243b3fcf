#include "fairmip/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fairmip {

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

int TabularDataset::feature_index(const std::string& name) const {
    for (std::size_t j = 0; j < feature_names.size(); ++j) {
        if (feature_names[j] == name) return static_cast<int>(j);
    }
    return -1;
}

TabularDataset TabularDataset::subset(std::span<const std::size_t> rows) const {
    TabularDataset out;
    out.n_rows = rows.size();
    out.n_cols = n_cols;
    out.feature_names = feature_names;
    out.scaling = scaling;
    out.values.resize(out.n_rows * n_cols);
    out.missing.resize(out.n_rows * n_cols);
    out.labels.resize(out.n_rows);
    out.groups.resize(out.n_rows);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const std::size_t i = rows[k];
        std::copy_n(values.begin() + i * n_cols, n_cols, out.values.begin() + k * n_cols);
        std::copy_n(missing.begin() + i * n_cols, n_cols, out.missing.begin() + k * n_cols);
        out.labels[k] = labels[i];
        out.groups[k] = groups[i];
    }
    return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
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

bool parse_number(const std::string& tok, double& out) {
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && ptr == e && !tok.empty();
}

// Token -> numeric value via the column's ordinal map when one is declared,
// else direct parse. Returns false if neither applies.
bool decode_cell(const std::string& tok, const std::string& col, const LoadOptions& opt,
                 double& out) {
    auto it = opt.encodings.find(col);
    if (it != opt.encodings.end()) {
        auto vit = it->second.find(tok);
        if (vit != it->second.end()) {
            out = vit->second;
            return true;
        }
    }
    return parse_number(tok, out);
}

} // namespace

TabularDataset parse_csv(const std::string& text, const LoadOptions& opt, LoadDiagnostics* diag) {
    if (opt.label_col.empty() || opt.group_col.empty()) {
        throw ConfigError("label_col and group_col must be set");
    }
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty CSV: missing header row");
    const std::vector<std::string> header = split_line(line, opt.delimiter);

    int label_idx = -1, group_idx = -1;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == opt.label_col) label_idx = static_cast<int>(j);
        if (header[j] == opt.group_col) group_idx = static_cast<int>(j);
    }
    if (label_idx < 0) throw DataError("label column not found: " + opt.label_col);
    if (group_idx < 0) throw DataError("group column not found: " + opt.group_col);

    TabularDataset ds;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (static_cast<int>(j) != label_idx && static_cast<int>(j) != group_idx) {
            ds.feature_names.push_back(header[j]);
        }
    }
    ds.n_cols = ds.feature_names.size();

    std::size_t dropped = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_line(line, opt.delimiter);
        if (cells.size() != header.size()) {
            throw DataError("row " + std::to_string(line_no) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(header.size()));
        }
        const std::string& label_tok = cells[label_idx];
        const std::string& group_tok = cells[group_idx];
        if (label_tok == opt.na_token || label_tok.empty() || group_tok == opt.na_token ||
            group_tok.empty()) {
            ++dropped;
            continue;
        }
        double label_val = 0.0, group_val = 0.0;
        if (!decode_cell(label_tok, opt.label_col, opt, label_val)) {
            throw DataError("unparseable label '" + label_tok + "' at row " +
                            std::to_string(line_no));
        }
        if (!decode_cell(group_tok, opt.group_col, opt, group_val)) {
            throw DataError("unparseable group '" + group_tok + "' at row " +
                            std::to_string(line_no));
        }
        if (label_val != 0.0 && label_val != 1.0) {
            throw DataError("non-binary label column '" + opt.label_col + "' (value " +
                            label_tok + " at row " + std::to_string(line_no) + ")");
        }
        if (group_val != 0.0 && group_val != 1.0) {
            throw DataError("non-binary group column '" + opt.group_col + "' (value " +
                            group_tok + " at row " + std::to_string(line_no) + ")");
        }
        ds.labels.push_back(static_cast<std::uint8_t>(label_val));
        ds.groups.push_back(static_cast<std::uint8_t>(group_val));
        for (std::size_t j = 0; j < header.size(); ++j) {
            if (static_cast<int>(j) == label_idx || static_cast<int>(j) == group_idx) continue;
            const std::string& tok = cells[j];
            if (tok == opt.na_token || tok.empty()) {
                ds.values.push_back(0.0);
                ds.missing.push_back(1);
                continue;
            }
            double v = 0.0;
            if (!decode_cell(tok, header[j], opt, v)) {
                throw DataError("unparseable cell '" + tok + "' in column '" + header[j] +
                                "' at row " + std::to_string(line_no) +
                                " (declare an encoding for categorical columns)");
            }
            ds.values.push_back(v);
            ds.missing.push_back(0);
        }
    }
    ds.n_rows = ds.labels.size();
    if (diag) diag->dropped_rows = dropped;
    if (ds.n_rows == 0) throw DataError("no data rows remain after dropping incomplete labels/groups");
    return ds;
}

TabularDataset load_csv(const std::string& path, const LoadOptions& opt, LoadDiagnostics* diag) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_csv(ss.str(), opt, diag);
}

TabularDataset scale_unit_interval(const TabularDataset& ds) {
    if (ds.scaled()) throw DataError("dataset is already scaled");
    TabularDataset out = ds;
    out.scaling.resize(ds.n_cols);
    for (std::size_t j = 0; j < ds.n_cols; ++j) {
        double lo = 0.0, hi = 0.0;
        bool seen = false;
        for (std::size_t i = 0; i < ds.n_rows; ++i) {
            if (ds.is_missing(i, j)) continue;
            const double v = ds.value(i, j);
            if (!seen) {
                lo = hi = v;
                seen = true;
            } else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        out.scaling[j] = {lo, hi};
        const double range = hi - lo;
        for (std::size_t i = 0; i < ds.n_rows; ++i) {
            if (ds.is_missing(i, j)) continue;
            out.values[i * ds.n_cols + j] = range > 0.0 ? (ds.value(i, j) - lo) / range : 0.0;
        }
    }
    return out;
}

TabularDataset apply_scaling(const TabularDataset& ds, const std::vector<ScalePair>& scaling) {
    if (scaling.size() != ds.n_cols) throw DataError("scaling dimension mismatch");
    TabularDataset out = ds;
    out.scaling = scaling;
    for (std::size_t j = 0; j < ds.n_cols; ++j) {
        const double range = scaling[j].max - scaling[j].min;
        for (std::size_t i = 0; i < ds.n_rows; ++i) {
            if (ds.is_missing(i, j)) continue;
            out.values[i * ds.n_cols + j] =
                range > 0.0 ? (ds.value(i, j) - scaling[j].min) / range : 0.0;
        }
    }
    return out;
}

double unscale_value(const ScalePair& sp, double scaled) {
    const double range = sp.max - sp.min;
    return range > 0.0 ? sp.min + scaled * range : sp.min;
}

TabularDataset inject_missingness(const TabularDataset& ds, const MissingnessSpec& spec,
                                  std::uint64_t seed) {
    for (const auto& e : spec.entries) {
        if (e.p0 < 0.0 || e.p0 > 1.0 || e.p1 < 0.0 || e.p1 > 1.0) {
            throw DataError("missingness probabilities must lie in [0,1]");
        }
    }
    TabularDataset out = ds;
    std::mt19937_64 rng(seed);
    for (const auto& e : spec.entries) {
        const int j = ds.feature_index(e.feature);
        if (j < 0) throw DataError("unknown feature in missingness spec: " + e.feature);
        for (std::size_t i = 0; i < ds.n_rows; ++i) {
            // Draw for every row so the stream does not depend on the mask.
            const double u = rng_unit(rng);
            const double p = ds.groups[i] == 0 ? e.p0 : e.p1;
            if (u < p) out.missing[i * ds.n_cols + j] = 1;
        }
    }
    return out;
}

std::pair<TabularDataset, TabularDataset>
train_test_split(const TabularDataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw DataError("test_fraction must lie strictly between 0 and 1");
    }
    if (ds.n_rows < 2) throw DataError("need at least two rows to split");

    std::array<std::vector<std::size_t>, 2> by_group;
    for (std::size_t i = 0; i < ds.n_rows; ++i) by_group[ds.groups[i]].push_back(i);

    std::mt19937_64 rng(seed);
    rng_shuffle(by_group[0], rng);
    rng_shuffle(by_group[1], rng);

    const std::size_t total_test =
        static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ds.n_rows)));
    std::array<std::size_t, 2> take{};
    std::array<double, 2> frac{};
    std::size_t assigned = 0;
    for (int g = 0; g < 2; ++g) {
        const double target = test_fraction * static_cast<double>(by_group[g].size());
        take[g] = static_cast<std::size_t>(std::floor(target));
        take[g] = std::min(take[g], by_group[g].size());
        frac[g] = target - static_cast<double>(take[g]);
        assigned += take[g];
    }
    // Largest-remainder rounding toward the requested total.
    while (assigned < total_test) {
        int pick = -1;
        for (int g = 0; g < 2; ++g) {
            if (take[g] >= by_group[g].size()) continue;
            if (pick < 0 || frac[g] > frac[pick]) pick = g;
        }
        if (pick < 0) break;
        ++take[pick];
        frac[pick] -= 1.0;
        ++assigned;
    }
    while (assigned > total_test) {
        int pick = -1;
        for (int g = 0; g < 2; ++g) {
            if (take[g] == 0) continue;
            if (pick < 0 || frac[g] < frac[pick]) pick = g;
        }
        if (pick < 0) break;
        --take[pick];
        frac[pick] += 1.0;
        --assigned;
    }

    std::vector<std::size_t> test_rows, train_rows;
    for (int g = 0; g < 2; ++g) {
        for (std::size_t k = 0; k < by_group[g].size(); ++k) {
            (k < take[g] ? test_rows : train_rows).push_back(by_group[g][k]);
        }
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(test_rows.begin(), test_rows.end());
    return {ds.subset(train_rows), ds.subset(test_rows)};
}

TabularDataset sample_batch(const TabularDataset& ds, const BatchSpec& spec) {
    if (spec.batch_size < 4) throw DataError("batch_size must be at least 4");
    if (spec.batch_size > ds.n_rows) throw DataError("batch_size exceeds dataset size");

    std::array<std::vector<std::size_t>, 4> cells; // index = group*2 + label
    for (std::size_t i = 0; i < ds.n_rows; ++i) {
        cells[ds.groups[i] * 2 + ds.labels[i]].push_back(i);
    }

    const double n = static_cast<double>(ds.n_rows);
    std::array<std::size_t, 4> alloc{};
    std::size_t assigned = 0;
    for (int c = 0; c < 4; ++c) {
        if (cells[c].empty()) continue;
        const double target = static_cast<double>(spec.batch_size) * cells[c].size() / n;
        alloc[c] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(target)));
        alloc[c] = std::min(alloc[c], cells[c].size());
        assigned += alloc[c];
    }
    auto deficit = [&](int c) {
        return static_cast<double>(spec.batch_size) * cells[c].size() / n -
               static_cast<double>(alloc[c]);
    };
    while (assigned < spec.batch_size) {
        int pick = -1;
        for (int c = 0; c < 4; ++c) {
            if (cells[c].empty() || alloc[c] >= cells[c].size()) continue;
            if (pick < 0 || deficit(c) > deficit(pick)) pick = c;
        }
        ++alloc[pick];
        ++assigned;
    }
    while (assigned > spec.batch_size) {
        int pick = -1;
        for (int c = 0; c < 4; ++c) {
            if (cells[c].empty() || alloc[c] <= 1) continue;
            if (pick < 0 || deficit(c) < deficit(pick)) pick = c;
        }
        --alloc[pick];
        --assigned;
    }

    std::mt19937_64 rng(spec.seed);
    std::vector<std::size_t> rows;
    for (int c = 0; c < 4; ++c) {
        if (cells[c].empty()) continue;
        rng_shuffle(cells[c], rng);
        rows.insert(rows.end(), cells[c].begin(), cells[c].begin() + alloc[c]);
    }
    rng_shuffle(rows, rng);
    return ds.subset(rows);
}

std::vector<MissingRateCell> missingness_report(const TabularDataset& ds) {
    std::array<std::size_t, 2> group_size{};
    for (std::size_t i = 0; i < ds.n_rows; ++i) ++group_size[ds.groups[i]];

    std::vector<MissingRateCell> out;
    for (std::size_t j = 0; j < ds.n_cols; ++j) {
        for (int g = 0; g < 2; ++g) {
            MissingRateCell cell;
            cell.feature = ds.feature_names[j];
            cell.group = g;
            cell.group_size = group_size[g];
            for (std::size_t i = 0; i < ds.n_rows; ++i) {
                if (ds.groups[i] == g && ds.is_missing(i, j)) ++cell.missing_count;
            }
            if (cell.group_size > 0) {
                const double p = static_cast<double>(cell.missing_count) /
                                 static_cast<double>(cell.group_size);
                cell.rate = p;
                cell.std_error = std::sqrt(p * (1.0 - p) / static_cast<double>(cell.group_size));
            }
            out.push_back(std::move(cell));
        }
    }
    return out;
}

TabularDataset downsample_balanced(const TabularDataset& ds, bool by_label_too,
                                   std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> keep;
    if (by_label_too) {
        std::array<std::vector<std::size_t>, 4> cells;
        for (std::size_t i = 0; i < ds.n_rows; ++i) {
            cells[ds.groups[i] * 2 + ds.labels[i]].push_back(i);
        }
        std::size_t quota = ds.n_rows;
        for (auto& c : cells) quota = std::min(quota, c.size());
        if (quota == 0) throw DataError("cannot balance: an empty (group,label) cell exists");
        for (auto& c : cells) {
            rng_shuffle(c, rng);
            keep.insert(keep.end(), c.begin(), c.begin() + quota);
        }
    } else {
        std::array<std::vector<std::size_t>, 2> cells;
        for (std::size_t i = 0; i < ds.n_rows; ++i) cells[ds.groups[i]].push_back(i);
        const std::size_t quota = std::min(cells[0].size(), cells[1].size());
        if (quota == 0) throw DataError("cannot balance: a group is empty");
        for (auto& c : cells) {
            rng_shuffle(c, rng);
            keep.insert(keep.end(), c.begin(), c.begin() + quota);
        }
    }
    std::sort(keep.begin(), keep.end());
    return ds.subset(keep);
}

} // namespace fairmip
