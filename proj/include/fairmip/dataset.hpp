#pragma once

// Tabular data with an explicit missingness mask: loading, unit-interval
// scaling, missingness injection, stratified splitting and batching.
// Datasets are immutable after construction; every operation returns a
// new value and is deterministic given its seed.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairmip/common.hpp"

namespace fairmip {

struct ScalePair {
    double min = 0.0;
    double max = 0.0;
};

struct TabularDataset {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<double> values;        // row-major n_rows x n_cols; undefined where missing
    std::vector<std::uint8_t> missing; // same shape, 1 = missing
    std::vector<std::uint8_t> labels;  // n_rows, values in {0,1}
    std::vector<std::uint8_t> groups;  // n_rows, values in {0,1}
    std::vector<std::string> feature_names;
    std::vector<ScalePair> scaling;    // empty until scale_unit_interval

    double value(std::size_t i, std::size_t j) const { return values[i * n_cols + j]; }
    bool is_missing(std::size_t i, std::size_t j) const { return missing[i * n_cols + j] != 0; }
    bool scaled() const { return !scaling.empty(); }

    std::span<const double> row_values(std::size_t i) const {
        return {values.data() + i * n_cols, n_cols};
    }
    std::span<const std::uint8_t> row_mask(std::size_t i) const {
        return {missing.data() + i * n_cols, n_cols};
    }

    // -1 if the name is unknown.
    int feature_index(const std::string& name) const;

    // New dataset holding exactly the given rows, in the given order.
    TabularDataset subset(std::span<const std::size_t> rows) const;
};

struct LoadOptions {
    std::string na_token = "NA";
    char delimiter = ',';
    std::string label_col;
    std::string group_col;
    // Ordinal maps for categorical columns: column name -> token -> numeric code.
    std::map<std::string, std::map<std::string, double>> encodings;
};

struct LoadDiagnostics {
    std::size_t dropped_rows = 0; // rows removed for a missing label or group
};

TabularDataset load_csv(const std::string& path, const LoadOptions& opt,
                        LoadDiagnostics* diag = nullptr);
TabularDataset parse_csv(const std::string& text, const LoadOptions& opt,
                         LoadDiagnostics* diag = nullptr);

// Min-max scaling per feature over observed cells only; constant features
// map to 0. Stores the (min, max) pairs on the result.
TabularDataset scale_unit_interval(const TabularDataset& ds);

// Applies previously fitted scaling (e.g. a trained model's) to raw data.
TabularDataset apply_scaling(const TabularDataset& ds, const std::vector<ScalePair>& scaling);

// Inverse of scale_unit_interval for a single observed cell.
double unscale_value(const ScalePair& sp, double scaled);

struct MissingnessEntry {
    std::string feature;
    double p0 = 0.0; // erasure probability for group 0
    double p1 = 0.0; // erasure probability for group 1
};

struct MissingnessSpec {
    std::vector<MissingnessEntry> entries;
};

// Masks each targeted cell of group g independently with probability p_g.
// Never unmasks; cells already missing stay missing.
TabularDataset inject_missingness(const TabularDataset& ds, const MissingnessSpec& spec,
                                  std::uint64_t seed);

// Group-stratified split; sizes allocated by largest remainder so group
// proportions hold within one row per group.
std::pair<TabularDataset, TabularDataset>
train_test_split(const TabularDataset& ds, double test_fraction, std::uint64_t seed);

struct BatchSpec {
    std::size_t batch_size = 0;
    std::uint64_t seed = 0;
};

// Without-replacement sample stratified over (group, label) cells: every
// nonempty cell contributes at least one row and cells are represented
// proportionally.
TabularDataset sample_batch(const TabularDataset& ds, const BatchSpec& spec);

struct MissingRateCell {
    std::string feature;
    int group = 0;
    std::size_t group_size = 0;
    std::size_t missing_count = 0;
    double rate = 0.0;
    double std_error = 0.0; // sqrt(p(1-p)/n_g), normal approximation
};

std::vector<MissingRateCell> missingness_report(const TabularDataset& ds);

// Optional down-sampling to equal group sizes (and optionally equal
// (group,label) cells). Surplus rows are dropped uniformly at random.
TabularDataset downsample_balanced(const TabularDataset& ds, bool by_label_too,
                                   std::uint64_t seed);

} // namespace fairmip
