#include "fairmip/imputation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fairmip {

Imputer Imputer::constant_fill(std::vector<double> values) {
    Imputer imp;
    imp.kind = Kind::ConstantFill;
    imp.constants = std::move(values);
    return imp;
}

Imputer Imputer::mean_fill() {
    Imputer imp;
    imp.kind = Kind::MeanFill;
    return imp;
}

Imputer Imputer::per_group_mean_fill() {
    Imputer imp;
    imp.kind = Kind::PerGroupMeanFill;
    return imp;
}

Imputer Imputer::knn_fill(int k) {
    if (k < 1) throw ConfigError("k-NN imputation requires k >= 1");
    Imputer imp;
    imp.kind = Kind::KnnFill;
    imp.k = k;
    return imp;
}

std::string imputer_name(const Imputer& imp) {
    switch (imp.kind) {
    case Imputer::Kind::ConstantFill: return "constant";
    case Imputer::Kind::MeanFill: return "mean";
    case Imputer::Kind::PerGroupMeanFill: return "group_mean";
    case Imputer::Kind::KnnFill: return "knn" + std::to_string(imp.k);
    }
    return "mean";
}

FittedImputer fit(const Imputer& imp, const TabularDataset& ds) {
    FittedImputer f;
    f.kind = imp.kind;
    f.k = imp.k;
    f.n_cols = ds.n_cols;

    if (imp.kind == Imputer::Kind::ConstantFill) {
        if (imp.constants.size() != ds.n_cols) {
            throw ConfigError("constant fill needs one value per feature");
        }
        f.feature_means = imp.constants;
        return f;
    }

    // Per-feature observed means; every variant except ConstantFill needs
    // them (k-NN uses them as the fallback when no neighbor observes j).
    f.feature_means.assign(ds.n_cols, 0.0);
    for (std::size_t j = 0; j < ds.n_cols; ++j) {
        double sum = 0.0;
        std::size_t cnt = 0;
        for (std::size_t i = 0; i < ds.n_rows; ++i) {
            if (ds.is_missing(i, j)) continue;
            sum += ds.value(i, j);
            ++cnt;
        }
        if (cnt == 0) {
            throw DataError("feature '" + ds.feature_names[j] + "' has no observed values");
        }
        f.feature_means[j] = sum / static_cast<double>(cnt);
    }

    if (imp.kind == Imputer::Kind::PerGroupMeanFill) {
        f.group_means.assign(2 * ds.n_cols, 0.0);
        for (int g = 0; g < 2; ++g) {
            for (std::size_t j = 0; j < ds.n_cols; ++j) {
                double sum = 0.0;
                std::size_t cnt = 0;
                for (std::size_t i = 0; i < ds.n_rows; ++i) {
                    if (ds.groups[i] != g || ds.is_missing(i, j)) continue;
                    sum += ds.value(i, j);
                    ++cnt;
                }
                if (cnt == 0) {
                    throw DataError("feature '" + ds.feature_names[j] +
                                    "' has no observed values in group " + std::to_string(g));
                }
                f.group_means[static_cast<std::size_t>(g) * ds.n_cols + j] =
                    sum / static_cast<double>(cnt);
            }
        }
    } else if (imp.kind == Imputer::Kind::KnnFill) {
        f.train_values = ds.values;
        f.train_missing = ds.missing;
        f.train_rows = ds.n_rows;
    }
    return f;
}

namespace {

// Squared Euclidean distance over coordinates observed in both rows.
// Returns false when no coordinate is co-observed.
bool co_observed_dist2(const FittedImputer& f, std::span<const double> qv,
                       std::span<const std::uint8_t> qm, std::size_t train_row, double& out) {
    double d2 = 0.0;
    bool any = false;
    for (std::size_t j = 0; j < f.n_cols; ++j) {
        if (qm[j]) continue;
        if (f.train_missing[train_row * f.n_cols + j]) continue;
        const double diff = qv[j] - f.train_values[train_row * f.n_cols + j];
        d2 += diff * diff;
        any = true;
    }
    out = d2;
    return any;
}

void knn_fill_row(const FittedImputer& f, const TabularDataset& ds, std::size_t i,
                  std::span<double> out_row) {
    std::vector<std::pair<double, std::size_t>> dist; // (distance^2, train row)
    dist.reserve(f.train_rows);
    for (std::size_t t = 0; t < f.train_rows; ++t) {
        double d2 = 0.0;
        if (co_observed_dist2(f, ds.row_values(i), ds.row_mask(i), t, d2)) {
            dist.emplace_back(d2, t);
        }
    }
    if (dist.empty()) {
        throw DataError("k-NN: row " + std::to_string(i) +
                        " shares no observed feature with any training row");
    }
    // Ties broken by lower training-row index.
    std::stable_sort(dist.begin(), dist.end());
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(f.k), dist.size());

    for (std::size_t j = 0; j < f.n_cols; ++j) {
        if (!ds.is_missing(i, j)) continue;
        double sum = 0.0;
        std::size_t cnt = 0;
        for (std::size_t r = 0; r < k; ++r) {
            const std::size_t t = dist[r].second;
            if (f.train_missing[t * f.n_cols + j]) continue;
            sum += f.train_values[t * f.n_cols + j];
            ++cnt;
        }
        // All k neighbors missing feature j: fall back to its training mean.
        out_row[j] = cnt > 0 ? sum / static_cast<double>(cnt) : f.feature_means[j];
    }
}

} // namespace

std::vector<double> transform(const FittedImputer& f, const TabularDataset& ds) {
    if (ds.n_cols != f.n_cols) throw DataError("imputer/dataset feature count mismatch");
    std::vector<double> out = ds.values;
    for (std::size_t i = 0; i < ds.n_rows; ++i) {
        bool any_missing = false;
        for (std::size_t j = 0; j < ds.n_cols; ++j) {
            if (ds.is_missing(i, j)) {
                any_missing = true;
                break;
            }
        }
        if (!any_missing) continue;

        std::span<double> row(out.data() + i * ds.n_cols, ds.n_cols);
        switch (f.kind) {
        case Imputer::Kind::ConstantFill:
        case Imputer::Kind::MeanFill:
            for (std::size_t j = 0; j < ds.n_cols; ++j) {
                if (ds.is_missing(i, j)) row[j] = f.feature_means[j];
            }
            break;
        case Imputer::Kind::PerGroupMeanFill: {
            const std::size_t g = ds.groups[i];
            for (std::size_t j = 0; j < ds.n_cols; ++j) {
                if (ds.is_missing(i, j)) row[j] = f.group_means[g * ds.n_cols + j];
            }
            break;
        }
        case Imputer::Kind::KnnFill:
            knn_fill_row(f, ds, i, row);
            break;
        }
    }
    return out;
}

ImputerDisc imputer_disc(const FittedImputer& f, std::span<const double> truth,
                         std::span<const std::uint8_t> mask, std::span<const std::uint8_t> groups,
                         std::size_t n_rows, std::size_t n_cols,
                         const std::vector<std::string>& feature_names) {
    if (truth.size() != n_rows * n_cols || mask.size() != truth.size() ||
        groups.size() != n_rows) {
        throw DataError("imputer_disc: shape mismatch");
    }
    TabularDataset masked;
    masked.n_rows = n_rows;
    masked.n_cols = n_cols;
    masked.values.assign(truth.begin(), truth.end());
    masked.missing.assign(mask.begin(), mask.end());
    masked.labels.assign(n_rows, 0);
    masked.groups.assign(groups.begin(), groups.end());
    masked.feature_names = feature_names;
    if (masked.feature_names.empty()) {
        for (std::size_t j = 0; j < n_cols; ++j) {
            masked.feature_names.push_back("f" + std::to_string(j));
        }
    }
    const std::vector<double> filled = transform(f, masked);

    double sum[2] = {0.0, 0.0};
    std::size_t cnt[2] = {0, 0};
    for (std::size_t i = 0; i < n_rows; ++i) {
        for (std::size_t j = 0; j < n_cols; ++j) {
            if (!mask[i * n_cols + j]) continue;
            const double err = filled[i * n_cols + j] - truth[i * n_cols + j];
            sum[groups[i]] += err * err;
            ++cnt[groups[i]];
        }
    }
    if (cnt[0] == 0 || cnt[1] == 0) {
        throw DataError("imputer_disc: a group has no masked cells to score");
    }
    ImputerDisc d;
    d.l0 = sum[0] / static_cast<double>(cnt[0]);
    d.l1 = sum[1] / static_cast<double>(cnt[1]);
    d.disc = std::abs(d.l0 - d.l1);
    return d;
}

double optimal_constant(double p0_ms, double p1_ms, double m0, double m1) {
    if (p0_ms < 0.0 || p1_ms < 0.0 || std::abs(p0_ms + p1_ms - 1.0) > 1e-9) {
        throw DataError("optimal_constant: probabilities must be nonnegative and sum to 1");
    }
    return p0_ms * m0 + p1_ms * m1;
}

double optimal_constant_disc(const MixtureMoments& m) {
    if (m.p0_ms < 0.0 || m.p1_ms < 0.0 || std::abs(m.p0_ms + m.p1_ms - 1.0) > 1e-9) {
        throw DataError("optimal_constant_disc: probabilities must sum to 1");
    }
    if (m.var0 < 0.0 || m.var1 < 0.0) {
        throw DataError("optimal_constant_disc: variances must be nonnegative");
    }
    const double mean_gap = m.m1 - m.m0;
    return std::abs((m.p1_ms - m.p0_ms) * mean_gap * mean_gap + (m.var0 - m.var1));
}

} // namespace fairmip
