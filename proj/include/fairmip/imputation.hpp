#pragma once

// Baseline single-imputation methods (constant, mean, per-group mean, k-NN)
// and the per-group audit of how unevenly an imputer performs.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fairmip/dataset.hpp"

namespace fairmip {

struct Imputer {
    enum class Kind { ConstantFill, MeanFill, PerGroupMeanFill, KnnFill };
    Kind kind = Kind::MeanFill;
    std::vector<double> constants; // per-feature, ConstantFill only
    int k = 5;                     // KnnFill only

    static Imputer constant_fill(std::vector<double> values);
    static Imputer mean_fill();
    static Imputer per_group_mean_fill();
    static Imputer knn_fill(int k);
};

std::string imputer_name(const Imputer& imp);

// Variant-specific state computed from observed training cells only.
struct FittedImputer {
    Imputer::Kind kind = Imputer::Kind::MeanFill;
    int k = 0;
    std::size_t n_cols = 0;
    std::vector<double> feature_means;             // MeanFill / ConstantFill values
    std::vector<double> group_means;               // PerGroupMeanFill, [g*d + j]
    // KnnFill keeps the training rows for neighbor search.
    std::vector<double> train_values;
    std::vector<std::uint8_t> train_missing;
    std::size_t train_rows = 0;
};

FittedImputer fit(const Imputer& imp, const TabularDataset& ds);

// Complete n x d matrix: observed cells pass through, masked cells filled.
// k-NN distance uses co-observed coordinates only; all masked features of a
// row are filled from the same neighbor set, ties broken by lower row index.
std::vector<double> transform(const FittedImputer& f, const TabularDataset& ds);

struct ImputerDisc {
    double l0 = 0.0;   // mean squared error over masked cells of group 0
    double l1 = 0.0;
    double disc = 0.0; // |l0 - l1|
};

// Scores the imputer against known ground truth at the masked cells.
ImputerDisc imputer_disc(const FittedImputer& f, std::span<const double> truth,
                         std::span<const std::uint8_t> mask, std::span<const std::uint8_t> groups,
                         std::size_t n_rows, std::size_t n_cols,
                         const std::vector<std::string>& feature_names = {});

// L2-optimal constant fill when nothing is observed: p0_ms*m0 + p1_ms*m1,
// with p_s = Pr(S = s | missing).
double optimal_constant(double p0_ms, double p1_ms, double m0, double m1);

struct MixtureMoments {
    double p0_ms = 0.0, p1_ms = 0.0; // Pr(S = s | missing); must sum to 1
    double m0 = 0.0, m1 = 0.0;       // per-group means
    double var0 = 0.0, var1 = 0.0;   // per-group variances
};

// Closed-form discrimination risk of the optimal constant imputer:
// |(p1_ms - p0_ms)(m1 - m0)^2 + (var0 - var1)|.
double optimal_constant_disc(const MixtureMoments& m);

} // namespace fairmip
