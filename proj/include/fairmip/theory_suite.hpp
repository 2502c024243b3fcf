#pragma once

// The bundled verification suite behind the verify-theory command: scoped
// MCAR counterexamples, the closed-form constant-fill discrimination (with a
// Monte Carlo cross-check), the imputation-mismatch bound on randomized
// joints, and the no-universal-fill conformality scans.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fairmip/theory.hpp"

namespace fairmip {

struct TheoryCheck {
    std::string name;
    double expected = 0.0;
    double computed = 0.0;
    bool pass = false;
};

struct TheorySuiteResult {
    std::vector<TheoryCheck> checks;
    bool all_pass = false;
};

struct TheorySuiteOptions {
    std::uint64_t mc_samples = 1'000'000;
    std::uint64_t seed = 7;
    int random_joints = 1000;
    int fill_grid_size = 101; // constant fills plus indicator fills on top
    bool inject_fault = false; // test mode: corrupt one computed value
};

TheorySuiteResult run_theory_suite(const TheorySuiteOptions& opt = {});

// Random joint over (S, (x_obs, x_ms), M, Y) that is MCAR within each group
// by construction, with dyadic probabilities so sums are exact. At most 8
// atoms.
FiniteJoint random_group_mcar_joint(std::mt19937_64& rng);

// Portable standard normal draw (Box-Muller over the portable unit stream).
double rng_normal(std::mt19937_64& rng);

} // namespace fairmip
