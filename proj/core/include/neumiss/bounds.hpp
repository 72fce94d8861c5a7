#pragma once

#include "neumiss/dense.hpp"
#include "neumiss/oracle.hpp"
#include "neumiss/rng.hpp"
#include "neumiss/simgen.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace neumiss::oracle {

struct BoundRow {
    Index order = 0;
    double lhs = 0.0;
    double rhs = 0.0;
    /// Slack granted on top of rhs (Monte Carlo allowance or rounding slack).
    double allowance = 0.0;

    bool holds() const noexcept { return lhs <= rhs + allowance; }
};

struct BoundReport {
    std::vector<BoundRow> rows;
    /// Smallest eigenvalue entering the contraction factor.
    double nu = 0.0;
    std::optional<Index> first_violation;

    /// CSV rows `order,lhs,rhs`.
    void write_csv(std::ostream& out) const;
};

/// Checks ‖Id − Σ_obs S⁽ℓ⁾_obs‖₂ ≤ (1 − ν_obs)^ℓ ‖Id − Σ_obs S⁽⁰⁾_obs‖₂ for
/// ℓ = 0..max_order. Requires ρ(Σ) < 1. Throws BoundViolated unless
/// `throw_on_violation` is false, in which case the report flags it.
BoundReport prop5_bound_check(const Matrix& sigma, const PatternView& pattern, const Matrix& s0,
                              Index max_order, bool throw_on_violation = true);

struct Prop3Report {
    /// order, Monte Carlo E[(f_ℓ − f*)²], right-hand side, 3σ allowance.
    BoundReport bound;
    /// LHS(ℓ+1)/LHS(ℓ) against (1 − ν)² with a 3σ delta-method allowance;
    /// rows are keyed by ℓ+1 and skipped once LHS(ℓ) is exactly zero.
    BoundReport ratio;
    double expected_s0_error = 0.0;
    Index mc_samples = 0;
};

struct Prop3Options {
    /// Starting matrix S⁽⁰⁾; identity when empty.
    Matrix s0;
    bool throw_on_violation = true;
};

/// Monte Carlo check of the exponential decay of the order-ℓ predictor error
/// for ℓ = 1..max_order. The ground-truth Σ must have ρ(Σ) < 1 and an MCAR or
/// MAR mechanism; both sides are estimated on the same draws of (X, M).
Prop3Report prop3_bound_check(const sim::GroundTruth& gt, Index max_order, Index mc_samples,
                              RngStream& rng, const Prop3Options& options = {});

/// Ground truth with Σ replaced by Σ / (1.01·ρ(Σ)), making the spectral radius < 1.
sim::GroundTruth rescale_ground_truth(const sim::GroundTruth& gt);

} // namespace neumiss::oracle
