#pragma once

#include "neumiss/dense.hpp"
#include "neumiss/rng.hpp"
#include "neumiss/simgen.hpp"

#include <optional>
#include <span>

namespace neumiss::oracle {

/// Observed and missing coordinates of one mask; both sorted, disjoint, and
/// covering 0..d-1.
struct PatternView {
    IndexList obs;
    IndexList mis;

    static PatternView from_mask(std::span<const double> m);
    static PatternView all_observed(Index d);
    Index dim() const noexcept { return obs.size() + mis.size(); }
};

struct ConditionalGaussian {
    Vector mean;
    Matrix cov;
};

/// Law of X_mis given X_obs = x_obs for X ~ N(mu, sigma).
ConditionalGaussian conditional_gaussian(std::span<const double> mu, const Matrix& sigma,
                                         const PatternView& pattern,
                                         std::span<const double> x_obs);

/// Observed coordinates of a zero-imputed row.
Vector gather_observed(std::span<const double> x_row, const PatternView& pattern);

double bayes_predict_mar(const sim::GroundTruth& gt, const PatternView& pattern,
                         std::span<const double> x_obs);

/// Gaussian self-masking Bayes predictor; requires a SelfMaskGaussian mechanism.
double bayes_predict_selfmask(const sim::GroundTruth& gt, const PatternView& pattern,
                              std::span<const double> x_obs);

/// Dispatches on the ground-truth mechanism. Throws NoAnalyticPredictor for probit self-masking.
double bayes_predict(const sim::GroundTruth& gt, const PatternView& pattern,
                     std::span<const double> x_obs);

/// Analytic Bayes predictions for every row of a dataset.
Vector bayes_predictions(const sim::GroundTruth& gt, const sim::MaskedDataset& data);

/// R² of the analytic Bayes predictor on a fresh test set of n_test rows.
double bayes_rate(const sim::GroundTruth& gt, Index n_test, RngStream& rng);

struct NeumannState {
    Matrix s0;
    Index order = 0;
    /// Upper bound accepted for `order`.
    Index max_order = 50;
};

/// Order-ℓ iterate S⁽ℓ⁾_obs = (Id − Σ_obs) S⁽ℓ⁻¹⁾_obs + Id from s0 restricted to obs.
Matrix neumann_submatrix_inverse(const Matrix& sigma, const PatternView& pattern,
                                 const NeumannState& state);

/// (1/L)·S⁽ℓ⁾ computed on Σ/L; approaches (Σ_obs)⁻¹ for any SPD Σ when L ≥ ρ(Σ).
Matrix rescaled_neumann(const Matrix& sigma, const PatternView& pattern,
                        const NeumannState& state, double radius_estimate);

/// 1.01 times the power-iteration estimate of ρ(Σ).
double safe_radius(const Matrix& sigma);

/// Order-ℓ approximation of the MAR Bayes predictor. Without `radius` the
/// plain recursion is used (caller ensures ρ(Σ) < 1); with it, the rescaled one.
double neumann_predict(const sim::GroundTruth& gt, const PatternView& pattern,
                       std::span<const double> x_obs, const NeumannState& state,
                       std::optional<double> radius = std::nullopt);

} // namespace neumiss::oracle
