#pragma once

#include "neumiss/dense.hpp"
#include "neumiss/rng.hpp"
#include "neumiss/simgen.hpp"
#include "neumiss/training.hpp"

#include <span>
#include <vector>

namespace neumiss::net {

/// Weights of a NeuMiss network.
///
/// Depth counts the matrices applied on the main path: depth 0 is the
/// zero-imputation linear model, depth 1 uses only w_mix, depth 2 uses s0 and
/// w_mix, and depth k ≥ 2 adds k − 2 Neumann blocks in between. s0 and w_mix
/// are always allocated; at low depth they simply receive zero gradient.
struct NeuMissWeights {
    Matrix s0;
    std::vector<Matrix> w_neu;
    Matrix w_mix;
    Vector mu;
    Vector beta;
    double beta0 = 0.0;
    Index depth = 0;
    bool residual = false;

    Index dim() const noexcept { return mu.size(); }

    static NeuMissWeights zeros(Index d, Index depth, bool residual);
    /// Throws ShapeMismatch if any block disagrees with d or depth.
    void validate() const;
};

/// Number of W_Neu blocks used at a given depth.
constexpr Index neumann_blocks(Index depth) noexcept { return depth >= 2 ? depth - 2 : 0; }

/// Trainable blocks in a fixed order: s0, w_neu..., w_mix, mu, beta, beta0.
std::vector<std::span<double>> parameter_blocks(NeuMissWeights& w);

/// Activations kept by forward() for the backward pass.
struct ForwardTape {
    Vector x0;               // input with masked cells forced to 0
    Vector h0;               // (x0 − μ) ⊙ m̄
    std::vector<Vector> z;   // z₁ .. z_{depth−1}
    Vector u;                // (w_mix · z_last) ⊙ m
    Vector v;                // x0 + μ ⊙ m + u, fed to β
    double prediction = 0.0;
};

/// Runs the network on one row. Values stored at masked coordinates of x are
/// ignored.
double forward(const NeuMissWeights& w, std::span<const double> x, std::span<const double> m,
               ForwardTape& tape);
double predict(const NeuMissWeights& w, std::span<const double> x, std::span<const double> m);
Vector predict(const NeuMissWeights& w, const sim::MaskedDataset& data);

/// Reusable buffers for accumulate_backward.
struct BackwardScratch {
    Vector dz;
    Vector dpre;
    Vector dh0;
};

/// Adds `dpred` times the gradient of the prediction to `grad` (same shapes as
/// `w`). With dpred = prediction − y this is the gradient of ½(prediction − y)².
void accumulate_backward(const NeuMissWeights& w, const ForwardTape& tape,
                         std::span<const double> m, double dpred, NeuMissWeights& grad,
                         BackwardScratch& scratch);

/// Gradient of the prediction scaled by `dpred`, as a fresh record.
NeuMissWeights backward(const NeuMissWeights& w, const ForwardTape& tape,
                        std::span<const double> m, double dpred);

/// Sets every block of `grad` to zero, keeping shapes.
void zero(NeuMissWeights& grad);

/// Weights realizing the rescaled order-(depth − 2) Neumann predictor with
/// s0 = Id (depth 1 realizes order 0 as well). Residual connections are on.
NeuMissWeights analytic_weights(const sim::GroundTruth& gt, Index depth);

struct SelfMaskTargets {
    /// Per-feature D̂ⱼ = σ̃ⱼ² / Σ_{j|−j}.
    Vector d_hat;
    Vector mu_adj;
    Matrix w_mix;
};

/// Targets for μ and w_mix under Gaussian self-masking with the diagonal
/// approximation D_mis Σ_{mis|obs}⁻¹ ≈ D̂_mis.
SelfMaskTargets selfmask_target_params(const sim::GroundTruth& gt);
/// Same targets for an explicit D̂.
SelfMaskTargets selfmask_target_params(const sim::GroundTruth& gt, std::span<const double> d_hat);

/// Initial weights: matrices uniform on ±1/√d, μ = observed column means,
/// (β₀, β) from ridge-stabilized least squares on mean-imputed inputs.
NeuMissWeights initial_weights(const sim::MaskedDataset& data, Index depth, bool residual,
                               RngStream& rng);

/// Mean of (prediction − y)² over the rows of data.
double mse_loss(const NeuMissWeights& w, const sim::MaskedDataset& data);

struct TrainResult {
    NeuMissWeights weights;
    TrainHistory history;
};

/// Trains on `fit`, keeping the weights with the lowest loss on `validation`.
TrainResult train(const sim::MaskedDataset& fit, const sim::MaskedDataset& validation, Index depth,
                  bool residual, const TrainConfig& cfg, RngStream& rng);

/// Splits off cfg.validation_fraction of `data` for validation and trains on the rest.
TrainResult train(const sim::MaskedDataset& data, Index depth, bool residual,
                  const TrainConfig& cfg, RngStream& rng);

struct Split {
    sim::MaskedDataset fit;
    sim::MaskedDataset validation;
};

/// Random split keeping round(fraction·n) rows for validation. A zero
/// fraction leaves validation empty.
Split split_validation(const sim::MaskedDataset& data, double fraction, RngStream& rng);

} // namespace neumiss::net
