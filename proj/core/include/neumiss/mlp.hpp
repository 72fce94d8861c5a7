#pragma once

#include "neumiss/dense.hpp"
#include "neumiss/rng.hpp"
#include "neumiss/simgen.hpp"
#include "neumiss/training.hpp"

#include <span>
#include <vector>

namespace neumiss::mlp {

/// Fully connected network on [x ⊙ (1 − m), m] with ReLU hidden layers and a
/// single linear output. weights[l] is (out × in).
struct MlpWeights {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    Index input_dim() const noexcept { return weights.empty() ? 0 : weights.front().cols(); }
    std::vector<Index> hidden_widths() const;
    void validate() const;
};

/// Layers uniform on ±1/√fan_in, biases included.
MlpWeights init_weights(Index d, std::span<const Index> hidden_widths, RngStream& rng);
MlpWeights zeros_like(const MlpWeights& w);

std::vector<std::span<double>> parameter_blocks(MlpWeights& w);
void zero(MlpWeights& grad);

struct MlpTape {
    /// acts[0] is the network input; acts[l] the output of hidden layer l.
    std::vector<Vector> acts;
    double prediction = 0.0;
};

double forward(const MlpWeights& w, std::span<const double> x, std::span<const double> m, MlpTape& tape);
double predict(const MlpWeights& w, std::span<const double> x, std::span<const double> m);
Vector predict(const MlpWeights& w, const sim::MaskedDataset& data);

struct MlpScratch {
    Vector delta;
    Vector next;
};

/// Adds `dpred` times the gradient of the prediction to `grad`.
void accumulate_backward(const MlpWeights& w, const MlpTape& tape, double dpred, MlpWeights& grad,
                         MlpScratch& scratch);
MlpWeights backward(const MlpWeights& w, const MlpTape& tape, double dpred);

double mse_loss(const MlpWeights& w, const sim::MaskedDataset& data);

struct MlpTrainResult {
    MlpWeights weights;
    TrainHistory history;
};

/// Trains an MLP with the given hidden widths on `fit`, keeping the weights
/// with the lowest loss on `validation`.
MlpTrainResult train(const sim::MaskedDataset& fit, const sim::MaskedDataset& validation,
                     std::span<const Index> hidden_widths, const TrainConfig& cfg, RngStream& rng);

/// One hidden layer of `width` units; cfg.validation_fraction is split off.
MlpTrainResult mlp_train(const sim::MaskedDataset& data, Index width, const TrainConfig& cfg,
                         RngStream& rng);

/// `depth` hidden layers of d units each.
std::vector<Index> deep_widths(Index d, Index depth);

} // namespace neumiss::mlp
