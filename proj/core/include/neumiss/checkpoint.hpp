#pragma once

#include "neumiss/em.hpp"
#include "neumiss/imputer.hpp"
#include "neumiss/mlp.hpp"
#include "neumiss/network.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <variant>

namespace neumiss {

/// Any trained model the tools can store, load and evaluate.
using Model = std::variant<net::NeuMissWeights, mlp::MlpWeights, baselines::JointGaussianEstimate,
                           baselines::ImputeLrModel>;

std::string_view model_kind(const Model& model);

/// Predictions of any stored model on a dataset.
Vector predict_model(const Model& model, const sim::MaskedDataset& data);

// JSON checkpoints. NeuMiss weights use the object
// {d, depth, residual, s0, w_neu[], w_mix, mu, beta, beta0} with matrices as
// row-major arrays; the other models carry an additional "kind" key. Doubles
// are written in shortest round-trip form, so save/load is lossless.
std::string to_json(const Model& model);
Model from_json(std::string_view text);

void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

} // namespace neumiss
