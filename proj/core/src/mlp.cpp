#include "neumiss/mlp.hpp"

#include "neumiss/errors.hpp"
#include "neumiss/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace neumiss::mlp {

std::vector<Index> MlpWeights::hidden_widths() const {
    std::vector<Index> out;
    for (Index l = 0; l + 1 < weights.size(); ++l) out.push_back(weights[l].rows());
    return out;
}

void MlpWeights::validate() const {
    if (weights.empty() || weights.size() != biases.size()) {
        throw ShapeMismatch("MlpWeights: need one bias per layer and at least one layer");
    }
    if (input_dim() % 2 != 0) throw ShapeMismatch("MlpWeights: input width must be 2d");
    for (Index l = 0; l < weights.size(); ++l) {
        if (biases[l].size() != weights[l].rows()) throw ShapeMismatch("MlpWeights: bias length mismatch");
        if (l > 0 && weights[l].cols() != weights[l - 1].rows()) {
            throw ShapeMismatch("MlpWeights: layer " + std::to_string(l) + " input width mismatch");
        }
    }
    if (weights.back().rows() != 1) throw ShapeMismatch("MlpWeights: output width must be 1");
}

MlpWeights init_weights(Index d, std::span<const Index> hidden_widths, RngStream& rng) {
    MlpWeights w;
    Index fan_in = 2 * d;
    auto add_layer = [&](Index out) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Matrix a(out, fan_in);
        for (double& v : a.data()) v = rng.uniform(-bound, bound);
        Vector b(out);
        for (double& v : b) v = rng.uniform(-bound, bound);
        w.weights.push_back(std::move(a));
        w.biases.push_back(std::move(b));
        fan_in = out;
    };
    for (Index width : hidden_widths) {
        if (width == 0) throw std::invalid_argument("init_weights: hidden widths must be positive");
        add_layer(width);
    }
    add_layer(1);
    return w;
}

MlpWeights zeros_like(const MlpWeights& w) {
    MlpWeights out = w;
    zero(out);
    return out;
}

std::vector<std::span<double>> parameter_blocks(MlpWeights& w) {
    std::vector<std::span<double>> blocks;
    for (Index l = 0; l < w.weights.size(); ++l) {
        blocks.emplace_back(w.weights[l].data());
        blocks.emplace_back(w.biases[l]);
    }
    return blocks;
}

void zero(MlpWeights& grad) {
    for (auto block : parameter_blocks(grad)) std::fill(block.begin(), block.end(), 0.0);
}

double forward(const MlpWeights& w, std::span<const double> x, std::span<const double> m, MlpTape& tape) {
    const Index d = x.size();
    if (m.size() != d || w.input_dim() != 2 * d) throw ShapeMismatch("mlp forward: input length mismatch");
    const Index n_layers = w.weights.size();
    tape.acts.resize(n_layers);
    Vector& input = tape.acts[0];
    input.resize(2 * d);
    for (Index j = 0; j < d; ++j) {
        input[j] = m[j] == 1.0 ? 0.0 : x[j];
        input[d + j] = m[j];
    }
    for (Index l = 0; l + 1 < n_layers; ++l) {
        const Matrix& a = w.weights[l];
        Vector& out = tape.acts[l + 1];
        out.resize(a.rows());
        const Vector& in = tape.acts[l];
        for (Index i = 0; i < a.rows(); ++i) {
            out[i] = std::max(w.biases[l][i] + dot(a.row(i), in), 0.0);
        }
    }
    tape.prediction = w.biases.back()[0] + dot(w.weights.back().row(0), tape.acts.back());
    return tape.prediction;
}

double predict(const MlpWeights& w, std::span<const double> x, std::span<const double> m) {
    MlpTape tape;
    return forward(w, x, m, tape);
}

Vector predict(const MlpWeights& w, const sim::MaskedDataset& data) {
    Vector out(data.rows());
    MlpTape tape;
    for (Index i = 0; i < data.rows(); ++i) out[i] = forward(w, data.x_row(i), data.m_row(i), tape);
    return out;
}

void accumulate_backward(const MlpWeights& w, const MlpTape& tape, double dpred, MlpWeights& grad,
                         MlpScratch& scratch) {
    auto& delta = scratch.delta;
    auto& next = scratch.next;
    delta.assign(1, dpred);
    for (Index l = w.weights.size(); l-- > 0;) {
        const Matrix& a = w.weights[l];
        Matrix& ga = grad.weights[l];
        const Vector& in = tape.acts[l];
        next.assign(a.cols(), 0.0);
        for (Index i = 0; i < a.rows(); ++i) {
            const double di = delta[i];
            if (di == 0.0) continue;
            grad.biases[l][i] += di;
            auto grow = ga.row(i);
            const auto wrow = a.row(i);
            for (Index j = 0; j < a.cols(); ++j) {
                grow[j] += di * in[j];
                next[j] += wrow[j] * di;
            }
        }
        if (l == 0) break;
        // in = ReLU(pre); the derivative is taken as 0 at the kink.
        for (Index j = 0; j < next.size(); ++j) {
            if (in[j] <= 0.0) next[j] = 0.0;
        }
        std::swap(delta, next);
    }
}

MlpWeights backward(const MlpWeights& w, const MlpTape& tape, double dpred) {
    MlpWeights grad = zeros_like(w);
    MlpScratch scratch;
    accumulate_backward(w, tape, dpred, grad, scratch);
    return grad;
}

double mse_loss(const MlpWeights& w, const sim::MaskedDataset& data) {
    const Vector pred = predict(w, data);
    double s = 0.0;
    for (Index i = 0; i < data.rows(); ++i) {
        const double e = pred[i] - data.y()[i];
        s += e * e;
    }
    return s / static_cast<double>(std::max<Index>(data.rows(), 1));
}

MlpTrainResult train(const sim::MaskedDataset& fit, const sim::MaskedDataset& validation,
                     std::span<const Index> hidden_widths, const TrainConfig& cfg, RngStream& rng) {
    if (fit.rows() == 0) throw std::invalid_argument("mlp train: empty training set");
    MlpTrainResult result;
    result.weights = init_weights(fit.dim(), hidden_widths, rng);
    const sim::MaskedDataset& scoring = validation.rows() > 0 ? validation : fit;

    MlpTape tape;
    MlpScratch scratch;
    auto batch_grad = [&](const MlpWeights& w, std::span<const Index> rows, MlpWeights& grad) {
        zero(grad);
        const double scale = 1.0 / static_cast<double>(rows.size());
        double loss = 0.0;
        for (Index r : rows) {
            const double e = forward(w, fit.x_row(r), fit.m_row(r), tape) - fit.y()[r];
            loss += e * e;
            accumulate_backward(w, tape, 2.0 * e * scale, grad, scratch);
        }
        return loss * scale;
    };
    auto val_loss = [&](const MlpWeights& w) { return mse_loss(w, scoring); };
    result.history = minibatch_descent(result.weights, fit.rows(), fit.dim(), cfg, rng, batch_grad, val_loss);
    return result;
}

MlpTrainResult mlp_train(const sim::MaskedDataset& data, Index width, const TrainConfig& cfg,
                         RngStream& rng) {
    if (width < 1) throw std::invalid_argument("mlp_train: width must be at least 1");
    auto split = net::split_validation(data, cfg.validation_fraction, rng);
    const Index widths[] = {width};
    return train(split.fit, split.validation, widths, cfg, rng);
}

std::vector<Index> deep_widths(Index d, Index depth) {
    return std::vector<Index>(depth, d);
}

} // namespace neumiss::mlp
