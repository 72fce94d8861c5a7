#include "neumiss/network.hpp"

#include "neumiss/errors.hpp"
#include "neumiss/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace neumiss::net {

namespace {

void require_shape(const Matrix& a, Index d, const char* name) {
    if (a.rows() != d || a.cols() != d) {
        throw ShapeMismatch(std::string("NeuMissWeights: ") + name + " must be " + std::to_string(d) +
                            "x" + std::to_string(d));
    }
}

void split_pattern(std::span<const double> m, IndexList& obs, IndexList& mis) {
    obs.clear();
    mis.clear();
    for (Index j = 0; j < m.size(); ++j) (m[j] == 1.0 ? mis : obs).push_back(j);
}

// out = (a · in) ⊙ m̄, where `in` is supported on obs.
void masked_matvec(const Matrix& a, const Vector& in, const IndexList& obs, Vector& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (Index i : obs) {
        const auto row = a.row(i);
        double s = 0.0;
        for (Index j : obs) s += row[j] * in[j];
        out[i] = s;
    }
}

Matrix uniform_matrix(RngStream& rng, Index d, double bound) {
    Matrix a(d, d);
    for (double& v : a.data()) v = rng.uniform(-bound, bound);
    return a;
}

} // namespace

NeuMissWeights NeuMissWeights::zeros(Index d, Index depth, bool residual) {
    NeuMissWeights w;
    w.s0 = Matrix(d, d);
    w.w_neu.assign(neumann_blocks(depth), Matrix(d, d));
    w.w_mix = Matrix(d, d);
    w.mu.assign(d, 0.0);
    w.beta.assign(d, 0.0);
    w.depth = depth;
    w.residual = residual;
    return w;
}

void NeuMissWeights::validate() const {
    const Index d = dim();
    require_shape(s0, d, "s0");
    require_shape(w_mix, d, "w_mix");
    if (w_neu.size() != neumann_blocks(depth)) {
        throw ShapeMismatch("NeuMissWeights: depth " + std::to_string(depth) + " needs " +
                            std::to_string(neumann_blocks(depth)) + " Neumann blocks, got " +
                            std::to_string(w_neu.size()));
    }
    for (const auto& w : w_neu) require_shape(w, d, "w_neu");
    if (beta.size() != d) throw ShapeMismatch("NeuMissWeights: beta length differs from mu");
}

std::vector<std::span<double>> parameter_blocks(NeuMissWeights& w) {
    std::vector<std::span<double>> blocks;
    blocks.emplace_back(w.s0.data());
    for (auto& m : w.w_neu) blocks.emplace_back(m.data());
    blocks.emplace_back(w.w_mix.data());
    blocks.emplace_back(w.mu);
    blocks.emplace_back(w.beta);
    blocks.emplace_back(&w.beta0, 1);
    return blocks;
}

void zero(NeuMissWeights& grad) {
    for (auto block : parameter_blocks(grad)) std::fill(block.begin(), block.end(), 0.0);
}

double forward(const NeuMissWeights& w, std::span<const double> x, std::span<const double> m,
               ForwardTape& tape) {
    const Index d = w.dim();
    if (x.size() != d || m.size() != d) throw ShapeMismatch("forward: input length differs from d");

    IndexList obs, mis;
    split_pattern(m, obs, mis);

    tape.x0.assign(d, 0.0);
    tape.h0.assign(d, 0.0);
    for (Index j : obs) {
        tape.x0[j] = x[j];
        tape.h0[j] = x[j] - w.mu[j];
    }

    const Index n_hidden = w.depth >= 2 ? w.depth - 1 : 0;
    tape.z.resize(n_hidden);
    for (auto& z : tape.z) z.resize(d);
    if (n_hidden > 0) {
        masked_matvec(w.s0, tape.h0, obs, tape.z[0]);
        for (Index k = 1; k < n_hidden; ++k) {
            masked_matvec(w.w_neu[k - 1], tape.z[k - 1], obs, tape.z[k]);
            if (w.residual) {
                for (Index j : obs) tape.z[k][j] += tape.h0[j];
            }
        }
    }

    tape.u.assign(d, 0.0);
    if (w.depth >= 1) {
        const Vector& last = n_hidden > 0 ? tape.z.back() : tape.h0;
        for (Index i : mis) {
            const auto row = w.w_mix.row(i);
            double s = 0.0;
            for (Index j : obs) s += row[j] * last[j];
            tape.u[i] = s;
        }
    }

    tape.v = tape.x0;
    for (Index i : mis) tape.v[i] = w.mu[i] + tape.u[i];
    tape.prediction = w.beta0 + dot(w.beta, tape.v);
    return tape.prediction;
}

double predict(const NeuMissWeights& w, std::span<const double> x, std::span<const double> m) {
    ForwardTape tape;
    return forward(w, x, m, tape);
}

Vector predict(const NeuMissWeights& w, const sim::MaskedDataset& data) {
    Vector out(data.rows());
    ForwardTape tape;
    for (Index i = 0; i < data.rows(); ++i) out[i] = forward(w, data.x_row(i), data.m_row(i), tape);
    return out;
}

void accumulate_backward(const NeuMissWeights& w, const ForwardTape& tape,
                         std::span<const double> m, double dpred, NeuMissWeights& grad,
                         BackwardScratch& scratch) {
    const Index d = w.dim();
    IndexList obs, mis;
    split_pattern(m, obs, mis);

    grad.beta0 += dpred;
    for (Index j = 0; j < d; ++j) grad.beta[j] += dpred * tape.v[j];
    // v = x0 + μ⊙m + u: the masked coordinates carry both μ and u.
    for (Index i : mis) grad.mu[i] += dpred * w.beta[i];
    if (w.depth == 0) return;

    const Index n_hidden = w.depth >= 2 ? w.depth - 1 : 0;
    const Vector& last = n_hidden > 0 ? tape.z.back() : tape.h0;

    auto& dz = scratch.dz;
    auto& dpre = scratch.dpre;
    auto& dh0 = scratch.dh0;
    dz.assign(d, 0.0);
    dpre.assign(d, 0.0);
    dh0.assign(d, 0.0);

    for (Index i : mis) {
        const double da = dpred * w.beta[i];
        auto grow = grad.w_mix.row(i);
        const auto wrow = w.w_mix.row(i);
        for (Index j : obs) {
            grow[j] += da * last[j];
            dz[j] += wrow[j] * da;
        }
    }

    if (n_hidden == 0) {
        for (Index j : obs) dh0[j] += dz[j];
    } else {
        for (Index k = n_hidden - 1; k >= 1; --k) {
            // z_k = (W z_{k−1}) ⊙ m̄ (+ h0)
            for (Index j : obs) dpre[j] = dz[j];
            if (w.residual) {
                for (Index j : obs) dh0[j] += dz[j];
            }
            const Matrix& wk = w.w_neu[k - 1];
            Matrix& gk = grad.w_neu[k - 1];
            const Vector& prev = tape.z[k - 1];
            for (Index j : obs) dz[j] = 0.0;
            for (Index i : obs) {
                const double di = dpre[i];
                auto grow = gk.row(i);
                const auto wrow = wk.row(i);
                for (Index j : obs) {
                    grow[j] += di * prev[j];
                    dz[j] += wrow[j] * di;
                }
            }
        }
        // z₁ = (s0 h0) ⊙ m̄
        for (Index i : obs) {
            const double di = dz[i];
            auto grow = grad.s0.row(i);
            const auto wrow = w.s0.row(i);
            for (Index j : obs) {
                grow[j] += di * tape.h0[j];
                dh0[j] += wrow[j] * di;
            }
        }
    }
    for (Index j : obs) grad.mu[j] -= dh0[j];
}

NeuMissWeights backward(const NeuMissWeights& w, const ForwardTape& tape,
                        std::span<const double> m, double dpred) {
    NeuMissWeights grad = NeuMissWeights::zeros(w.dim(), w.depth, w.residual);
    BackwardScratch scratch;
    accumulate_backward(w, tape, m, dpred, grad, scratch);
    return grad;
}

NeuMissWeights analytic_weights(const sim::GroundTruth& gt, Index depth) {
    if (depth < 1) throw std::invalid_argument("analytic_weights: depth must be at least 1");
    const Index d = gt.dim();
    const double radius = oracle::safe_radius(gt.sigma);
    const Matrix scaled = gt.sigma * (1.0 / radius);

    NeuMissWeights w = NeuMissWeights::zeros(d, depth, true);
    w.s0 = Matrix::identity(d);
    for (auto& block : w.w_neu) block = Matrix::identity(d) - scaled;
    w.w_mix = scaled;
    w.mu = gt.mu;
    w.beta = gt.beta;
    w.beta0 = gt.beta0;
    return w;
}

SelfMaskTargets selfmask_target_params(const sim::GroundTruth& gt, std::span<const double> d_hat) {
    const auto* spec = std::get_if<sim::SelfMaskGaussian>(&gt.mechanism);
    if (!spec) throw std::invalid_argument("selfmask_target_params: mechanism is not Gaussian self-masking");
    const Index d = gt.dim();
    if (d_hat.size() != d) throw ShapeMismatch("selfmask_target_params: d_hat length differs from d");

    SelfMaskTargets t;
    t.d_hat.assign(d_hat.begin(), d_hat.end());
    t.mu_adj.resize(d);
    t.w_mix = gt.sigma;
    for (Index j = 0; j < d; ++j) {
        const double dj = d_hat[j];
        // (1 + D̂)⁻¹ D̂ → 1 as D̂ → ∞.
        const double weight = std::isinf(dj) ? 1.0 : dj / (1.0 + dj);
        t.mu_adj[j] = (1.0 - weight) * spec->mu_tilde[j] + weight * gt.mu[j];
        for (double& v : t.w_mix.row(j)) v *= weight;
    }
    return t;
}

SelfMaskTargets selfmask_target_params(const sim::GroundTruth& gt) {
    const auto* spec = std::get_if<sim::SelfMaskGaussian>(&gt.mechanism);
    if (!spec) throw std::invalid_argument("selfmask_target_params: mechanism is not Gaussian self-masking");
    const Index d = gt.dim();
    const Matrix precision = cholesky_inverse(cholesky(gt.sigma));
    Vector d_hat(d);
    // Σ_{j|−j} = 1 / (Σ⁻¹)ⱼⱼ
    for (Index j = 0; j < d; ++j) d_hat[j] = spec->sigma_tilde2[j] * precision(j, j);
    return selfmask_target_params(gt, d_hat);
}

NeuMissWeights initial_weights(const sim::MaskedDataset& data, Index depth, bool residual,
                               RngStream& rng) {
    const Index d = data.dim();
    const Index n = data.rows();
    if (n == 0) throw std::invalid_argument("initial_weights: empty dataset");
    NeuMissWeights w = NeuMissWeights::zeros(d, depth, residual);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    w.s0 = uniform_matrix(rng, d, bound);
    for (auto& block : w.w_neu) block = uniform_matrix(rng, d, bound);
    w.w_mix = uniform_matrix(rng, d, bound);

    Vector counts(d, 0.0);
    for (Index i = 0; i < n; ++i) {
        const auto x = data.x_row(i);
        const auto m = data.m_row(i);
        for (Index j = 0; j < d; ++j) {
            if (m[j] == 0.0) {
                w.mu[j] += x[j];
                counts[j] += 1.0;
            }
        }
    }
    for (Index j = 0; j < d; ++j) w.mu[j] = counts[j] > 0.0 ? w.mu[j] / counts[j] : 0.0;

    // Least squares of y on the mean-imputed rows, on centered data so the
    // intercept is left unpenalized.
    Vector feat_mean(d, 0.0);
    double y_mean = 0.0;
    for (Index i = 0; i < n; ++i) {
        const auto x = data.x_row(i);
        const auto m = data.m_row(i);
        for (Index j = 0; j < d; ++j) feat_mean[j] += m[j] == 1.0 ? w.mu[j] : x[j];
        y_mean += data.y()[i];
    }
    for (double& v : feat_mean) v /= static_cast<double>(n);
    y_mean /= static_cast<double>(n);

    Matrix gram(d, d);
    Vector rhs(d, 0.0);
    Vector row(d);
    for (Index i = 0; i < n; ++i) {
        const auto x = data.x_row(i);
        const auto m = data.m_row(i);
        for (Index j = 0; j < d; ++j) row[j] = (m[j] == 1.0 ? w.mu[j] : x[j]) - feat_mean[j];
        const double yc = data.y()[i] - y_mean;
        for (Index a = 0; a < d; ++a) {
            rhs[a] += row[a] * yc;
            auto g = gram.row(a);
            for (Index b = 0; b <= a; ++b) g[b] += row[a] * row[b];
        }
    }
    for (Index a = 0; a < d; ++a) {
        for (Index b = 0; b < a; ++b) gram(b, a) = gram(a, b);
    }
    const double ridge = 1e-6 * std::max(trace(gram) / static_cast<double>(d), 1.0);
    for (Index a = 0; a < d; ++a) gram(a, a) += ridge;
    w.beta = solve_spd(gram, rhs);
    w.beta0 = y_mean - dot(w.beta, feat_mean);
    return w;
}

double mse_loss(const NeuMissWeights& w, const sim::MaskedDataset& data) {
    const Vector pred = predict(w, data);
    double s = 0.0;
    for (Index i = 0; i < data.rows(); ++i) {
        const double e = pred[i] - data.y()[i];
        s += e * e;
    }
    return s / static_cast<double>(std::max<Index>(data.rows(), 1));
}

Split split_validation(const sim::MaskedDataset& data, double fraction, RngStream& rng) {
    if (!(fraction >= 0.0 && fraction < 1.0)) {
        throw std::invalid_argument("split_validation: fraction must lie in [0, 1)");
    }
    const Index n = data.rows();
    const auto n_val = static_cast<Index>(std::llround(fraction * static_cast<double>(n)));
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index{0});
    rng.shuffle(order.begin(), order.end());
    std::vector<Index> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<Index> fit(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(val.begin(), val.end());
    std::sort(fit.begin(), fit.end());
    return {data.select_rows(fit), data.select_rows(val)};
}

TrainResult train(const sim::MaskedDataset& fit, const sim::MaskedDataset& validation, Index depth,
                  bool residual, const TrainConfig& cfg, RngStream& rng) {
    if (fit.rows() < cfg.batch_size) {
        throw std::invalid_argument("train: need at least batch_size training rows");
    }
    TrainResult result;
    result.weights = initial_weights(fit, depth, residual, rng);
    const sim::MaskedDataset& scoring = validation.rows() > 0 ? validation : fit;

    ForwardTape tape;
    BackwardScratch scratch;
    auto batch_grad = [&](const NeuMissWeights& w, std::span<const Index> rows, NeuMissWeights& grad) {
        zero(grad);
        const double scale = 1.0 / static_cast<double>(rows.size());
        double loss = 0.0;
        for (Index r : rows) {
            const double e = forward(w, fit.x_row(r), fit.m_row(r), tape) - fit.y()[r];
            loss += e * e;
            accumulate_backward(w, tape, fit.m_row(r), 2.0 * e * scale, grad, scratch);
        }
        return loss * scale;
    };
    auto val_loss = [&](const NeuMissWeights& w) { return mse_loss(w, scoring); };

    result.history = minibatch_descent(result.weights, fit.rows(), fit.dim(), cfg, rng, batch_grad, val_loss);
    return result;
}

TrainResult train(const sim::MaskedDataset& data, Index depth, bool residual,
                  const TrainConfig& cfg, RngStream& rng) {
    auto split = split_validation(data, cfg.validation_fraction, rng);
    return train(split.fit, split.validation, depth, residual, cfg, rng);
}

} // namespace neumiss::net
