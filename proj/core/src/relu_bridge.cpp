#include "neumiss/relu_bridge.hpp"

#include "neumiss/errors.hpp"

#include <algorithm>
#include <cmath>

namespace neumiss::net {

namespace {

// Strict margin keeping inactive units strictly negative and active ones
// strictly positive.
constexpr double kMargin = 1.0;

} // namespace

ReluLayer relu_layer_from_neumann(const Matrix& w, std::span<const double> mu, double support_bound) {
    const Index d = w.rows();
    if (!w.is_square() || mu.size() != d) {
        throw ShapeMismatch("relu_layer_from_neumann: w must be d x d and mu of length d");
    }
    if (!(support_bound > 0.0) || !std::isfinite(support_bound)) {
        throw SupportBoundTooSmall("relu_layer_from_neumann: support bound must be positive and finite");
    }
    const double bound = support_bound;

    ReluLayer layer;
    layer.w_x = w;
    layer.w_m = Matrix(d, d);
    layer.bias.assign(d, 0.0);
    layer.constants.assign(d, 0.0);

    for (Index k = 0; k < d; ++k) {
        // Unit k with k observed: |W_kk x_k| ≤ |W_kk|B, and every other
        // coordinate contributes either W_kj x_j (observed) or W_kj μ_j (missing).
        double upper = std::abs(w(k, k)) * bound;
        // Unit k with k missing: lowest possible contribution of the others.
        double lower = 0.0;
        double mean_term = 0.0;
        for (Index j = 0; j < d; ++j) {
            if (j == k) continue;
            const double wm = w(k, j) * mu[j];
            layer.w_m(k, j) = wm;
            upper += std::max(std::abs(w(k, j)) * bound, wm);
            lower += std::max(std::abs(w(k, j)) * bound, -wm);
            mean_term += wm;
        }
        const double b = -upper - kMargin;
        const double diag = -b + lower + kMargin;
        if (!std::isfinite(b) || !std::isfinite(diag)) {
            throw SupportBoundTooSmall("relu_layer_from_neumann: sign-forcing margins overflow");
        }
        layer.bias[k] = b;
        layer.w_m(k, k) = diag;
        layer.constants[k] = diag + b + mean_term;
    }
    return layer;
}

Vector relu_layer_output(const ReluLayer& layer, std::span<const double> x_tilde,
                         std::span<const double> m) {
    const Index d = layer.bias.size();
    if (x_tilde.size() != layer.w_x.cols() || m.size() != layer.w_m.cols()) {
        throw ShapeMismatch("relu_layer_output: input length mismatch");
    }
    Vector out(d);
    for (Index k = 0; k < d; ++k) {
        double a = layer.bias[k] + dot(layer.w_x.row(k), x_tilde) + dot(layer.w_m.row(k), m);
        out[k] = std::max(a, 0.0);
    }
    return out;
}

Vector masked_layer_output(const Matrix& w, std::span<const double> mu,
                           std::span<const double> x_tilde, std::span<const double> m) {
    const Index d = w.rows();
    if (x_tilde.size() != d || m.size() != d || mu.size() != d) {
        throw ShapeMismatch("masked_layer_output: input length mismatch");
    }
    Vector h(d);
    for (Index j = 0; j < d; ++j) h[j] = m[j] == 1.0 ? 0.0 : x_tilde[j] - mu[j];
    Vector out = matvec(w, h);
    for (Index k = 0; k < d; ++k) out[k] *= m[k];
    return out;
}

} // namespace neumiss::net
