#pragma once

#include "neumiss/dense.hpp"

#include <span>

namespace neumiss::net {

/// ReLU layer acting on the concatenated input [x ⊙ (1 − m), m].
struct ReluLayer {
    Matrix w_x;
    Matrix w_m;
    Vector bias;
    /// Offset between an active ReLU unit and the matching ⊙M unit.
    Vector constants;
};

/// Builds a ReLU layer whose unit k is switched off exactly when feature k is
/// observed and otherwise equals unit k of the ⊙M layer
/// h = (w · ((x − μ) ⊙ m̄)) ⊙ m, plus constants[k]. Valid for inputs with every
/// |x_j| ≤ support_bound. Throws SupportBoundTooSmall when support_bound is not
/// a positive finite number, since no sign-forcing margin can then be certified.
ReluLayer relu_layer_from_neumann(const Matrix& w, std::span<const double> mu, double support_bound);

/// ReLU(w_x x̃ + w_m m + bias).
Vector relu_layer_output(const ReluLayer& layer, std::span<const double> x_tilde,
                         std::span<const double> m);

/// (w · ((x − μ) ⊙ m̄)) ⊙ m.
Vector masked_layer_output(const Matrix& w, std::span<const double> mu,
                           std::span<const double> x_tilde, std::span<const double> m);

} // namespace neumiss::net
