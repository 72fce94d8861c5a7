#pragma once

#include <span>

namespace neumiss {

/// Coefficient of determination 1 − Σ(y−ŷ)²/Σ(y−ȳ)². Throws ZeroVariance
/// when y_true is constant and ShapeMismatch on empty or unequal inputs.
double r2_score(std::span<const double> y_true, std::span<const double> y_pred);

double mean_squared_error(std::span<const double> y_true, std::span<const double> y_pred);

} // namespace neumiss
