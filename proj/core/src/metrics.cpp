#include "neumiss/metrics.hpp"

#include "neumiss/errors.hpp"

namespace neumiss {

double r2_score(std::span<const double> y_true, std::span<const double> y_pred) {
    if (y_true.empty() || y_true.size() != y_pred.size()) {
        throw ShapeMismatch("r2_score: inputs must be non-empty and of equal length");
    }
    double mean = 0.0;
    for (double y : y_true) mean += y;
    mean /= static_cast<double>(y_true.size());
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const double r = y_true[i] - y_pred[i];
        const double t = y_true[i] - mean;
        ss_res += r * r;
        ss_tot += t * t;
    }
    if (ss_tot == 0.0) throw ZeroVariance("r2_score: y_true has zero variance");
    return 1.0 - ss_res / ss_tot;
}

double mean_squared_error(std::span<const double> y_true, std::span<const double> y_pred) {
    if (y_true.empty() || y_true.size() != y_pred.size()) {
        throw ShapeMismatch("mean_squared_error: inputs must be non-empty and of equal length");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const double r = y_true[i] - y_pred[i];
        s += r * r;
    }
    return s / static_cast<double>(y_true.size());
}

} // namespace neumiss
