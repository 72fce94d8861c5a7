#include "neumiss/imputer.hpp"

#include "neumiss/errors.hpp"

#include <algorithm>
#include <cmath>

namespace neumiss::baselines {

namespace {

// Centered ridge fit of target column j on the other columns over `rows`.
FeatureRegressor fit_regressor(const Matrix& x, Index j, const std::vector<Index>& rows, double penalty) {
    const Index d = x.cols();
    const Index k = d - 1;
    FeatureRegressor reg;
    reg.coef.assign(k, 0.0);
    if (rows.empty()) return reg;

    const double inv_n = 1.0 / static_cast<double>(rows.size());
    Vector mean(k, 0.0);
    double target_mean = 0.0;
    for (Index r : rows) {
        const auto row = x.row(r);
        for (Index a = 0, c = 0; c < d; ++c) {
            if (c == j) continue;
            mean[a++] += row[c];
        }
        target_mean += row[j];
    }
    for (double& v : mean) v *= inv_n;
    target_mean *= inv_n;
    if (k == 0) {
        reg.intercept = target_mean;
        return reg;
    }

    Matrix gram(k, k);
    Vector rhs(k, 0.0);
    Vector z(k);
    for (Index r : rows) {
        const auto row = x.row(r);
        for (Index a = 0, c = 0; c < d; ++c) {
            if (c == j) continue;
            z[a++] = row[c];
        }
        for (Index a = 0; a < k; ++a) z[a] -= mean[a];
        const double t = row[j] - target_mean;
        for (Index a = 0; a < k; ++a) {
            rhs[a] += z[a] * t;
            auto g = gram.row(a);
            for (Index b = 0; b <= a; ++b) g[b] += z[a] * z[b];
        }
    }
    for (Index a = 0; a < k; ++a) {
        for (Index b = 0; b < a; ++b) gram(b, a) = gram(a, b);
        gram(a, a) += penalty;
    }
    try {
        reg.coef = solve_spd(gram, rhs);
    } catch (const NotPositiveDefinite&) {
        // Constant or duplicated columns with a zero penalty.
        for (Index a = 0; a < k; ++a) gram(a, a) += 1e-10 * std::max(trace(gram) / static_cast<double>(k), 1.0);
        reg.coef = solve_spd(gram, rhs);
    }
    reg.intercept = target_mean - dot(reg.coef, mean);
    return reg;
}

double apply_regressor(const FeatureRegressor& reg, std::span<const double> row, Index j) {
    double v = reg.intercept;
    for (Index a = 0, c = 0; c < row.size(); ++c) {
        if (c == j) continue;
        v += reg.coef[a++] * row[c];
    }
    return v;
}

Vector observed_means(const Matrix& x, const Matrix& mask) {
    const Index d = x.cols();
    Vector mean(d, 0.0), count(d, 0.0);
    for (Index i = 0; i < x.rows(); ++i) {
        for (Index j = 0; j < d; ++j) {
            if (mask(i, j) == 0.0) {
                mean[j] += x(i, j);
                count[j] += 1.0;
            }
        }
    }
    for (Index j = 0; j < d; ++j) mean[j] = count[j] > 0.0 ? mean[j] / count[j] : 0.0;
    return mean;
}

Matrix mean_filled(const Matrix& x, const Matrix& mask, const Vector& means) {
    Matrix out = x;
    for (Index i = 0; i < x.rows(); ++i) {
        for (Index j = 0; j < x.cols(); ++j) {
            if (mask(i, j) == 1.0) out(i, j) = means[j];
        }
    }
    return out;
}

} // namespace

ImputerFit imputer_fit_transform(const sim::MaskedDataset& data, Index n_iter, double ridge_penalty) {
    if (n_iter < 1) throw std::invalid_argument("imputer_fit: n_iter must be at least 1");
    if (!(ridge_penalty >= 0.0)) throw std::invalid_argument("imputer_fit: ridge penalty must be non-negative");
    const Index d = data.dim();
    const Matrix& mask = data.mask();

    ImputerFit fit;
    fit.model.ridge_penalty = ridge_penalty;
    fit.model.n_iterations = n_iter;
    fit.model.col_means = observed_means(data.x_tilde(), mask);
    fit.model.regressors.resize(d);
    fit.imputed = mean_filled(data.x_tilde(), mask, fit.model.col_means);

    std::vector<std::vector<Index>> observed_rows(d), missing_rows(d);
    for (Index i = 0; i < data.rows(); ++i) {
        for (Index j = 0; j < d; ++j) (mask(i, j) == 1.0 ? missing_rows : observed_rows)[j].push_back(i);
    }

    for (Index sweep = 0; sweep < n_iter; ++sweep) {
        double change = 0.0;
        for (Index j = 0; j < d; ++j) {
            auto& reg = fit.model.regressors[j];
            reg = fit_regressor(fit.imputed, j, observed_rows[j], ridge_penalty);
            for (Index i : missing_rows[j]) {
                const double v = apply_regressor(reg, fit.imputed.row(i), j);
                change = std::max(change, std::abs(v - fit.imputed(i, j)));
                fit.imputed(i, j) = v;
            }
        }
        fit.model.last_sweep_change = change;
    }
    return fit;
}

ImputerModel imputer_fit(const sim::MaskedDataset& data, Index n_iter, double ridge_penalty) {
    return imputer_fit_transform(data, n_iter, ridge_penalty).model;
}

Matrix imputer_transform(const ImputerModel& model, const Matrix& x_tilde, const Matrix& mask) {
    const Index d = model.dim();
    if (x_tilde.cols() != d || mask.cols() != d || mask.rows() != x_tilde.rows()) {
        throw ShapeMismatch("imputer_transform: input dimension differs from the model");
    }
    Matrix out = mean_filled(x_tilde, mask, model.col_means);
    for (Index i = 0; i < out.rows(); ++i) {
        const auto m = mask.row(i);
        if (std::none_of(m.begin(), m.end(), [](double v) { return v == 1.0; })) continue;
        auto row = out.row(i);
        for (Index sweep = 0; sweep < model.n_iterations; ++sweep) {
            for (Index j = 0; j < d; ++j) {
                if (m[j] == 1.0) row[j] = apply_regressor(model.regressors[j], row, j);
            }
        }
    }
    return out;
}

Matrix imputer_transform(const ImputerModel& model, const sim::MaskedDataset& data) {
    return imputer_transform(model, data.x_tilde(), data.mask());
}

void least_squares(const Matrix& x, std::span<const double> y, Vector& coef, double& intercept) {
    const Index n = x.rows();
    const Index d = x.cols();
    if (y.size() != n || n == 0) throw ShapeMismatch("least_squares: row count mismatch");
    Vector mean(d, 0.0);
    double y_mean = 0.0;
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < d; ++j) mean[j] += x(i, j);
        y_mean += y[i];
    }
    for (double& v : mean) v /= static_cast<double>(n);
    y_mean /= static_cast<double>(n);

    Matrix gram(d, d);
    Vector rhs(d, 0.0);
    Vector z(d);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < d; ++j) z[j] = x(i, j) - mean[j];
        const double t = y[i] - y_mean;
        for (Index a = 0; a < d; ++a) {
            rhs[a] += z[a] * t;
            auto g = gram.row(a);
            for (Index b = 0; b <= a; ++b) g[b] += z[a] * z[b];
        }
    }
    for (Index a = 0; a < d; ++a) {
        for (Index b = 0; b < a; ++b) gram(b, a) = gram(a, b);
    }
    try {
        coef = solve_spd(gram, rhs);
    } catch (const NotPositiveDefinite&) {
        const double ridge = 1e-10 * std::max(trace(gram) / static_cast<double>(d), 1.0);
        for (Index a = 0; a < d; ++a) gram(a, a) += ridge;
        try {
            coef = solve_spd(gram, rhs);
        } catch (const NotPositiveDefinite&) {
            throw SingularDesign("least_squares: design matrix is singular");
        }
    }
    intercept = y_mean - dot(coef, mean);
}

ImputeLrModel impute_lr_train(const sim::MaskedDataset& data, Index n_iter, double ridge_penalty) {
    ImputeLrModel model;
    auto fit = imputer_fit_transform(data, n_iter, ridge_penalty);
    model.imputer = std::move(fit.model);
    least_squares(fit.imputed, data.y(), model.coef, model.intercept);
    return model;
}

Vector impute_lr_predict(const ImputeLrModel& model, const sim::MaskedDataset& data) {
    const Matrix completed = imputer_transform(model.imputer, data);
    Vector out(data.rows());
    for (Index i = 0; i < data.rows(); ++i) out[i] = model.intercept + dot(model.coef, completed.row(i));
    return out;
}

} // namespace neumiss::baselines
