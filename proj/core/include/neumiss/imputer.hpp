#pragma once

#include "neumiss/dense.hpp"
#include "neumiss/simgen.hpp"

#include <vector>

namespace neumiss::baselines {

/// Ridge regression of one feature on all the others.
struct FeatureRegressor {
    /// Coefficients over the other d − 1 features, in increasing index order.
    Vector coef;
    double intercept = 0.0;
};

/// Iterative conditional imputer: column-mean start followed by sweeps of
/// per-feature ridge regressions in ascending feature order.
struct ImputerModel {
    Vector col_means;
    std::vector<FeatureRegressor> regressors;
    double ridge_penalty = 1e-3;
    Index n_iterations = 10;
    /// Largest change of an imputed cell during the last fitting sweep.
    double last_sweep_change = 0.0;

    Index dim() const noexcept { return col_means.size(); }
};

struct ImputerFit {
    ImputerModel model;
    /// Training covariates after the final fitting sweep.
    Matrix imputed;
};

ImputerFit imputer_fit_transform(const sim::MaskedDataset& data, Index n_iter = 10,
                                 double ridge_penalty = 1e-3);
ImputerModel imputer_fit(const sim::MaskedDataset& data, Index n_iter = 10, double ridge_penalty = 1e-3);

/// Fills x_tilde's masked cells with column means, then applies the stored
/// regressors for n_iterations sweeps without refitting.
Matrix imputer_transform(const ImputerModel& model, const Matrix& x_tilde, const Matrix& mask);
Matrix imputer_transform(const ImputerModel& model, const sim::MaskedDataset& data);

/// Conditional imputation followed by ordinary least squares on the completed matrix.
struct ImputeLrModel {
    ImputerModel imputer;
    Vector coef;
    double intercept = 0.0;
};

ImputeLrModel impute_lr_train(const sim::MaskedDataset& data, Index n_iter = 10,
                              double ridge_penalty = 1e-3);
Vector impute_lr_predict(const ImputeLrModel& model, const sim::MaskedDataset& data);

/// Least squares of y on the rows of x with an unpenalized intercept.
/// Retries once with a 1e-10 relative ridge, then throws SingularDesign.
void least_squares(const Matrix& x, std::span<const double> y, Vector& coef, double& intercept);

} // namespace neumiss::baselines
