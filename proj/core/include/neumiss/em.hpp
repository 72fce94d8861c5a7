#pragma once

#include "neumiss/dense.hpp"
#include "neumiss/oracle.hpp"
#include "neumiss/simgen.hpp"

#include <span>
#include <vector>

namespace neumiss::baselines {

/// Gaussian estimate of the joint law of (X, Y); Y is the last coordinate.
struct JointGaussianEstimate {
    Vector mean;
    Matrix cov;
    /// Observed-data log-likelihood at the parameters entering each E-step.
    std::vector<double> loglik_trace;
    Index iterations = 0;
    bool converged = false;

    Index feature_dim() const noexcept { return mean.empty() ? 0 : mean.size() - 1; }
};

struct EmOptions {
    double tol = 1e-6;
    Index max_iter = 200;
    /// Distinct missingness patterns above which PatternOverflow is thrown.
    Index max_patterns = 4096;
};

/// EM for the (d+1)-variate Gaussian of (X, Y), with rows grouped by
/// missingness pattern. Stops when the log-likelihood gain drops below tol.
JointGaussianEstimate em_fit(const sim::MaskedDataset& data, const EmOptions& options = {});

/// E[Y | X_obs = x_obs] under the fitted Gaussian.
double em_predict(const JointGaussianEstimate& est, const oracle::PatternView& pattern,
                  std::span<const double> x_obs);

/// em_predict for every row, reusing one factorization per pattern.
Vector em_predictions(const JointGaussianEstimate& est, const sim::MaskedDataset& data);

/// Joint parameters of (X, Y) implied by a ground truth; useful as a reference estimate.
JointGaussianEstimate joint_from_ground_truth(const sim::GroundTruth& gt);

} // namespace neumiss::baselines
