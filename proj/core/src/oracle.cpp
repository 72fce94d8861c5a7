#include "neumiss/oracle.hpp"

#include "neumiss/errors.hpp"
#include "neumiss/metrics.hpp"

#include <string>

namespace neumiss::oracle {

namespace {

void require_order(const NeumannState& state) {
    if (state.order > state.max_order) {
        throw std::invalid_argument("Neumann order " + std::to_string(state.order) +
                                    " exceeds the configured maximum " +
                                    std::to_string(state.max_order));
    }
}

// β0 + ⟨β_obs, x_obs⟩ + ⟨β_mis, x_mis_estimate⟩
double linear_response(const sim::GroundTruth& gt, const PatternView& pattern,
                       std::span<const double> x_obs, std::span<const double> x_mis_estimate) {
    double pred = gt.beta0;
    for (Index k = 0; k < pattern.obs.size(); ++k) pred += gt.beta[pattern.obs[k]] * x_obs[k];
    for (Index k = 0; k < pattern.mis.size(); ++k) pred += gt.beta[pattern.mis[k]] * x_mis_estimate[k];
    return pred;
}

} // namespace

PatternView PatternView::from_mask(std::span<const double> m) {
    PatternView p;
    for (Index j = 0; j < m.size(); ++j) (m[j] == 1.0 ? p.mis : p.obs).push_back(j);
    return p;
}

PatternView PatternView::all_observed(Index d) {
    PatternView p;
    p.obs.resize(d);
    for (Index j = 0; j < d; ++j) p.obs[j] = j;
    return p;
}

Vector gather_observed(std::span<const double> x_row, const PatternView& pattern) {
    return subvector(x_row, pattern.obs);
}

ConditionalGaussian conditional_gaussian(std::span<const double> mu, const Matrix& sigma,
                                         const PatternView& pattern,
                                         std::span<const double> x_obs) {
    if (x_obs.size() != pattern.obs.size()) {
        throw ShapeMismatch("conditional_gaussian: x_obs length differs from |obs|");
    }
    ConditionalGaussian out;
    out.mean = subvector(mu, pattern.mis);
    out.cov = submatrix(sigma, pattern.mis, pattern.mis);
    if (pattern.mis.empty() || pattern.obs.empty()) return out;

    const Matrix sigma_obs = submatrix(sigma, pattern.obs, pattern.obs);
    const Matrix sigma_mis_obs = submatrix(sigma, pattern.mis, pattern.obs);
    const Matrix chol = cholesky(sigma_obs);

    Vector centered(x_obs.begin(), x_obs.end());
    for (Index k = 0; k < centered.size(); ++k) centered[k] -= mu[pattern.obs[k]];
    const Vector weights = cholesky_solve(chol, centered);
    const Vector shift = matvec(sigma_mis_obs, weights);
    for (Index k = 0; k < out.mean.size(); ++k) out.mean[k] += shift[k];

    const Matrix gain = cholesky_solve(chol, transpose(sigma_mis_obs));
    out.cov -= matmul(sigma_mis_obs, gain);
    for (Index i = 0; i < out.cov.rows(); ++i) {
        for (Index j = i + 1; j < out.cov.cols(); ++j) {
            const double s = 0.5 * (out.cov(i, j) + out.cov(j, i));
            out.cov(i, j) = s;
            out.cov(j, i) = s;
        }
    }
    return out;
}

double bayes_predict_mar(const sim::GroundTruth& gt, const PatternView& pattern,
                         std::span<const double> x_obs) {
    const auto cond = conditional_gaussian(gt.mu, gt.sigma, pattern, x_obs);
    return linear_response(gt, pattern, x_obs, cond.mean);
}

double bayes_predict_selfmask(const sim::GroundTruth& gt, const PatternView& pattern,
                              std::span<const double> x_obs) {
    const auto* spec = std::get_if<sim::SelfMaskGaussian>(&gt.mechanism);
    if (!spec) throw NoAnalyticPredictor("bayes_predict_selfmask: mechanism is not Gaussian self-masking");
    const auto cond = conditional_gaussian(gt.mu, gt.sigma, pattern, x_obs);
    if (pattern.mis.empty()) return linear_response(gt, pattern, x_obs, cond.mean);

    // (Id + D Σc⁻¹)⁻¹ (μ̃ + D Σc⁻¹ μc) rewritten as Σc (Σc + D)⁻¹ μ̃ + D (Σc + D)⁻¹ μc,
    // which needs only one SPD factorization.
    const Index k = pattern.mis.size();
    Matrix total = cond.cov;
    Vector mu_tilde(k);
    Vector dvec(k);
    for (Index i = 0; i < k; ++i) {
        const Index j = pattern.mis[i];
        dvec[i] = spec->sigma_tilde2[j];
        mu_tilde[i] = spec->mu_tilde[j];
        total(i, i) += dvec[i];
    }
    const Matrix chol = cholesky(total);
    const Vector a = cholesky_solve(chol, mu_tilde);
    const Vector b = cholesky_solve(chol, cond.mean);
    Vector estimate = matvec(cond.cov, a);
    for (Index i = 0; i < k; ++i) estimate[i] += dvec[i] * b[i];
    return linear_response(gt, pattern, x_obs, estimate);
}

double bayes_predict(const sim::GroundTruth& gt, const PatternView& pattern,
                     std::span<const double> x_obs) {
    switch (sim::kind_of(gt.mechanism)) {
    case sim::MechanismKind::mcar:
    case sim::MechanismKind::mar:
        return bayes_predict_mar(gt, pattern, x_obs);
    case sim::MechanismKind::selfmask_gaussian:
        return bayes_predict_selfmask(gt, pattern, x_obs);
    case sim::MechanismKind::selfmask_probit:
        break;
    }
    throw NoAnalyticPredictor("no closed-form Bayes predictor for probit self-masking");
}

Vector bayes_predictions(const sim::GroundTruth& gt, const sim::MaskedDataset& data) {
    if (sim::kind_of(gt.mechanism) == sim::MechanismKind::selfmask_probit) {
        throw NoAnalyticPredictor("no closed-form Bayes predictor for probit self-masking");
    }
    Vector out(data.rows());
    for (Index i = 0; i < data.rows(); ++i) {
        const auto pattern = PatternView::from_mask(data.m_row(i));
        out[i] = bayes_predict(gt, pattern, gather_observed(data.x_row(i), pattern));
    }
    return out;
}

double bayes_rate(const sim::GroundTruth& gt, Index n_test, RngStream& rng) {
    if (sim::kind_of(gt.mechanism) == sim::MechanismKind::selfmask_probit) {
        throw NoAnalyticPredictor("bayes_rate: probit self-masking has no analytic predictor");
    }
    const auto test = sim::draw_dataset(rng, gt, n_test);
    return r2_score(test.y(), bayes_predictions(gt, test));
}

Matrix neumann_submatrix_inverse(const Matrix& sigma, const PatternView& pattern,
                                 const NeumannState& state) {
    require_order(state);
    const Matrix sigma_obs = submatrix(sigma, pattern.obs, pattern.obs);
    Matrix s = submatrix(state.s0, pattern.obs, pattern.obs);
    const Index n = sigma_obs.rows();
    Matrix step = Matrix::identity(n) - sigma_obs;
    for (Index l = 0; l < state.order; ++l) {
        s = matmul(step, s);
        for (Index i = 0; i < n; ++i) s(i, i) += 1.0;
    }
    return s;
}

Matrix rescaled_neumann(const Matrix& sigma, const PatternView& pattern,
                        const NeumannState& state, double radius_estimate) {
    if (!(radius_estimate > 0.0)) throw std::invalid_argument("rescaled_neumann: radius must be positive");
    return neumann_submatrix_inverse(sigma * (1.0 / radius_estimate), pattern, state) *
           (1.0 / radius_estimate);
}

double safe_radius(const Matrix& sigma) {
    return 1.01 * power_iteration(sigma, 1e-10, 10000);
}

double neumann_predict(const sim::GroundTruth& gt, const PatternView& pattern,
                       std::span<const double> x_obs, const NeumannState& state,
                       std::optional<double> radius) {
    if (x_obs.size() != pattern.obs.size()) throw ShapeMismatch("neumann_predict: x_obs length differs from |obs|");
    Vector estimate = subvector(gt.mu, pattern.mis);
    if (!pattern.mis.empty() && !pattern.obs.empty()) {
        const Matrix s = radius ? rescaled_neumann(gt.sigma, pattern, state, *radius)
                                : neumann_submatrix_inverse(gt.sigma, pattern, state);
        Vector centered(x_obs.begin(), x_obs.end());
        for (Index k = 0; k < centered.size(); ++k) centered[k] -= gt.mu[pattern.obs[k]];
        const Vector shift = matvec(submatrix(gt.sigma, pattern.mis, pattern.obs), matvec(s, centered));
        for (Index k = 0; k < estimate.size(); ++k) estimate[k] += shift[k];
    }
    return linear_response(gt, pattern, x_obs, estimate);
}

} // namespace neumiss::oracle
