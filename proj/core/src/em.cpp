#include "neumiss/em.hpp"

#include "neumiss/errors.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <string>

namespace neumiss::baselines {

namespace {

struct PatternGroup {
    IndexList obs;  // joint coordinates, Y (index d) always included
    IndexList mis;
    std::vector<Index> rows;
};

std::vector<PatternGroup> group_patterns(const sim::MaskedDataset& data, Index max_patterns) {
    const Index d = data.dim();
    std::map<std::vector<bool>, Index> lookup;
    std::vector<PatternGroup> groups;
    std::vector<bool> key(d);
    for (Index i = 0; i < data.rows(); ++i) {
        const auto m = data.m_row(i);
        for (Index j = 0; j < d; ++j) key[j] = m[j] == 1.0;
        auto [it, inserted] = lookup.emplace(key, groups.size());
        if (inserted) {
            if (groups.size() == max_patterns) {
                throw PatternOverflow("em_fit: more than " + std::to_string(max_patterns) +
                                      " distinct missingness patterns");
            }
            PatternGroup g;
            for (Index j = 0; j < d; ++j) (key[j] ? g.mis : g.obs).push_back(j);
            g.obs.push_back(d);
            groups.push_back(std::move(g));
        }
        groups[it->second].rows.push_back(i);
    }
    return groups;
}

// Joint row (x, y) with missing cells left at zero.
void joint_row(const sim::MaskedDataset& data, Index i, Vector& z) {
    const Index d = data.dim();
    const auto x = data.x_row(i);
    for (Index j = 0; j < d; ++j) z[j] = x[j];
    z[d] = data.y()[i];
}

Matrix cholesky_with_retry(const Matrix& cov_oo, double ridge) {
    try {
        return cholesky(cov_oo);
    } catch (const NotPositiveDefinite&) {
        Matrix shifted = cov_oo;
        for (Index i = 0; i < shifted.rows(); ++i) shifted(i, i) += ridge;
        try {
            return cholesky(shifted);
        } catch (const NotPositiveDefinite&) {
            throw SingularCovariance("em_fit: covariance of observed coordinates is singular");
        }
    }
}

} // namespace

JointGaussianEstimate em_fit(const sim::MaskedDataset& data, const EmOptions& options) {
    const Index n = data.rows();
    const Index d = data.dim();
    const Index p = d + 1;
    if (n < 2) throw std::invalid_argument("em_fit: need at least two rows");

    const auto groups = group_patterns(data, options.max_patterns);

    JointGaussianEstimate est;
    est.mean.assign(p, 0.0);
    est.cov = Matrix(p, p);
    {
        // Start from observed means and variances with independent coordinates.
        Vector count(p, 0.0), sq(p, 0.0);
        Vector z(p);
        for (Index i = 0; i < n; ++i) {
            joint_row(data, i, z);
            const auto m = data.m_row(i);
            for (Index j = 0; j < p; ++j) {
                if (j < d && m[j] == 1.0) continue;
                est.mean[j] += z[j];
                sq[j] += z[j] * z[j];
                count[j] += 1.0;
            }
        }
        for (Index j = 0; j < p; ++j) {
            if (count[j] < 2.0) {
                throw std::invalid_argument("em_fit: feature " + std::to_string(j) +
                                            " is observed fewer than twice");
            }
            est.mean[j] /= count[j];
            est.cov(j, j) = std::max(sq[j] / count[j] - est.mean[j] * est.mean[j], 1e-12);
        }
    }

    const double log_two_pi = std::log(2.0 * std::numbers::pi);
    Vector z(p), centered, zhat(p);
    for (Index iter = 0; iter < options.max_iter; ++iter) {
        const double ridge = 1e-8 * trace(est.cov) / static_cast<double>(p);
        Vector s1(p, 0.0);
        Matrix s2(p, p);
        double loglik = 0.0;

        for (const auto& g : groups) {
            const Matrix chol = cholesky_with_retry(submatrix(est.cov, g.obs, g.obs), ridge);
            const double log_det = cholesky_log_det(chol);
            const Index k = g.obs.size();
            Matrix gain;   // Σ_mo Σ_oo⁻¹
            Matrix cond;   // Σ_mm − Σ_mo Σ_oo⁻¹ Σ_om
            if (!g.mis.empty()) {
                const Matrix cov_mo = submatrix(est.cov, g.mis, g.obs);
                gain = transpose(cholesky_solve(chol, transpose(cov_mo)));
                cond = submatrix(est.cov, g.mis, g.mis) - matmul(gain, transpose(cov_mo));
            }
            centered.resize(k);
            for (Index i : g.rows) {
                joint_row(data, i, z);
                for (Index a = 0; a < k; ++a) centered[a] = z[g.obs[a]] - est.mean[g.obs[a]];
                const Vector w = cholesky_solve(chol, centered);
                loglik += -0.5 * (static_cast<double>(k) * log_two_pi + log_det + dot(centered, w));

                zhat = z;
                if (!g.mis.empty()) {
                    const Vector shift = matvec(gain, centered);
                    for (Index a = 0; a < g.mis.size(); ++a) zhat[g.mis[a]] = est.mean[g.mis[a]] + shift[a];
                }
                for (Index a = 0; a < p; ++a) {
                    s1[a] += zhat[a];
                    auto row = s2.row(a);
                    for (Index b = 0; b <= a; ++b) row[b] += zhat[a] * zhat[b];
                }
            }
            if (!g.mis.empty()) {
                const double count = static_cast<double>(g.rows.size());
                for (Index a = 0; a < g.mis.size(); ++a) {
                    for (Index b = 0; b < g.mis.size(); ++b) {
                        const Index ia = g.mis[a], ib = g.mis[b];
                        if (ib <= ia) s2(ia, ib) += count * cond(a, b);
                    }
                }
            }
        }
        est.loglik_trace.push_back(loglik);

        const double inv_n = 1.0 / static_cast<double>(n);
        for (Index a = 0; a < p; ++a) est.mean[a] = s1[a] * inv_n;
        for (Index a = 0; a < p; ++a) {
            for (Index b = 0; b <= a; ++b) {
                const double c = s2(a, b) * inv_n - est.mean[a] * est.mean[b];
                est.cov(a, b) = c;
                est.cov(b, a) = c;
            }
        }
        est.iterations = iter + 1;
        const auto& trace_ll = est.loglik_trace;
        if (trace_ll.size() >= 2 && trace_ll.back() - trace_ll[trace_ll.size() - 2] < options.tol) {
            est.converged = true;
            break;
        }
    }
    if (!est.cov.all_finite()) throw SingularCovariance("em_fit: covariance estimate is not finite");
    return est;
}

double em_predict(const JointGaussianEstimate& est, const oracle::PatternView& pattern,
                  std::span<const double> x_obs) {
    const Index d = est.feature_dim();
    if (pattern.dim() != d) throw ShapeMismatch("em_predict: pattern dimension differs from the estimate");
    IndexList idx = pattern.obs;
    idx.push_back(d);
    const Vector mean = subvector(est.mean, idx);
    const Matrix cov = submatrix(est.cov, idx, idx);
    oracle::PatternView joint;
    for (Index a = 0; a < pattern.obs.size(); ++a) joint.obs.push_back(a);
    joint.mis.push_back(pattern.obs.size());
    return oracle::conditional_gaussian(mean, cov, joint, x_obs).mean[0];
}

Vector em_predictions(const JointGaussianEstimate& est, const sim::MaskedDataset& data) {
    const Index d = est.feature_dim();
    if (data.dim() != d) throw ShapeMismatch("em_predictions: dataset dimension differs from the estimate");
    // Per pattern: E[Y | x_obs] = intercept + ⟨coef, x_obs⟩.
    struct Linear {
        IndexList obs;
        Vector coef;
        double intercept = 0.0;
    };
    std::map<IndexList, Linear> cache;
    Vector out(data.rows());
    for (Index i = 0; i < data.rows(); ++i) {
        const auto pattern = oracle::PatternView::from_mask(data.m_row(i));
        auto it = cache.find(pattern.obs);
        if (it == cache.end()) {
            Linear lin;
            lin.obs = pattern.obs;
            lin.intercept = est.mean[d];
            if (!pattern.obs.empty()) {
                const Matrix chol = cholesky(submatrix(est.cov, pattern.obs, pattern.obs));
                Vector cross(pattern.obs.size());
                for (Index a = 0; a < pattern.obs.size(); ++a) cross[a] = est.cov(d, pattern.obs[a]);
                lin.coef = cholesky_solve(chol, cross);
                for (Index a = 0; a < pattern.obs.size(); ++a) {
                    lin.intercept -= lin.coef[a] * est.mean[pattern.obs[a]];
                }
            }
            it = cache.emplace(pattern.obs, std::move(lin)).first;
        }
        const auto& lin = it->second;
        const auto x = data.x_row(i);
        double pred = lin.intercept;
        for (Index a = 0; a < lin.obs.size(); ++a) pred += lin.coef[a] * x[lin.obs[a]];
        out[i] = pred;
    }
    return out;
}

JointGaussianEstimate joint_from_ground_truth(const sim::GroundTruth& gt) {
    const Index d = gt.dim();
    JointGaussianEstimate est;
    est.mean = gt.mu;
    est.mean.push_back(gt.beta0 + dot(gt.beta, gt.mu));
    est.cov = Matrix(d + 1, d + 1);
    const Vector sb = matvec(gt.sigma, gt.beta);
    for (Index a = 0; a < d; ++a) {
        for (Index b = 0; b < d; ++b) est.cov(a, b) = gt.sigma(a, b);
        est.cov(a, d) = sb[a];
        est.cov(d, a) = sb[a];
    }
    est.cov(d, d) = dot(gt.beta, sb) + gt.noise_sd * gt.noise_sd;
    return est;
}

} // namespace neumiss::baselines
