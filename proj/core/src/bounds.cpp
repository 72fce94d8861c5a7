#include "neumiss/bounds.hpp"

#include "neumiss/errors.hpp"

#include <cmath>
#include <map>
#include <ostream>

namespace neumiss::oracle {

namespace {

struct MeanVar {
    double mean = 0.0;
    double var = 0.0;
};

MeanVar mean_var(std::span<const double> v) {
    MeanVar out;
    if (v.empty()) return out;
    for (double x : v) out.mean += x;
    out.mean /= static_cast<double>(v.size());
    for (double x : v) out.var += (x - out.mean) * (x - out.mean);
    out.var /= static_cast<double>(v.size() > 1 ? v.size() - 1 : 1);
    return out;
}

double covariance(std::span<const double> a, double mean_a, std::span<const double> b, double mean_b) {
    double s = 0.0;
    for (Index i = 0; i < a.size(); ++i) s += (a[i] - mean_a) * (b[i] - mean_b);
    return s / static_cast<double>(a.size() > 1 ? a.size() - 1 : 1);
}

void finalize(BoundReport& report, bool throw_on_violation, const char* what) {
    for (const auto& row : report.rows) {
        if (!row.holds()) {
            report.first_violation = row.order;
            break;
        }
    }
    if (report.first_violation && throw_on_violation) {
        throw BoundViolated(std::string(what) + " violated at order " +
                                std::to_string(*report.first_violation),
                            *report.first_violation);
    }
}

// Per-pattern quantities for the Monte Carlo check: coefficient vectors
// c_ℓ with f_ℓ − f* = ⟨c_ℓ, x_obs − μ_obs⟩, and ‖Id − S⁽⁰⁾_obs Σ_obs‖₂².
struct PatternTerms {
    PatternView pattern;
    std::vector<Vector> coef;
    double s0_error_sq = 0.0;
};

PatternTerms pattern_terms(const sim::GroundTruth& gt, const Matrix& s0, PatternView pattern,
                           Index max_order) {
    PatternTerms t;
    t.pattern = std::move(pattern);
    const Index n_obs = t.pattern.obs.size();
    t.coef.assign(max_order + 1, Vector(n_obs, 0.0));
    if (n_obs == 0) return t;

    const Matrix sigma_obs = submatrix(gt.sigma, t.pattern.obs, t.pattern.obs);
    const Matrix s0_obs = submatrix(s0, t.pattern.obs, t.pattern.obs);
    t.s0_error_sq = std::pow(spectral_norm(Matrix::identity(n_obs) - matmul(s0_obs, sigma_obs)), 2);
    if (t.pattern.mis.empty()) return t;

    const Matrix inverse = cholesky_inverse(cholesky(sigma_obs));
    const Vector a = matvec_transposed(submatrix(gt.sigma, t.pattern.mis, t.pattern.obs),
                                       subvector(gt.beta, t.pattern.mis));
    const Matrix step = Matrix::identity(n_obs) - sigma_obs;
    Matrix s = s0_obs;
    for (Index l = 0; l <= max_order; ++l) {
        if (l > 0) {
            s = matmul(step, s);
            for (Index i = 0; i < n_obs; ++i) s(i, i) += 1.0;
        }
        t.coef[l] = matvec_transposed(s - inverse, a);
    }
    return t;
}

} // namespace

void BoundReport::write_csv(std::ostream& out) const {
    out << "order,lhs,rhs\n";
    out.precision(17);
    for (const auto& row : rows) out << row.order << ',' << row.lhs << ',' << row.rhs << '\n';
}

BoundReport prop5_bound_check(const Matrix& sigma, const PatternView& pattern, const Matrix& s0,
                              Index max_order, bool throw_on_violation) {
    BoundReport report;
    const Index n = pattern.obs.size();
    if (n == 0) {
        for (Index l = 0; l <= max_order; ++l) report.rows.push_back({l, 0.0, 0.0, 0.0});
        return report;
    }
    const Matrix sigma_obs = submatrix(sigma, pattern.obs, pattern.obs);
    const auto spec = spectrum(sigma_obs);
    if (spec.spectral_radius_estimate >= 1.0) {
        throw std::invalid_argument("prop5_bound_check: spectral radius of Σ_obs must be < 1");
    }
    report.nu = spec.min_eigenvalue_estimate;
    const double contraction = 1.0 - report.nu;

    const Matrix id = Matrix::identity(n);
    const Matrix step = id - sigma_obs;
    Matrix s = submatrix(s0, pattern.obs, pattern.obs);
    const double initial = spectral_norm(id - matmul(sigma_obs, s));
    for (Index l = 0; l <= max_order; ++l) {
        if (l > 0) {
            s = matmul(step, s);
            for (Index i = 0; i < n; ++i) s(i, i) += 1.0;
        }
        const double lhs = spectral_norm(id - matmul(sigma_obs, s));
        const double rhs = std::pow(contraction, static_cast<double>(l)) * initial;
        // Power-iteration and eigenvalue tolerances are 1e-10 relative.
        const double slack = 1e-8 * rhs + 1e-14;
        report.rows.push_back({l, lhs, rhs, slack});
    }
    finalize(report, throw_on_violation, "linear convergence bound");
    return report;
}

sim::GroundTruth rescale_ground_truth(const sim::GroundTruth& gt) {
    sim::GroundTruth out = gt;
    out.sigma *= 1.0 / safe_radius(gt.sigma);
    return out;
}

Prop3Report prop3_bound_check(const sim::GroundTruth& gt, Index max_order, Index mc_samples,
                              RngStream& rng, const Prop3Options& options) {
    const auto kind = sim::kind_of(gt.mechanism);
    if (kind != sim::MechanismKind::mcar && kind != sim::MechanismKind::mar) {
        throw std::invalid_argument("prop3_bound_check: mechanism must be MCAR or MAR");
    }
    if (mc_samples < 2) throw std::invalid_argument("prop3_bound_check: need at least two samples");
    const auto spec = spectrum(gt.sigma);
    if (spec.spectral_radius_estimate >= 1.0) {
        throw std::invalid_argument("prop3_bound_check: spectral radius of Σ must be < 1");
    }
    const Index d = gt.dim();
    const Matrix s0 = options.s0.empty() ? Matrix::identity(d) : options.s0;
    const double nu = spec.min_eigenvalue_estimate;

    const auto data = sim::draw_dataset(rng, gt, mc_samples);
    std::map<IndexList, PatternTerms> cache;

    // sq[l][i] = (f_ℓ − f*)² on sample i; s0_err[i] = ‖Id − S⁽⁰⁾_obs Σ_obs‖₂².
    std::vector<Vector> sq(max_order + 1, Vector(mc_samples));
    Vector s0_err(mc_samples);
    for (Index i = 0; i < mc_samples; ++i) {
        auto pattern = PatternView::from_mask(data.m_row(i));
        auto it = cache.find(pattern.mis);
        if (it == cache.end()) {
            IndexList key = pattern.mis;
            it = cache.emplace(std::move(key), pattern_terms(gt, s0, std::move(pattern), max_order)).first;
        }
        const auto& terms = it->second;
        Vector centered = gather_observed(data.x_row(i), terms.pattern);
        for (Index k = 0; k < centered.size(); ++k) centered[k] -= gt.mu[terms.pattern.obs[k]];
        for (Index l = 0; l <= max_order; ++l) {
            const double e = dot(terms.coef[l], centered);
            sq[l][i] = e * e;
        }
        s0_err[i] = terms.s0_error_sq;
    }

    Prop3Report report;
    report.mc_samples = mc_samples;
    report.bound.nu = nu;
    report.ratio.nu = nu;
    const auto s0_stats = mean_var(s0_err);
    report.expected_s0_error = s0_stats.mean;
    const double root_n = std::sqrt(static_cast<double>(mc_samples));
    const double beta_sq = dot(gt.beta, gt.beta);

    std::vector<MeanVar> lhs_stats(max_order + 1);
    for (Index l = 0; l <= max_order; ++l) lhs_stats[l] = mean_var(sq[l]);

    for (Index l = 1; l <= max_order; ++l) {
        const double coef = std::pow(1.0 - nu, 2.0 * static_cast<double>(l)) * beta_sq / nu;
        const double rhs = coef * s0_stats.mean;
        const double se_lhs = std::sqrt(lhs_stats[l].var) / root_n;
        const double se_rhs = coef * std::sqrt(s0_stats.var) / root_n;
        const double allowance = 3.0 * std::sqrt(se_lhs * se_lhs + se_rhs * se_rhs);
        report.bound.rows.push_back({l, lhs_stats[l].mean, rhs, allowance});
    }

    const double rate = (1.0 - nu) * (1.0 - nu);
    for (Index l = 1; l < max_order; ++l) {
        const double denom = lhs_stats[l].mean;
        if (denom == 0.0) continue;
        const double ratio = lhs_stats[l + 1].mean / denom;
        const double cov = covariance(sq[l + 1], lhs_stats[l + 1].mean, sq[l], denom);
        const double var = (lhs_stats[l + 1].var - 2.0 * ratio * cov + ratio * ratio * lhs_stats[l].var) /
                           (denom * denom * static_cast<double>(mc_samples));
        report.ratio.rows.push_back({l + 1, ratio, rate, 3.0 * std::sqrt(std::max(var, 0.0))});
    }

    finalize(report.bound, false, "");
    finalize(report.ratio, false, "");
    if (options.throw_on_violation) {
        if (report.bound.first_violation) {
            throw BoundViolated("exponential decay bound violated at order " +
                                    std::to_string(*report.bound.first_violation),
                                *report.bound.first_violation);
        }
        if (report.ratio.first_violation) {
            throw BoundViolated("error decay ratio exceeds (1-nu)^2 at order " +
                                    std::to_string(*report.ratio.first_violation),
                                *report.ratio.first_violation);
        }
    }
    return report;
}

} // namespace neumiss::oracle
