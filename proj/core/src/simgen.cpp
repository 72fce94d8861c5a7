#include "neumiss/simgen.hpp"

#include "neumiss/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace neumiss::sim {

namespace {

void require_rate(double rate, const char* op) {
    if (!(rate > 0.0 && rate < 1.0)) {
        throw std::invalid_argument(std::string(op) + ": target rate must lie in (0, 1)");
    }
}

double logistic(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

Matrix bernoulli_mask(RngStream& rng, const Matrix& prob) {
    Matrix m(prob.rows(), prob.cols());
    for (Index i = 0; i < prob.data().size(); ++i) {
        m.data()[i] = rng.bernoulli(prob.data()[i]) ? 1.0 : 0.0;
    }
    return m;
}

Vector diagonal_of(const Matrix& a) {
    Vector out(a.rows());
    for (Index i = 0; i < a.rows(); ++i) out[i] = a(i, i);
    return out;
}

} // namespace

std::string_view to_string(MechanismKind kind) {
    switch (kind) {
    case MechanismKind::mcar: return "mcar";
    case MechanismKind::mar: return "mar";
    case MechanismKind::selfmask_gaussian: return "gaussian_sm";
    case MechanismKind::selfmask_probit: return "probit_sm";
    }
    return "unknown";
}

MechanismKind parse_mechanism(std::string_view name) {
    if (name == "mcar" || name == "MCAR") return MechanismKind::mcar;
    if (name == "mar" || name == "MAR") return MechanismKind::mar;
    if (name == "gaussian_sm" || name == "selfmask_gaussian") return MechanismKind::selfmask_gaussian;
    if (name == "probit_sm" || name == "selfmask_probit") return MechanismKind::selfmask_probit;
    throw ConfigError("unknown missingness mechanism '" + std::string(name) + "'");
}

MechanismKind kind_of(const MechanismSpec& spec) {
    return static_cast<MechanismKind>(spec.index());
}

MaskedDataset::MaskedDataset(Matrix x_complete, Matrix mask, Vector y)
    : x_tilde_(x_complete), mask_(std::move(mask)), y_(std::move(y)), x_true_(std::move(x_complete)) {
    if (x_tilde_.rows() != mask_.rows() || x_tilde_.cols() != mask_.cols() ||
        y_.size() != mask_.rows()) {
        throw ShapeMismatch("MaskedDataset: x, mask and y shapes disagree");
    }
    for (Index i = 0; i < mask_.data().size(); ++i) {
        const double mi = mask_.data()[i];
        if (mi != 0.0 && mi != 1.0) throw std::invalid_argument("MaskedDataset: mask must be 0/1");
        if (mi == 1.0) x_tilde_.data()[i] = 0.0;
    }
}

MaskedDataset MaskedDataset::from_observed(Matrix x_observed, Matrix mask, Vector y) {
    MaskedDataset out(std::move(x_observed), std::move(mask), std::move(y));
    out.x_true_.reset();
    return out;
}

const Matrix& MaskedDataset::true_values() const {
    if (!x_true_) throw std::logic_error("MaskedDataset: complete covariates are not available");
    return *x_true_;
}

MaskedDataset MaskedDataset::select_rows(std::span<const Index> rows) const {
    const Index d = dim();
    MaskedDataset out;
    out.x_tilde_ = Matrix(rows.size(), d);
    out.mask_ = Matrix(rows.size(), d);
    out.y_.resize(rows.size());
    if (x_true_) out.x_true_ = Matrix(rows.size(), d);
    for (Index r = 0; r < rows.size(); ++r) {
        const Index i = rows[r];
        if (i >= this->rows()) throw IndexOutOfBounds("select_rows: row out of range");
        std::copy_n(x_tilde_.row(i).begin(), d, out.x_tilde_.row(r).begin());
        std::copy_n(mask_.row(i).begin(), d, out.mask_.row(r).begin());
        if (x_true_) std::copy_n(x_true_->row(i).begin(), d, out.x_true_->row(r).begin());
        out.y_[r] = y_[i];
    }
    return out;
}

double MaskedDataset::missing_rate() const {
    if (mask_.empty()) return 0.0;
    return std::accumulate(mask_.data().begin(), mask_.data().end(), 0.0) /
           static_cast<double>(mask_.size());
}

GroundTruth make_ground_truth(RngStream& rng, Index d, double snr, MechanismKind kind,
                              double missing_rate, const GeneratorOptions& options) {
    if (d < 1) throw std::invalid_argument("make_ground_truth: d must be >= 1");
    if (!(snr > 0.0)) throw std::invalid_argument("make_ground_truth: snr must be positive");
    require_rate(missing_rate, "make_ground_truth");

    // Σ = U Uᵀ + diag(ε), U of shape d×⌈d/2⌉.
    const Index rank = (d + 1) / 2;
    Matrix u(d, rank);
    for (auto& x : u.data()) x = rng.normal();
    GroundTruth gt;
    gt.sigma = matmul(u, transpose(u));
    for (Index i = 0; i < d; ++i) gt.sigma(i, i) += rng.uniform(1e-2, 1e-1);

    gt.mu.resize(d);
    for (auto& x : gt.mu) x = rng.normal();
    gt.beta.resize(d);
    for (auto& x : gt.beta) x = rng.normal();
    gt.beta0 = rng.normal();

    const double signal_var = dot(gt.beta, matvec(gt.sigma, gt.beta));
    gt.noise_sd = std::sqrt(signal_var / snr);

    const Vector var = diagonal_of(gt.sigma);
    switch (kind) {
    case MechanismKind::mcar:
        gt.mechanism = Mcar{missing_rate};
        break;
    case MechanismKind::mar: {
        const Matrix calibration = draw_covariates(rng, gt, options.mar_calibration_rows);
        gt.mechanism = make_mar_spec(rng, d, options.mar_fully_observed_fraction, missing_rate,
                                     calibration);
        break;
    }
    case MechanismKind::selfmask_gaussian:
        gt.mechanism = calibrate_selfmask_gaussian(gt.mu, var, missing_rate, options.mu_tilde_offset);
        break;
    case MechanismKind::selfmask_probit:
        gt.mechanism = calibrate_selfmask_probit(gt.mu, var, missing_rate, options.probit_scale_factor);
        break;
    }
    return gt;
}

Matrix draw_covariates(RngStream& rng, const GroundTruth& gt, Index n) {
    const Index d = gt.dim();
    const Matrix chol = cholesky(gt.sigma);
    Matrix x(n, d);
    for (Index i = 0; i < n; ++i) {
        const Vector row = gaussian_vector(rng, gt.mu, chol);
        std::copy(row.begin(), row.end(), x.row(i).begin());
    }
    return x;
}

MaskedDataset draw_dataset(RngStream& rng, const GroundTruth& gt, Index n) {
    if (n < 1) throw std::invalid_argument("draw_dataset: n must be >= 1");
    const Index d = gt.dim();
    const Matrix chol = cholesky(gt.sigma);
    Matrix x(n, d);
    Vector y(n);
    for (Index i = 0; i < n; ++i) {
        const Vector row = gaussian_vector(rng, gt.mu, chol);
        std::copy(row.begin(), row.end(), x.row(i).begin());
        y[i] = gt.beta0 + dot(gt.beta, row) + gt.noise_sd * rng.normal();
    }
    Matrix m = apply_mechanism(rng, x, gt.mechanism);
    return MaskedDataset(std::move(x), std::move(m), std::move(y));
}

Matrix mask_mcar(RngStream& rng, Index n, Index d, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("mask_mcar: p must lie in [0, 1]");
    Matrix m(n, d);
    for (auto& x : m.data()) x = rng.bernoulli(p) ? 1.0 : 0.0;
    return m;
}

Mar make_mar_spec(RngStream& rng, Index d, double fully_observed_fraction, double target_rate,
                  const Matrix& x_calibration_sample) {
    if (!(fully_observed_fraction > 0.0 && fully_observed_fraction < 1.0)) {
        throw std::invalid_argument("make_mar_spec: fully_observed_fraction must lie in (0, 1)");
    }
    require_rate(target_rate, "make_mar_spec");
    if (x_calibration_sample.cols() != d || x_calibration_sample.rows() == 0) {
        throw ShapeMismatch("make_mar_spec: calibration sample has wrong shape");
    }

    const auto n_obs = static_cast<Index>(std::ceil(fully_observed_fraction * static_cast<double>(d)));
    IndexList perm(d);
    std::iota(perm.begin(), perm.end(), Index{0});
    rng.shuffle(perm.begin(), perm.end());
    Mar spec;
    spec.observed_idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_obs));
    std::sort(spec.observed_idx.begin(), spec.observed_idx.end());

    const Index n_masked = d - n_obs;
    spec.weights = Matrix(n_masked, n_obs);
    for (auto& w : spec.weights.data()) w = rng.normal();
    spec.intercepts.assign(n_masked, 0.0);

    const Index n = x_calibration_sample.rows();
    Vector score(n);
    for (Index r = 0; r < n_masked; ++r) {
        for (Index i = 0; i < n; ++i) {
            double s = 0.0;
            for (Index k = 0; k < n_obs; ++k) {
                s += spec.weights(r, k) * x_calibration_sample(i, spec.observed_idx[k]);
            }
            score[i] = s;
        }
        auto rate_at = [&](double c) {
            double acc = 0.0;
            for (double s : score) acc += logistic(s + c);
            return acc / static_cast<double>(n);
        };
        double lo = -50.0;
        double hi = 50.0;
        if (rate_at(lo) > target_rate || rate_at(hi) < target_rate) {
            throw CalibrationFailed("make_mar_spec: intercept not bracketed in [-50, 50]");
        }
        double c = 0.5 * (lo + hi);
        for (int it = 0; it < 200; ++it) {
            c = 0.5 * (lo + hi);
            const double rate = rate_at(c);
            if (std::abs(rate - target_rate) <= 1e-4) break;
            (rate < target_rate ? lo : hi) = c;
        }
        if (std::abs(rate_at(c) - target_rate) > 0.005) {
            throw CalibrationFailed("make_mar_spec: bisection did not reach the target rate");
        }
        spec.intercepts[r] = c;
    }
    return spec;
}

Matrix mar_probabilities(const Matrix& x, const Mar& spec) {
    const Index d = x.cols();
    Matrix prob(x.rows(), d);
    IndexList masked;
    for (Index j = 0, k = 0; j < d; ++j) {
        if (k < spec.observed_idx.size() && spec.observed_idx[k] == j) {
            ++k;
        } else {
            masked.push_back(j);
        }
    }
    if (masked.size() != spec.weights.rows()) throw ShapeMismatch("mask_mar: spec does not match d");
    for (Index i = 0; i < x.rows(); ++i) {
        for (Index r = 0; r < masked.size(); ++r) {
            double s = spec.intercepts[r];
            for (Index k = 0; k < spec.observed_idx.size(); ++k) {
                s += spec.weights(r, k) * x(i, spec.observed_idx[k]);
            }
            prob(i, masked[r]) = logistic(s);
        }
    }
    return prob;
}

Matrix mask_mar(RngStream& rng, const Matrix& x, const Mar& spec) {
    return bernoulli_mask(rng, mar_probabilities(x, spec));
}

Matrix mask_selfmask_gaussian(RngStream& rng, const Matrix& x, const SelfMaskGaussian& spec) {
    const Index d = x.cols();
    if (spec.k.size() != d || spec.mu_tilde.size() != d || spec.sigma_tilde2.size() != d) {
        throw ShapeMismatch("mask_selfmask_gaussian: spec does not match d");
    }
    Matrix prob(x.rows(), d);
    for (Index i = 0; i < x.rows(); ++i) {
        for (Index j = 0; j < d; ++j) {
            const double t = x(i, j) - spec.mu_tilde[j];
            prob(i, j) = spec.k[j] * std::exp(-0.5 * t * t / spec.sigma_tilde2[j]);
        }
    }
    return bernoulli_mask(rng, prob);
}

double selfmask_gaussian_rate(double k, double mu_tilde, double sigma_tilde2, double mu,
                              double var) {
    const double total = sigma_tilde2 + var;
    const double shift = mu - mu_tilde;
    return k * std::sqrt(sigma_tilde2 / total) * std::exp(-0.5 * shift * shift / total);
}

SelfMaskGaussian calibrate_selfmask_gaussian(std::span<const double> mu,
                                             std::span<const double> var, double target_rate,
                                             double mu_tilde_offset) {
    require_rate(target_rate, "calibrate_selfmask_gaussian");
    if (mu.size() != var.size()) throw ShapeMismatch("calibrate_selfmask_gaussian: size mismatch");
    SelfMaskGaussian spec;
    const Index d = mu.size();
    spec.k.resize(d);
    spec.mu_tilde.resize(d);
    spec.sigma_tilde2.assign(var.begin(), var.end());
    for (Index j = 0; j < d; ++j) {
        spec.mu_tilde[j] = mu[j] + mu_tilde_offset * std::sqrt(var[j]);
        const double unit_rate =
            selfmask_gaussian_rate(1.0, spec.mu_tilde[j], spec.sigma_tilde2[j], mu[j], var[j]);
        spec.k[j] = target_rate / unit_rate;
        if (spec.k[j] >= 1.0) {
            throw RateUnreachable("calibrate_selfmask_gaussian: feature " + std::to_string(j) +
                                  " needs K = " + std::to_string(spec.k[j]) + " >= 1");
        }
    }
    return spec;
}

Matrix mask_selfmask_probit(RngStream& rng, const Matrix& x, const SelfMaskProbit& spec) {
    const Index d = x.cols();
    if (spec.center.size() != d || spec.scale.size() != d) {
        throw ShapeMismatch("mask_selfmask_probit: spec does not match d");
    }
    Matrix prob(x.rows(), d);
    for (Index i = 0; i < x.rows(); ++i)
        for (Index j = 0; j < d; ++j)
            prob(i, j) = normal_cdf((x(i, j) - spec.center[j]) / spec.scale[j]);
    return bernoulli_mask(rng, prob);
}

SelfMaskProbit calibrate_selfmask_probit(std::span<const double> mu, std::span<const double> var,
                                         double target_rate, double scale_factor) {
    require_rate(target_rate, "calibrate_selfmask_probit");
    if (!(scale_factor > 0.0)) throw std::invalid_argument("calibrate_selfmask_probit: scale must be > 0");
    SelfMaskProbit spec;
    const Index d = mu.size();
    spec.center.resize(d);
    spec.scale.resize(d);
    // P(miss) = Φ((μ − c) / √(s² + σ²)) for X ~ N(μ, σ²).
    const double q = normal_quantile(target_rate);
    for (Index j = 0; j < d; ++j) {
        spec.scale[j] = scale_factor * std::sqrt(var[j]);
        spec.center[j] = mu[j] - std::sqrt(spec.scale[j] * spec.scale[j] + var[j]) * q;
    }
    return spec;
}

Matrix apply_mechanism(RngStream& rng, const Matrix& x, const MechanismSpec& spec) {
    return std::visit(
        [&](const auto& s) -> Matrix {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Mcar>) {
                return mask_mcar(rng, x.rows(), x.cols(), s.p);
            } else if constexpr (std::is_same_v<T, Mar>) {
                return mask_mar(rng, x, s);
            } else if constexpr (std::is_same_v<T, SelfMaskGaussian>) {
                return mask_selfmask_gaussian(rng, x, s);
            } else {
                return mask_selfmask_probit(rng, x, s);
            }
        },
        spec);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must lie in (0, 1)");
    double lo = -40.0;
    double hi = 40.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        (normal_cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace neumiss::sim
