#pragma once

// Reference computations for the test suites. Everything here is written
// independently of the library's numerical routines: plain Gauss-Jordan
// elimination instead of Cholesky, eigenvalues by bisection on inertia counts
// instead of power iteration, conditioning through the precision matrix
// instead of the Schur complement.

#include "neumiss/dense.hpp"
#include "neumiss/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle_ref {

using neumiss::Index;
using neumiss::IndexList;
using neumiss::Matrix;
using neumiss::Vector;

inline Matrix mul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < b.cols(); ++j) {
            long double acc = 0.0L;
            for (Index k = 0; k < a.cols(); ++k) acc += static_cast<long double>(a(i, k)) * b(k, j);
            out(i, j) = static_cast<double>(acc);
        }
    return out;
}

inline Vector mul(const Matrix& a, const Vector& x) {
    Vector out(a.rows());
    for (Index i = 0; i < a.rows(); ++i) {
        long double acc = 0.0L;
        for (Index k = 0; k < a.cols(); ++k) acc += static_cast<long double>(a(i, k)) * x[k];
        out[i] = static_cast<double>(acc);
    }
    return out;
}

inline Matrix transposed(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline Matrix pick(const Matrix& a, const IndexList& r, const IndexList& c) {
    Matrix out(r.size(), c.size());
    for (Index i = 0; i < r.size(); ++i)
        for (Index j = 0; j < c.size(); ++j) out(i, j) = a(r[i], c[j]);
    return out;
}

inline Vector pick(const Vector& v, const IndexList& idx) {
    Vector out;
    for (Index i : idx) out.push_back(v[i]);
    return out;
}

/// Inverse of a general square matrix by Gauss-Jordan with partial pivoting.
inline Matrix gauss_inverse(Matrix a) {
    const Index n = a.rows();
    Matrix inv = Matrix::identity(n);
    for (Index col = 0; col < n; ++col) {
        Index piv = col;
        for (Index r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
        if (a(piv, col) == 0.0) throw std::runtime_error("gauss_inverse: singular");
        for (Index c = 0; c < n; ++c) {
            std::swap(a(col, c), a(piv, c));
            std::swap(inv(col, c), inv(piv, c));
        }
        const double p = a(col, col);
        for (Index c = 0; c < n; ++c) {
            a(col, c) /= p;
            inv(col, c) /= p;
        }
        for (Index r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a(r, col);
            if (f == 0.0) continue;
            for (Index c = 0; c < n; ++c) {
                a(r, c) -= f * a(col, c);
                inv(r, c) -= f * inv(col, c);
            }
        }
    }
    return inv;
}

inline Vector gauss_solve(const Matrix& a, const Vector& b) { return mul(gauss_inverse(a), b); }

/// Number of eigenvalues of symmetric a strictly below t (Sylvester inertia of
/// a − t·Id through an unpivoted LDLᵀ; a zero pivot is nudged).
inline Index count_below(const Matrix& a, double t) {
    const Index n = a.rows();
    Matrix m = a;
    for (Index i = 0; i < n; ++i) m(i, i) -= t;
    Index negatives = 0;
    for (Index k = 0; k < n; ++k) {
        double p = m(k, k);
        if (p == 0.0) p = 1e-300;
        if (p < 0.0) ++negatives;
        for (Index i = k + 1; i < n; ++i) {
            const double f = m(i, k) / p;
            for (Index j = k + 1; j < n; ++j) m(i, j) -= f * m(k, j);
        }
    }
    return negatives;
}

/// k-th smallest eigenvalue of a symmetric matrix by bisection inside the
/// Gershgorin interval. A zero tolerance bisects until the midpoint stops
/// moving, which keeps small eigenvalues accurate in relative terms.
inline double kth_eigenvalue(const Matrix& a, Index k, double tol = 0.0) {
    const Index n = a.rows();
    double lo = 0.0;
    double hi = 0.0;
    for (Index i = 0; i < n; ++i) {
        double radius = 0.0;
        for (Index j = 0; j < n; ++j)
            if (j != i) radius += std::abs(a(i, j));
        lo = std::min(lo, a(i, i) - radius);
        hi = std::max(hi, a(i, i) + radius);
    }
    lo -= 1.0;
    hi += 1.0;
    for (int iter = 0; iter < 400 && hi - lo > tol * std::max(1.0, std::abs(hi)); ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (count_below(a, mid) > k) hi = mid;
        else lo = mid;
    }
    return 0.5 * (lo + hi);
}

/// All eigenvalues of a symmetric matrix, ascending.
inline Vector eigenvalues(const Matrix& a, double tol = 1e-14) {
    Vector out(a.rows());
    for (Index k = 0; k < a.rows(); ++k) out[k] = kth_eigenvalue(a, k, tol);
    return out;
}

inline double spectral_norm(const Matrix& a) {
    return std::sqrt(std::max(0.0, kth_eigenvalue(mul(transposed(a), a), a.cols() - 1)));
}

struct Split {
    IndexList obs;
    IndexList mis;
};

inline Split split_mask(const Vector& m) {
    Split s;
    for (Index j = 0; j < m.size(); ++j) (m[j] != 0.0 ? s.mis : s.obs).push_back(j);
    return s;
}

/// E[X_mis | X_obs] via the precision matrix: μ_mis − Λ_mm⁻¹ Λ_mo (x_obs − μ_obs).
inline Vector conditional_mean(const Vector& mu, const Matrix& sigma, const Split& s, const Vector& x_obs) {
    const Matrix lambda = gauss_inverse(sigma);
    const Matrix l_mm = pick(lambda, s.mis, s.mis);
    const Matrix l_mo = pick(lambda, s.mis, s.obs);
    Vector centred(s.obs.size());
    for (Index i = 0; i < s.obs.size(); ++i) centred[i] = x_obs[i] - mu[s.obs[i]];
    const Vector shift = gauss_solve(l_mm, mul(l_mo, centred));
    Vector out(s.mis.size());
    for (Index i = 0; i < s.mis.size(); ++i) out[i] = mu[s.mis[i]] - shift[i];
    return out;
}

/// Cov[X_mis | X_obs] = Λ_mm⁻¹.
inline Matrix conditional_cov(const Matrix& sigma, const Split& s) {
    return gauss_inverse(pick(gauss_inverse(sigma), s.mis, s.mis));
}

/// MAR Bayes predictor on a full row x (masked entries ignored).
inline double bayes_mar(const neumiss::sim::GroundTruth& gt, const Vector& x, const Vector& m) {
    const auto s = split_mask(m);
    double out = gt.beta0;
    for (Index j : s.obs) out += gt.beta[j] * x[j];
    if (s.mis.empty()) return out;
    Vector cm;
    if (s.obs.empty()) cm = pick(gt.mu, s.mis);
    else cm = conditional_mean(gt.mu, gt.sigma, s, pick(x, s.obs));
    for (Index i = 0; i < s.mis.size(); ++i) out += gt.beta[s.mis[i]] * cm[i];
    return out;
}

/// Gaussian self-masking Bayes predictor, literal form
/// β₀ + ⟨β_obs, x_obs⟩ + ⟨β_mis, (Id + D Σc⁻¹)⁻¹ (μ̃ + D Σc⁻¹ μc)⟩.
inline double bayes_selfmask(const neumiss::sim::GroundTruth& gt, const Vector& x, const Vector& m) {
    const auto& spec = std::get<neumiss::sim::SelfMaskGaussian>(gt.mechanism);
    const auto s = split_mask(m);
    double out = gt.beta0;
    for (Index j : s.obs) out += gt.beta[j] * x[j];
    if (s.mis.empty()) return out;
    Vector mu_c;
    Matrix sig_c;
    if (s.obs.empty()) {
        mu_c = pick(gt.mu, s.mis);
        sig_c = pick(gt.sigma, s.mis, s.mis);
    } else {
        mu_c = conditional_mean(gt.mu, gt.sigma, s, pick(x, s.obs));
        sig_c = conditional_cov(gt.sigma, s);
    }
    const Index k = s.mis.size();
    Matrix d_inv = gauss_inverse(sig_c);
    for (Index i = 0; i < k; ++i)
        for (Index j = 0; j < k; ++j) d_inv(i, j) *= spec.sigma_tilde2[s.mis[i]];
    Matrix a = d_inv;
    for (Index i = 0; i < k; ++i) a(i, i) += 1.0;
    Vector rhs = mul(d_inv, mu_c);
    for (Index i = 0; i < k; ++i) rhs[i] += spec.mu_tilde[s.mis[i]];
    const Vector e = gauss_solve(a, rhs);
    for (Index i = 0; i < k; ++i) out += gt.beta[s.mis[i]] * e[i];
    return out;
}

/// S⁽ℓ⁾ = (Id − A) S⁽ℓ⁻¹⁾ + Id, iterated literally.
inline Matrix neumann_iterate(const Matrix& a, Matrix s, Index order) {
    const Index n = a.rows();
    Matrix step = Matrix::identity(n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) step(i, j) -= a(i, j);
    for (Index l = 0; l < order; ++l) {
        s = mul(step, s);
        for (Index i = 0; i < n; ++i) s(i, i) += 1.0;
    }
    return s;
}

/// Central difference of a scalar function of one coordinate.
inline double central_difference(const std::function<double(double)>& f, double x, double eps) {
    return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

/// Half-width of a 3σ binomial interval for a rate p estimated from n draws.
inline double binomial_3sigma(double p, double n) { return 3.0 * std::sqrt(p * (1.0 - p) / n); }

inline double sample_mean(const Vector& v) {
    long double acc = 0.0L;
    for (double x : v) acc += x;
    return static_cast<double>(acc / static_cast<long double>(v.size()));
}

inline double median(Vector v) {
    std::sort(v.begin(), v.end());
    const Index n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace oracle_ref
