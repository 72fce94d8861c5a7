#include "neumiss/dense.hpp"

#include "neumiss/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>

namespace neumiss {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        std::ostringstream msg;
        msg << op << ": shape " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x"
            << b.cols();
        throw ShapeMismatch(msg.str());
    }
}

void require_square(const Matrix& a, const char* op) {
    if (!a.is_square()) {
        throw ShapeMismatch(std::string(op) + ": matrix is not square");
    }
}

void require_strictly_increasing(const IndexList& idx, Index bound, const char* what) {
    for (Index k = 0; k < idx.size(); ++k) {
        if (idx[k] >= bound) {
            throw IndexOutOfBounds(std::string(what) + " index " + std::to_string(idx[k]) +
                                   " out of range " + std::to_string(bound));
        }
        if (k > 0 && idx[k] <= idx[k - 1]) {
            throw IndexOutOfBounds(std::string(what) + " indices must be strictly increasing");
        }
    }
}

// Deterministic, non-degenerate start vector for power iteration.
Vector start_vector(Index n) {
    Vector v(n);
    std::uint64_t state = 0x9E3779B97F4A7C15ULL;
    double norm = 0.0;
    for (Index i = 0; i < n; ++i) {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        v[i] = 1.0 + static_cast<double>(state >> 40) / static_cast<double>(1ULL << 24);
        norm += v[i] * v[i];
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

// Modified Gram–Schmidt. Columns that vanish against the previous ones are
// set to zero. Returns false if every column vanished.
bool orthonormalize_columns(Matrix& q) {
    const Index n = q.rows();
    const Index b = q.cols();
    double largest = 0.0;
    for (Index c = 0; c < b; ++c) {
        double nc = 0.0;
        for (Index i = 0; i < n; ++i) nc += q(i, c) * q(i, c);
        largest = std::max(largest, std::sqrt(nc));
    }
    if (largest == 0.0) return false;
    bool any = false;
    for (Index c = 0; c < b; ++c) {
        for (Index p = 0; p < c; ++p) {
            double proj = 0.0;
            for (Index i = 0; i < n; ++i) proj += q(i, p) * q(i, c);
            for (Index i = 0; i < n; ++i) q(i, c) -= proj * q(i, p);
        }
        double nc = 0.0;
        for (Index i = 0; i < n; ++i) nc += q(i, c) * q(i, c);
        nc = std::sqrt(nc);
        if (nc <= 1e-13 * largest) {
            for (Index i = 0; i < n; ++i) q(i, c) = 0.0;
            continue;
        }
        for (Index i = 0; i < n; ++i) q(i, c) /= nc;
        any = true;
    }
    return any;
}

// Largest eigenvalue of a small symmetric matrix by cyclic Jacobi rotations.
double max_eigenvalue_jacobi(Matrix h) {
    const Index b = h.rows();
    for (Index sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        double total = 0.0;
        for (Index r = 0; r < b; ++r) {
            for (Index c = 0; c < b; ++c) {
                total += h(r, c) * h(r, c);
                if (r != c) off += h(r, c) * h(r, c);
            }
        }
        if (off <= 1e-30 * total) break;
        for (Index p = 0; p + 1 < b; ++p) {
            for (Index r = p + 1; r < b; ++r) {
                if (h(p, r) == 0.0) continue;
                const double theta = (h(r, r) - h(p, p)) / (2.0 * h(p, r));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double cs = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * cs;
                for (Index k = 0; k < b; ++k) {
                    const double hp = h(k, p);
                    const double hr = h(k, r);
                    h(k, p) = cs * hp - sn * hr;
                    h(k, r) = sn * hp + cs * hr;
                }
                for (Index k = 0; k < b; ++k) {
                    const double hp = h(p, k);
                    const double hr = h(r, k);
                    h(p, k) = cs * hp - sn * hr;
                    h(r, k) = sn * hp + cs * hr;
                }
            }
        }
    }
    double best = h(0, 0);
    for (Index k = 1; k < b; ++k) best = std::max(best, h(k, k));
    return best;
}

// Columns iterated together by power_iteration. The Ritz value converges at
// rate (λ_{b+1}/λ₁)², so clusters of up to b − 1 eigenvalues close to λ₁ do
// not stall it.
constexpr Index kBlockSize = 8;

Matrix start_block(Index n, Index b) {
    Matrix q(n, b);
    const Vector first = start_vector(n);
    for (Index i = 0; i < n; ++i) q(i, 0) = first[i];
    std::uint64_t state = 0xD1B54A32D192ED03ULL;
    for (Index c = 1; c < b; ++c) {
        for (Index i = 0; i < n; ++i) {
            state = state * 6364136223846793005ULL + 1442695040888963407ULL;
            q(i, c) = static_cast<double>(state >> 40) / static_cast<double>(1ULL << 24) - 0.5;
        }
    }
    orthonormalize_columns(q);
    return q;
}


} // namespace

Matrix::Matrix(Index rows, Index cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(Index rows, Index cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeMismatch("Matrix: data length does not match rows*cols");
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeMismatch("Matrix: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(Index n) {
    Matrix out(n, n);
    for (Index i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
    Matrix out(diag.size(), diag.size());
    for (Index i = 0; i < diag.size(); ++i) out(i, i) = diag[i];
    return out;
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
    require_same_shape(*this, other, "operator+=");
    for (Index i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    require_same_shape(*this, other, "operator-=");
    for (Index i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
    for (auto& x : data_) x *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ShapeMismatch("matmul: inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    for (Index i = 0; i < a.rows(); ++i) {
        auto out_row = out.row(i);
        for (Index k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto b_row = b.row(k);
            for (Index j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
        }
    }
    return out;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw ShapeMismatch("matvec: dimension mismatch");
    Vector out(a.rows());
    for (Index i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
    return out;
}

Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) throw ShapeMismatch("matvec_transposed: dimension mismatch");
    Vector out(a.cols(), 0.0);
    for (Index i = 0; i < a.rows(); ++i) {
        const double xi = x[i];
        auto r = a.row(i);
        for (Index j = 0; j < a.cols(); ++j) out[j] += r[j] * xi;
    }
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    const Index n = std::min(a.size(), b.size());
    for (Index i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double x : a.data()) m = std::max(m, std::abs(x));
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    return max_abs_diff(std::span<const double>(a.data()), std::span<const double>(b.data()));
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeMismatch("max_abs_diff: length mismatch");
    double m = 0.0;
    for (Index i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double frobenius_norm(const Matrix& a) { return norm2(a.data()); }

double trace(const Matrix& a) {
    double t = 0.0;
    for (Index i = 0; i < std::min(a.rows(), a.cols()); ++i) t += a(i, i);
    return t;
}

bool is_symmetric(const Matrix& a, double tol) {
    if (!a.is_square()) return false;
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = i + 1; j < a.cols(); ++j)
            if (std::abs(a(i, j) - a(j, i)) > tol) return false;
    return true;
}

Matrix cholesky(const Matrix& a) {
    require_square(a, "cholesky");
    const Index n = a.rows();
    double max_diag = 0.0;
    for (Index i = 0; i < n; ++i) max_diag = std::max(max_diag, a(i, i));
    const double threshold = 1e-12 * max_diag;

    Matrix l(n, n);
    for (Index j = 0; j < n; ++j) {
        double pivot = a(j, j);
        for (Index k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
        if (!(pivot > threshold) || max_diag <= 0.0) {
            throw NotPositiveDefinite("cholesky: pivot " + std::to_string(pivot) + " at column " +
                                      std::to_string(j));
        }
        const double ljj = std::sqrt(pivot);
        l(j, j) = ljj;
        for (Index i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return l;
}

Vector cholesky_solve(const Matrix& lower, std::span<const double> b) {
    const Index n = lower.rows();
    if (b.size() != n) throw ShapeMismatch("cholesky_solve: rhs length mismatch");
    Vector y(b.begin(), b.end());
    for (Index i = 0; i < n; ++i) {
        double s = y[i];
        for (Index k = 0; k < i; ++k) s -= lower(i, k) * y[k];
        y[i] = s / lower(i, i);
    }
    for (Index ii = n; ii-- > 0;) {
        double s = y[ii];
        for (Index k = ii + 1; k < n; ++k) s -= lower(k, ii) * y[k];
        y[ii] = s / lower(ii, ii);
    }
    return y;
}

Matrix cholesky_solve(const Matrix& lower, const Matrix& b) {
    if (b.rows() != lower.rows()) throw ShapeMismatch("cholesky_solve: rhs rows mismatch");
    Matrix out(b.rows(), b.cols());
    Vector col(b.rows());
    for (Index j = 0; j < b.cols(); ++j) {
        for (Index i = 0; i < b.rows(); ++i) col[i] = b(i, j);
        const Vector x = cholesky_solve(lower, col);
        for (Index i = 0; i < b.rows(); ++i) out(i, j) = x[i];
    }
    return out;
}

Matrix cholesky_inverse(const Matrix& lower) {
    return cholesky_solve(lower, Matrix::identity(lower.rows()));
}

double cholesky_log_det(const Matrix& lower) {
    double s = 0.0;
    for (Index i = 0; i < lower.rows(); ++i) s += std::log(lower(i, i));
    return 2.0 * s;
}

Matrix solve_spd(const Matrix& a, const Matrix& b) {
    if (b.rows() != a.rows()) throw ShapeMismatch("solve_spd: b.rows != a.rows");
    return cholesky_solve(cholesky(a), b);
}

Vector solve_spd(const Matrix& a, std::span<const double> b) {
    return cholesky_solve(cholesky(a), b);
}

Matrix submatrix(const Matrix& a, const IndexList& row_idx, const IndexList& col_idx) {
    require_strictly_increasing(row_idx, a.rows(), "row");
    require_strictly_increasing(col_idx, a.cols(), "column");
    Matrix out(row_idx.size(), col_idx.size());
    for (Index i = 0; i < row_idx.size(); ++i)
        for (Index j = 0; j < col_idx.size(); ++j) out(i, j) = a(row_idx[i], col_idx[j]);
    return out;
}

Vector subvector(std::span<const double> v, const IndexList& idx) {
    Vector out(idx.size());
    for (Index i = 0; i < idx.size(); ++i) {
        if (idx[i] >= v.size()) throw IndexOutOfBounds("subvector: index out of range");
        out[i] = v[idx[i]];
    }
    return out;
}

double power_iteration(const Matrix& a, double tol, Index max_iter, Index* iterations) {
    require_square(a, "power_iteration");
    const Index n = a.rows();
    if (iterations) *iterations = 0;
    if (n == 0) return 0.0;

    const Index b = std::min<Index>(n, kBlockSize);
    Matrix q = start_block(n, b);
    Matrix z(n, b);
    Matrix h(b, b);
    double lambda = 0.0;
    double prev_increment = -1.0;
    for (Index it = 1; it <= max_iter; ++it) {
        if (iterations) *iterations = it;
        // z = a·q and the projected matrix h = qᵀ·a·q.
        for (Index i = 0; i < n; ++i) {
            for (Index c = 0; c < b; ++c) {
                double acc = 0.0;
                for (Index k = 0; k < n; ++k) acc += a(i, k) * q(k, c);
                z(i, c) = acc;
            }
        }
        for (Index r = 0; r < b; ++r) {
            for (Index c = r; c < b; ++c) {
                double acc = 0.0;
                for (Index k = 0; k < n; ++k) acc += 0.5 * (q(k, r) * z(k, c) + q(k, c) * z(k, r));
                h(r, c) = acc;
                h(c, r) = acc;
            }
        }
        const double next = max_eigenvalue_jacobi(h);
        // A full basis makes the Ritz value exact.
        if (b == n) return next;
        if (!orthonormalize_columns(z)) return next;
        q = z;

        const double increment = std::abs(next - lambda);
        lambda = next;
        const double scale = std::max(std::abs(lambda), 1e-300);
        if (it >= 2) {
            if (increment <= 1e-15 * scale) return lambda;
            if (prev_increment > 0.0) {
                const double ratio = increment / prev_increment;
                if (ratio < 1.0) {
                    const double tail = increment * ratio / (1.0 - ratio);
                    if (tail <= tol * scale && increment <= tol * scale) return lambda;
                }
            }
        }
        prev_increment = increment;
    }
    throw NoConvergence("power_iteration: no convergence after " + std::to_string(max_iter) +
                        " iterations");
}

SpectrumInfo spectrum(const Matrix& a, double tol, Index max_iter) {
    require_square(a, "spectrum");
    SpectrumInfo info;
    if (a.rows() == 0) return info;
    Index it_max = 0;
    const double lmax = power_iteration(a, tol, max_iter, &it_max);

    // Inverse iteration converges at rate λmin/λ₂, usually much faster than
    // the shifted iteration when a is ill-conditioned.
    Index it_min = 0;
    double lmin = 0.0;
    try {
        const Matrix inv = cholesky_inverse(cholesky(a));
        lmin = 1.0 / power_iteration(inv, tol, max_iter, &it_min);
    } catch (const NotPositiveDefinite&) {
        Matrix shifted = a * -1.0;
        for (Index i = 0; i < a.rows(); ++i) shifted(i, i) += lmax;
        lmin = lmax - power_iteration(shifted, tol, max_iter, &it_min);
    }

    info.spectral_radius_estimate = lmax;
    info.min_eigenvalue_estimate = lmin;
    info.iterations_used = it_max + it_min;
    return info;
}

double spectral_norm(const Matrix& a, double tol, Index max_iter) {
    const Matrix gram = matmul(transpose(a), a);
    return std::sqrt(std::max(0.0, power_iteration(gram, tol, max_iter)));
}

} // namespace neumiss
