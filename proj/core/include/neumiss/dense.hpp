#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace neumiss {

using Index = std::size_t;
using Vector = std::vector<double>;
using IndexList = std::vector<Index>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(Index rows, Index cols, double fill = 0.0);
    Matrix(Index rows, Index cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(Index n);
    static Matrix diagonal(std::span<const double> diag);

    Index rows() const noexcept { return rows_; }
    Index cols() const noexcept { return cols_; }
    Index size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool is_square() const noexcept { return rows_ == cols_; }

    double& operator()(Index r, Index c) noexcept { return data_[r * cols_ + c]; }
    double operator()(Index r, Index c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(Index r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(Index r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool all_finite() const noexcept;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s) noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    Index rows_ = 0;
    Index cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

Matrix transpose(const Matrix& a);
Matrix matmul(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, std::span<const double> x);
/// Computes aᵀx without forming the transpose.
Vector matvec_transposed(const Matrix& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
double frobenius_norm(const Matrix& a);
double trace(const Matrix& a);
bool is_symmetric(const Matrix& a, double tol);

// Cholesky factorization a = L·Lᵀ. Throws NotPositiveDefinite when a pivot
// falls below 1e-12 times the largest diagonal entry.
Matrix cholesky(const Matrix& a);

Vector cholesky_solve(const Matrix& lower, std::span<const double> b);
Matrix cholesky_solve(const Matrix& lower, const Matrix& b);
/// Inverse of an SPD matrix from its Cholesky factor.
Matrix cholesky_inverse(const Matrix& lower);
double cholesky_log_det(const Matrix& lower);

Matrix solve_spd(const Matrix& a, const Matrix& b);
Vector solve_spd(const Matrix& a, std::span<const double> b);

Matrix submatrix(const Matrix& a, const IndexList& row_idx, const IndexList& col_idx);
Vector subvector(std::span<const double> v, const IndexList& idx);

struct SpectrumInfo {
    double spectral_radius_estimate = 0.0;
    double min_eigenvalue_estimate = 0.0;
    Index iterations_used = 0;
};

/// Largest eigenvalue of a symmetric PSD matrix by block power iteration
/// (eight columns, Rayleigh–Ritz on the block).
///
/// Iteration stops once the extrapolated remaining error of the Rayleigh
/// quotient (geometric tail of successive increments) drops below
/// tol·|estimate|. Throws NoConvergence after max_iter iterations.
double power_iteration(const Matrix& a, double tol, Index max_iter, Index* iterations = nullptr);

/// Extremal eigenvalues of a symmetric positive definite matrix: power
/// iteration on a, then on a⁻¹ for the smallest eigenvalue (on λmax·Id − a
/// if the Cholesky factorization fails).
SpectrumInfo spectrum(const Matrix& a, double tol = 1e-10, Index max_iter = 10000);

/// Spectral norm ‖a‖₂ via power iteration on aᵀa.
double spectral_norm(const Matrix& a, double tol = 1e-10, Index max_iter = 10000);

} // namespace neumiss
