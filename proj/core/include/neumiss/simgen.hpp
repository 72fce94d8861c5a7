#pragma once

#include "neumiss/dense.hpp"
#include "neumiss/rng.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>

namespace neumiss::sim {

enum class MechanismKind { mcar, mar, selfmask_gaussian, selfmask_probit };

std::string_view to_string(MechanismKind kind);
/// Accepts "mcar", "mar", "gaussian_sm" / "selfmask_gaussian", "probit_sm" / "selfmask_probit".
MechanismKind parse_mechanism(std::string_view name);

struct Mcar {
    double p = 0.0;
};

/// Logistic MAR mechanism. Columns in observed_idx are never missing; every
/// other column j (in increasing order, row r of `weights`) is missing with
/// probability logistic(weights.row(r)·x[observed_idx] + intercepts[r]).
struct Mar {
    IndexList observed_idx;
    Matrix weights;
    Vector intercepts;
};

struct SelfMaskGaussian {
    Vector k;
    Vector mu_tilde;
    Vector sigma_tilde2;
};

struct SelfMaskProbit {
    Vector center;
    Vector scale;
};

using MechanismSpec = std::variant<Mcar, Mar, SelfMaskGaussian, SelfMaskProbit>;

MechanismKind kind_of(const MechanismSpec& spec);

struct GroundTruth {
    Vector mu;
    Matrix sigma;
    double beta0 = 0.0;
    Vector beta;
    double noise_sd = 0.0;
    MechanismSpec mechanism = Mcar{};

    Index dim() const noexcept { return mu.size(); }
};

/// Complete covariates, mask and response. Predictors only see x_tilde()
/// (missing cells zeroed) and mask(); true values are kept for diagnostics.
class MaskedDataset {
public:
    MaskedDataset() = default;
    /// Dataset with known complete covariates.
    MaskedDataset(Matrix x_complete, Matrix mask, Vector y);
    /// Dataset whose missing cells are unknown (e.g. read back from CSV).
    static MaskedDataset from_observed(Matrix x_observed, Matrix mask, Vector y);

    Index rows() const noexcept { return mask_.rows(); }
    Index dim() const noexcept { return mask_.cols(); }

    const Matrix& x_tilde() const noexcept { return x_tilde_; }
    const Matrix& mask() const noexcept { return mask_; }
    const Vector& y() const noexcept { return y_; }

    std::span<const double> x_row(Index i) const noexcept { return x_tilde_.row(i); }
    std::span<const double> m_row(Index i) const noexcept { return mask_.row(i); }

    bool has_true_values() const noexcept { return x_true_.has_value(); }
    const Matrix& true_values() const;

    MaskedDataset select_rows(std::span<const Index> rows) const;
    double missing_rate() const;

private:
    Matrix x_tilde_;
    Matrix mask_;
    Vector y_;
    std::optional<Matrix> x_true_;
};

struct GeneratorOptions {
    double mu_tilde_offset = 0.0;
    double probit_scale_factor = 1.0;
    double mar_fully_observed_fraction = 0.1;
    Index mar_calibration_rows = 10000;
};

GroundTruth make_ground_truth(RngStream& rng, Index d, double snr, MechanismKind kind,
                              double missing_rate, const GeneratorOptions& options = {});

MaskedDataset draw_dataset(RngStream& rng, const GroundTruth& gt, Index n);

Matrix draw_covariates(RngStream& rng, const GroundTruth& gt, Index n);

Matrix mask_mcar(RngStream& rng, Index n, Index d, double p);

Mar make_mar_spec(RngStream& rng, Index d, double fully_observed_fraction, double target_rate,
                  const Matrix& x_calibration_sample);
/// Per-cell missingness probabilities of a MAR spec on x.
Matrix mar_probabilities(const Matrix& x, const Mar& spec);
Matrix mask_mar(RngStream& rng, const Matrix& x, const Mar& spec);

Matrix mask_selfmask_gaussian(RngStream& rng, const Matrix& x, const SelfMaskGaussian& spec);
/// Closed-form marginal missing rate of one Gaussian self-masked N(mu, var) feature.
double selfmask_gaussian_rate(double k, double mu_tilde, double sigma_tilde2, double mu,
                              double var);
SelfMaskGaussian calibrate_selfmask_gaussian(std::span<const double> mu,
                                             std::span<const double> var, double target_rate,
                                             double mu_tilde_offset = 0.0);

Matrix mask_selfmask_probit(RngStream& rng, const Matrix& x, const SelfMaskProbit& spec);
SelfMaskProbit calibrate_selfmask_probit(std::span<const double> mu,
                                         std::span<const double> var, double target_rate,
                                         double scale_factor = 1.0);

Matrix apply_mechanism(RngStream& rng, const Matrix& x, const MechanismSpec& spec);

double normal_cdf(double z);
double normal_quantile(double p);

} // namespace neumiss::sim
