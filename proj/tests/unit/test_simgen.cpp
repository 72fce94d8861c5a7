#include "neumiss/dataset_io.hpp"
#include "neumiss/errors.hpp"
#include "neumiss/simgen.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <sstream>

using namespace neumiss;
using namespace neumiss::sim;

namespace {

double column_rate(const Matrix& m, Index j) {
    double s = 0.0;
    for (Index i = 0; i < m.rows(); ++i) s += m(i, j);
    return s / static_cast<double>(m.rows());
}

double quad_form(const Matrix& s, const Vector& b) {
    double acc = 0.0;
    for (Index i = 0; i < b.size(); ++i)
        for (Index j = 0; j < b.size(); ++j) acc += b[i] * s(i, j) * b[j];
    return acc;
}

} // namespace

TEST_CASE("ground truth structure") {
    RngStream rng(1, 0);
    for (Index d : {1, 4, 9}) {
        const auto gt = make_ground_truth(rng, d, 10.0, MechanismKind::mcar, 0.5);
        CHECK(gt.dim() == d);
        CHECK(gt.beta.size() == d);
        CHECK(is_symmetric(gt.sigma, 1e-12));
        CHECK(spectrum(gt.sigma).min_eigenvalue_estimate > 0.0);
        CHECK(gt.noise_sd > 0.0);
        // snr = βᵀΣβ / noise²
        CHECK(gt.noise_sd * gt.noise_sd == doctest::Approx(quad_form(gt.sigma, gt.beta) / 10.0).epsilon(1e-12));
    }
    const auto one = make_ground_truth(rng, 1, 10.0, MechanismKind::mcar, 0.5);
    CHECK(one.sigma(0, 0) > 0.0);
    CHECK(std::get<Mcar>(one.mechanism).p == 0.5);
}

TEST_CASE("empirical signal-to-noise ratio") {
    RngStream rng(2, 0);
    const auto gt = make_ground_truth(rng, 10, 10.0, MechanismKind::mcar, 0.5);
    const Matrix x = draw_covariates(rng, gt, 100000);
    Vector signal(x.rows());
    for (Index i = 0; i < x.rows(); ++i) signal[i] = dot(gt.beta, x.row(i));
    const double mean = oracle_ref::sample_mean(signal);
    double var = 0.0;
    for (double s : signal) var += (s - mean) * (s - mean);
    var /= static_cast<double>(signal.size());
    CHECK(std::abs(var / (gt.noise_sd * gt.noise_sd) / 10.0 - 1.0) < 0.05);
}

TEST_CASE("noise-free complete data") {
    GroundTruth gt;
    gt.mu = {0.5, -1.0, 2.0};
    gt.sigma = Matrix{{1.0, 0.3, 0.0}, {0.3, 2.0, 0.1}, {0.0, 0.1, 0.5}};
    gt.beta = {1.0, -2.0, 0.5};
    gt.beta0 = 0.7;
    gt.noise_sd = 0.0;
    gt.mechanism = Mcar{0.0};
    RngStream rng(3, 0);
    const auto data = draw_dataset(rng, gt, 500);
    for (Index i = 0; i < data.rows(); ++i) {
        CHECK(data.y()[i] == doctest::Approx(gt.beta0 + dot(gt.beta, data.true_values().row(i))).epsilon(1e-14));
        for (double m : data.m_row(i)) CHECK(m == 0.0);
    }
}

TEST_CASE("masked accessor hides missing values") {
    RngStream rng(4, 0);
    const auto gt = make_ground_truth(rng, 5, 10.0, MechanismKind::mcar, 0.5);
    const auto data = draw_dataset(rng, gt, 200);
    for (Index i = 0; i < data.rows(); ++i)
        for (Index j = 0; j < 5; ++j) {
            if (data.mask()(i, j) == 1.0) CHECK(data.x_tilde()(i, j) == 0.0);
            else CHECK(data.x_tilde()(i, j) == data.true_values()(i, j));
        }
}

TEST_CASE("MCAR masks") {
    RngStream rng(5, 0);
    const Matrix zeros = mask_mcar(rng, 50, 4, 0.0);
    const Matrix ones = mask_mcar(rng, 50, 4, 1.0);
    for (double v : zeros.data()) CHECK(v == 0.0);
    for (double v : ones.data()) CHECK(v == 1.0);

    const Matrix m = mask_mcar(rng, 100000, 10, 0.5);
    double total = 0.0;
    for (double v : m.data()) total += v;
    CHECK(std::abs(total / 1e6 - 0.5) < oracle_ref::binomial_3sigma(0.5, 1e6));

    const auto gt = make_ground_truth(rng, 10, 10.0, MechanismKind::mcar, 0.5);
    const auto data = draw_dataset(rng, gt, 100000);
    for (Index j = 0; j < 10; ++j) {
        const double r = column_rate(data.mask(), j);
        CHECK(r >= 0.49);
        CHECK(r <= 0.51);
    }
    // independence of mask and values: pooled correlation over n·d = 10⁶ cells
    double sx = 0, sm = 0, sxx = 0, smm = 0, sxm = 0;
    const auto& x = data.true_values();
    const double n = 1e6;
    for (Index i = 0; i < data.rows(); ++i)
        for (Index j = 0; j < 10; ++j) {
            const double v = (x(i, j) - gt.mu[j]) / std::sqrt(gt.sigma(j, j));
            const double mm = data.mask()(i, j);
            sx += v;
            sm += mm;
            sxx += v * v;
            smm += mm * mm;
            sxm += v * mm;
        }
    const double cov = sxm / n - sx / n * sm / n;
    const double r = cov / std::sqrt((sxx / n - sx * sx / n / n) * (smm / n - sm * sm / n / n));
    CHECK(std::abs(r) < 0.01);
}

TEST_CASE("MAR calibration") {
    RngStream rng(6, 0);
    const auto gt = make_ground_truth(rng, 10, 10.0, MechanismKind::mcar, 0.5);
    const Matrix calib = draw_covariates(rng, gt, 10000);
    const Mar spec = make_mar_spec(rng, 10, 0.1, 0.5, calib);
    CHECK(spec.observed_idx.size() == 1);
    CHECK(spec.weights.rows() == 9);
    CHECK(spec.weights.cols() == spec.observed_idx.size());

    const Matrix p = mar_probabilities(calib, spec);
    for (Index j = 0; j < 10; ++j) {
        const bool fixed = std::find(spec.observed_idx.begin(), spec.observed_idx.end(), j) != spec.observed_idx.end();
        const double rate = column_rate(p, j);
        if (fixed) {
            CHECK(rate == 0.0);
        } else {
            CHECK(rate >= 0.495);
            CHECK(rate <= 0.505);
        }
    }
    const Matrix m = mask_mar(rng, calib, spec);
    for (Index j : spec.observed_idx) CHECK(column_rate(m, j) == 0.0);

    // structural MAR: probabilities ignore every column outside observed_idx
    Matrix perturbed = calib;
    for (Index i = 0; i < perturbed.rows(); ++i)
        for (Index j = 0; j < 10; ++j)
            if (std::find(spec.observed_idx.begin(), spec.observed_idx.end(), j) == spec.observed_idx.end())
                perturbed(i, j) += 100.0;
    CHECK(mar_probabilities(perturbed, spec) == p);

    const auto mar_gt = make_ground_truth(rng, 10, 10.0, MechanismKind::mar, 0.5);
    CHECK(kind_of(mar_gt.mechanism) == MechanismKind::mar);
}

TEST_CASE("Gaussian self-masking") {
    SelfMaskGaussian spec{{0.6, 0.3}, {1.0, -2.0}, {0.5, 2.0}};
    RngStream rng(7, 0);
    Matrix at_centre(100000, 2);
    for (Index i = 0; i < at_centre.rows(); ++i) {
        at_centre(i, 0) = 1.0;
        at_centre(i, 1) = -2.0;
    }
    const Matrix m = mask_selfmask_gaussian(rng, at_centre, spec);
    CHECK(std::abs(column_rate(m, 0) - 0.6) < oracle_ref::binomial_3sigma(0.6, 1e5));
    CHECK(std::abs(column_rate(m, 1) - 0.3) < oracle_ref::binomial_3sigma(0.3, 1e5));

    Matrix far(1000, 2, 1e6);
    const Matrix mf = mask_selfmask_gaussian(rng, far, spec);
    for (double v : mf.data()) CHECK(v == 0.0);

    // closed form K·σ̃/√(σ̃²+σ²)·exp(−(μ−μ̃)²/(2(σ̃²+σ²)))
    const double k = 0.8, mt = 0.3, st2 = 1.5, mu = -0.2, var = 0.7;
    const double expected = k * std::sqrt(st2) / std::sqrt(st2 + var) * std::exp(-(mu - mt) * (mu - mt) / (2 * (st2 + var)));
    CHECK(selfmask_gaussian_rate(k, mt, st2, mu, var) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("Gaussian self-masking calibration") {
    const Vector mu{0.0, 3.0};
    const Vector var{1.0, 4.0};
    const auto spec = calibrate_selfmask_gaussian(mu, var, 0.5);
    for (Index j = 0; j < 2; ++j) {
        CHECK(spec.k[j] == doctest::Approx(0.5 * std::sqrt(2.0)).epsilon(1e-12));
        CHECK(spec.mu_tilde[j] == mu[j]);
        CHECK(spec.sigma_tilde2[j] == var[j]);
    }
    CHECK_THROWS_AS(calibrate_selfmask_gaussian(mu, var, 0.8), RateUnreachable);
    CHECK_THROWS_AS(calibrate_selfmask_gaussian(mu, var, 0.0), std::invalid_argument);

    RngStream rng(8, 0);
    const auto gt = make_ground_truth(rng, 10, 10.0, MechanismKind::selfmask_gaussian, 0.5);
    const auto data = draw_dataset(rng, gt, 100000);
    for (Index j = 0; j < 10; ++j) {
        const double r = column_rate(data.mask(), j);
        CHECK(r >= 0.48);
        CHECK(r <= 0.52);
    }
}

TEST_CASE("self-masking depends on the own coordinate only") {
    RngStream rng(9, 0);
    const auto gt = make_ground_truth(rng, 3, 10.0, MechanismKind::selfmask_gaussian, 0.5);
    const auto& spec = std::get<SelfMaskGaussian>(gt.mechanism);
    const auto data = draw_dataset(rng, gt, 200000);
    const auto& x = data.true_values();
    const Index j = 0;
    const double sd = std::sqrt(gt.sigma(j, j));
    // bins of width 0.25 sd over ±2 sd; compare bin rate with the mean of the formula over the bin
    for (int b = -8; b < 8; ++b) {
        const double lo = gt.mu[j] + 0.25 * b * sd;
        const double hi = lo + 0.25 * sd;
        double count = 0, missing = 0, expected = 0;
        for (Index i = 0; i < data.rows(); ++i) {
            const double v = x(i, j);
            if (v < lo || v >= hi) continue;
            ++count;
            missing += data.mask()(i, j);
            expected += spec.k[j] * std::exp(-(v - spec.mu_tilde[j]) * (v - spec.mu_tilde[j]) / (2 * spec.sigma_tilde2[j]));
        }
        REQUIRE(count > 1000);
        const double p = expected / count;
        CHECK(std::abs(missing / count - p) < oracle_ref::binomial_3sigma(p, count) + 1e-12);
    }
}

TEST_CASE("probit self-masking") {
    const Vector mu{1.0, -1.0};
    const Vector var{2.0, 0.5};
    const auto spec = calibrate_selfmask_probit(mu, var, 0.5);
    CHECK(spec.center[0] == doctest::Approx(1.0));
    CHECK(spec.center[1] == doctest::Approx(-1.0));
    CHECK(spec.scale[0] == doctest::Approx(std::sqrt(2.0)));
    CHECK(normal_cdf(0.0) == 0.5);

    RngStream rng(10, 0);
    Matrix at_centre(100000, 2);
    for (Index i = 0; i < at_centre.rows(); ++i) {
        at_centre(i, 0) = 1.0;
        at_centre(i, 1) = -1.0;
    }
    const Matrix m = mask_selfmask_probit(rng, at_centre, spec);
    CHECK(std::abs(column_rate(m, 0) - 0.5) < oracle_ref::binomial_3sigma(0.5, 1e5));

    const auto gt = make_ground_truth(rng, 5, 10.0, MechanismKind::selfmask_probit, 0.5);
    const auto data = draw_dataset(rng, gt, 100000);
    for (Index j = 0; j < 5; ++j) CHECK(std::abs(column_rate(data.mask(), j) - 0.5) < 0.01);
}

TEST_CASE("normal quantile inverts the cdf") {
    for (double p : {1e-6, 0.01, 0.3, 0.5, 0.77, 0.999}) CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-9));
}

TEST_CASE("generation is deterministic") {
    RngStream a(11, 5);
    RngStream b(11, 5);
    const auto ga = make_ground_truth(a, 6, 10.0, MechanismKind::selfmask_gaussian, 0.5);
    const auto gb = make_ground_truth(b, 6, 10.0, MechanismKind::selfmask_gaussian, 0.5);
    CHECK(ga.sigma == gb.sigma);
    const auto da = draw_dataset(a, ga, 300);
    const auto db = draw_dataset(b, gb, 300);
    CHECK(da.x_tilde() == db.x_tilde());
    CHECK(da.mask() == db.mask());
    CHECK(da.y() == db.y());
}

TEST_CASE("dataset CSV round trip") {
    RngStream rng(12, 0);
    const auto gt = make_ground_truth(rng, 3, 10.0, MechanismKind::mcar, 0.5);
    const auto data = draw_dataset(rng, gt, 40);
    std::stringstream s;
    write_dataset_csv(s, data);
    const std::string text = s.str();
    CHECK(text.rfind("x0,x1,x2,m0,m1,m2,y\n", 0) == 0);
    CHECK(text.find("NA") != std::string::npos);
    const auto back = read_dataset_csv(s);
    CHECK(back.x_tilde() == data.x_tilde());
    CHECK(back.mask() == data.mask());
    CHECK(back.y() == data.y());
    CHECK_FALSE(back.has_true_values());

    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) CHECK(parse_double(format_double(v)) == v);

    std::stringstream na_observed("x0,m0,y\nNA,0,2\n");
    CHECK_THROWS_AS(read_dataset_csv(na_observed), SchemaMismatch);
    std::stringstream bad_header("a,b,y\n1,0,2\n");
    CHECK_THROWS_AS(read_dataset_csv(bad_header), SchemaMismatch);
    // a value stored under a mask is ignored
    std::stringstream hidden("x0,m0,y\n5,1,2\n");
    CHECK(read_dataset_csv(hidden).x_tilde()(0, 0) == 0.0);
}
