#include "neumiss/checkpoint.hpp"
#include "neumiss/diagnostics.hpp"
#include "neumiss/errors.hpp"
#include "neumiss/metrics.hpp"
#include "neumiss/network.hpp"
#include "neumiss/oracle.hpp"
#include "neumiss/relu_bridge.hpp"
#include "support/oracles.hpp"
#include "support/reference_forward.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

using namespace neumiss;
using namespace neumiss::net;

namespace {

NeuMissWeights random_network(RngStream& rng, Index d, Index depth, bool residual, double scale = 0.5) {
    auto w = NeuMissWeights::zeros(d, depth, residual);
    for (auto block : parameter_blocks(w))
        for (double& v : block) v = rng.uniform(-scale, scale);
    return w;
}

Vector random_mask(RngStream& rng, Index d) {
    Vector m(d);
    for (double& v : m) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return m;
}

Vector random_vector(RngStream& rng, Index d) {
    Vector v(d);
    for (double& x : v) x = rng.normal();
    return v;
}

Vector zero_masked(Vector x, const Vector& m) {
    for (Index j = 0; j < x.size(); ++j)
        if (m[j] == 1.0) x[j] = 0.0;
    return x;
}

sim::GroundTruth conditioned_truth(RngStream& rng, Index d) {
    sim::GroundTruth gt;
    Matrix a(d, d);
    for (double& v : a.data()) v = rng.normal();
    gt.sigma = matmul(a, transpose(a)) * (1.0 / static_cast<double>(d));
    for (Index i = 0; i < d; ++i) gt.sigma(i, i) += 0.5;
    gt.mu = random_vector(rng, d);
    gt.beta = random_vector(rng, d);
    gt.beta0 = rng.normal();
    gt.noise_sd = 0.3;
    gt.mechanism = sim::Mcar{0.5};
    return gt;
}

} // namespace

TEST_CASE("fully observed rows reduce to the linear model") {
    RngStream rng(1, 0);
    for (Index depth : {0, 1, 2, 4}) {
        for (bool residual : {false, true}) {
            const auto w = random_network(rng, 5, depth, residual);
            const Vector x = random_vector(rng, 5);
            CHECK(predict(w, x, Vector(5, 0.0)) == doctest::Approx(w.beta0 + dot(w.beta, x)).epsilon(1e-14));
        }
    }
}

TEST_CASE("depth mapping") {
    CHECK(neumann_blocks(0) == 0);
    CHECK(neumann_blocks(1) == 0);
    CHECK(neumann_blocks(2) == 0);
    CHECK(neumann_blocks(5) == 3);
    auto w = NeuMissWeights::zeros(3, 4, false);
    CHECK(w.w_neu.size() == 2);
    w.validate();
    w.w_neu.pop_back();
    CHECK_THROWS_AS(w.validate(), ShapeMismatch);
    CHECK_THROWS_AS(predict(NeuMissWeights::zeros(3, 2, false), Vector(2), Vector(2)), ShapeMismatch);
}

TEST_CASE("mask trick: zeroed weights equal masked vectors bit for bit") {
    RngStream rng(2, 0);
    for (int t = 0; t < 200; ++t) {
        const Index depth = rng.uniform_index(6);
        const auto w = random_network(rng, 6, depth, rng.bernoulli(0.5));
        const Vector x = random_vector(rng, 6);
        const Vector m = random_mask(rng, 6);
        CHECK(predict(w, x, m) == oracle_ref::zeroed_weight_forward(w, x, m));
    }
}

TEST_CASE("values at masked coordinates are ignored") {
    RngStream rng(3, 0);
    for (int t = 0; t < 100; ++t) {
        const auto w = random_network(rng, 5, 1 + rng.uniform_index(5), rng.bernoulli(0.5));
        const Vector m = random_mask(rng, 5);
        const Vector x = zero_masked(random_vector(rng, 5), m);
        Vector garbage = x;
        for (Index j = 0; j < 5; ++j)
            if (m[j] == 1.0) garbage[j] = (t % 2 ? 1e6 : std::numeric_limits<double>::quiet_NaN());
        CHECK(predict(w, x, m) == predict(w, garbage, m));
    }
}

TEST_CASE("permutation equivariance") {
    RngStream rng(4, 0);
    const Index d = 6;
    for (int t = 0; t < 50; ++t) {
        const auto w = random_network(rng, d, 1 + rng.uniform_index(5), rng.bernoulli(0.5));
        const Vector x = random_vector(rng, d);
        const Vector m = random_mask(rng, d);
        IndexList perm(d);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm.begin(), perm.end());
        auto permute_matrix = [&](const Matrix& a) {
            Matrix b(d, d);
            for (Index i = 0; i < d; ++i)
                for (Index j = 0; j < d; ++j) b(i, j) = a(perm[i], perm[j]);
            return b;
        };
        auto permute_vector = [&](const Vector& v) {
            Vector out(d);
            for (Index i = 0; i < d; ++i) out[i] = v[perm[i]];
            return out;
        };
        auto p = w;
        p.s0 = permute_matrix(w.s0);
        for (Index k = 0; k < w.w_neu.size(); ++k) p.w_neu[k] = permute_matrix(w.w_neu[k]);
        p.w_mix = permute_matrix(w.w_mix);
        p.mu = permute_vector(w.mu);
        p.beta = permute_vector(w.beta);
        CHECK(std::abs(predict(w, x, m) - predict(p, permute_vector(x), permute_vector(m))) < 1e-12);
    }
}

TEST_CASE("gradients match central finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RngStream rng(seed, stable_hash("gradient"));
        for (Index depth : {1, 2, 3, 5}) {
            for (bool residual : {false, true}) {
                const auto w = random_network(rng, 4, depth, residual);
                const Vector x = random_vector(rng, 4);
                const Vector m = random_mask(rng, 4);
                const auto r = diag::check_neumiss_gradient(w, x, m, rng.normal(), 1e-5);
                CHECK_MESSAGE(r.max_rel_error < 1e-4, "seed " << seed << " depth " << depth << " worst " << r.worst);
            }
        }
    }
}

TEST_CASE("gradient structure") {
    RngStream rng(5, 0);
    const auto w = random_network(rng, 4, 4, false);
    const Vector x = random_vector(rng, 4);

    ForwardTape tape;
    const Vector all_missing(4, 1.0);
    forward(w, x, all_missing, tape);
    const auto g = backward(w, tape, all_missing, 1.0);
    for (double v : g.s0.data()) CHECK(v == 0.0);
    for (const auto& b : g.w_neu)
        for (double v : b.data()) CHECK(v == 0.0);
    for (double v : g.w_mix.data()) CHECK(v == 0.0);

    const Vector m = random_mask(rng, 4);
    const double y = 0.7;
    const double pred = forward(w, x, m, tape);
    const auto gm = backward(w, tape, m, pred - y);
    for (Index j = 0; j < 4; ++j) CHECK(gm.beta[j] == doctest::Approx((pred - y) * tape.v[j]).epsilon(1e-14));
    CHECK(gm.beta0 == doctest::Approx(pred - y));
}

TEST_CASE("analytic weights realize the Neumann predictor") {
    RngStream rng(6, 0);
    for (int inst = 0; inst < 3; ++inst) {
        const auto gt = sim::make_ground_truth(rng, 7, 10.0, sim::MechanismKind::mcar, 0.5);
        const double radius = oracle::safe_radius(gt.sigma);
        const Matrix scaled = gt.sigma * (1.0 / radius);
        for (Index order : {0, 1, 5, 20}) {
            const auto w = analytic_weights(gt, order + 2);
            CHECK(w.residual);
            const oracle::NeumannState state{Matrix::identity(7), order};
            for (int t = 0; t < 100; ++t) {
                const Vector m = random_mask(rng, 7);
                const Vector x = random_vector(rng, 7);
                const auto p = oracle::PatternView::from_mask(m);
                const Vector x_obs = oracle::gather_observed(x, p);
                const double lib = oracle::neumann_predict(gt, p, x_obs, state, radius);
                CHECK(std::abs(predict(w, x, m) - lib) < 1e-10);

                // literal rescaled recursion
                double ref = gt.beta0;
                for (Index j : p.obs) ref += gt.beta[j] * x[j];
                if (!p.mis.empty() && !p.obs.empty()) {
                    const Matrix s = oracle_ref::neumann_iterate(oracle_ref::pick(scaled, p.obs, p.obs),
                                                                 Matrix::identity(p.obs.size()), order);
                    Vector c(p.obs.size());
                    for (Index k = 0; k < p.obs.size(); ++k) c[k] = x[p.obs[k]] - gt.mu[p.obs[k]];
                    const Vector sc = oracle_ref::mul(s, c);
                    const Vector est = oracle_ref::mul(oracle_ref::pick(scaled, p.mis, p.obs), sc);
                    for (Index k = 0; k < p.mis.size(); ++k) ref += gt.beta[p.mis[k]] * (gt.mu[p.mis[k]] + est[k]);
                } else {
                    for (Index j : p.mis) ref += gt.beta[j] * gt.mu[j];
                }
                CHECK(std::abs(predict(w, x, m) - ref) < 1e-9);
            }
        }
        // depth 1 realizes order 0 as well
        const auto w1 = analytic_weights(gt, 1);
        const oracle::NeumannState zero{Matrix::identity(7), 0};
        for (int t = 0; t < 50; ++t) {
            const Vector m = random_mask(rng, 7);
            const Vector x = random_vector(rng, 7);
            const auto p = oracle::PatternView::from_mask(m);
            CHECK(std::abs(predict(w1, x, m) - oracle::neumann_predict(gt, p, oracle::gather_observed(x, p), zero, radius)) < 1e-10);
        }
    }
    CHECK_THROWS(analytic_weights(sim::GroundTruth{}, 0));
}

TEST_CASE("diagonal covariance: depth-1 analytic network is Bayes-exact") {
    RngStream rng(7, 0);
    auto gt = conditioned_truth(rng, 5);
    gt.sigma = Matrix::identity(5) * 2.0;
    const auto w = analytic_weights(gt, 1);
    for (int t = 0; t < 50; ++t) {
        const Vector m = random_mask(rng, 5);
        const Vector x = random_vector(rng, 5);
        const auto p = oracle::PatternView::from_mask(m);
        CHECK(predict(w, x, m) == doctest::Approx(oracle::bayes_predict_mar(gt, p, oracle::gather_observed(x, p))).epsilon(1e-14));
    }
}

TEST_CASE("deep analytic network approaches the Bayes rate") {
    RngStream rng(8, 0);
    SUBCASE("well-conditioned covariance at depth 40") {
        auto gt = conditioned_truth(rng, 10);
        const auto test = sim::draw_dataset(rng, gt, 10000);
        const double bayes = r2_score(test.y(), oracle::bayes_predictions(gt, test));
        const double deep = r2_score(test.y(), predict(analytic_weights(gt, 40), test));
        CHECK(std::abs(deep - bayes) < 0.002);
    }
    SUBCASE("generated covariance: gap shrinks with depth") {
        // Contraction is 1 − λmin/L per block, so a condition number near 700
        // needs hundreds of blocks.
        const auto gt = sim::make_ground_truth(rng, 10, 10.0, sim::MechanismKind::mcar, 0.5);
        const auto test = sim::draw_dataset(rng, gt, 10000);
        const double bayes = r2_score(test.y(), oracle::bayes_predictions(gt, test));
        double previous = std::numeric_limits<double>::infinity();
        for (Index depth : {10, 40, 200, 1000}) {
            const double gap = bayes - r2_score(test.y(), predict(analytic_weights(gt, depth), test));
            CHECK(gap < previous);
            previous = gap;
        }
        CHECK(std::abs(previous) < 0.002);
    }
}

TEST_CASE("self-masking targets") {
    RngStream rng(9, 0);
    const auto gt = sim::make_ground_truth(rng, 4, 10.0, sim::MechanismKind::selfmask_gaussian, 0.5);
    const auto& spec = std::get<sim::SelfMaskGaussian>(gt.mechanism);

    const auto one = selfmask_target_params(gt, Vector(4, 1.0));
    const auto zero = selfmask_target_params(gt, Vector(4, 0.0));
    const auto inf = selfmask_target_params(gt, Vector(4, std::numeric_limits<double>::infinity()));
    for (Index j = 0; j < 4; ++j) {
        CHECK(one.mu_adj[j] == doctest::Approx(0.5 * (spec.mu_tilde[j] + gt.mu[j])));
        CHECK(zero.mu_adj[j] == doctest::Approx(spec.mu_tilde[j]));
        CHECK(inf.mu_adj[j] == doctest::Approx(gt.mu[j]));
        for (Index k = 0; k < 4; ++k) {
            CHECK(one.w_mix(j, k) == doctest::Approx(0.5 * gt.sigma(j, k)));
            CHECK(zero.w_mix(j, k) == 0.0);
            CHECK(inf.w_mix(j, k) == doctest::Approx(gt.sigma(j, k)));
        }
    }
    const auto auto_targets = selfmask_target_params(gt);
    const Matrix precision = oracle_ref::gauss_inverse(gt.sigma);
    for (Index j = 0; j < 4; ++j) CHECK(auto_targets.d_hat[j] == doctest::Approx(spec.sigma_tilde2[j] * precision(j, j)));

    CHECK_THROWS(selfmask_target_params(sim::make_ground_truth(rng, 3, 10.0, sim::MechanismKind::mcar, 0.5)));
}

TEST_CASE("ReLU construction reproduces the mask layer") {
    RngStream rng(10, 0);
    const Index d = 5;
    const double bound = 3.0;
    Matrix w(d, d);
    for (double& v : w.data()) v = rng.normal();
    Vector mu(d);
    for (double& v : mu) v = rng.uniform(-1.0, 1.0);
    const auto layer = relu_layer_from_neumann(w, mu, bound);

    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const Vector m = random_mask(rng, d);
        Vector x(d);
        for (double& v : x) v = rng.uniform(-bound, bound);
        x = zero_masked(x, m);
        const Vector relu = relu_layer_output(layer, x, m);
        const Vector masked = masked_layer_output(w, mu, x, m);
        for (Index k = 0; k < d; ++k) {
            if (m[k] == 0.0) {
                CHECK(relu[k] == 0.0);
                CHECK(masked[k] == 0.0);
            } else {
                worst = std::max(worst, std::abs(relu[k] - (masked[k] + layer.constants[k])));
            }
        }
    }
    CHECK(worst < 1e-9);

    Vector x(d);
    for (double& v : x) v = rng.uniform(-bound, bound);
    const Vector ones(d, 1.0);
    const Vector zeros(d, 0.0);
    const Vector all_missing = relu_layer_output(layer, Vector(d, 0.0), ones);
    const Vector masked_all = masked_layer_output(w, mu, Vector(d, 0.0), ones);
    for (Index k = 0; k < d; ++k) {
        CHECK(all_missing[k] > 0.0);
        CHECK(all_missing[k] == doctest::Approx(masked_all[k] + layer.constants[k]).epsilon(1e-12));
    }
    for (double v : relu_layer_output(layer, x, zeros)) CHECK(v == 0.0);
    for (double v : masked_layer_output(w, mu, x, zeros)) CHECK(v == 0.0);

    CHECK_THROWS_AS(relu_layer_from_neumann(w, mu, 0.0), SupportBoundTooSmall);
    CHECK_THROWS_AS(relu_layer_from_neumann(w, mu, -1.0), SupportBoundTooSmall);
    CHECK_THROWS_AS(relu_layer_from_neumann(w, mu, std::numeric_limits<double>::infinity()), SupportBoundTooSmall);
}

TEST_CASE("plateau schedule and optimizers") {
    PlateauSchedule s(1.0, 0.2, 2, 1e-4, 0.05);
    CHECK(s.observe(10.0) == 1.0);
    CHECK(s.observe(9.0) == 1.0);
    CHECK(s.observe(9.0) == 1.0);
    CHECK(s.observe(9.0) == doctest::Approx(0.2));
    CHECK_FALSE(s.finished());
    s.observe(9.0);
    CHECK(s.observe(9.0) == doctest::Approx(0.04));
    CHECK(s.finished());

    Vector p{1.0, -1.0};
    Vector g{0.5, -2.0};
    std::vector<std::span<double>> ps{std::span<double>(p)};
    std::vector<std::span<double>> gs{std::span<double>(g)};
    Optimizer sgd(OptimizerKind::sgd, 2);
    sgd.step(ps, gs, 0.1);
    CHECK(p[0] == doctest::Approx(0.95));
    CHECK(p[1] == doctest::Approx(-0.8));
    Optimizer adam(OptimizerKind::adam, 2);
    Vector q{0.0, 0.0};
    std::vector<std::span<double>> qs{std::span<double>(q)};
    adam.step(qs, gs, 0.01);
    // first bias-corrected ADAM step moves each coordinate by lr·sign(g)
    CHECK(q[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(q[1] == doctest::Approx(0.01).epsilon(1e-6));

    CHECK(parse_optimizer("adam") == OptimizerKind::adam);
    CHECK_THROWS_AS(parse_optimizer("rmsprop"), ConfigError);
    TrainConfig bad;
    bad.lr_decay_factor = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK(TrainConfig{}.resolved_lr(10) == doctest::Approx(1e-3));
}

TEST_CASE("depth-0 training recovers a noiseless linear model") {
    RngStream rng(11, 0);
    auto gt = conditioned_truth(rng, 4);
    gt.noise_sd = 0.0;
    gt.mechanism = sim::Mcar{0.0};
    const auto data = sim::draw_dataset(rng, gt, 2000);
    const auto test = sim::draw_dataset(rng, gt, 2000);
    auto cfg = neumiss_train_defaults();
    cfg.max_epochs = 20;
    const auto res = train(data, 0, false, cfg, rng);
    CHECK(r2_score(test.y(), predict(res.weights, test)) > 0.999);
}

TEST_CASE("training loss decreases within learning-rate segments") {
    RngStream rng(12, 0);
    const auto gt = conditioned_truth(rng, 5);
    const auto data = sim::draw_dataset(rng, gt, 3000);
    auto cfg = neumiss_train_defaults();
    cfg.max_epochs = 40;
    const auto res = train(data, 3, false, cfg, rng);
    const auto& epochs = res.history.epochs;
    REQUIRE(epochs.size() >= 3);
    Index violations = 0;
    for (Index e = 2; e < epochs.size(); ++e) {
        if (epochs[e].lr != epochs[e - 1].lr) continue;
        if (epochs[e].train_loss > epochs[e - 1].train_loss + 1e-3) ++violations;
    }
    CHECK(violations == 0);
    CHECK(res.history.best_val_loss <= epochs.front().val_loss);
}

TEST_CASE("training is deterministic and checkpoints round-trip") {
    auto run = [] {
        RngStream rng(13, 0);
        const auto gt = sim::make_ground_truth(rng, 4, 10.0, sim::MechanismKind::mcar, 0.5);
        const auto data = sim::draw_dataset(rng, gt, 800);
        auto cfg = neumiss_train_defaults();
        cfg.max_epochs = 5;
        return train(data, 3, true, cfg, rng).weights;
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.s0 == b.s0);
    CHECK(a.w_neu == b.w_neu);
    CHECK(a.w_mix == b.w_mix);
    CHECK(a.mu == b.mu);
    CHECK(a.beta == b.beta);
    CHECK(a.beta0 == b.beta0);

    const auto back = std::get<NeuMissWeights>(from_json(to_json(Model{a})));
    CHECK(back.s0 == a.s0);
    CHECK(back.w_neu == a.w_neu);
    CHECK(back.w_mix == a.w_mix);
    CHECK(back.mu == a.mu);
    CHECK(back.beta == a.beta);
    CHECK(back.beta0 == a.beta0);
    CHECK(back.depth == a.depth);
    CHECK(back.residual == a.residual);
    CHECK_THROWS_AS(from_json("{\"d\": 2}"), SchemaMismatch);
    CHECK_THROWS_AS(from_json("not json"), SchemaMismatch);
}

TEST_CASE("divergence is reported") {
    RngStream rng(14, 0);
    const auto gt = conditioned_truth(rng, 4);
    const auto data = sim::draw_dataset(rng, gt, 500);
    auto cfg = neumiss_train_defaults();
    cfg.lr_init = 1e6;
    CHECK_THROWS_AS(train(data, 3, false, cfg, rng), Diverged);
}

TEST_CASE("validation split") {
    RngStream rng(15, 0);
    const auto gt = conditioned_truth(rng, 3);
    const auto data = sim::draw_dataset(rng, gt, 1000);
    const auto split = split_validation(data, 0.2, rng);
    CHECK(split.validation.rows() == 200);
    CHECK(split.fit.rows() == 800);
    const auto none = split_validation(data, 0.0, rng);
    CHECK(none.validation.rows() == 0);
    CHECK(none.fit.rows() == 1000);
}
