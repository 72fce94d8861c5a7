#include "neumiss/diagnostics.hpp"

#include "neumiss/bounds.hpp"
#include "neumiss/oracle.hpp"
#include "neumiss/relu_bridge.hpp"
#include "neumiss/simgen.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>

namespace neumiss::diag {

namespace {

template <class Weights, class Loss>
GradCheckResult finite_difference_check(Weights w, const Weights& analytic, Loss&& loss, double eps) {
    auto blocks = parameter_blocks(w);
    auto grad_copy = analytic;
    const auto grad_blocks = parameter_blocks(grad_copy);

    double scale = 0.0;
    for (const auto& g : grad_blocks) {
        for (double v : g) scale = std::max(scale, std::abs(v));
    }
    const double floor = 1e-6 * (1.0 + scale);

    GradCheckResult result;
    for (Index b = 0; b < blocks.size(); ++b) {
        for (Index k = 0; k < blocks[b].size(); ++k) {
            double& p = blocks[b][k];
            const double saved = p;
            p = saved + eps;
            const double up = loss(w);
            p = saved - eps;
            const double down = loss(w);
            p = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = grad_blocks[b][k];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            ++result.n_params;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst = std::to_string(b) + "[" + std::to_string(k) + "]";
            }
        }
    }
    return result;
}

Matrix random_spd(RngStream& rng, Index d, double radius) {
    Matrix u(d, d);
    for (double& v : u.data()) v = rng.normal();
    Matrix s = matmul(u, transpose(u));
    for (Index i = 0; i < d; ++i) s(i, i) += 0.1;
    return s * (radius / spectrum(s).spectral_radius_estimate);
}

Vector random_mask(RngStream& rng, Index d) {
    Vector m(d);
    for (double& v : m) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return m;
}

Vector random_vector(RngStream& rng, Index d, double scale) {
    Vector v(d);
    for (double& x : v) x = scale * rng.normal();
    return v;
}

net::NeuMissWeights random_network(RngStream& rng, Index d, Index depth, bool residual) {
    auto w = net::NeuMissWeights::zeros(d, depth, residual);
    for (auto block : parameter_blocks(w)) {
        for (double& v : block) v = rng.uniform(-0.5, 0.5);
    }
    return w;
}

VerifyItem timed(std::string name, const std::function<std::pair<bool, std::string>()>& body) {
    VerifyItem item;
    item.name = std::move(name);
    const auto start = std::chrono::steady_clock::now();
    try {
        auto [ok, detail] = body();
        item.passed = ok;
        item.detail = std::move(detail);
    } catch (const std::exception& e) {
        item.passed = false;
        item.detail = std::string("exception: ") + e.what();
    }
    item.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return item;
}

} // namespace

GradCheckResult check_neumiss_gradient(const net::NeuMissWeights& w, std::span<const double> x,
                                       std::span<const double> m, double y, double eps) {
    net::ForwardTape tape;
    const double pred = net::forward(w, x, m, tape);
    const auto analytic = net::backward(w, tape, m, pred - y);
    auto loss = [&](const net::NeuMissWeights& v) {
        const double e = net::predict(v, x, m) - y;
        return 0.5 * e * e;
    };
    return finite_difference_check(w, analytic, loss, eps);
}

GradCheckResult check_mlp_gradient(const mlp::MlpWeights& w, std::span<const double> x,
                                   std::span<const double> m, double y, double eps) {
    mlp::MlpTape tape;
    const double pred = mlp::forward(w, x, m, tape);
    const auto analytic = mlp::backward(w, tape, pred - y);
    auto loss = [&](const mlp::MlpWeights& v) {
        const double e = mlp::predict(v, x, m) - y;
        return 0.5 * e * e;
    };
    return finite_difference_check(w, analytic, loss, eps);
}

bool VerifyReport::all_passed() const {
    for (const auto& item : items) {
        if (!item.passed) return false;
    }
    return !items.empty();
}

void VerifyReport::print(std::ostream& out) const {
    for (const auto& item : items) {
        out << (item.passed ? "PASS " : "FAIL ") << item.name << " (" << item.seconds << " s)";
        if (!item.detail.empty()) out << ": " << item.detail;
        out << '\n';
    }
    out << (all_passed() ? "all checks passed" : "verification FAILED") << '\n';
}

VerifyReport run_verify(std::uint64_t seed) {
    VerifyReport report;
    RngStream root(seed, stable_hash("verify"));

    report.items.push_back(timed("neumann linear convergence bound", [&] {
        RngStream rng = root.child(1);
        Index checked = 0;
        for (Index t = 0; t < 20; ++t) {
            const Index d = 2 + rng.uniform_index(7);
            const Matrix sigma = random_spd(rng, d, 0.9);
            Vector m = random_mask(rng, d);
            m[rng.uniform_index(d)] = 0.0;
            const auto pattern = oracle::PatternView::from_mask(m);
            const auto rep = oracle::prop5_bound_check(sigma, pattern, Matrix::identity(d), 20, false);
            if (rep.first_violation) {
                return std::pair{false, "violation at order " + std::to_string(*rep.first_violation) +
                                            " on instance " + std::to_string(t)};
            }
            ++checked;
        }
        return std::pair{true, std::to_string(checked) + " instances, orders 0..20"};
    }));

    report.items.push_back(timed("exponential decay of the order-l predictor error", [&] {
        RngStream rng = root.child(2);
        const auto gt = oracle::rescale_ground_truth(
            sim::make_ground_truth(rng, 5, 10.0, sim::MechanismKind::mcar, 0.5));
        oracle::Prop3Options opts;
        opts.throw_on_violation = false;
        const auto rep = oracle::prop3_bound_check(gt, 20, 20000, rng, opts);
        if (rep.bound.first_violation) {
            return std::pair{false, "bound violated at order " + std::to_string(*rep.bound.first_violation)};
        }
        if (rep.ratio.first_violation) {
            return std::pair{false, "decay ratio violated at order " + std::to_string(*rep.ratio.first_violation)};
        }
        return std::pair{true, std::string("orders 1..20, 20000 draws")};
    }));

    report.items.push_back(timed("neumiss gradient vs finite differences", [&] {
        RngStream rng = root.child(3);
        double worst = 0.0;
        for (Index depth : {1, 2, 5}) {
            for (bool residual : {false, true}) {
                for (Index t = 0; t < 5; ++t) {
                    const Index d = 4;
                    const auto w = random_network(rng, d, depth, residual);
                    const Vector x = random_vector(rng, d, 1.0);
                    const Vector m = random_mask(rng, d);
                    worst = std::max(worst, check_neumiss_gradient(w, x, m, rng.normal()).max_rel_error);
                }
            }
        }
        std::ostringstream detail;
        detail << "max relative error " << worst;
        return std::pair{worst < 1e-4, detail.str()};
    }));

    report.items.push_back(timed("mlp gradient vs finite differences", [&] {
        RngStream rng = root.child(4);
        double worst = 0.0;
        for (Index t = 0; t < 5; ++t) {
            const Index d = 3;
            const Index widths[] = {4};
            const auto w = mlp::init_weights(d, widths, rng);
            const Vector x = random_vector(rng, d, 1.0);
            const Vector m = random_mask(rng, d);
            worst = std::max(worst, check_mlp_gradient(w, x, m, rng.normal()).max_rel_error);
        }
        std::ostringstream detail;
        detail << "max relative error " << worst;
        return std::pair{worst < 1e-4, detail.str()};
    }));

    report.items.push_back(timed("analytic network matches the Neumann predictor", [&] {
        RngStream rng = root.child(5);
        const auto gt = sim::make_ground_truth(rng, 6, 10.0, sim::MechanismKind::mcar, 0.5);
        const double radius = oracle::safe_radius(gt.sigma);
        double worst = 0.0;
        for (Index order : {0, 1, 5, 20}) {
            const auto w = net::analytic_weights(gt, order + 2);
            const oracle::NeumannState state{Matrix::identity(gt.dim()), order};
            const auto data = sim::draw_dataset(rng, gt, 100);
            for (Index i = 0; i < data.rows(); ++i) {
                const auto pattern = oracle::PatternView::from_mask(data.m_row(i));
                const double expected = oracle::neumann_predict(
                    gt, pattern, oracle::gather_observed(data.x_row(i), pattern), state, radius);
                const double got = net::predict(w, data.x_row(i), data.m_row(i));
                worst = std::max(worst, std::abs(got - expected) / std::max(1.0, std::abs(expected)));
            }
        }
        std::ostringstream detail;
        detail << "max deviation " << worst;
        return std::pair{worst < 1e-10, detail.str()};
    }));

    report.items.push_back(timed("relu layer reproduces the mask layer", [&] {
        RngStream rng = root.child(6);
        const Index d = 5;
        const double bound = 3.0;
        Matrix w(d, d);
        for (double& v : w.data()) v = rng.normal();
        const Vector mu = random_vector(rng, d, 1.0);
        const auto layer = net::relu_layer_from_neumann(w, mu, bound);
        double worst = 0.0;
        for (Index t = 0; t < 1000; ++t) {
            Vector x(d);
            for (double& v : x) v = rng.uniform(-bound, bound);
            const Vector m = random_mask(rng, d);
            for (Index j = 0; j < d; ++j) {
                if (m[j] == 1.0) x[j] = 0.0;
            }
            const Vector relu = net::relu_layer_output(layer, x, m);
            const Vector masked = net::masked_layer_output(w, mu, x, m);
            for (Index k = 0; k < d; ++k) {
                const double expected = m[k] == 1.0 ? masked[k] + layer.constants[k] : 0.0;
                worst = std::max(worst, std::abs(relu[k] - expected));
            }
        }
        std::ostringstream detail;
        detail << "max deviation " << worst;
        return std::pair{worst < 1e-9, detail.str()};
    }));

    return report;
}

} // namespace neumiss::diag
