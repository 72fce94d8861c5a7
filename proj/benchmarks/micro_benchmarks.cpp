#include "neumiss/dense.hpp"
#include "neumiss/em.hpp"
#include "neumiss/mlp.hpp"
#include "neumiss/network.hpp"
#include "neumiss/oracle.hpp"
#include "neumiss/rng.hpp"
#include "neumiss/simgen.hpp"

#include <benchmark/benchmark.h>

using namespace neumiss;

namespace {

sim::GroundTruth mcar_truth(Index d) {
    RngStream rng(7, stable_hash("bench/gt"));
    return sim::make_ground_truth(rng, d, 10.0, sim::MechanismKind::mcar, 0.5);
}

sim::MaskedDataset mcar_data(const sim::GroundTruth& gt, Index n) {
    RngStream rng(7, stable_hash("bench/data"));
    return sim::draw_dataset(rng, gt, n);
}

Matrix random_spd(Index d) {
    RngStream rng(11, stable_hash("bench/spd"));
    Matrix a(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) a(i, j) = rng.normal();
    Matrix s = matmul(a, transpose(a));
    for (Index i = 0; i < d; ++i) s(i, i) += static_cast<double>(d);
    return s;
}

void BM_NeuMissForwardBackward(benchmark::State& state) {
    const Index d = state.range(0);
    const Index depth = state.range(1);
    const auto gt = mcar_truth(d);
    const auto data = mcar_data(gt, 256);
    const auto w = net::analytic_weights(gt, depth);
    auto grad = net::NeuMissWeights::zeros(d, depth, true);
    net::ForwardTape tape;
    net::BackwardScratch scratch;
    Index row = 0;
    for (auto _ : state) {
        const double p = net::forward(w, data.x_row(row), data.m_row(row), tape);
        net::accumulate_backward(w, tape, data.m_row(row), p - data.y()[row], grad, scratch);
        row = (row + 1) % data.rows();
    }
    benchmark::DoNotOptimize(grad.beta0);
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_NeuMissForwardBackward)->Args({10, 5})->Args({20, 5})->Args({20, 10})->Args({50, 10});

void BM_MlpForwardBackward(benchmark::State& state) {
    const Index d = state.range(0);
    const Index depth = state.range(1);
    const auto gt = mcar_truth(d);
    const auto data = mcar_data(gt, 256);
    RngStream rng(3, 0);
    const auto widths = mlp::deep_widths(d, depth);
    const auto w = mlp::init_weights(d, widths, rng);
    auto grad = mlp::zeros_like(w);
    mlp::MlpTape tape;
    mlp::MlpScratch scratch;
    Index row = 0;
    for (auto _ : state) {
        const double p = mlp::forward(w, data.x_row(row), data.m_row(row), tape);
        mlp::accumulate_backward(w, tape, p - data.y()[row], grad, scratch);
        row = (row + 1) % data.rows();
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_MlpForwardBackward)->Args({20, 1})->Args({20, 9});

void BM_Cholesky(benchmark::State& state) {
    const auto s = random_spd(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(cholesky(s));
}
BENCHMARK(BM_Cholesky)->Arg(10)->Arg(50)->Arg(100);

void BM_Spectrum(benchmark::State& state) {
    const auto s = random_spd(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(spectrum(s));
}
BENCHMARK(BM_Spectrum)->Arg(10)->Arg(50);

void BM_BayesPredictions(benchmark::State& state) {
    const auto gt = mcar_truth(state.range(0));
    const auto data = mcar_data(gt, 1000);
    for (auto _ : state) benchmark::DoNotOptimize(oracle::bayes_predictions(gt, data));
    state.SetItemsProcessed(state.iterations() * data.rows());
}
BENCHMARK(BM_BayesPredictions)->Arg(10)->Arg(20);

void BM_EmFit(benchmark::State& state) {
    const auto gt = mcar_truth(state.range(0));
    const auto data = mcar_data(gt, 5000);
    baselines::EmOptions opt;
    opt.max_iter = 5;
    opt.tol = 0.0;
    for (auto _ : state) benchmark::DoNotOptimize(baselines::em_fit(data, opt));
}
BENCHMARK(BM_EmFit)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
