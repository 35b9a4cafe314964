#include "seos/linear_sgd.hpp"
#include "seos/minibatch.hpp"
#include "seos/noise_kernel_norm.hpp"
#include "seos/quadratic_regression.hpp"
#include "seos/rng.hpp"
#include "seos/second_moment.hpp"
#include "seos/spectrum_factory.hpp"

#include <benchmark/benchmark.h>

#include <cmath>

using namespace seos;

namespace {

SpectrumDecomposition flat_spectrum(Index d) {
  SpectrumSpec s;
  s.dataset = d;
  s.parameters = d + d / 5;
  return generate(s).spectrum;
}

void BM_SampleMask(benchmark::State& state) {
  Rng rng = make_stream(1, 0);
  const Index d = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(sample_mask(d, d / 20 + 1, rng));
}
BENCHMARK(BM_SampleMask)->Arg(100)->Arg(1000);

void BM_DiagonalDynamicsKnorm(benchmark::State& state) {
  const auto s = flat_spectrum(state.range(0));
  const double eta = 0.5 / s.max_eigenvalue();
  for (auto _ : state) {
    const auto dyn = build_diagonal_dynamics(s, eta, 5);
    benchmark::DoNotOptimize(noise_kernel_norm(dyn));
  }
}
BENCHMARK(BM_DiagonalDynamicsKnorm)->Arg(50)->Arg(100)->Arg(200);

void BM_TransferDense(benchmark::State& state) {
  const auto s = flat_spectrum(state.range(0));
  const double eta = 0.5 / s.max_eigenvalue();
  for (auto _ : state) benchmark::DoNotOptimize(max_abs_eigenvalue(build_transfer_operator(s, eta, 2)));
}
BENCHMARK(BM_TransferDense)->Arg(8)->Arg(16)->Arg(24);

void BM_TransferMatrixFree(benchmark::State& state) {
  const auto s = flat_spectrum(state.range(0));
  const double eta = 0.5 / s.max_eigenvalue();
  for (auto _ : state) benchmark::DoNotOptimize(transfer_spectral_radius(s, eta, 5));
}
BENCHMARK(BM_TransferMatrixFree)->Arg(16)->Arg(50)->Arg(100);

void BM_SgdStep(benchmark::State& state) {
  Rng rng = make_stream(2, 0);
  const Index d = state.range(0);
  const Matrix j = gaussian_matrix(d, d + d / 5, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  Vector z = gaussian_vector(d, rng);
  const auto mask = sample_mask(d, 5, rng);
  for (auto _ : state) benchmark::DoNotOptimize(z = sgd_step(z, j, mask, 1e-3));
}
BENCHMARK(BM_SgdStep)->Arg(100)->Arg(400);

void BM_QrmStep(benchmark::State& state) {
  Rng rng = make_stream(3, 0);
  const Index d = state.range(0);
  const auto model = build_quadratic_model(d, d + d / 2, VarianceProfile::flat(), 1.0, rng);
  QrmState st{model.residual0, model.jacobian0};
  const auto mask = sample_mask(d, 16, rng);
  for (auto _ : state) benchmark::DoNotOptimize(qrm_step(st, model, mask, 0.05));
}
BENCHMARK(BM_QrmStep)->Arg(50)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
