// Serial reference kernels against the OpenMP kernels, on the tanh model
// (specialised paths) and on a callback model (generic O(N^2) path).
#include <benchmark/benchmark.h>

#include <cmath>

#include "mvcn/engine.hpp"
#include "mvcn/kernels.hpp"

namespace {

using namespace mvcn;

std::unique_ptr<CoefficientSet> tanh_model() {
  TanhInteractionParams p;
  p.a = Eigen::MatrixXd::Constant(1, 1, -0.5);
  p.c = Eigen::MatrixXd::Constant(1, 1, 0.5);
  p.kappa = 1.0;
  p.s0 = Eigen::MatrixXd::Constant(1, 1, 0.3);
  p.s1 = Eigen::MatrixXd::Constant(1, 1, 0.4);
  p.beta0 = 0.3;
  p.beta1 = 0.2;
  return make_model(p);
}

std::vector<double> states(int n) {
  const std::vector<double> mean{0.0};
  return sample_initial(n, 1, mean, 1.0, 42);
}

void BM_DriftReference(benchmark::State& st) {
  const auto m = tanh_model();
  const int n = static_cast<int>(st.range(0));
  const auto xs = states(n);
  std::vector<double> out(n);
  const EmpiricalMeasure mu(xs, 1);
  for (auto _ : st) {
    reference::drift_batch(*m, 0.0, mu, xs, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetComplexityN(n);
}

void BM_DriftOmp(benchmark::State& st) {
  const auto m = tanh_model();
  const int n = static_cast<int>(st.range(0));
  const auto xs = states(n);
  std::vector<double> out(n);
  const EmpiricalMeasure mu(xs, 1);
  for (auto _ : st) {
    drift_batch(*m, 0.0, mu, xs, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetComplexityN(n);
}

void BM_DriftOmpGeneric(benchmark::State& st) {
  const auto m = tanh_model();
  const int n = static_cast<int>(st.range(0));
  const auto xs = states(n);
  std::vector<double> out(n);
  const EmpiricalMeasure mu(xs, 1);
  for (auto _ : st) {
    drift_batch(*m, 0.0, mu, xs, out, KernelPath::Generic);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetComplexityN(n);
}

template <bool Reference>
void BM_Coupling(benchmark::State& st) {
  const auto m = tanh_model();
  const int n = static_cast<int>(st.range(0));
  const int p = static_cast<int>(st.range(1));
  const auto xs = states(n);
  std::vector<double> tangents(static_cast<std::size_t>(n) * p);
  for (std::size_t k = 0; k < tangents.size(); ++k) tangents[k] = std::sin(0.1 * static_cast<double>(k));
  std::vector<double> out(tangents.size());
  const EmpiricalMeasure mu(xs, 1);
  for (auto _ : st) {
    if constexpr (Reference) {
      reference::coupling_apply(*m, Coef::Drift, 0, 0.0, mu, mu, tangents, p, xs, out);
    } else {
      coupling_apply(*m, Coef::Drift, 0, 0.0, mu, mu, tangents, p, xs, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_StepIps(benchmark::State& st) {
  const auto m = tanh_model();
  const int n = static_cast<int>(st.range(0));
  const TimeGrid grid{1.0, 16};
  const NoiseBundle nb = generate(grid, n, 1, 1, 7);
  ParticleCloud cloud{grid, 0, 1, states(n)};
  for (auto _ : st) {
    ParticleCloud next = step_ips(*m, cloud, nb);
    benchmark::DoNotOptimize(next.states.data());
  }
}

}  // namespace

BENCHMARK(BM_DriftReference)->RangeMultiplier(4)->Range(256, 4096)->Complexity();
BENCHMARK(BM_DriftOmp)->RangeMultiplier(4)->Range(256, 4096)->Complexity();
BENCHMARK(BM_DriftOmpGeneric)->RangeMultiplier(4)->Range(256, 4096)->Complexity();
BENCHMARK_TEMPLATE(BM_Coupling, true)->Args({1024, 1})->Args({1024, 16});
BENCHMARK_TEMPLATE(BM_Coupling, false)->Args({1024, 1})->Args({1024, 16});
BENCHMARK(BM_StepIps)->Arg(1024)->Arg(4096);

BENCHMARK_MAIN();
