#include <cmath>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "mvcn/errors.hpp"
#include "mvcn/ibp.hpp"
#include "oracles.hpp"

using namespace mvcn;
using namespace mvcn::test;

namespace {

MeasureIbpResult run_measure(const CoefficientSet& m, const TimeGrid& grid, int N, int reps, const std::string& f,
                             std::uint64_t seed) {
  MeasureIbpOptions opt;
  opt.v = std::vector<double>(m.dims().d, 0.0);
  std::vector<MeasureIbpSample> samples;
  for (int r = 0; r < reps; ++r) {
    const std::uint64_t s = derive_seed(seed, r);
    const NoiseBundle nb = generate(grid, N, m.dims().m0, m.dims().m, s);
    samples.push_back(measure_ibp_rep(m, gaussian_init(N, m.dims().d, s), nb, s, test_function(f), opt));
  }
  return combine(samples);
}

bool within(const Estimate& e, double target, double k = 3.0) { return std::abs(e.mean - target) <= k * e.se; }

}  // namespace

TEST_CASE("Gauss-Hermite oracle integrates Gaussian moments") {
  CHECK(gaussian_expectation([](double z) { return z * z; }) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(gaussian_expectation([](double z) { return std::pow(z, 4); }) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(gaussian_expectation([](double z) { return std::cos(0.7 * z); }) ==
        doctest::Approx(std::exp(-0.245)).epsilon(1e-12));
}

TEST_CASE("ellipticity examples") {
  const TimeGrid grid{1.0, 8};
  const NoiseBundle nb = generate(grid, 4, 1, 1, 1);
  {
    const auto m = constant_model(0.2, 0.4);
    const Trajectory tr = simulate_ips(*m, nb, gaussian_init(4, 1, 1));
    const EllipticityReport r = check_ellipticity(*m, Coef::Sigma0, tr, 0.04 - 1e-12);
    CHECK(r.min_eigen == doctest::Approx(0.04).epsilon(1e-14));
    CHECK(r.pass);
    CHECK_FALSE(check_ellipticity(*m, Coef::Sigma0, tr, 0.05).pass);
    CHECK(check_ellipticity(*m, Coef::Sigma1, tr, 0.16 - 1e-12).pass);
  }
  {
    const auto m = constant_model(0.0, 0.4);
    const Trajectory tr = simulate_ips(*m, nb, gaussian_init(4, 1, 1));
    const EllipticityReport r = check_ellipticity(*m, Coef::Sigma0, tr, 1e-12);
    CHECK(r.min_eigen == 0.0);
    CHECK_FALSE(r.pass);
  }
  {
    ConstantParams p{Eigen::Vector2d(1.0, 0.1).asDiagonal().toDenseMatrix(), Eigen::MatrixXd::Identity(2, 2)};
    const auto m = make_model(p);
    const NoiseBundle nb2 = generate(grid, 4, 2, 2, 1);
    const Trajectory tr = simulate_ips(*m, nb2, gaussian_init(4, 2, 1));
    CHECK(check_ellipticity(*m, Coef::Sigma0, tr, 1e-3).min_eigen == doctest::Approx(0.01).epsilon(1e-12));
  }
}

TEST_CASE("right pseudo-inverse") {
  const Eigen::MatrixXd s = (Eigen::MatrixXd(2, 3) << 0.4, 0.1, 0.0, -0.2, 0.3, 0.5).finished();
  const Eigen::MatrixXd p = right_pseudo_inverse(s, 1e-9);
  CHECK((s * p - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-12);
  const Eigen::MatrixXd flat = (Eigen::MatrixXd(2, 2) << 1.0, 1.0, 1.0, 1.0).finished();
  try {
    right_pseudo_inverse(flat, 1e-9);
    FAIL("expected EllipticityFailure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EllipticityFailure);
  }
}

TEST_CASE("test-function catalog gradients") {
  for (const char* name : {"linear", "sin", "indicator"}) {
    const TestFunction f = test_function(name);
    const std::vector<double> x{0.3, -0.8};
    std::vector<double> g(2);
    f.grad(x, g);
    for (int l = 0; l < 2; ++l) {
      auto xp = x, xm = x;
      xp[l] += 1e-6;
      xm[l] -= 1e-6;
      CHECK(g[l] == doctest::Approx((f.f(xp) - f.f(xm)) / 2e-6).epsilon(1e-7));
    }
  }
  CHECK_THROWS_AS(test_function("cubic"), Error);
}

TEST_CASE("spatial IBP, linear model") {
  const TimeGrid grid{1.0, 128};
  const auto m = linear_model(-0.5, 0.3, 0.2, 0.4);
  const NoiseBundle nb = generate(grid, 256, 1, 1, 21);
  const Trajectory tr = simulate_ips(*m, nb, gaussian_init(256, 1, 21));
  SpatialIbpOptions opt;
  opt.x = {0.0};
  opt.phi = {1.0};
  opt.pilots = 10000;
  opt.pilot_seed = 21;
  const SpatialIbpResult r = spatial_ibp(*m, tr, nb, test_function("linear"), opt);
  // Both sides equal exp(aT) in continuous time; the lhs is the Euler product.
  CHECK(r.lhs.mean == doctest::Approx(std::pow(1 - 0.5 * grid.dt(), grid.K)).epsilon(1e-12));
  CHECK(r.lhs.se <= 1e-12);
  CHECK(within(r.rhs, std::exp(-0.5)));
  CHECK(within(r.rhs, r.lhs.mean));
}

TEST_CASE("spatial IBP, constant test function") {
  const TimeGrid grid{1.0, 32};
  const auto m = tanh_model();
  const NoiseBundle nb = generate(grid, 64, 1, 1, 22);
  const Trajectory tr = simulate_ips(*m, nb, gaussian_init(64, 1, 22));
  const TestFunction one{"one", [](Vec) { return 1.0; }, [](Vec, MutVec g) { g[0] = 0.0; }};
  SpatialIbpOptions opt;
  opt.x = {0.1};
  opt.phi = {1.0};
  opt.pilots = 10000;
  const SpatialIbpResult r = spatial_ibp(*m, tr, nb, one, opt);
  CHECK(r.lhs.mean == 0.0);
  CHECK(within(r.rhs, 0.0));
}

TEST_CASE("spatial IBP, constant model with sin against Gaussian quadrature") {
  const TimeGrid grid{1.0, 64};
  const double s0 = 0.3, s1 = 0.5, x = 0.2;
  const auto m = constant_model(s0, s1);
  const NoiseBundle nb = generate(grid, 64, 1, 1, 23);
  const Trajectory tr = simulate_ips(*m, nb, gaussian_init(64, 1, 23));
  const double W0 = std::accumulate(nb.dW0.begin(), nb.dW0.end(), 0.0);
  // Conditionally on W0, X_T = x + s0 W0_T + s1 sqrt(T) Z.
  const double oracle = gaussian_expectation([&](double z) { return std::cos(x + s0 * W0 + s1 * std::sqrt(grid.T) * z); });
  SpatialIbpOptions opt;
  opt.x = {x};
  opt.phi = {1.0};
  opt.pilots = 10000;
  opt.pilot_seed = 23;
  const SpatialIbpResult r = spatial_ibp(*m, tr, nb, test_function("sin"), opt);
  CHECK(within(r.lhs, oracle));
  CHECK(within(r.rhs, oracle));
  CHECK(std::abs(r.lhs.mean - r.rhs.mean) <= 3 * std::hypot(r.lhs.se, r.rhs.se));
}

TEST_CASE("spatial IBP refuses a degenerate idiosyncratic diffusion") {
  const TimeGrid grid{1.0, 8};
  const auto m = linear_model(-0.5, 0.3, 0.2, 0.0);
  const NoiseBundle nb = generate(grid, 8, 1, 1, 24);
  const Trajectory tr = simulate_ips(*m, nb, gaussian_init(8, 1, 24));
  SpatialIbpOptions opt;
  opt.x = {0.0};
  opt.phi = {1.0};
  opt.pilots = 10;
  try {
    spatial_ibp(*m, tr, nb, test_function("linear"), opt);
    FAIL("expected EllipticityFailure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EllipticityFailure);
  }
}

TEST_CASE("property: weight identities") {
  const TimeGrid grid{1.0, 24};
  const auto m = tanh_model(0.25, 0.2);
  const int N = 16;
  const NoiseBundle nb = generate(grid, N, 1, 1, 25);
  const Trajectory tr = simulate_ips(*m, nb, gaussian_init(N, 1, 25));
  const LionsRun run = run_lions_tangent(*m, tr, nb, pilot_noise_for(nb, 3, 25), {0.4}, true);
  for (int i : {0, 7, 15}) {
    const MeasureWeight w = build_weight_h(*m, tr, run, i, 1e-9);
    REQUIRE(w.h.size() == static_cast<std::size_t>(grid.K));
    Eigen::MatrixXd psiT(1, 1), psir(1, 1), gam(1, 1);
    psiT(0, 0) = run.psi_hist[grid.K].at(i, 0, 0);
    for (int k = 0; k < grid.K; ++k) {
      const CoefficientValues cv = eval_coefficients(*m, grid.node(k), tr.state(k, i), tr.measure(k));
      psir(0, 0) = run.psi_hist[k].at(i, 0, 0);
      gam(0, 0) = run.gamma_hist[k].at(i, 0, 0);
      CHECK((cv.sigma0 * w.h[k] - (psiT - psir + gam)).norm() <= 1e-8);
      CHECK((cv.sigma0 * w.A[k] - Eigen::MatrixXd::Identity(1, 1)).norm() <= 1e-8);
    }
  }
  for (int p = 0; p < 3; ++p) {
    const auto g = build_weight_g(*m, run.pilots.traj, tr, run.w_hist, p, 1e-9);
    for (int k = 0; k < grid.K; ++k) {
      const CoefficientValues cv =
          eval_coefficients(*m, grid.node(k), run.pilots.traj.state(k, p), tr.measure(k));
      CHECK(std::abs((cv.sigma1 * g[k])(0, 0) - run.w_hist[k].at(p, 0, 0)) <= 1e-8);
    }
  }
}

TEST_CASE("measure IBP, constant model gives zeros") {
  const auto m = constant_model(0.3, 0.5);
  const MeasureIbpResult r = run_measure(*m, TimeGrid{1.0, 32}, 64, 2, "sin", 26);
  CHECK(r.lhs_gamma[0].mean == 0.0);
  CHECK(r.lhs_fd[0].mean == 0.0);
  CHECK(r.rhs[0].mean == 0.0);
}

TEST_CASE("measure IBP, linear model against the closed-form Lions tangent") {
  const TimeGrid grid{1.0, 64};
  const auto m = linear_model(-0.5, 0.3, 0.2, 0.4);
  const MeasureIbpResult r = run_measure(*m, grid, 128, 24, "linear", 27);
  const double gamma = std::exp(-0.2) - std::exp(-0.5);
  CHECK(r.lhs_gamma[0].mean == doctest::Approx(gamma).epsilon(5e-3));
  CHECK(r.lhs_gamma[0].se <= 1e-10);
  CHECK(within(r.rhs[0], r.lhs_gamma[0].mean));
  CHECK(agree(r.lhs_fd[0], r.lhs_gamma[0], 0.05, gamma));
}

TEST_CASE("measure IBP, tanh chain-rule and bump estimators agree") {
  const TimeGrid grid{1.0, 16};
  const auto m = tanh_model(0.0, 0.2, 0.5);
  const MeasureIbpResult r = run_measure(*m, grid, 256, 12, "sin", 28);
  CHECK(agree(r.lhs_gamma[0], r.lhs_fd[0], 0.05, r.lhs_gamma[0].mean));
}

TEST_CASE("measure IBP refusals") {
  const TimeGrid grid{1.0, 8};
  MeasureIbpOptions opt;
  opt.v = {0.0};
  const NoiseBundle nb = generate(grid, 40, 1, 1, 29);
  const auto init = gaussian_init(40, 1, 29);
  try {
    measure_ibp_rep(*linear_model(-0.5, 0.3, 0.0, 0.4), init, nb, 29, test_function("linear"), opt);
    FAIL("expected EllipticityFailure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EllipticityFailure);
  }
  opt.max_direction_reruns = 16;
  try {
    measure_ibp_rep(*tanh_model(0.3, 0.2), init, nb, 29, test_function("sin"), opt);
    FAIL("expected UnsupportedSize");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnsupportedSize);
  }
}

TEST_CASE("state-dependent common diffusion runs one rerun pair per particle") {
  const TimeGrid grid{1.0, 8};
  MeasureIbpOptions opt;
  opt.v = {0.0};
  const NoiseBundle nb = generate(grid, 12, 1, 1, 30);
  const MeasureIbpSample s =
      measure_ibp_rep(*tanh_model(0.3, 0.2), gaussian_init(12, 1, 30), nb, 30, test_function("sin"), opt);
  CHECK(std::isfinite(s.rhs[0]));
  CHECK(std::isfinite(s.lhs_gamma[0]));
}

TEST_CASE("representation profile on the linear model matches its closed form") {
  // D0_r X_T = s0 e^{(a+c)(T-r)} and h(r) = (Psi_T - Psi_r + Gamma_r) / s0 with
  // Psi_t = c (e^{at} - 1) / a and Gamma_r = e^{(a+c)r} - e^{ar}.
  const double a = -0.5, c = 0.3, T = 1.0;
  const TimeGrid grid{T, 1 << 10};
  const auto m = linear_model(a, c, 0.2, 0.4);
  const NoiseBundle nb = generate(grid, 4, 1, 1, 31);
  const Trajectory tr = simulate_ips(*m, nb, gaussian_init(4, 1, 31));
  const LionsRun run = run_lions_tangent(*m, tr, nb, pilot_noise_for(nb, 1, 31), {0.0}, true);
  const auto q = representation_profile(*m, tr, nb, run, 1, 1e-9);
  auto closed = [&](double r) {
    const double psi = [&](double t) { return c * (std::exp(a * t) - 1) / a; }(T) - c * (std::exp(a * r) - 1) / a;
    return std::exp((a + c) * (T - r)) * (psi + std::exp((a + c) * r) - std::exp(a * r));
  };
  CHECK(closed(0.0) == doctest::Approx(0.1933).epsilon(1e-3));
  for (int k = 0; k < grid.K; k += 64) CHECK(q[k](0, 0) == doctest::Approx(closed(grid.node(k))).epsilon(5e-3));
  CHECK(q[grid.K - 1](0, 0) == doctest::Approx(std::exp(-0.2) - std::exp(-0.5)).epsilon(5e-3));
}
