#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "mvcn/errors.hpp"

using namespace mvcn;
using namespace mvcn::test;

namespace {

std::vector<double> pts(std::initializer_list<double> xs) { return std::vector<double>(xs); }

}  // namespace

TEST_CASE("constant model evaluates to its diffusions and no drift") {
  const auto m = constant_model(0.2, 0.4);
  const auto mu_pts = pts({-3.0, 5.0});
  const EmpiricalMeasure mu(mu_pts, 1);
  const auto x = pts({1.7});
  const CoefficientValues v = eval_coefficients(*m, 0.3, x, mu);
  CHECK(v.b(0) == 0.0);
  CHECK(v.sigma0(0, 0) == 0.2);
  CHECK(v.sigma1(0, 0) == 0.4);
}

TEST_CASE("linear mean-field drift by hand") {
  const auto m = linear_model(-0.5, 0.3);
  {
    const auto mu_pts = pts({2.0});
    const auto x = pts({1.0});
    CHECK(eval_coefficients(*m, 0.0, x, EmpiricalMeasure(mu_pts, 1)).b(0) == doctest::Approx(0.1).epsilon(1e-15));
  }
  {
    const auto mu_pts = pts({0.0, 2.0});
    const auto x = pts({0.0});
    CHECK(eval_coefficients(*m, 0.0, x, EmpiricalMeasure(mu_pts, 1)).b(0) == doctest::Approx(0.3).epsilon(1e-15));
  }
}

TEST_CASE("linear and constant derivatives") {
  const auto mu_pts = pts({0.5, -1.0, 2.0});
  const EmpiricalMeasure mu(mu_pts, 1);
  const auto x = pts({0.7});
  for (double y : {-4.0, 0.0, 9.0}) {
    const auto yv = pts({y});
    const DerivativeValues lin = eval_derivatives(*linear_model(-0.5, 0.3), 0.0, x, mu, yv);
    CHECK(lin.grad_b(0, 0) == -0.5);
    CHECK(lin.lions_b(0, 0) == 0.3);
    const DerivativeValues con = eval_derivatives(*constant_model(), 0.0, x, mu, yv);
    CHECK(con.grad_b.norm() == 0.0);
    CHECK(con.lions_b.norm() == 0.0);
    CHECK(con.grad_sigma0[0].norm() == 0.0);
    CHECK(con.lions_sigma1[0].norm() == 0.0);
  }
}

TEST_CASE("tanh Lions derivative at the diagonal of a singleton measure") {
  TanhInteractionParams p;
  p.a = scalar(0.0);
  p.c = scalar(1.0);
  p.kappa = 1.0;
  p.s0 = scalar(0.3);
  p.s1 = scalar(0.4);
  const auto m = make_model(p);
  const auto x = pts({0.4});
  const EmpiricalMeasure mu(x, 1);
  const DerivativeValues dv = eval_derivatives(*m, 0.0, x, mu, x);
  CHECK(dv.lions_b(0, 0) == doctest::Approx(-1.0).epsilon(1e-14));

  // Oracle: move the single particle y while keeping x fixed.
  const double h = 1e-6;
  auto b_at = [&](double y) {
    const auto yp = pts({y});
    return eval_coefficients(*m, 0.0, x, EmpiricalMeasure(yp, 1)).b(0);
  };
  const double fd = (b_at(0.4 + h) - b_at(0.4 - h)) / (2 * h);
  CHECK(fd == doctest::Approx(-1.0).epsilon(1e-8));
}

TEST_CASE("Lipschitz self-check") {
  CHECK(lipschitz_selfcheck(*constant_model(), 200, 1).max_ratio == 0.0);
  CHECK(lipschitz_selfcheck(*constant_model(), 200, 1).pass);
  CHECK(lipschitz_selfcheck(*linear_model(-0.5, 0.3, 0.2, 0.4, 0.8), 500, 2).pass);
  const LipschitzReport bad = lipschitz_selfcheck(*linear_model(-0.5, 0.3, 0.2, 0.4, 0.1), 500, 2);
  CHECK_FALSE(bad.pass);
  CHECK(bad.max_ratio > 0.1 * 1.01);
  CHECK(lipschitz_selfcheck(*tanh_model(), 500, 3).pass);
  CHECK(lipschitz_selfcheck(*tanh_model_2d(), 500, 4).pass);
}

TEST_CASE("property: analytic Jacobians match central differences of the coefficients") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 1.5);
  const std::vector<std::shared_ptr<CoefficientSet>> models{linear_model(), constant_model(), tanh_model(),
                                                            tanh_model_2d()};
  const double h = 1e-5;
  int checked = 0;
  for (const auto& m : models) {
    const int d = m->dims().d;
    for (int sample = 0; sample < 250; ++sample) {
      const double t = std::abs(g(rng));
      std::vector<double> x(d), mu_pts(5 * d);
      for (auto& e : x) e = g(rng);
      for (auto& e : mu_pts) e = g(rng);
      const EmpiricalMeasure mu(mu_pts, d);
      const DerivativeValues dv = eval_derivatives(*m, t, x, mu, mu.point(0));
      for (int l = 0; l < d; ++l) {
        auto xp = x, xm = x;
        xp[l] += h;
        xm[l] -= h;
        const CoefficientValues p = eval_coefficients(*m, t, xp, mu), q = eval_coefficients(*m, t, xm, mu);
        const Eigen::VectorXd fd_b = (p.b - q.b) / (2 * h);
        for (int k = 0; k < d; ++k) {
          CHECK(std::abs(fd_b(k) - dv.grad_b(k, l)) <= 1e-4 * std::max(1.0, std::abs(dv.grad_b(k, l))));
          for (int j = 0; j < m->dims().m0; ++j) {
            const double fd = (p.sigma0(k, j) - q.sigma0(k, j)) / (2 * h);
            CHECK(std::abs(fd - dv.grad_sigma0[j](k, l)) <= 1e-4 * std::max(1.0, std::abs(fd)));
          }
          for (int j = 0; j < m->dims().m; ++j) {
            const double fd = (p.sigma1(k, j) - q.sigma1(k, j)) / (2 * h);
            CHECK(std::abs(fd - dv.grad_sigma1[j](k, l)) <= 1e-4 * std::max(1.0, std::abs(fd)));
          }
        }
        ++checked;
      }
    }
  }
  CHECK(checked == 250 * (1 + 1 + 1 + 2));
}

TEST_CASE("property: Lions kernel equals N times the particle gradient of the empirical projection") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> g(0.0, 1.0);
  for (const auto& m : std::vector<std::shared_ptr<CoefficientSet>>{linear_model(), tanh_model(), tanh_model_2d()}) {
    const int d = m->dims().d;
    const int N = 7;
    for (int sample = 0; sample < 40; ++sample) {
      std::vector<double> x(d), mu_pts(N * d);
      for (auto& e : x) e = g(rng);
      for (auto& e : mu_pts) e = g(rng);
      const int j = sample % N;
      const DerivativeValues dv = eval_derivatives(*m, 0.1, x, EmpiricalMeasure(mu_pts, d), {mu_pts.data() + j * d,
                                                                                             static_cast<std::size_t>(d)});
      const double h = 1e-5;
      for (int l = 0; l < d; ++l) {
        auto up = mu_pts, dn = mu_pts;
        up[j * d + l] += h;
        dn[j * d + l] -= h;
        const Eigen::VectorXd fd = (eval_coefficients(*m, 0.1, x, EmpiricalMeasure(up, d)).b -
                                    eval_coefficients(*m, 0.1, x, EmpiricalMeasure(dn, d)).b) /
                                   (2 * h);
        for (int k = 0; k < d; ++k) {
          const double want = dv.lions_b(k, l) / N;
          CHECK(std::abs(fd(k) - want) <= 1e-4 * std::max(std::abs(want), 1e-3));
        }
      }
    }
  }
}

TEST_CASE("linear model attains its derivative bound exactly") {
  const auto m = linear_model(-0.5, 0.3);
  const auto mu_pts = pts({1.0, 2.0});
  const auto x = pts({0.0});
  const DerivativeValues dv = eval_derivatives(*m, 0.0, x, EmpiricalMeasure(mu_pts, 1), x);
  CHECK(dv.lions_b.norm() == doctest::Approx(0.3));
  CHECK(m->traits().derivative_bound >= dv.lions_b.norm());
  CHECK(m->traits().derivative_bound >= dv.grad_b.norm());
}

TEST_CASE("evaluation errors") {
  const auto m = linear_model();
  const auto mu_pts = pts({0.0});
  const EmpiricalMeasure mu(mu_pts, 1);
  const auto nan_x = pts({std::nan("")});
  CHECK_THROWS_AS(eval_coefficients(*m, 0.0, nan_x, mu), Error);
  try {
    eval_coefficients(*m, 0.0, nan_x, mu);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFiniteInput);
  }
  const auto wide = pts({0.0, 1.0});
  try {
    eval_coefficients(*m, 0.0, wide, mu);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("callback model without derivatives simulates but cannot be differentiated") {
  FunctionModelSpec spec;
  spec.dims = Dims{1, 1, 1};
  spec.drift = [](double, Vec x, const EmpiricalMeasure& mu, MutVec out) { out[0] = -x[0] + 0.1 * mu.mean()[0]; };
  spec.sigma0 = [](double, Vec, const EmpiricalMeasure&, MutVec out) { out[0] = 0.2; };
  spec.sigma1 = [](double, Vec, const EmpiricalMeasure&, MutVec out) { out[0] = 0.3; };
  const auto m = make_function_model(spec);
  CHECK_FALSE(m->traits().has_derivatives);
  const TimeGrid grid{1.0, 8};
  const NoiseBundle nb = generate(grid, 4, 1, 1, 3);
  const auto init = gaussian_init(4, 1, 3);
  CHECK_NOTHROW(simulate_ips(*m, nb, init));
  const auto x = pts({0.0});
  try {
    eval_derivatives(*m, 0.0, x, EmpiricalMeasure(x, 1), x);
    FAIL("expected DerivativeUnavailable");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DerivativeUnavailable);
  }
}
