// The measure-IBP weight h(r) is built so that D0_r X_T h(r) should equal
// Gamma_T for every r. On the linear model the product has the closed form
// e^{(a+c)(T-r)} (Psi_T - Psi_r + Gamma_r), which equals Gamma_T only at
// r = T: at r = 0 it is 0.1933 against 0.2122. This case checks the claim as
// stated and is expected to fail; test_ibp.cpp pins the profile instead.

#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "mvcn/ibp.hpp"

using namespace mvcn;
using namespace mvcn::test;

TEST_CASE("representation D0_r X_T h(r) is r-independent and equals Gamma_T") {
  const TimeGrid grid{1.0, 1 << 12};
  const auto m = linear_model(-0.5, 0.3, 0.2, 0.4);
  const NoiseBundle nb = generate(grid, 2, 1, 1, 41);
  const Trajectory tr = simulate_ips(*m, nb, gaussian_init(2, 1, 41));
  const LionsRun run = run_lions_tangent(*m, tr, nb, pilot_noise_for(nb, 1, 41), {0.0}, true);
  const auto q = representation_profile(*m, tr, nb, run, 0, 1e-9);
  const double gamma_T = run.lt.gamma.at(0, 0, 0);
  double worst = 0.0;
  int worst_k = 0;
  for (int k = 0; k < grid.K; ++k) {
    const double rel = std::abs(q[k](0, 0) / gamma_T - 1.0);
    if (rel > worst) {
      worst = rel;
      worst_k = k;
    }
  }
  INFO("Gamma_T = " << gamma_T << ", worst r = " << grid.node(worst_k) << " with value " << q[worst_k](0, 0));
  CHECK(worst <= 1e-3);
}
