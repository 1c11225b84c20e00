#include "mvcn/stochcalc.hpp"

#include <cmath>

#include "mvcn/errors.hpp"

namespace mvcn {

void CompensatedSum::add(double x) noexcept {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    comp_ += (sum_ - t) + x;
  } else {
    comp_ += (x - t) + sum_;
  }
  sum_ = t;
}

AdaptedIntegrand AdaptedIntegrand::constant(int K, int dim, double value) {
  AdaptedIntegrand u;
  u.K = K;
  u.dim = dim;
  u.values.assign(static_cast<std::size_t>(K) * dim, value);
  return u;
}

double ito_integral(const AdaptedIntegrand& u, std::span<const double> increments) {
  if (u.values.size() != static_cast<std::size_t>(u.K) * u.dim || increments.size() != u.values.size()) {
    fail(ErrorKind::LengthMismatch, "integrand and increments have different lengths");
  }
  CompensatedSum acc;
  for (std::size_t q = 0; q < u.values.size(); ++q) {
    if (!std::isfinite(u.values[q])) fail(ErrorKind::NonFiniteInput, "integrand is not finite");
    acc.add(u.values[q] * increments[q]);
  }
  return acc.value();
}

double skorokhod_factored(const FactoredIntegrand& f, std::span<const double> increments, double dt) {
  const double ito = ito_integral(f.A, increments);
  if (f.dF_pairing) return f.F * ito - *f.dF_pairing;
  if (!f.dF) {
    if (!f.deterministic) fail(ErrorKind::MissingDerivative, "terminal factor is random but has no derivative");
    return f.F * ito;
  }
  return f.F * ito - pairing(*f.dF, f.A.values, dt);
}

double pairing(std::span<const double> DF, std::span<const double> hprime, double dt) {
  if (DF.size() != hprime.size()) fail(ErrorKind::LengthMismatch, "derivative and direction have different lengths");
  CompensatedSum acc;
  for (std::size_t q = 0; q < DF.size(); ++q) acc.add(DF[q] * hprime[q]);
  return acc.value() * dt;
}

double fd_directional(const NoiseFunctional& F, const NoiseBundle& bundle, const CameronMartinDirection& h,
                      double eps) {
  if (!(eps > 0.0)) fail(ErrorKind::Config, "finite-difference step must be positive");
  return (F(bump_common(bundle, h, eps)) - F(bump_common(bundle, h, -eps))) / (2.0 * eps);
}

}  // namespace mvcn
