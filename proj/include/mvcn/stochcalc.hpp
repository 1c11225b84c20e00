#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mvcn/noise.hpp"

namespace mvcn {

/// Neumaier compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) noexcept;
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Integrand sampled at the left endpoints t_k, k < K: K x dim values, row k
/// measurable with respect to the information up to t_k (caller-asserted).
struct AdaptedIntegrand {
  int K = 0;
  int dim = 1;
  std::vector<double> values;

  static AdaptedIntegrand constant(int K, int dim, double value);
  std::span<const double> row(int k) const noexcept {
    return {values.data() + static_cast<std::size_t>(k) * dim, static_cast<std::size_t>(dim)};
  }
};

/// sum_k <u(t_k), dW_k> for increments stored K x dim. LengthMismatch when
/// the shapes disagree.
double ito_integral(const AdaptedIntegrand& u, std::span<const double> increments);

/// Integrand F * A(r) with a scalar terminal factor F (not adapted) and an
/// adapted A. The correction needs <DF, A>: either dF on the grid (K x dim),
/// or the aggregate pairing when it was obtained directly (a directional
/// bump along A). With neither, F must be flagged deterministic.
struct FactoredIntegrand {
  double F = 0.0;
  AdaptedIntegrand A;
  std::optional<std::vector<double>> dF;
  std::optional<double> dF_pairing;
  bool deterministic = false;
};

/// delta(F A) = F * int A dW - sum_k <dF(t_k), A(t_k)> dt.
double skorokhod_factored(const FactoredIntegrand& f, std::span<const double> increments, double dt);

/// Pathwise pairing sum_k <DF(t_k), h'(t_k)> dt of a derivative sampled on the grid.
double pairing(std::span<const double> DF, std::span<const double> hprime, double dt);

using NoiseFunctional = std::function<double(const NoiseBundle&)>;

/// Central difference (F(W + eps h) - F(W - eps h)) / (2 eps) along the common noise.
double fd_directional(const NoiseFunctional& F, const NoiseBundle& bundle, const CameronMartinDirection& h,
                      double eps);

/// Increments as a flat K x m0 span, the argument form expected above.
inline std::span<const double> common_increments(const NoiseBundle& nb) { return nb.dW0; }

}  // namespace mvcn
