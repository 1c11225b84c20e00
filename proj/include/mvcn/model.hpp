#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "mvcn/measure.hpp"

namespace mvcn {

/// State dimension d, common-noise dimension m0, idiosyncratic dimension m.
struct Dims {
  int d = 1;
  int m0 = 1;
  int m = 1;

  void validate() const;
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// The three coefficient families of the dynamics.
enum class Coef { Drift = 0, Sigma0 = 1, Sigma1 = 2 };

struct ModelTraits {
  std::string name;
  double lipschitz_L = 0.0;
  double derivative_bound = 0.0;
  // Every Lions kernel factors as left(t,x,mu) * right(t,mu,y).
  bool separable = false;
  bool has_derivatives = true;
  // sigma0 depends on neither x nor mu.
  bool sigma0_state_independent = false;
  // Lions kernel of the family is identically zero (indexed by Coef).
  std::array<bool, 3> lions_vanish{false, false, false};
};

/// Coefficients (b, sigma0, sigma1) of a McKean-Vlasov SDE with common noise,
/// with their spatial Jacobians and Lions derivatives.
///
/// Matrices are row-major. sigma0 is d x m0, sigma1 is d x m. For a sigma
/// family, `col` selects the column whose Jacobian / Lions kernel is wanted;
/// it is ignored for the drift. Jacobians are J_{kl} = d b_k / d x_l and Lions
/// kernels follow the same layout: entry (k, l) is the sensitivity of
/// component k to moving mass at y in direction l.
///
/// All evaluations are pure and may be called concurrently.
class CoefficientSet {
 public:
  CoefficientSet(Dims dims, ModelTraits traits);
  virtual ~CoefficientSet() = default;

  const Dims& dims() const noexcept { return dims_; }
  const ModelTraits& traits() const noexcept { return traits_; }
  int columns(Coef c) const noexcept;

  virtual void drift(double t, Vec x, const EmpiricalMeasure& mu, MutVec out) const = 0;
  virtual void sigma0(double t, Vec x, const EmpiricalMeasure& mu, MutVec out) const = 0;
  virtual void sigma1(double t, Vec x, const EmpiricalMeasure& mu, MutVec out) const = 0;
  void sigma(Coef c, double t, Vec x, const EmpiricalMeasure& mu, MutVec out) const;

  /// d x d Jacobian in x. Throws DerivativeUnavailable unless overridden.
  virtual void grad_x(Coef c, int col, double t, Vec x, const EmpiricalMeasure& mu, MutVec out) const;
  /// d x d Lions kernel d_mu coef(t, x, mu)(y). Throws DerivativeUnavailable unless overridden.
  virtual void lions(Coef c, int col, double t, Vec x, const EmpiricalMeasure& mu, Vec y, MutVec out) const;
  /// Factors of a separable Lions kernel: lions = left(t,x,mu) * right(t,mu,y).
  virtual void lions_left(Coef c, int col, double t, Vec x, const EmpiricalMeasure& mu, MutVec out) const;
  virtual void lions_right(Coef c, int col, double t, const EmpiricalMeasure& mu, Vec y, MutVec out) const;

  // Optional specialised kernels. They return false when not provided, in
  // which case the generic kernels in kernels.hpp fall back to pointwise calls.

  /// Drift at each row of `xs` (n x d) against `mu`.
  virtual bool drift_batch_fast(double t, const EmpiricalMeasure& mu, Vec xs, MutVec out) const;
  /// Drift Jacobian at each row of `xs`; out is n x d x d.
  virtual bool grad_drift_batch_fast(double t, const EmpiricalMeasure& mu, Vec xs, MutVec out) const;
  /// out_i = sum_k w_k lions(c, col, t, x_i, mu, y_k) T_k for support points y_k
  /// with weights w_k and tangents T_k (d x p each).
  virtual bool coupling_fast(Coef c, int col, double t, const EmpiricalMeasure& mu,
                             const EmpiricalMeasure& support, Vec tangents, int p, Vec xs,
                             MutVec out) const;

 protected:
  ModelTraits& mutable_traits() noexcept { return traits_; }

 private:
  Dims dims_;
  ModelTraits traits_;
};

// ---------------------------------------------------------------------------
// Builtin families used as oracles.

struct ConstantParams {
  Eigen::MatrixXd s0;  // d x m0
  Eigen::MatrixXd s1;  // d x m
};

/// b = a x + c mean(mu), constant diffusions.
struct LinearMeanFieldParams {
  Eigen::MatrixXd a;   // d x d
  Eigen::MatrixXd c;   // d x d
  Eigen::MatrixXd s0;  // d x m0
  Eigen::MatrixXd s1;  // d x m
  double lipschitz = -1.0;  // negative: use ||a|| + ||c||
};

/// b_k = (a x)_k + sum_l c_kl  int tanh(kappa (x_l - y_l)) mu(dy);
/// sigma0_kj = s0_kj (1 + beta0 tanh(x_k)), likewise sigma1 with beta1.
struct TanhInteractionParams {
  Eigen::MatrixXd a;
  Eigen::MatrixXd c;
  double kappa = 1.0;
  Eigen::MatrixXd s0;
  Eigen::MatrixXd s1;
  double beta0 = 0.0;
  double beta1 = 0.0;
  double lipschitz = -1.0;
};

using BuiltinModel = std::variant<ConstantParams, LinearMeanFieldParams, TanhInteractionParams>;

std::unique_ptr<CoefficientSet> make_model(const BuiltinModel& spec);

/// Model assembled from callbacks. Derivative callbacks are optional; without
/// them the model can be simulated forward but not differentiated.
struct FunctionModelSpec {
  using ValueFn = std::function<void(double, Vec, const EmpiricalMeasure&, MutVec)>;
  using GradFn = std::function<void(Coef, int, double, Vec, const EmpiricalMeasure&, MutVec)>;
  using LionsFn = std::function<void(Coef, int, double, Vec, const EmpiricalMeasure&, Vec, MutVec)>;

  Dims dims;
  std::string name = "user";
  double lipschitz_L = 1.0;
  double derivative_bound = 1.0;
  ValueFn drift, sigma0, sigma1;
  GradFn grad_x;
  LionsFn lions;
  bool sigma0_state_independent = false;
};

std::unique_ptr<CoefficientSet> make_function_model(FunctionModelSpec spec);

// ---------------------------------------------------------------------------
// Operations.

struct CoefficientValues {
  Eigen::VectorXd b;
  Eigen::MatrixXd sigma0;
  Eigen::MatrixXd sigma1;
};

/// Evaluate (b, sigma0, sigma1) with shape and finiteness checks.
CoefficientValues eval_coefficients(const CoefficientSet& model, double t, Vec x, const EmpiricalMeasure& mu);

struct DerivativeValues {
  Eigen::MatrixXd grad_b;
  Eigen::MatrixXd lions_b;
  std::vector<Eigen::MatrixXd> grad_sigma0, lions_sigma0;
  std::vector<Eigen::MatrixXd> grad_sigma1, lions_sigma1;
};

DerivativeValues eval_derivatives(const CoefficientSet& model, double t, Vec x, const EmpiricalMeasure& mu, Vec y);

struct LipschitzReport {
  double max_ratio = 0.0;
  bool pass = true;
};

/// Samples pairs (x, mu), (y, nu) and compares coefficient increments against
/// lipschitz_L * (|x - y| + W2(mu, nu)) with 1% slack.
LipschitzReport lipschitz_selfcheck(const CoefficientSet& model, int sample_count, std::uint64_t seed);

}  // namespace mvcn
