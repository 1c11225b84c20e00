#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mvcn/tangent.hpp"

namespace mvcn {

struct EllipticityReport {
  double min_eigen = 0.0;
  double delta_required = 0.0;
  bool pass = false;
  Coef which = Coef::Sigma0;
};

/// Smallest eigenvalue of sigma sigma^T (family `which`) over every state
/// visited by `traj`, each against the trajectory's own measure at that step.
EllipticityReport check_ellipticity(const CoefficientSet& model, Coef which, const Trajectory& traj, double delta);
/// Same against an explicit frozen law (pilots of a decoupled system).
EllipticityReport check_ellipticity(const CoefficientSet& model, Coef which, const Trajectory& carriers,
                                    const Trajectory& law, double delta);

/// sigma^T (sigma sigma^T)^{-1} through a symmetric eigendecomposition.
/// Eigenvalues below floor raise EllipticityFailure.
Eigen::MatrixXd right_pseudo_inverse(const Eigen::MatrixXd& sigma, double floor);

/// Test function with analytic gradient.
struct TestFunction {
  std::string name;
  std::function<double(Vec)> f;
  std::function<void(Vec, MutVec)> grad;
};

/// Catalog: "linear" (sum of coordinates), "sin" (sum of sines),
/// "indicator" (logistic step in the coordinate sum, width 0.25).
TestFunction test_function(const std::string& name);

/// Mean with its standard error.
struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

/// Running mean/variance (Welford) over samples, combined in a fixed order.
class SampleStats {
 public:
  void add(double x) noexcept;
  std::size_t count() const noexcept { return n_; }
  Estimate estimate() const noexcept;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// ---------------------------------------------------------------------------
// Spatial integration by parts against the idiosyncratic noise.

struct SpatialIbpOptions {
  std::vector<double> x;    // pilot start
  std::vector<double> phi;  // weight Phi in R^d
  int pilots = 10000;
  std::uint64_t pilot_seed = 1;
  double delta = 1e-8;
};

struct SpatialIbpResult {
  Estimate lhs;
  Estimate rhs;
};

/// Conditionally on the common path of `cloud_noise`: decoupled pilots from
/// x under the cloud's law, lhs = mean grad f(X_T) w_T Phi and
/// rhs = (1/T) mean f(X_T) int (g(r) Phi) dW1 with g = sigma1^+ w.
SpatialIbpResult spatial_ibp(const CoefficientSet& model, const Trajectory& cloud, const NoiseBundle& cloud_noise,
                             const TestFunction& f, const SpatialIbpOptions& opt);

// ---------------------------------------------------------------------------
// Integration by parts in the measure argument against the common noise.

/// Weight pieces for one particle: A(r) = sigma0^+(r) for r < T (K x m0 x d)
/// and h(r) = A(r) (Psi_T - Psi_r + Gamma_r) (K x m0 x d).
struct MeasureWeight {
  std::vector<Eigen::MatrixXd> A;
  std::vector<Eigen::MatrixXd> h;
};

MeasureWeight build_weight_h(const CoefficientSet& model, const Trajectory& cloud, const LionsRun& run, int i,
                             double floor);
/// g(r) = sigma1^+(r, X_r, mu_r) w_r for pilot p (K entries, m x d each).
std::vector<Eigen::MatrixXd> build_weight_g(const CoefficientSet& model, const Trajectory& pilots,
                                            const Trajectory& law, const std::vector<TangentBlock>& w_hist, int p,
                                            double floor);

struct MeasureIbpOptions {
  std::vector<double> v;
  int pilots = 8;                  // decoupled pilots averaged in the source
  double eps_fd = 1e-3;            // initial-law bump size
  double bump_width = 0.25;        // width of the localised bump around v
  double eps_skorokhod = 1e-4;     // common-noise bump for the factor derivative
  double delta = 1e-8;
  int max_direction_reruns = 64;   // per-particle directions allowed when sigma0 is state dependent
  bool duality = true;             // also report the pathwise pairing (1/T) <D f(X_T), h>
  KernelPath path = KernelPath::Auto;
};

/// Per-repetition values, each a particle average, one entry per component l.
struct MeasureIbpSample {
  std::vector<double> lhs_gamma, lhs_fd, rhs, duality;
  std::vector<double> se_gamma, se_fd, se_rhs, se_duality;  // within-repetition standard errors
};

/// One common-noise repetition of the three estimators.
MeasureIbpSample measure_ibp_rep(const CoefficientSet& model, Vec init, const NoiseBundle& cloud_noise,
                                 std::uint64_t pilot_seed, const TestFunction& f, const MeasureIbpOptions& opt);

struct MeasureIbpResult {
  std::vector<Estimate> lhs_gamma, lhs_fd, rhs, duality;
  int reps = 0;
};

/// Average repetitions; standard errors come from the spread across
/// repetitions when there are at least two, else from the within-repetition
/// particle spread.
MeasureIbpResult combine(const std::vector<MeasureIbpSample>& samples);

/// |a - b| <= rel |scale| + 3 sqrt(se_a^2 + se_b^2).
bool agree(const Estimate& a, const Estimate& b, double rel, double scale);

/// D0_r X_T h(r) for particle i on the grid (K entries, d x d each); the
/// lemma's representation claims it equals Gamma_T for every r.
std::vector<Eigen::MatrixXd> representation_profile(const CoefficientSet& model, const Trajectory& cloud,
                                                    const NoiseBundle& cloud_noise, const LionsRun& run, int i,
                                                    double floor);

}  // namespace mvcn
