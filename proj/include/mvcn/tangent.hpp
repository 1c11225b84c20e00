#pragma once

#include <iosfwd>
#include <vector>

#include "mvcn/engine.hpp"

namespace mvcn {

/// n per-carrier d x p matrices, row-major, carrier-major.
struct TangentBlock {
  int n = 0;
  int d = 1;
  int p = 1;
  std::vector<double> data;

  TangentBlock() = default;
  TangentBlock(int n_, int d_, int p_) : n(n_), d(d_), p(p_), data(static_cast<std::size_t>(n_) * d_ * p_, 0.0) {}

  std::size_t stride() const noexcept { return static_cast<std::size_t>(d) * p; }
  Vec mat(int i) const noexcept { return {data.data() + i * stride(), stride()}; }
  MutVec mat(int i) noexcept { return {data.data() + i * stride(), stride()}; }
  double& at(int i, int r, int c) noexcept { return data[i * stride() + static_cast<std::size_t>(r) * p + c]; }
  double at(int i, int r, int c) const noexcept { return data[i * stride() + static_cast<std::size_t>(r) * p + c]; }
};

/// Coefficient linearisation of one Euler step for a set of carriers at grid
/// index k: spatial Jacobians of every coefficient column, plus the step's
/// increments. Built once and applied to any number of tangent blocks.
class LinearizedStep {
 public:
  /// Carrier i reads idiosyncratic row row_offset + i of `noise`.
  LinearizedStep(const CoefficientSet& model, const NoiseBundle& noise, int k, const EmpiricalMeasure& mu, Vec xs,
                 int row_offset, KernelPath path = KernelPath::Auto);

  /// T <- T + (grad b T + cpl_b) dt + sum_j (grad s0_j T + cpl_s0_j) dW0_j
  ///          + sum_j (grad s1_j T + cpl_s1_j) dW1_ij,
  /// where the coupling terms cpl are present only when `coupled`, in which
  /// case the carriers must be the particles of the measure itself.
  void propagate(TangentBlock& T, bool coupled) const;

  /// Source term: the coupling sums against a foreign support (y_k, w_k) with
  /// tangents S (d x p each), integrated against dt, dW0 and dW1 exactly as
  /// in propagate. out is added to.
  void add_source(const EmpiricalMeasure& support, const TangentBlock& S, TangentBlock& out) const;

  int carriers() const noexcept { return n_; }

 private:
  void couple(Coef c, int col, const EmpiricalMeasure& support, const TangentBlock& S, std::vector<double>& buf) const;

  const CoefficientSet& model_;
  const NoiseBundle& noise_;
  int k_;
  EmpiricalMeasure mu_;
  Vec xs_;
  int row_offset_;
  KernelPath path_;
  int n_;
  double t_, dt_;
  std::vector<double> grad_b_;
  std::vector<std::vector<double>> grad_s0_, grad_s1_;
};

// ---------------------------------------------------------------------------
// Common-noise Malliavin derivative D0_s X^{i,N}_t of the particle system.

struct TangentD0 {
  std::vector<int> s_indices;  // strictly increasing
  TangentBlock block;          // N x d x (S m0); column block q belongs to s_indices[q]
  int time_index = -1;         // -1: not initialised
  std::vector<double> sup_norm2;  // per (q, i): sup over t of |D0_s X_t^i|^2

  int S() const noexcept { return static_cast<int>(s_indices.size()); }
};

/// 16 equispaced indices in [0, K), or every index when K <= 512.
std::vector<int> default_s_indices(int K);

/// Set every block whose s equals the trajectory's start index (the smallest
/// s) to sigma0(t_s, X_s, mu_s); later blocks start when the run reaches them.
TangentD0 init_tangent_d0(const CoefficientSet& model, const Trajectory& traj, std::vector<int> s_indices);
/// Advance from index k to k + 1 (k must equal the tangent's time index).
void step_tangent_d0(const CoefficientSet& model, const Trajectory& traj, const NoiseBundle& noise, TangentD0& tg,
                     KernelPath path = KernelPath::Auto);
/// Run to the terminal index.
TangentD0 run_tangent_d0(const CoefficientSet& model, const Trajectory& traj, const NoiseBundle& noise,
                         std::vector<int> s_indices, KernelPath path = KernelPath::Auto);

/// Pathwise directional derivative sum_k D0_{t_k} X_T h'_k dt for every
/// particle, by superposition of sigma0(t_k) h'_k dt sources in one sweep.
/// Returns N x d x 1.
TangentBlock run_d0_directional(const CoefficientSet& model, const Trajectory& traj, const NoiseBundle& noise,
                                const CameronMartinDirection& h, KernelPath path = KernelPath::Auto);

// ---------------------------------------------------------------------------
// Idiosyncratic Malliavin derivative D1_s X_t with respect to W^{1,owner}.

enum class D1Mode {
  Limit,     // owner only, no measure coupling (the limit equation)
  ExactIps,  // every particle, coupled; others start at zero
};

struct TangentD1 {
  int owner = 0;
  int s_index = 0;
  D1Mode mode = D1Mode::Limit;
  TangentBlock block;  // 1 x d x m (Limit) or N x d x m (ExactIps)
  int time_index = -1;
};

TangentD1 init_tangent_d1(const CoefficientSet& model, const Trajectory& traj, int owner, int s_index, D1Mode mode);
void step_tangent_d1(const CoefficientSet& model, const Trajectory& traj, const NoiseBundle& noise, TangentD1& tg,
                     KernelPath path = KernelPath::Auto);
/// Runs up to end_index (-1: the terminal index). For s_index > end_index the
/// derivative is the zero matrix by convention and no stepping happens.
TangentD1 run_tangent_d1(const CoefficientSet& model, const Trajectory& traj, const NoiseBundle& noise, int owner,
                         int s_index, D1Mode mode, int end_index = -1, KernelPath path = KernelPath::Auto);
/// Pathwise directional derivative sum_k D1_{t_k} X_T h'_k dt of the whole
/// coupled system along a bump of the owner's idiosyncratic path. N x d x 1.
TangentBlock run_d1_directional(const CoefficientSet& model, const Trajectory& traj, const NoiseBundle& noise,
                                int owner, const CameronMartinDirection& h, KernelPath path = KernelPath::Auto);
/// Value of D1_s X_t at the block's current time for particle i.
Eigen::MatrixXd d1_value(const TangentD1& tg, int i);

// ---------------------------------------------------------------------------
// First variation w_t = grad_x X_t^{x,[xi]} of decoupled pilots.

struct FirstVariation {
  TangentBlock block;  // P x d x d
  int time_index = -1;
};

FirstVariation init_first_variation(int P, int d, int start_index = 0);
/// `pilots` are frozen-law trajectories against `law`; their idiosyncratic
/// rows are rows 0..P-1 of `pilot_noise`.
void step_first_variation(const CoefficientSet& model, const Trajectory& pilots, const Trajectory& law,
                          const NoiseBundle& pilot_noise, FirstVariation& fv, KernelPath path = KernelPath::Auto);

// ---------------------------------------------------------------------------
// Lions tangent Gamma_t(v) = d_mu X_t(v) with its source Psi_t.

/// P decoupled pilot particles started at v, sharing the cloud's common
/// increments and carrying their own idiosyncratic streams.
struct PilotSet {
  std::vector<double> v;
  NoiseBundle noise;
  Trajectory traj;
};

/// Fresh pilot streams (family Pilot) with dW0 copied from `cloud_noise`.
NoiseBundle pilot_noise_for(const NoiseBundle& cloud_noise, int P, std::uint64_t seed);
PilotSet make_pilots(const CoefficientSet& model, const Trajectory& cloud, const NoiseBundle& pilot_noise,
                     std::vector<double> v, KernelPath path = KernelPath::Auto);

struct LionsTangent {
  std::vector<double> v;
  TangentBlock gamma;  // N x d x d
  TangentBlock psi;    // N x d x d
  int time_index = -1;
};

LionsTangent init_lions_tangent(int N, int d, std::vector<double> v);
/// Advance Gamma and Psi from k to k + 1. The pilots' first variation must be
/// at the same index (PilotOutOfSync otherwise); it is not advanced here.
void step_lions_tangent(const CoefficientSet& model, const Trajectory& cloud, const NoiseBundle& cloud_noise,
                        const PilotSet& pilots, const FirstVariation& fv, LionsTangent& lt,
                        KernelPath path = KernelPath::Auto);

/// Full run with optional history of (w, Gamma, Psi) at every grid node.
struct LionsRun {
  PilotSet pilots;
  FirstVariation fv;
  LionsTangent lt;
  std::vector<TangentBlock> w_hist;      // K + 1 entries when kept
  std::vector<TangentBlock> gamma_hist;
  std::vector<TangentBlock> psi_hist;
};

LionsRun run_lions_tangent(const CoefficientSet& model, const Trajectory& cloud, const NoiseBundle& cloud_noise,
                           const NoiseBundle& pilot_noise, std::vector<double> v, bool keep_history,
                           KernelPath path = KernelPath::Auto);

// ---------------------------------------------------------------------------

/// Particle average of squared Hilbert-Schmidt norms, per carrier block
/// column group of width `group` (one value per group).
std::vector<double> mean_norm2(const TangentBlock& T, int group);

struct TangentMomentReport {
  double sup_terminal = 0.0;  // sup_s mean_i |D_s X_T^i|^2
  double sup_path = 0.0;      // sup_s mean_i sup_t |D_s X_t^i|^2
  std::vector<double> terminal_by_s;
};

TangentMomentReport tangent_moment_report(const TangentD0& tg, int m0);

/// CSV rows s_index,t_index,particle,entries...
void write_tangent_csv(const TangentBlock& T, int s_index, int t_index, std::ostream& os);

}  // namespace mvcn
