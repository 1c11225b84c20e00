#pragma once

#include <iosfwd>
#include <vector>

#include "mvcn/kernels.hpp"
#include "mvcn/measure.hpp"
#include "mvcn/model.hpp"
#include "mvcn/noise.hpp"
#include "mvcn/wasserstein.hpp"

namespace mvcn {

/// N states in R^d at one grid index.
struct ParticleCloud {
  TimeGrid grid;
  int time_index = 0;
  int d = 1;
  std::vector<double> states;  // N x d

  int size() const noexcept { return static_cast<int>(states.size()) / d; }
  EmpiricalMeasure measure() const { return EmpiricalMeasure(states, d); }
};

/// States at every grid node, stored contiguously as (K+1) x N x d.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(TimeGrid grid, int N, int d);

  const TimeGrid& grid() const noexcept { return grid_; }
  int N() const noexcept { return N_; }
  int d() const noexcept { return d_; }
  int steps() const noexcept { return grid_.K; }

  Vec states(int k) const noexcept { return {data_.data() + offset(k), block()}; }
  MutVec states(int k) noexcept { return {data_.data() + offset(k), block()}; }
  Vec state(int k, int i) const noexcept { return states(k).subspan(static_cast<std::size_t>(i) * d_, d_); }
  EmpiricalMeasure measure(int k) const { return EmpiricalMeasure(states(k), d_); }
  ParticleCloud cloud(int k) const;
  const std::vector<double>& data() const noexcept { return data_; }

 private:
  std::size_t block() const noexcept { return static_cast<std::size_t>(N_) * d_; }
  std::size_t offset(int k) const noexcept { return static_cast<std::size_t>(k) * block(); }

  TimeGrid grid_;
  int N_ = 0;
  int d_ = 1;
  std::vector<double> data_;
};

/// One Euler-Maruyama step of carriers `xs` against the measure `mu`, using
/// the common increment at step k and idiosyncratic rows row_offset + i.
void euler_step(const CoefficientSet& model, const NoiseBundle& noise, int k, const EmpiricalMeasure& mu, Vec xs,
                int row_offset, MutVec out, KernelPath path = KernelPath::Auto);

/// Interacting step: coefficients evaluated against the cloud's own measure.
ParticleCloud step_ips(const CoefficientSet& model, const ParticleCloud& cloud, const NoiseBundle& noise,
                       KernelPath path = KernelPath::Auto);

/// Interacting particle system driven by `noise` from `init` (N x d).
Trajectory simulate_ips(const CoefficientSet& model, const NoiseBundle& noise, Vec init,
                        KernelPath path = KernelPath::Auto);

/// Decoupled system: the measure argument at step k is frozen_law[k] and is
/// never updated from the simulated states. Needs K + 1 measures.
Trajectory simulate_frozen(const CoefficientSet& model, const NoiseBundle& noise, Vec init,
                           const std::vector<EmpiricalMeasure>& frozen_law, KernelPath path = KernelPath::Auto);
/// Same with the frozen law read off another trajectory.
Trajectory simulate_frozen(const CoefficientSet& model, const NoiseBundle& noise, Vec init, const Trajectory& law,
                           KernelPath path = KernelPath::Auto);

std::vector<EmpiricalMeasure> measures_of(const Trajectory& traj);

/// Particle estimate of the conditional mean E[X_t | F0_t].
std::vector<double> conditional_mean(const ParticleCloud& cloud);
std::vector<double> conditional_mean(Vec states, int d);

struct MomentReport {
  double sup_mean_second_moment = 0.0;   // sup_t mean_i |X_t^i|^2
  double max_particle_second_moment = 0.0;  // max_i sup_t |X_t^i|^2
  std::vector<double> mean_second_moment;   // per grid node
};

MomentReport moment_report(const Trajectory& traj);

/// CSV with columns step,particle,x0..x{d-1}; every `stride`-th step.
void write_trajectory_csv(const Trajectory& traj, std::ostream& os, int stride = 1);

}  // namespace mvcn
