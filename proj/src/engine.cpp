#include "mvcn/engine.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "mvcn/errors.hpp"

namespace mvcn {

Trajectory::Trajectory(TimeGrid grid, int N, int d) : grid_(grid), N_(N), d_(d) {
  grid_.validate();
  if (N < 1 || d < 1) fail(ErrorKind::ShapeMismatch, "trajectory needs N >= 1 and d >= 1");
  data_.assign(static_cast<std::size_t>(grid.K + 1) * N * d, 0.0);
}

ParticleCloud Trajectory::cloud(int k) const {
  ParticleCloud c;
  c.grid = grid_;
  c.time_index = k;
  c.d = d_;
  const Vec s = states(k);
  c.states.assign(s.begin(), s.end());
  return c;
}

void euler_step(const CoefficientSet& model, const NoiseBundle& noise, int k, const EmpiricalMeasure& mu, Vec xs,
                int row_offset, MutVec out, KernelPath path) {
  const Dims& dm = model.dims();
  const int d = dm.d;
  const std::size_t n = xs.size() / d;
  if (noise.m0 != dm.m0 || noise.m != dm.m) fail(ErrorKind::ShapeMismatch, "noise dimensions differ from the model");
  if (row_offset < 0 || row_offset + static_cast<int>(n) > noise.N) {
    fail(ErrorKind::ShapeMismatch, "not enough idiosyncratic rows for the carriers");
  }
  const double t = noise.grid.node(k);
  const double dt = noise.grid.dt();
  const Vec dW0 = noise.common(k);

  std::vector<double> b(n * d);
  drift_batch(model, t, mu, xs, b, path);
#pragma omp parallel if (n >= 256)
  {
    std::vector<double> s0(static_cast<std::size_t>(d) * dm.m0), s1(static_cast<std::size_t>(d) * dm.m);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      const Vec x = xs.subspan(i * d, d);
      model.sigma0(t, x, mu, s0);
      model.sigma1(t, x, mu, s1);
      const Vec dW1 = noise.idio(row_offset + static_cast<int>(i), k);
      for (int c = 0; c < d; ++c) {
        double acc = x[c] + b[i * d + c] * dt;
        for (int j = 0; j < dm.m0; ++j) acc += s0[static_cast<std::size_t>(c) * dm.m0 + j] * dW0[j];
        for (int j = 0; j < dm.m; ++j) acc += s1[static_cast<std::size_t>(c) * dm.m + j] * dW1[j];
        out[i * d + c] = acc;
      }
    }
  }
  for (std::size_t q = 0; q < out.size(); ++q) {
    if (!std::isfinite(out[q])) {
      fail(ErrorKind::NonFiniteState, "non-finite state after step " + std::to_string(k), static_cast<long>(q / d));
    }
  }
}

ParticleCloud step_ips(const CoefficientSet& model, const ParticleCloud& cloud, const NoiseBundle& noise,
                       KernelPath path) {
  if (!(cloud.grid == noise.grid)) fail(ErrorKind::GridMismatch, "cloud and noise use different grids");
  if (cloud.time_index < 0 || cloud.time_index >= noise.grid.K) fail(ErrorKind::GridMismatch, "no increment left");
  ParticleCloud next = cloud;
  euler_step(model, noise, cloud.time_index, cloud.measure(), cloud.states, 0, next.states, path);
  next.time_index = cloud.time_index + 1;
  return next;
}

namespace {

void check_init(const CoefficientSet& model, const NoiseBundle& noise, Vec init, int& N) {
  const int d = model.dims().d;
  if (init.size() % d != 0) fail(ErrorKind::ShapeMismatch, "initial states are not a multiple of d");
  N = static_cast<int>(init.size()) / d;
  if (N < 1) fail(ErrorKind::ShapeMismatch, "no initial states");
  if (N > noise.N) fail(ErrorKind::ShapeMismatch, "noise bundle has fewer rows than particles");
  for (std::size_t q = 0; q < init.size(); ++q) {
    if (!std::isfinite(init[q])) fail(ErrorKind::NonFiniteInput, "initial state is not finite", static_cast<long>(q / d));
  }
}

}  // namespace

Trajectory simulate_ips(const CoefficientSet& model, const NoiseBundle& noise, Vec init, KernelPath path) {
  int N = 0;
  check_init(model, noise, init, N);
  Trajectory traj(noise.grid, N, model.dims().d);
  std::copy(init.begin(), init.end(), traj.states(0).begin());
  for (int k = 0; k < noise.grid.K; ++k) {
    euler_step(model, noise, k, traj.measure(k), traj.states(k), 0, traj.states(k + 1), path);
  }
  return traj;
}

Trajectory simulate_frozen(const CoefficientSet& model, const NoiseBundle& noise, Vec init,
                           const std::vector<EmpiricalMeasure>& frozen_law, KernelPath path) {
  if (static_cast<int>(frozen_law.size()) != noise.grid.K + 1) {
    fail(ErrorKind::LengthMismatch, "frozen law needs K + 1 measures");
  }
  int N = 0;
  check_init(model, noise, init, N);
  Trajectory traj(noise.grid, N, model.dims().d);
  std::copy(init.begin(), init.end(), traj.states(0).begin());
  for (int k = 0; k < noise.grid.K; ++k) {
    euler_step(model, noise, k, frozen_law[k], traj.states(k), 0, traj.states(k + 1), path);
  }
  return traj;
}

Trajectory simulate_frozen(const CoefficientSet& model, const NoiseBundle& noise, Vec init, const Trajectory& law,
                           KernelPath path) {
  if (!(law.grid() == noise.grid)) fail(ErrorKind::LengthMismatch, "frozen law lives on a different grid");
  return simulate_frozen(model, noise, init, measures_of(law), path);
}

std::vector<EmpiricalMeasure> measures_of(const Trajectory& traj) {
  std::vector<EmpiricalMeasure> law;
  law.reserve(traj.steps() + 1);
  for (int k = 0; k <= traj.steps(); ++k) law.push_back(traj.measure(k));
  return law;
}

std::vector<double> conditional_mean(Vec states, int d) {
  const std::size_t n = states.size() / d;
  if (n == 0) fail(ErrorKind::ShapeMismatch, "empty cloud");
  std::vector<double> m(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < d; ++c) m[c] += states[i * d + c];
  }
  for (double& e : m) e /= static_cast<double>(n);
  return m;
}

std::vector<double> conditional_mean(const ParticleCloud& cloud) { return conditional_mean(cloud.states, cloud.d); }

MomentReport moment_report(const Trajectory& traj) {
  MomentReport r;
  const int d = traj.d();
  std::vector<double> per_particle(traj.N(), 0.0);
  for (int k = 0; k <= traj.steps(); ++k) {
    const Vec s = traj.states(k);
    double acc = 0.0;
    for (int i = 0; i < traj.N(); ++i) {
      double q = 0.0;
      for (int c = 0; c < d; ++c) q += s[static_cast<std::size_t>(i) * d + c] * s[static_cast<std::size_t>(i) * d + c];
      acc += q;
      per_particle[i] = std::max(per_particle[i], q);
    }
    r.mean_second_moment.push_back(acc / traj.N());
  }
  r.sup_mean_second_moment = *std::max_element(r.mean_second_moment.begin(), r.mean_second_moment.end());
  r.max_particle_second_moment = *std::max_element(per_particle.begin(), per_particle.end());
  return r;
}

void write_trajectory_csv(const Trajectory& traj, std::ostream& os, int stride) {
  stride = std::max(stride, 1);
  os << "step,particle";
  for (int c = 0; c < traj.d(); ++c) os << ",x" << c;
  os << '\n' << std::setprecision(17);
  for (int k = 0; k <= traj.steps(); k += stride) {
    for (int i = 0; i < traj.N(); ++i) {
      os << k << ',' << i;
      for (double e : traj.state(k, i)) os << ',' << e;
      os << '\n';
    }
  }
}

}  // namespace mvcn
