#include "mvcn/tangent.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>

#include "mvcn/errors.hpp"

namespace mvcn {

namespace {

// out (d x p) += scale * G (d x d) * T (d x p)
inline void gemm_acc(const double* G, const double* T, double scale, int d, int p, double* out) {
  if (scale == 0.0) return;
  for (int a = 0; a < d; ++a) {
    for (int l = 0; l < d; ++l) {
      const double g = scale * G[a * d + l];
      if (g == 0.0) continue;
      for (int q = 0; q < p; ++q) out[a * p + q] += g * T[l * p + q];
    }
  }
}

}  // namespace

LinearizedStep::LinearizedStep(const CoefficientSet& model, const NoiseBundle& noise, int k,
                               const EmpiricalMeasure& mu, Vec xs, int row_offset, KernelPath path)
    : model_(model),
      noise_(noise),
      k_(k),
      mu_(mu),
      xs_(xs),
      row_offset_(row_offset),
      path_(path),
      n_(static_cast<int>(xs.size()) / model.dims().d),
      t_(noise.grid.node(k)),
      dt_(noise.grid.dt()) {
  const Dims& dm = model.dims();
  if (k < 0 || k >= noise.grid.K) fail(ErrorKind::GridMismatch, "step index outside the noise grid");
  if (row_offset < 0 || row_offset + n_ > noise.N) fail(ErrorKind::ShapeMismatch, "idiosyncratic rows out of range");
  const std::size_t dd = static_cast<std::size_t>(dm.d) * dm.d;
  grad_b_.resize(n_ * dd);
  grad_batch(model, Coef::Drift, 0, t_, mu_, xs_, grad_b_, path);
  grad_s0_.assign(dm.m0, std::vector<double>(n_ * dd));
  grad_s1_.assign(dm.m, std::vector<double>(n_ * dd));
  for (int j = 0; j < dm.m0; ++j) grad_batch(model, Coef::Sigma0, j, t_, mu_, xs_, grad_s0_[j], path);
  for (int j = 0; j < dm.m; ++j) grad_batch(model, Coef::Sigma1, j, t_, mu_, xs_, grad_s1_[j], path);
}

void LinearizedStep::couple(Coef c, int col, const EmpiricalMeasure& support, const TangentBlock& S,
                            std::vector<double>& buf) const {
  buf.resize(static_cast<std::size_t>(n_) * S.stride());
  coupling_apply(model_, c, col, t_, mu_, support, S.data, S.p, xs_, buf, path_);
}

void LinearizedStep::propagate(TangentBlock& T, bool coupled) const {
  const Dims& dm = model_.dims();
  const int d = dm.d, p = T.p;
  if (T.n != n_ || T.d != d) fail(ErrorKind::ShapeMismatch, "tangent block does not match the carriers");
  if (coupled && static_cast<int>(mu_.size()) != n_) {
    fail(ErrorKind::ShapeMismatch, "coupled propagation needs the carriers to be the measure's particles");
  }
  const std::size_t st = T.stride();
  const std::size_t dd = static_cast<std::size_t>(d) * d;
  const Vec dW0 = noise_.common(k_);
  std::vector<double> incr(T.data.size(), 0.0);

#pragma omp parallel for schedule(static) if (n_ * st >= 4096)
  for (int i = 0; i < n_; ++i) {
    const double* Ti = T.data.data() + i * st;
    double* o = incr.data() + i * st;
    gemm_acc(grad_b_.data() + i * dd, Ti, dt_, d, p, o);
    for (int j = 0; j < dm.m0; ++j) gemm_acc(grad_s0_[j].data() + i * dd, Ti, dW0[j], d, p, o);
    const Vec dW1 = noise_.idio(row_offset_ + i, k_);
    for (int j = 0; j < dm.m; ++j) gemm_acc(grad_s1_[j].data() + i * dd, Ti, dW1[j], d, p, o);
  }

  if (coupled) {
    const auto& vanish = model_.traits().lions_vanish;
    std::vector<double> buf;
    auto add_scaled = [&](double scale_all, int idio_col) {
      for (int i = 0; i < n_; ++i) {
        const double s = idio_col < 0 ? scale_all : noise_.idio(row_offset_ + i, k_)[idio_col];
        for (std::size_t q = 0; q < st; ++q) incr[i * st + q] += s * buf[i * st + q];
      }
    };
    if (!vanish[0]) {
      couple(Coef::Drift, 0, mu_, T, buf);
      add_scaled(dt_, -1);
    }
    if (!vanish[1]) {
      for (int j = 0; j < dm.m0; ++j) {
        couple(Coef::Sigma0, j, mu_, T, buf);
        add_scaled(dW0[j], -1);
      }
    }
    if (!vanish[2]) {
      for (int j = 0; j < dm.m; ++j) {
        couple(Coef::Sigma1, j, mu_, T, buf);
        add_scaled(0.0, j);
      }
    }
  }
  for (std::size_t q = 0; q < T.data.size(); ++q) T.data[q] += incr[q];
}

void LinearizedStep::add_source(const EmpiricalMeasure& support, const TangentBlock& S, TangentBlock& out) const {
  const Dims& dm = model_.dims();
  if (out.n != n_ || out.p != S.p || S.n != static_cast<int>(support.size())) {
    fail(ErrorKind::ShapeMismatch, "source blocks do not match");
  }
  const auto& vanish = model_.traits().lions_vanish;
  const std::size_t st = out.stride();
  const Vec dW0 = noise_.common(k_);
  std::vector<double> buf;
  auto add_scaled = [&](double scale_all, int idio_col) {
    for (int i = 0; i < n_; ++i) {
      const double s = idio_col < 0 ? scale_all : noise_.idio(row_offset_ + i, k_)[idio_col];
      for (std::size_t q = 0; q < st; ++q) out.data[i * st + q] += s * buf[i * st + q];
    }
  };
  if (!vanish[0]) {
    couple(Coef::Drift, 0, support, S, buf);
    add_scaled(dt_, -1);
  }
  if (!vanish[1]) {
    for (int j = 0; j < dm.m0; ++j) {
      couple(Coef::Sigma0, j, support, S, buf);
      add_scaled(dW0[j], -1);
    }
  }
  if (!vanish[2]) {
    for (int j = 0; j < dm.m; ++j) {
      couple(Coef::Sigma1, j, support, S, buf);
      add_scaled(0.0, j);
    }
  }
}

// ---------------------------------------------------------------------------

std::vector<int> default_s_indices(int K) {
  std::vector<int> s;
  if (K <= 512) {
    for (int k = 0; k < K; ++k) s.push_back(k);
    return s;
  }
  for (int q = 0; q < 16; ++q) s.push_back(static_cast<int>((static_cast<long long>(q) * K) / 16));
  return s;
}

namespace {

void inject_d0(const CoefficientSet& model, const Trajectory& traj, TangentD0& tg) {
  const Dims& dm = model.dims();
  const int k = tg.time_index;
  const int N = traj.N();
  const EmpiricalMeasure mu = traj.measure(k);
  std::vector<double> s0(static_cast<std::size_t>(dm.d) * dm.m0);
  for (int q = 0; q < tg.S(); ++q) {
    if (tg.s_indices[q] != k) continue;
    for (int i = 0; i < N; ++i) {
      model.sigma0(traj.grid().node(k), traj.state(k, i), mu, s0);
      for (int r = 0; r < dm.d; ++r) {
        for (int j = 0; j < dm.m0; ++j) tg.block.at(i, r, q * dm.m0 + j) = s0[static_cast<std::size_t>(r) * dm.m0 + j];
      }
    }
  }
}

void track_sup_d0(TangentD0& tg, int m0) {
  const int N = tg.block.n;
  for (int q = 0; q < tg.S(); ++q) {
    if (tg.s_indices[q] > tg.time_index) continue;
    for (int i = 0; i < N; ++i) {
      double s = 0.0;
      for (int r = 0; r < tg.block.d; ++r) {
        for (int j = 0; j < m0; ++j) {
          const double e = tg.block.at(i, r, q * m0 + j);
          s += e * e;
        }
      }
      double& slot = tg.sup_norm2[static_cast<std::size_t>(q) * N + i];
      slot = std::max(slot, s);
    }
  }
}

}  // namespace

TangentD0 init_tangent_d0(const CoefficientSet& model, const Trajectory& traj, std::vector<int> s_indices) {
  if (s_indices.empty()) fail(ErrorKind::Config, "no differentiation times selected");
  std::sort(s_indices.begin(), s_indices.end());
  s_indices.erase(std::unique(s_indices.begin(), s_indices.end()), s_indices.end());
  if (s_indices.front() < 0 || s_indices.back() > traj.steps()) fail(ErrorKind::Config, "s index outside the grid");
  const Dims& dm = model.dims();
  TangentD0 tg;
  tg.s_indices = std::move(s_indices);
  tg.block = TangentBlock(traj.N(), dm.d, tg.S() * dm.m0);
  tg.sup_norm2.assign(static_cast<std::size_t>(tg.S()) * traj.N(), 0.0);
  tg.time_index = tg.s_indices.front();
  inject_d0(model, traj, tg);
  track_sup_d0(tg, dm.m0);
  return tg;
}

void step_tangent_d0(const CoefficientSet& model, const Trajectory& traj, const NoiseBundle& noise, TangentD0& tg,
                     KernelPath path) {
  if (tg.time_index < 0) fail(ErrorKind::NotInitialized, "D0 tangent stepped before initialisation");
  const int k = tg.time_index;
  if (k >= traj.steps()) fail(ErrorKind::GridMismatch, "D0 tangent already at the terminal index");
  const EmpiricalMeasure mu = traj.measure(k);
  LinearizedStep ls(model, noise, k, mu, traj.states(k), 0, path);
  ls.propagate(tg.block, true);
  tg.time_index = k + 1;
  inject_d0(model, traj, tg);
  track_sup_d0(tg, model.dims().m0);
}

TangentD0 run_tangent_d0(const CoefficientSet& model, const Trajectory& traj, const NoiseBundle& noise,
                         std::vector<int> s_indices, KernelPath path) {
  TangentD0 tg = init_tangent_d0(model, traj, std::move(s_indices));
  while (tg.time_index < traj.steps()) step_tangent_d0(model, traj, noise, tg, path);
  return tg;
}

TangentBlock run_d0_directional(const CoefficientSet& model, const Trajectory& traj, const NoiseBundle& noise,
                                const CameronMartinDirection& h, KernelPath path) {
  const Dims& dm = model.dims();
  if (!(h.grid == traj.grid()) || h.dim != dm.m0) fail(ErrorKind::GridMismatch, "direction does not match the grid");
  const int N = traj.N();
  const double dt = traj.grid().dt();
  TangentBlock Y(N, dm.d, 1);
  std::vector<double> s0(static_cast<std::size_t>(dm.d) * dm.m0);
  for (int k = 0; k < traj.steps(); ++k) {
    const EmpiricalMeasure mu = traj.measure(k);
    const double t = traj.grid().node(k);
    const double* hp = h.hprime.data() + static_cast<std::size_t>(k) * dm.m0;
    for (int i = 0; i < N; ++i) {
      model.sigma0(t, traj.state(k, i), mu, s0);
      for (int r = 0; r < dm.d; ++r) {
        double acc = 0.0;
        for (int j = 0; j < dm.m0; ++j) acc += s0[static_cast<std::size_t>(r) * dm.m0 + j] * hp[j];
        Y.at(i, r, 0) += acc * dt;
      }
    }
    LinearizedStep ls(model, noise, k, mu, traj.states(k), 0, path);
    ls.propagate(Y, true);
  }
  return Y;
}

// ---------------------------------------------------------------------------

TangentD1 init_tangent_d1(const CoefficientSet& model, const Trajectory& traj, int owner, int s_index, D1Mode mode) {
  const Dims& dm = model.dims();
  if (owner < 0 || owner >= traj.N()) fail(ErrorKind::ShapeMismatch, "owner particle out of range", owner);
  if (s_index < 0 || s_index > traj.steps()) fail(ErrorKind::Config, "s index outside the grid");
  TangentD1 tg;
  tg.owner = owner;
  tg.s_index = s_index;
  tg.mode = mode;
  tg.block = TangentBlock(mode == D1Mode::Limit ? 1 : traj.N(), dm.d, dm.m);
  const int slot = mode == D1Mode::Limit ? 0 : owner;
  model.sigma1(traj.grid().node(s_index), traj.state(s_index, owner), traj.measure(s_index), tg.block.mat(slot));
  tg.time_index = s_index;
  return tg;
}

void step_tangent_d1(const CoefficientSet& model, const Trajectory& traj, const NoiseBundle& noise, TangentD1& tg,
                     KernelPath path) {
  if (tg.time_index < 0) fail(ErrorKind::NotInitialized, "D1 tangent stepped before initialisation");
  const int k = tg.time_index;
  if (k >= traj.steps()) fail(ErrorKind::GridMismatch, "D1 tangent already at the terminal index");
  const EmpiricalMeasure mu = traj.measure(k);
  if (tg.mode == D1Mode::Limit) {
    LinearizedStep ls(model, noise, k, mu, traj.state(k, tg.owner), tg.owner, path);
    ls.propagate(tg.block, false);
  } else {
    LinearizedStep ls(model, noise, k, mu, traj.states(k), 0, path);
    ls.propagate(tg.block, true);
  }
  tg.time_index = k + 1;
}

TangentD1 run_tangent_d1(const CoefficientSet& model, const Trajectory& traj, const NoiseBundle& noise, int owner,
                         int s_index, D1Mode mode, int end_index, KernelPath path) {
  if (end_index < 0) end_index = traj.steps();
  if (s_index > end_index) {
    TangentD1 tg;
    tg.owner = owner;
    tg.s_index = s_index;
    tg.mode = mode;
    tg.block = TangentBlock(mode == D1Mode::Limit ? 1 : traj.N(), model.dims().d, model.dims().m);
    tg.time_index = end_index;
    return tg;
  }
  TangentD1 tg = init_tangent_d1(model, traj, owner, s_index, mode);
  while (tg.time_index < end_index) step_tangent_d1(model, traj, noise, tg, path);
  return tg;
}

TangentBlock run_d1_directional(const CoefficientSet& model, const Trajectory& traj, const NoiseBundle& noise,
                                int owner, const CameronMartinDirection& h, KernelPath path) {
  const Dims& dm = model.dims();
  if (!(h.grid == traj.grid()) || h.dim != dm.m) fail(ErrorKind::GridMismatch, "direction does not match the grid");
  if (owner < 0 || owner >= traj.N()) fail(ErrorKind::ShapeMismatch, "owner particle out of range", owner);
  const double dt = traj.grid().dt();
  TangentBlock Y(traj.N(), dm.d, 1);
  std::vector<double> s1(static_cast<std::size_t>(dm.d) * dm.m);
  for (int k = 0; k < traj.steps(); ++k) {
    const EmpiricalMeasure mu = traj.measure(k);
    const double* hp = h.hprime.data() + static_cast<std::size_t>(k) * dm.m;
    model.sigma1(traj.grid().node(k), traj.state(k, owner), mu, s1);
    for (int r = 0; r < dm.d; ++r) {
      double acc = 0.0;
      for (int j = 0; j < dm.m; ++j) acc += s1[static_cast<std::size_t>(r) * dm.m + j] * hp[j];
      Y.at(owner, r, 0) += acc * dt;
    }
    LinearizedStep ls(model, noise, k, mu, traj.states(k), 0, path);
    ls.propagate(Y, true);
  }
  return Y;
}

Eigen::MatrixXd d1_value(const TangentD1& tg, int i) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(tg.block.d, tg.block.p);
  int slot = i;
  if (tg.mode == D1Mode::Limit) {
    if (i != tg.owner) return out;
    slot = 0;
  }
  if (tg.time_index < tg.s_index) return out;
  for (int r = 0; r < tg.block.d; ++r) {
    for (int c = 0; c < tg.block.p; ++c) out(r, c) = tg.block.at(slot, r, c);
  }
  return out;
}

// ---------------------------------------------------------------------------

FirstVariation init_first_variation(int P, int d, int start_index) {
  FirstVariation fv;
  fv.block = TangentBlock(P, d, d);
  for (int i = 0; i < P; ++i) {
    for (int r = 0; r < d; ++r) fv.block.at(i, r, r) = 1.0;
  }
  fv.time_index = start_index;
  return fv;
}

void step_first_variation(const CoefficientSet& model, const Trajectory& pilots, const Trajectory& law,
                          const NoiseBundle& pilot_noise, FirstVariation& fv, KernelPath path) {
  if (fv.time_index < 0) fail(ErrorKind::NotInitialized, "first variation stepped before initialisation");
  const int k = fv.time_index;
  if (k >= pilots.steps()) fail(ErrorKind::GridMismatch, "first variation already at the terminal index");
  if (fv.block.n != pilots.N()) fail(ErrorKind::ShapeMismatch, "first variation and pilots disagree");
  const EmpiricalMeasure mu = law.measure(k);
  LinearizedStep ls(model, pilot_noise, k, mu, pilots.states(k), 0, path);
  ls.propagate(fv.block, false);
  fv.time_index = k + 1;
}

NoiseBundle pilot_noise_for(const NoiseBundle& cloud_noise, int P, std::uint64_t seed) {
  NoiseBundle nb = generate(cloud_noise.grid, P, cloud_noise.m0, cloud_noise.m, seed, StreamFamily::Pilot, 0);
  nb.dW0 = cloud_noise.dW0;
  return nb;
}

PilotSet make_pilots(const CoefficientSet& model, const Trajectory& cloud, const NoiseBundle& pilot_noise,
                     std::vector<double> v, KernelPath path) {
  const int d = model.dims().d;
  if (static_cast<int>(v.size()) != d) fail(ErrorKind::ShapeMismatch, "evaluation point v has wrong dimension");
  if (!(pilot_noise.grid == cloud.grid())) fail(ErrorKind::GridMismatch, "pilot noise on a different grid");
  PilotSet ps;
  ps.v = v;
  ps.noise = pilot_noise;
  std::vector<double> init;
  for (int i = 0; i < pilot_noise.N; ++i) init.insert(init.end(), v.begin(), v.end());
  ps.traj = simulate_frozen(model, pilot_noise, init, cloud, path);
  return ps;
}

LionsTangent init_lions_tangent(int N, int d, std::vector<double> v) {
  LionsTangent lt;
  lt.v = std::move(v);
  lt.gamma = TangentBlock(N, d, d);
  lt.psi = TangentBlock(N, d, d);
  lt.time_index = 0;
  return lt;
}

void step_lions_tangent(const CoefficientSet& model, const Trajectory& cloud, const NoiseBundle& cloud_noise,
                        const PilotSet& pilots, const FirstVariation& fv, LionsTangent& lt, KernelPath path) {
  if (lt.time_index < 0) fail(ErrorKind::NotInitialized, "Lions tangent stepped before initialisation");
  const int k = lt.time_index;
  if (fv.time_index != k) fail(ErrorKind::PilotOutOfSync, "pilot first variation is not at the tangent's step");
  if (pilots.traj.steps() != cloud.steps()) fail(ErrorKind::PilotOutOfSync, "pilot trajectory on a different grid");
  if (k >= cloud.steps()) fail(ErrorKind::GridMismatch, "Lions tangent already at the terminal index");
  const int d = model.dims().d;
  const EmpiricalMeasure mu = cloud.measure(k);
  const EmpiricalMeasure pilot_law(pilots.traj.states(k), d);
  LinearizedStep ls(model, cloud_noise, k, mu, cloud.states(k), 0, path);
  TangentBlock src(cloud.N(), d, d);
  ls.add_source(pilot_law, fv.block, src);
  ls.propagate(lt.gamma, true);
  for (std::size_t q = 0; q < src.data.size(); ++q) {
    lt.gamma.data[q] += src.data[q];
    lt.psi.data[q] += src.data[q];
  }
  lt.time_index = k + 1;
}

LionsRun run_lions_tangent(const CoefficientSet& model, const Trajectory& cloud, const NoiseBundle& cloud_noise,
                           const NoiseBundle& pilot_noise, std::vector<double> v, bool keep_history,
                           KernelPath path) {
  const int d = model.dims().d;
  LionsRun run;
  run.pilots = make_pilots(model, cloud, pilot_noise, v, path);
  run.fv = init_first_variation(pilot_noise.N, d);
  run.lt = init_lions_tangent(cloud.N(), d, std::move(v));
  auto record = [&] {
    if (!keep_history) return;
    run.w_hist.push_back(run.fv.block);
    run.gamma_hist.push_back(run.lt.gamma);
    run.psi_hist.push_back(run.lt.psi);
  };
  record();
  for (int k = 0; k < cloud.steps(); ++k) {
    step_lions_tangent(model, cloud, cloud_noise, run.pilots, run.fv, run.lt, path);
    step_first_variation(model, run.pilots.traj, cloud, run.pilots.noise, run.fv, path);
    record();
  }
  return run;
}

// ---------------------------------------------------------------------------

std::vector<double> mean_norm2(const TangentBlock& T, int group) {
  const int groups = T.p / group;
  std::vector<double> out(groups, 0.0);
  for (int i = 0; i < T.n; ++i) {
    for (int g = 0; g < groups; ++g) {
      double s = 0.0;
      for (int r = 0; r < T.d; ++r) {
        for (int c = 0; c < group; ++c) {
          const double e = T.at(i, r, g * group + c);
          s += e * e;
        }
      }
      out[g] += s;
    }
  }
  for (double& e : out) e /= T.n;
  return out;
}

TangentMomentReport tangent_moment_report(const TangentD0& tg, int m0) {
  TangentMomentReport r;
  r.terminal_by_s = mean_norm2(tg.block, m0);
  r.sup_terminal = *std::max_element(r.terminal_by_s.begin(), r.terminal_by_s.end());
  const int N = tg.block.n;
  for (int q = 0; q < tg.S(); ++q) {
    double acc = 0.0;
    for (int i = 0; i < N; ++i) acc += tg.sup_norm2[static_cast<std::size_t>(q) * N + i];
    r.sup_path = std::max(r.sup_path, acc / N);
  }
  return r;
}

void write_tangent_csv(const TangentBlock& T, int s_index, int t_index, std::ostream& os) {
  os << std::setprecision(17);
  for (int i = 0; i < T.n; ++i) {
    os << s_index << ',' << t_index << ',' << i;
    for (double e : T.mat(i)) os << ',' << e;
    os << '\n';
  }
}

}  // namespace mvcn
