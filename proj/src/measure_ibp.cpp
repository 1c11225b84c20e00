#include <cmath>

#include "mvcn/errors.hpp"
#include "mvcn/ibp.hpp"
#include "mvcn/stochcalc.hpp"

namespace mvcn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXd as_matrix(const TangentBlock& T, int i) {
  return Eigen::Map<const RowMat>(T.mat(i).data(), T.d, T.p);
}

// Psi_T of every particle after rerunning the whole chain (cloud, pilots,
// first variation, Lions tangent) on bumped common increments.
TangentBlock terminal_psi(const CoefficientSet& model, Vec init, const NoiseBundle& cloud_noise,
                          const NoiseBundle& pilot_noise, const std::vector<double>& v, KernelPath path) {
  const Trajectory traj = simulate_ips(model, cloud_noise, init, path);
  return run_lions_tangent(model, traj, cloud_noise, pilot_noise, v, false, path).lt.psi;
}

// Common-noise direction h'_k = A(t_k)[:, a] of one particle.
CameronMartinDirection direction(const MeasureWeight& w, int a, const TimeGrid& grid, int m0) {
  CameronMartinDirection h;
  h.grid = grid;
  h.dim = m0;
  h.hprime.resize(static_cast<std::size_t>(grid.K) * m0);
  for (int k = 0; k < grid.K; ++k) {
    for (int j = 0; j < m0; ++j) h.hprime[static_cast<std::size_t>(k) * m0 + j] = w.A[k](j, a);
  }
  return h;
}

}  // namespace

MeasureIbpSample measure_ibp_rep(const CoefficientSet& model, Vec init, const NoiseBundle& cloud_noise,
                                 std::uint64_t pilot_seed, const TestFunction& f, const MeasureIbpOptions& opt) {
  const Dims& dm = model.dims();
  const int d = dm.d, m0 = dm.m0;
  if (static_cast<int>(opt.v.size()) != d) fail(ErrorKind::ShapeMismatch, "v must have dimension d");
  const KernelPath path = opt.path;
  const double floor = opt.delta / 10.0;

  const Trajectory traj = simulate_ips(model, cloud_noise, init, path);
  const int N = traj.N(), K = traj.steps();
  const double T = traj.grid().T, dt = traj.grid().dt();

  const EllipticityReport er = check_ellipticity(model, Coef::Sigma0, traj, opt.delta);
  if (!er.pass) {
    fail(ErrorKind::EllipticityFailure, "sigma0 sigma0^T has eigenvalue " + std::to_string(er.min_eigen) +
                                            " below delta " + std::to_string(opt.delta));
  }

  const NoiseBundle pn = pilot_noise_for(cloud_noise, opt.pilots, pilot_seed);
  const LionsRun run = run_lions_tangent(model, traj, cloud_noise, pn, opt.v, true, path);

  std::vector<double> F(N), G(static_cast<std::size_t>(N) * d);
  for (int i = 0; i < N; ++i) {
    F[i] = f.f(traj.state(K, i));
    f.grad(traj.state(K, i), MutVec(G.data() + static_cast<std::size_t>(i) * d, d));
  }
  auto grad_row = [&](int i) { return Eigen::Map<const Eigen::RowVectorXd>(G.data() + static_cast<std::size_t>(i) * d, d); };

  MeasureIbpSample out;
  auto put = [](std::vector<double>& mean, std::vector<double>& se, const std::vector<SampleStats>& s) {
    for (const auto& st : s) {
      const Estimate e = st.estimate();
      mean.push_back(e.mean);
      se.push_back(e.se);
    }
  };

  // Chain-rule estimator: grad f(X_T) Gamma_T.
  {
    std::vector<SampleStats> s(d);
    for (int i = 0; i < N; ++i) {
      const Eigen::RowVectorXd row = grad_row(i) * as_matrix(run.lt.gamma, i);
      for (int l = 0; l < d; ++l) s[l].add(row(l));
    }
    put(out.lhs_gamma, out.se_gamma, s);
  }

  // Weights of every particle.
  std::vector<MeasureWeight> weights;
  weights.reserve(N);
  for (int i = 0; i < N; ++i) weights.push_back(build_weight_h(model, traj, run, i, floor));

  // Skorokhod integral of h(., v)[:, l] per particle:
  //   adapted part   int A (Gamma_r - Psi_r) dW0
  //   factored part  sum_a Psi_T[a, l] int A[:, a] dW0 - <D Psi_T[a, l], A[:, a]>
  std::vector<double> corr(static_cast<std::size_t>(N) * d * d, 0.0);  // (i, a, l)
  {
    const bool shared = model.traits().sigma0_state_independent;
    const double eps = opt.eps_skorokhod;
    if (shared) {
      for (int a = 0; a < d; ++a) {
        const CameronMartinDirection h = direction(weights[0], a, traj.grid(), m0);
        const TangentBlock plus = terminal_psi(model, init, bump_common(cloud_noise, h, eps), bump_common(pn, h, eps),
                                               opt.v, path);
        const TangentBlock minus = terminal_psi(model, init, bump_common(cloud_noise, h, -eps),
                                                bump_common(pn, h, -eps), opt.v, path);
        for (int i = 0; i < N; ++i) {
          for (int l = 0; l < d; ++l) {
            corr[(static_cast<std::size_t>(i) * d + a) * d + l] = (plus.at(i, a, l) - minus.at(i, a, l)) / (2.0 * eps);
          }
        }
      }
    } else {
      if (N * d > opt.max_direction_reruns) {
        fail(ErrorKind::UnsupportedSize, "state-dependent sigma0 needs one rerun pair per particle and direction (" +
                                             std::to_string(N * d) + " > max_direction_reruns)");
      }
      for (int i = 0; i < N; ++i) {
        for (int a = 0; a < d; ++a) {
          const CameronMartinDirection h = direction(weights[i], a, traj.grid(), m0);
          const TangentBlock plus = terminal_psi(model, init, bump_common(cloud_noise, h, eps),
                                                 bump_common(pn, h, eps), opt.v, path);
          const TangentBlock minus = terminal_psi(model, init, bump_common(cloud_noise, h, -eps),
                                                  bump_common(pn, h, -eps), opt.v, path);
          for (int l = 0; l < d; ++l) {
            corr[(static_cast<std::size_t>(i) * d + a) * d + l] = (plus.at(i, a, l) - minus.at(i, a, l)) / (2.0 * eps);
          }
        }
      }
    }
  }

  {
    const std::span<const double> dW0 = cloud_noise.dW0;
    std::vector<SampleStats> s(d);
    for (int i = 0; i < N; ++i) {
      const MeasureWeight& w = weights[i];
      const Eigen::MatrixXd psiT = as_matrix(run.lt.psi, i);
      for (int l = 0; l < d; ++l) {
        AdaptedIntegrand adapted = AdaptedIntegrand::constant(K, m0, 0.0);
        for (int k = 0; k < K; ++k) {
          const Eigen::VectorXd u =
              w.A[k] * (as_matrix(run.gamma_hist[k], i) - as_matrix(run.psi_hist[k], i)).col(l);
          for (int j = 0; j < m0; ++j) adapted.values[static_cast<std::size_t>(k) * m0 + j] = u(j);
        }
        double delta = ito_integral(adapted, dW0);
        for (int a = 0; a < d; ++a) {
          FactoredIntegrand fi;
          fi.F = psiT(a, l);
          fi.A = AdaptedIntegrand::constant(K, m0, 0.0);
          for (int k = 0; k < K; ++k) {
            for (int j = 0; j < m0; ++j) fi.A.values[static_cast<std::size_t>(k) * m0 + j] = w.A[k](j, a);
          }
          fi.dF_pairing = corr[(static_cast<std::size_t>(i) * d + a) * d + l];
          delta += skorokhod_factored(fi, dW0, dt);
        }
        s[l].add(F[i] * delta / T);
      }
    }
    put(out.rhs, out.se_rhs, s);
  }

  // Pathwise pairing (1/T) sum_k grad f(X_T) D0_{t_k} X_T h(t_k) dt.
  if (opt.duality) {
    std::vector<int> all(K);
    for (int k = 0; k < K; ++k) all[k] = k;
    const TangentD0 d0 = run_tangent_d0(model, traj, cloud_noise, all, path);
    std::vector<SampleStats> s(d);
    for (int i = 0; i < N; ++i) {
      const Eigen::MatrixXd D = as_matrix(d0.block, i);
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d);
      for (int k = 0; k < K; ++k) {
        acc += grad_row(i) * D.middleCols(static_cast<Eigen::Index>(k) * m0, m0) * weights[i].h[k];
      }
      for (int l = 0; l < d; ++l) s[l].add(acc(l) * dt / T);
    }
    put(out.duality, out.se_duality, s);
  }

  // Measure-bump estimator: shift the initial law by eps psi_v(xi) e_l and
  // follow the unshifted particles under the bumped law.
  {
    const double ell2 = opt.bump_width * opt.bump_width;
    std::vector<double> psi(N);
    double psi_mean = 0.0;
    for (int i = 0; i < N; ++i) {
      double r2 = 0.0;
      for (int c = 0; c < d; ++c) {
        const double z = init[static_cast<std::size_t>(i) * d + c] - opt.v[c];
        r2 += z * z;
      }
      psi[i] = std::exp(-r2 / (2.0 * ell2));
      psi_mean += psi[i];
    }
    psi_mean /= N;
    if (!(psi_mean > 1e-12)) fail(ErrorKind::Config, "measure bump around v carries no mass; widen bump_width");
    for (int l = 0; l < d; ++l) {
      auto run_side = [&](double sign) {
        std::vector<double> shifted(init.begin(), init.end());
        for (int i = 0; i < N; ++i) shifted[static_cast<std::size_t>(i) * d + l] += sign * opt.eps_fd * psi[i];
        const Trajectory law = simulate_ips(model, cloud_noise, shifted, path);
        const Trajectory y = simulate_frozen(model, cloud_noise, init, law, path);
        std::vector<double> vals(N);
        for (int i = 0; i < N; ++i) vals[i] = f.f(y.state(K, i));
        return vals;
      };
      const auto up = run_side(1.0);
      const auto down = run_side(-1.0);
      SampleStats s;
      for (int i = 0; i < N; ++i) s.add((up[i] - down[i]) / (2.0 * opt.eps_fd * psi_mean));
      const Estimate e = s.estimate();
      out.lhs_fd.push_back(e.mean);
      out.se_fd.push_back(e.se);
    }
  }
  return out;
}

MeasureIbpResult combine(const std::vector<MeasureIbpSample>& samples) {
  MeasureIbpResult r;
  r.reps = static_cast<int>(samples.size());
  if (samples.empty()) return r;
  const std::size_t d = samples[0].lhs_gamma.size();
  auto reduce = [&](auto member, auto se_member, std::vector<Estimate>& dst) {
    if ((samples[0].*member).empty()) return;
    for (std::size_t l = 0; l < d; ++l) {
      SampleStats s;
      for (const auto& smp : samples) s.add((smp.*member)[l]);
      Estimate e = s.estimate();
      if (samples.size() == 1) e.se = (samples[0].*se_member)[l];
      dst.push_back(e);
    }
  };
  reduce(&MeasureIbpSample::lhs_gamma, &MeasureIbpSample::se_gamma, r.lhs_gamma);
  reduce(&MeasureIbpSample::lhs_fd, &MeasureIbpSample::se_fd, r.lhs_fd);
  reduce(&MeasureIbpSample::rhs, &MeasureIbpSample::se_rhs, r.rhs);
  reduce(&MeasureIbpSample::duality, &MeasureIbpSample::se_duality, r.duality);
  return r;
}

}  // namespace mvcn
