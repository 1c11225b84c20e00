#include "mvcn/ibp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvcn/errors.hpp"
#include "mvcn/stochcalc.hpp"

namespace mvcn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXd sigma_at(const CoefficientSet& model, Coef which, double t, Vec x, const EmpiricalMeasure& mu) {
  const int d = model.dims().d;
  const int cols = model.columns(which);
  std::vector<double> buf(static_cast<std::size_t>(d) * cols);
  model.sigma(which, t, x, mu, buf);
  return Eigen::Map<const RowMat>(buf.data(), d, cols);
}

double min_eigen(const Eigen::MatrixXd& s) {
  const Eigen::MatrixXd M = s * s.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

Eigen::MatrixXd as_matrix(const TangentBlock& T, int i) {
  return Eigen::Map<const RowMat>(T.mat(i).data(), T.d, T.p);
}

}  // namespace

EllipticityReport check_ellipticity(const CoefficientSet& model, Coef which, const Trajectory& carriers,
                                    const Trajectory& law, double delta) {
  EllipticityReport r;
  r.which = which;
  r.delta_required = delta;
  r.min_eigen = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= carriers.steps(); ++k) {
    const EmpiricalMeasure mu = law.measure(k);
    const double t = carriers.grid().node(k);
    for (int i = 0; i < carriers.N(); ++i) {
      r.min_eigen = std::min(r.min_eigen, min_eigen(sigma_at(model, which, t, carriers.state(k, i), mu)));
    }
  }
  r.pass = r.min_eigen >= delta;
  return r;
}

EllipticityReport check_ellipticity(const CoefficientSet& model, Coef which, const Trajectory& traj, double delta) {
  return check_ellipticity(model, which, traj, traj, delta);
}

Eigen::MatrixXd right_pseudo_inverse(const Eigen::MatrixXd& sigma, double floor) {
  const Eigen::MatrixXd M = sigma * sigma.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  const Eigen::VectorXd& lam = es.eigenvalues();
  if (!(lam(0) >= floor) || !(lam(0) > 0.0)) {
    fail(ErrorKind::EllipticityFailure,
         "sigma sigma^T has eigenvalue " + std::to_string(lam(0)) + " below the floor " + std::to_string(floor));
  }
  const Eigen::MatrixXd inv = es.eigenvectors() * lam.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  return sigma.transpose() * inv;
}

TestFunction test_function(const std::string& name) {
  TestFunction tf;
  tf.name = name;
  if (name == "linear") {
    tf.f = [](Vec x) {
      double s = 0.0;
      for (double e : x) s += e;
      return s;
    };
    tf.grad = [](Vec, MutVec g) { std::fill(g.begin(), g.end(), 1.0); };
  } else if (name == "sin") {
    tf.f = [](Vec x) {
      double s = 0.0;
      for (double e : x) s += std::sin(e);
      return s;
    };
    tf.grad = [](Vec x, MutVec g) {
      for (std::size_t c = 0; c < x.size(); ++c) g[c] = std::cos(x[c]);
    };
  } else if (name == "indicator") {
    constexpr double width = 0.25;
    tf.f = [](Vec x) {
      double s = 0.0;
      for (double e : x) s += e;
      return 1.0 / (1.0 + std::exp(-s / width));
    };
    tf.grad = [](Vec x, MutVec g) {
      double s = 0.0;
      for (double e : x) s += e;
      const double p = 1.0 / (1.0 + std::exp(-s / width));
      std::fill(g.begin(), g.end(), p * (1.0 - p) / width);
    };
  } else {
    fail(ErrorKind::Config, "unknown test function '" + name + "' (expected linear, sin or indicator)");
  }
  return tf;
}

void SampleStats::add(double x) noexcept {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

Estimate SampleStats::estimate() const noexcept {
  Estimate e;
  e.mean = mean_;
  e.se = n_ > 1 ? std::sqrt(m2_ / static_cast<double>(n_ - 1) / static_cast<double>(n_)) : 0.0;
  return e;
}

bool agree(const Estimate& a, const Estimate& b, double rel, double scale) {
  return std::abs(a.mean - b.mean) <= rel * std::abs(scale) + 3.0 * std::sqrt(a.se * a.se + b.se * b.se);
}

// ---------------------------------------------------------------------------

SpatialIbpResult spatial_ibp(const CoefficientSet& model, const Trajectory& cloud, const NoiseBundle& cloud_noise,
                             const TestFunction& f, const SpatialIbpOptions& opt) {
  const Dims& dm = model.dims();
  const int d = dm.d;
  if (static_cast<int>(opt.x.size()) != d || static_cast<int>(opt.phi.size()) != d) {
    fail(ErrorKind::ShapeMismatch, "x and Phi must have dimension d");
  }
  if (opt.pilots < 2) fail(ErrorKind::Config, "spatial IBP needs at least two pilots");
  const int P = opt.pilots;
  const int K = cloud.steps();
  const double T = cloud.grid().T;
  const NoiseBundle pn = pilot_noise_for(cloud_noise, P, opt.pilot_seed);
  std::vector<double> init;
  for (int p = 0; p < P; ++p) init.insert(init.end(), opt.x.begin(), opt.x.end());
  const Trajectory pilots = simulate_frozen(model, pn, init, cloud);

  const EllipticityReport er = check_ellipticity(model, Coef::Sigma1, pilots, cloud, opt.delta);
  if (!er.pass) {
    fail(ErrorKind::EllipticityFailure, "sigma1 sigma1^T has eigenvalue " + std::to_string(er.min_eigen) +
                                            " below delta " + std::to_string(opt.delta));
  }

  const Eigen::Map<const Eigen::VectorXd> phi(opt.phi.data(), d);
  FirstVariation fv = init_first_variation(P, d);
  std::vector<CompensatedSum> delta1(P);
  for (int k = 0; k < K; ++k) {
    const EmpiricalMeasure mu = cloud.measure(k);
    const double t = cloud.grid().node(k);
#pragma omp parallel for schedule(static) if (P >= 256)
    for (int p = 0; p < P; ++p) {
      const Eigen::MatrixXd g = right_pseudo_inverse(sigma_at(model, Coef::Sigma1, t, pilots.state(k, p), mu),
                                                     opt.delta / 10.0) *
                                as_matrix(fv.block, p);
      const Eigen::VectorXd u = g * phi;
      const Vec dW1 = pn.idio(p, k);
      for (int j = 0; j < dm.m; ++j) delta1[p].add(u(j) * dW1[j]);
    }
    step_first_variation(model, pilots, cloud, pn, fv);
  }

  SampleStats lhs, rhs;
  std::vector<double> grad(d);
  for (int p = 0; p < P; ++p) {
    const Vec xT = pilots.state(K, p);
    f.grad(xT, grad);
    const Eigen::Map<const Eigen::RowVectorXd> gv(grad.data(), d);
    lhs.add((gv * as_matrix(fv.block, p) * phi)(0));
    rhs.add(f.f(xT) * delta1[p].value() / T);
  }
  return {lhs.estimate(), rhs.estimate()};
}

std::vector<Eigen::MatrixXd> build_weight_g(const CoefficientSet& model, const Trajectory& pilots,
                                            const Trajectory& law, const std::vector<TangentBlock>& w_hist, int p,
                                            double floor) {
  std::vector<Eigen::MatrixXd> g;
  for (int k = 0; k < pilots.steps(); ++k) {
    const Eigen::MatrixXd s = sigma_at(model, Coef::Sigma1, pilots.grid().node(k), pilots.state(k, p), law.measure(k));
    g.push_back(right_pseudo_inverse(s, floor) * as_matrix(w_hist.at(k), p));
  }
  return g;
}

MeasureWeight build_weight_h(const CoefficientSet& model, const Trajectory& cloud, const LionsRun& run, int i,
                             double floor) {
  if (run.gamma_hist.size() != static_cast<std::size_t>(cloud.steps() + 1)) {
    fail(ErrorKind::Config, "measure weight needs the Lions tangent history");
  }
  const int K = cloud.steps();
  const Eigen::MatrixXd psiT = as_matrix(run.psi_hist[K], i);
  MeasureWeight w;
  for (int k = 0; k < K; ++k) {
    const Eigen::MatrixXd s = sigma_at(model, Coef::Sigma0, cloud.grid().node(k), cloud.state(k, i), cloud.measure(k));
    w.A.push_back(right_pseudo_inverse(s, floor));
    w.h.push_back(w.A.back() * (psiT - as_matrix(run.psi_hist[k], i) + as_matrix(run.gamma_hist[k], i)));
  }
  return w;
}

std::vector<Eigen::MatrixXd> representation_profile(const CoefficientSet& model, const Trajectory& cloud,
                                                    const NoiseBundle& cloud_noise, const LionsRun& run, int i,
                                                    double floor) {
  const int K = cloud.steps();
  const int m0 = model.dims().m0;
  std::vector<int> all(K);
  for (int k = 0; k < K; ++k) all[k] = k;
  const TangentD0 d0 = run_tangent_d0(model, cloud, cloud_noise, all);
  const MeasureWeight w = build_weight_h(model, cloud, run, i, floor);
  const Eigen::MatrixXd D = as_matrix(d0.block, i);  // d x (K m0)
  std::vector<Eigen::MatrixXd> q;
  for (int k = 0; k < K; ++k) q.push_back(D.middleCols(static_cast<Eigen::Index>(k) * m0, m0) * w.h[k]);
  return q;
}

}  // namespace mvcn
