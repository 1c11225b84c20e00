#include "mvcn/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mvcn/errors.hpp"
#include "mvcn/wasserstein.hpp"

namespace mvcn {

void Dims::validate() const {
  if (d <= 0 || m0 <= 0 || m <= 0) fail(ErrorKind::ShapeMismatch, "dimensions must be strictly positive");
}

CoefficientSet::CoefficientSet(Dims dims, ModelTraits traits) : dims_(dims), traits_(std::move(traits)) {
  dims_.validate();
}

int CoefficientSet::columns(Coef c) const noexcept {
  switch (c) {
    case Coef::Drift: return 1;
    case Coef::Sigma0: return dims_.m0;
    case Coef::Sigma1: return dims_.m;
  }
  return 0;
}

void CoefficientSet::sigma(Coef c, double t, Vec x, const EmpiricalMeasure& mu, MutVec out) const {
  if (c == Coef::Sigma0) {
    sigma0(t, x, mu, out);
  } else if (c == Coef::Sigma1) {
    sigma1(t, x, mu, out);
  } else {
    drift(t, x, mu, out);
  }
}

void CoefficientSet::grad_x(Coef, int, double, Vec, const EmpiricalMeasure&, MutVec) const {
  fail(ErrorKind::DerivativeUnavailable, "model '" + traits_.name + "' provides no spatial gradient");
}

void CoefficientSet::lions(Coef, int, double, Vec, const EmpiricalMeasure&, Vec, MutVec) const {
  fail(ErrorKind::DerivativeUnavailable, "model '" + traits_.name + "' provides no Lions derivative");
}

void CoefficientSet::lions_left(Coef, int, double, Vec, const EmpiricalMeasure&, MutVec) const {
  fail(ErrorKind::DerivativeUnavailable, "model '" + traits_.name + "' is not separable");
}

void CoefficientSet::lions_right(Coef, int, double, const EmpiricalMeasure&, Vec, MutVec) const {
  fail(ErrorKind::DerivativeUnavailable, "model '" + traits_.name + "' is not separable");
}

bool CoefficientSet::drift_batch_fast(double, const EmpiricalMeasure&, Vec, MutVec) const { return false; }
bool CoefficientSet::grad_drift_batch_fast(double, const EmpiricalMeasure&, Vec, MutVec) const { return false; }
bool CoefficientSet::coupling_fast(Coef, int, double, const EmpiricalMeasure&, const EmpiricalMeasure&, Vec, int,
                                   Vec, MutVec) const {
  return false;
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_finite(Vec v, const char* what, long index = -1) {
  for (double e : v) {
    if (!std::isfinite(e)) fail(ErrorKind::NonFiniteInput, std::string(what) + " is not finite", index);
  }
}

void check_inputs(const CoefficientSet& model, Vec x, const EmpiricalMeasure& mu) {
  const int d = model.dims().d;
  if (static_cast<int>(x.size()) != d) fail(ErrorKind::ShapeMismatch, "state has wrong dimension");
  if (mu.dim() != d) fail(ErrorKind::ShapeMismatch, "measure has wrong dimension");
  check_finite(x, "state");
  for (std::size_t k = 0; k < mu.size(); ++k) check_finite(mu.point(k), "measure support point", static_cast<long>(k));
}

Eigen::MatrixXd to_matrix(const std::vector<double>& buf, int rows, int cols) {
  return Eigen::Map<const RowMat>(buf.data(), rows, cols);
}

void check_output(const std::vector<double>& buf, const char* what) {
  for (double e : buf) {
    if (!std::isfinite(e)) fail(ErrorKind::NonFiniteState, std::string(what) + " evaluated to a non-finite value");
  }
}

double frob(Vec v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

}  // namespace

CoefficientValues eval_coefficients(const CoefficientSet& model, double t, Vec x, const EmpiricalMeasure& mu) {
  check_inputs(model, x, mu);
  const Dims& dm = model.dims();
  std::vector<double> b(dm.d), s0(static_cast<std::size_t>(dm.d) * dm.m0), s1(static_cast<std::size_t>(dm.d) * dm.m);
  model.drift(t, x, mu, b);
  model.sigma0(t, x, mu, s0);
  model.sigma1(t, x, mu, s1);
  check_output(b, "drift");
  check_output(s0, "sigma0");
  check_output(s1, "sigma1");
  CoefficientValues out;
  out.b = Eigen::Map<const Eigen::VectorXd>(b.data(), dm.d);
  out.sigma0 = to_matrix(s0, dm.d, dm.m0);
  out.sigma1 = to_matrix(s1, dm.d, dm.m);
  return out;
}

DerivativeValues eval_derivatives(const CoefficientSet& model, double t, Vec x, const EmpiricalMeasure& mu, Vec y) {
  check_inputs(model, x, mu);
  const Dims& dm = model.dims();
  if (static_cast<int>(y.size()) != dm.d) fail(ErrorKind::ShapeMismatch, "Lions evaluation point has wrong dimension");
  check_finite(y, "Lions evaluation point");
  if (!model.traits().has_derivatives) {
    fail(ErrorKind::DerivativeUnavailable, "model '" + model.traits().name + "' provides no derivatives");
  }
  const int d = dm.d;
  std::vector<double> buf(static_cast<std::size_t>(d) * d);
  auto grad = [&](Coef c, int col) {
    model.grad_x(c, col, t, x, mu, buf);
    check_output(buf, "spatial gradient");
    return to_matrix(buf, d, d);
  };
  auto lions = [&](Coef c, int col) {
    model.lions(c, col, t, x, mu, y, buf);
    check_output(buf, "Lions derivative");
    return to_matrix(buf, d, d);
  };
  DerivativeValues out;
  out.grad_b = grad(Coef::Drift, 0);
  out.lions_b = lions(Coef::Drift, 0);
  for (int j = 0; j < dm.m0; ++j) {
    out.grad_sigma0.push_back(grad(Coef::Sigma0, j));
    out.lions_sigma0.push_back(lions(Coef::Sigma0, j));
  }
  for (int j = 0; j < dm.m; ++j) {
    out.grad_sigma1.push_back(grad(Coef::Sigma1, j));
    out.lions_sigma1.push_back(lions(Coef::Sigma1, j));
  }
  return out;
}

LipschitzReport lipschitz_selfcheck(const CoefficientSet& model, int sample_count, std::uint64_t seed) {
  const Dims& dm = model.dims();
  const int d = dm.d;
  const int support = 8;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<double> x(d), y(d), mu_pts(static_cast<std::size_t>(support) * d), nu_pts(mu_pts.size());
  std::vector<double> bx(d), by(d);
  std::vector<double> s0x(static_cast<std::size_t>(d) * dm.m0), s0y(s0x.size());
  std::vector<double> s1x(static_cast<std::size_t>(d) * dm.m), s1y(s1x.size());

  LipschitzReport report;
  for (int n = 0; n < std::max(sample_count, 2); ++n) {
    const double scale = 0.1 + 3.0 * unit(rng);
    for (auto& e : x) e = scale * gauss(rng);
    for (auto& e : mu_pts) e = scale * gauss(rng);
    // Alternate between moving only x, only the measure, and both.
    const int mode = n % 3;
    for (int c = 0; c < d; ++c) y[c] = mode == 1 ? x[c] : x[c] + 0.5 * gauss(rng);
    for (std::size_t c = 0; c < mu_pts.size(); ++c) nu_pts[c] = mode == 0 ? mu_pts[c] : mu_pts[c] + 0.5 * gauss(rng);
    const EmpiricalMeasure mu(mu_pts, d), nu(nu_pts, d);
    const double t = unit(rng);

    double dx = 0.0;
    for (int c = 0; c < d; ++c) dx += (x[c] - y[c]) * (x[c] - y[c]);
    const double denom = std::sqrt(dx) + wasserstein2(mu, nu);
    if (!(denom > 1e-12)) continue;

    model.drift(t, x, mu, bx);
    model.drift(t, y, nu, by);
    model.sigma0(t, x, mu, s0x);
    model.sigma0(t, y, nu, s0y);
    model.sigma1(t, x, mu, s1x);
    model.sigma1(t, y, nu, s1y);
    auto diff = [](const std::vector<double>& a, const std::vector<double>& b) {
      std::vector<double> r(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
      return r;
    };
    const double inc = std::max({frob(diff(bx, by)), frob(diff(s0x, s0y)), frob(diff(s1x, s1y))});
    report.max_ratio = std::max(report.max_ratio, inc / denom);
  }
  report.pass = report.max_ratio <= model.traits().lipschitz_L * 1.01;
  return report;
}

// ---------------------------------------------------------------------------

namespace {

class FunctionModel final : public CoefficientSet {
 public:
  explicit FunctionModel(FunctionModelSpec spec)
      : CoefficientSet(spec.dims, traits_for(spec)), spec_(std::move(spec)) {
    if (!spec_.drift || !spec_.sigma0 || !spec_.sigma1) {
      fail(ErrorKind::Config, "function model needs drift, sigma0 and sigma1 callbacks");
    }
  }

  void drift(double t, Vec x, const EmpiricalMeasure& mu, MutVec out) const override { spec_.drift(t, x, mu, out); }
  void sigma0(double t, Vec x, const EmpiricalMeasure& mu, MutVec out) const override { spec_.sigma0(t, x, mu, out); }
  void sigma1(double t, Vec x, const EmpiricalMeasure& mu, MutVec out) const override { spec_.sigma1(t, x, mu, out); }

  void grad_x(Coef c, int col, double t, Vec x, const EmpiricalMeasure& mu, MutVec out) const override {
    if (!spec_.grad_x) CoefficientSet::grad_x(c, col, t, x, mu, out);
    spec_.grad_x(c, col, t, x, mu, out);
  }
  void lions(Coef c, int col, double t, Vec x, const EmpiricalMeasure& mu, Vec y, MutVec out) const override {
    if (!spec_.lions) CoefficientSet::lions(c, col, t, x, mu, y, out);
    spec_.lions(c, col, t, x, mu, y, out);
  }

 private:
  static ModelTraits traits_for(const FunctionModelSpec& spec) {
    ModelTraits tr;
    tr.name = spec.name;
    tr.lipschitz_L = spec.lipschitz_L;
    tr.derivative_bound = spec.derivative_bound;
    tr.has_derivatives = static_cast<bool>(spec.grad_x) && static_cast<bool>(spec.lions);
    tr.sigma0_state_independent = spec.sigma0_state_independent;
    return tr;
  }

  FunctionModelSpec spec_;
};

}  // namespace

std::unique_ptr<CoefficientSet> make_function_model(FunctionModelSpec spec) {
  return std::make_unique<FunctionModel>(std::move(spec));
}

}  // namespace mvcn
