#include <algorithm>
#include <cmath>
#include <vector>

#include "mvcn/errors.hpp"
#include "mvcn/model.hpp"

namespace mvcn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double op_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

void require_shape(const Eigen::MatrixXd& m, int rows, int cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    fail(ErrorKind::ShapeMismatch, std::string(name) + " must be " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (!m.allFinite()) fail(ErrorKind::NonFiniteInput, std::string(name) + " has non-finite entries");
}

void store(const Eigen::MatrixXd& m, MutVec out) {
  Eigen::Map<RowMat>(out.data(), m.rows(), m.cols()) = m;
}

void zero(MutVec out) { std::fill(out.begin(), out.end(), 0.0); }

void identity(MutVec out, int d) {
  zero(out);
  for (int k = 0; k < d; ++k) out[static_cast<std::size_t>(k) * d + k] = 1.0;
}

// ---------------------------------------------------------------------------

class ConstantModel final : public CoefficientSet {
 public:
  explicit ConstantModel(const ConstantParams& p)
      : CoefficientSet(Dims{static_cast<int>(p.s0.rows()), static_cast<int>(p.s0.cols()), static_cast<int>(p.s1.cols())},
                       make_traits(p)),
        s0_(p.s0),
        s1_(p.s1) {
    require_shape(s1_, dims().d, dims().m, "s1");
    require_shape(s0_, dims().d, dims().m0, "s0");
  }

  void drift(double, Vec, const EmpiricalMeasure&, MutVec out) const override { zero(out); }
  void sigma0(double, Vec, const EmpiricalMeasure&, MutVec out) const override { store(s0_, out); }
  void sigma1(double, Vec, const EmpiricalMeasure&, MutVec out) const override { store(s1_, out); }
  void grad_x(Coef, int, double, Vec, const EmpiricalMeasure&, MutVec out) const override { zero(out); }
  void lions(Coef, int, double, Vec, const EmpiricalMeasure&, Vec, MutVec out) const override { zero(out); }
  void lions_left(Coef, int, double, Vec, const EmpiricalMeasure&, MutVec out) const override { zero(out); }
  void lions_right(Coef, int, double, const EmpiricalMeasure&, Vec, MutVec out) const override {
    identity(out, dims().d);
  }
  bool drift_batch_fast(double, const EmpiricalMeasure&, Vec, MutVec out) const override {
    zero(out);
    return true;
  }
  bool grad_drift_batch_fast(double, const EmpiricalMeasure&, Vec, MutVec out) const override {
    zero(out);
    return true;
  }

 private:
  static ModelTraits make_traits(const ConstantParams&) {
    ModelTraits tr;
    tr.name = "constant";
    tr.separable = true;
    tr.sigma0_state_independent = true;
    tr.lions_vanish = {true, true, true};
    return tr;
  }

  Eigen::MatrixXd s0_, s1_;
};

// ---------------------------------------------------------------------------

class LinearModel final : public CoefficientSet {
 public:
  explicit LinearModel(const LinearMeanFieldParams& p)
      : CoefficientSet(Dims{static_cast<int>(p.a.rows()), static_cast<int>(p.s0.cols()), static_cast<int>(p.s1.cols())},
                       make_traits(p)),
        a_(p.a),
        c_(p.c),
        s0_(p.s0),
        s1_(p.s1) {
    const int d = dims().d;
    require_shape(a_, d, d, "a");
    require_shape(c_, d, d, "c");
    require_shape(s0_, d, dims().m0, "s0");
    require_shape(s1_, d, dims().m, "s1");
  }

  void drift(double, Vec x, const EmpiricalMeasure& mu, MutVec out) const override { eval(x, mu.mean(), out); }
  void sigma0(double, Vec, const EmpiricalMeasure&, MutVec out) const override { store(s0_, out); }
  void sigma1(double, Vec, const EmpiricalMeasure&, MutVec out) const override { store(s1_, out); }

  void grad_x(Coef c, int, double, Vec, const EmpiricalMeasure&, MutVec out) const override {
    if (c == Coef::Drift) {
      store(a_, out);
    } else {
      zero(out);
    }
  }
  void lions(Coef c, int, double, Vec, const EmpiricalMeasure&, Vec, MutVec out) const override {
    if (c == Coef::Drift) {
      store(c_, out);
    } else {
      zero(out);
    }
  }
  void lions_left(Coef c, int col, double t, Vec x, const EmpiricalMeasure& mu, MutVec out) const override {
    lions(c, col, t, x, mu, x, out);
  }
  void lions_right(Coef, int, double, const EmpiricalMeasure&, Vec, MutVec out) const override {
    identity(out, dims().d);
  }

  bool drift_batch_fast(double, const EmpiricalMeasure& mu, Vec xs, MutVec out) const override {
    const int d = dims().d;
    const std::size_t n = xs.size() / d;
    for (std::size_t i = 0; i < n; ++i) eval(xs.subspan(i * d, d), mu.mean(), out.subspan(i * d, d));
    return true;
  }
  bool grad_drift_batch_fast(double, const EmpiricalMeasure&, Vec xs, MutVec out) const override {
    const int d = dims().d;
    const std::size_t n = xs.size() / d;
    for (std::size_t i = 0; i < n; ++i) store(a_, out.subspan(i * d * d, static_cast<std::size_t>(d) * d));
    return true;
  }

 private:
  void eval(Vec x, Vec mean, MutVec out) const {
    const int d = dims().d;
    for (int k = 0; k < d; ++k) {
      double acc = 0.0;
      for (int l = 0; l < d; ++l) acc += a_(k, l) * x[l];
      for (int l = 0; l < d; ++l) acc += c_(k, l) * mean[l];
      out[k] = acc;
    }
  }

  static ModelTraits make_traits(const LinearMeanFieldParams& p) {
    ModelTraits tr;
    tr.name = "linear";
    tr.lipschitz_L = p.lipschitz >= 0.0 ? p.lipschitz : op_norm(p.a) + op_norm(p.c);
    tr.derivative_bound = std::max(op_norm(p.a), op_norm(p.c));
    tr.separable = true;
    tr.sigma0_state_independent = true;
    tr.lions_vanish = {false, true, true};
    return tr;
  }

  Eigen::MatrixXd a_, c_, s0_, s1_;
};

// ---------------------------------------------------------------------------

// tanh through one vectorised exp: tanh(z) = 1 - 2 / (exp(2z) + 1).
// Saturates cleanly: exp overflow gives 1, underflow gives -1.
inline void tanh_inplace(Eigen::ArrayXd& z) { z = 1.0 - 2.0 / ((2.0 * z).exp() + 1.0); }

inline double tanh_scalar(double z) { return 1.0 - 2.0 / (std::exp(2.0 * z) + 1.0); }

class TanhModel final : public CoefficientSet {
 public:
  explicit TanhModel(const TanhInteractionParams& p)
      : CoefficientSet(Dims{static_cast<int>(p.a.rows()), static_cast<int>(p.s0.cols()), static_cast<int>(p.s1.cols())},
                       make_traits(p)),
        a_(p.a),
        c_(p.c),
        s0_(p.s0),
        s1_(p.s1),
        kappa_(p.kappa),
        beta0_(p.beta0),
        beta1_(p.beta1) {
    const int d = dims().d;
    require_shape(a_, d, d, "a");
    require_shape(c_, d, d, "c");
    require_shape(s0_, d, dims().m0, "s0");
    require_shape(s1_, d, dims().m, "s1");
    if (!std::isfinite(kappa_) || !std::isfinite(beta0_) || !std::isfinite(beta1_)) {
      fail(ErrorKind::NonFiniteInput, "tanh model parameters must be finite");
    }
  }

  void drift(double t, Vec x, const EmpiricalMeasure& mu, MutVec out) const override {
    drift_batch_fast(t, mu, x, out);
  }
  void sigma0(double, Vec x, const EmpiricalMeasure&, MutVec out) const override { diffusion(s0_, beta0_, x, out); }
  void sigma1(double, Vec x, const EmpiricalMeasure&, MutVec out) const override { diffusion(s1_, beta1_, x, out); }

  void grad_x(Coef c, int col, double t, Vec x, const EmpiricalMeasure& mu, MutVec out) const override {
    const int d = dims().d;
    if (c == Coef::Drift) {
      grad_drift_batch_fast(t, mu, x, out);
      return;
    }
    const Eigen::MatrixXd& s = c == Coef::Sigma0 ? s0_ : s1_;
    const double beta = c == Coef::Sigma0 ? beta0_ : beta1_;
    zero(out);
    for (int k = 0; k < d; ++k) {
      const double th = tanh_scalar(x[k]);
      out[static_cast<std::size_t>(k) * d + k] = s(k, col) * beta * (1.0 - th * th);
    }
  }

  void lions(Coef c, int, double, Vec x, const EmpiricalMeasure&, Vec y, MutVec out) const override {
    const int d = dims().d;
    zero(out);
    if (c != Coef::Drift) return;
    for (int l = 0; l < d; ++l) {
      const double th = tanh_scalar(kappa_ * (x[l] - y[l]));
      const double s = kappa_ * (1.0 - th * th);
      for (int k = 0; k < d; ++k) out[static_cast<std::size_t>(k) * d + l] = -c_(k, l) * s;
    }
  }

  bool drift_batch_fast(double, const EmpiricalMeasure& mu, Vec xs, MutVec out) const override {
    sweep(mu, xs, out, MutVec{});
    return true;
  }

  bool grad_drift_batch_fast(double, const EmpiricalMeasure& mu, Vec xs, MutVec out) const override {
    std::vector<double> b(xs.size());
    sweep(mu, xs, b, out);
    return true;
  }

  bool coupling_fast(Coef c, int, double, const EmpiricalMeasure&, const EmpiricalMeasure& support, Vec tangents,
                     int p, Vec xs, MutVec out) const override {
    const int d = dims().d;
    const std::size_t n = xs.size() / d;
    if (c != Coef::Drift) {
      zero(out);
      return true;
    }
    const Eigen::Index M = static_cast<Eigen::Index>(support.size());
    const Columns cols = columns_of(support);
    // Tangents regrouped as one M x (d p) column-major block so that the
    // weighted sech^2 profile is applied with a single matrix-vector product.
    const Eigen::Index dp = static_cast<Eigen::Index>(d) * p;
    Eigen::MatrixXd tt(M, dp);
    for (Eigen::Index k = 0; k < M; ++k) {
      for (Eigen::Index q = 0; q < dp; ++q) tt(k, q) = tangents[static_cast<std::size_t>(k * dp + q)];
    }
#pragma omp parallel
    {
      Eigen::ArrayXd z(M);
      Eigen::VectorXd agg(dp);
#pragma omp for schedule(static)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        for (int l = 0; l < d; ++l) {
          z = kappa_ * (xs[i * d + l] - cols.y[l]);
          tanh_inplace(z);
          z = cols.w * (1.0 - z * z) * kappa_;
          agg.segment(static_cast<Eigen::Index>(l) * p, p).noalias() =
              tt.middleCols(static_cast<Eigen::Index>(l) * p, p).transpose() * z.matrix();
        }
        // out_i[k, q] = - sum_l c_kl agg[l, q]
        for (int k = 0; k < d; ++k) {
          for (int q = 0; q < p; ++q) {
            double acc = 0.0;
            for (int l = 0; l < d; ++l) acc += c_(k, l) * agg(static_cast<Eigen::Index>(l) * p + q);
            out[(static_cast<std::size_t>(i) * d + k) * p + q] = -acc;
          }
        }
      }
    }
    return true;
  }

 private:
  struct Columns {
    std::vector<Eigen::ArrayXd> y;
    Eigen::ArrayXd w;
  };

  Columns columns_of(const EmpiricalMeasure& mu) const {
    const int d = dims().d;
    const Eigen::Index M = static_cast<Eigen::Index>(mu.size());
    Columns cols;
    cols.y.assign(d, Eigen::ArrayXd(M));
    cols.w.resize(M);
    const Vec pts = mu.points();
    for (Eigen::Index k = 0; k < M; ++k) {
      for (int l = 0; l < d; ++l) cols.y[l](k) = pts[static_cast<std::size_t>(k) * d + l];
      cols.w(k) = mu.weight(static_cast<std::size_t>(k));
    }
    return cols;
  }

  // Drift for every row of xs and, when `grads` is non-empty, its Jacobian.
  void sweep(const EmpiricalMeasure& mu, Vec xs, MutVec out, MutVec grads) const {
    const int d = dims().d;
    const std::size_t n = xs.size() / d;
    const Eigen::Index M = static_cast<Eigen::Index>(mu.size());
    const Columns cols = columns_of(mu);
    const bool want_grad = !grads.empty();
#pragma omp parallel if (n * static_cast<std::size_t>(M) > 4096)
    {
      Eigen::ArrayXd z(M);
      std::vector<double> g(d), s(d);
#pragma omp for schedule(static)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const double* x = xs.data() + i * d;
        for (int l = 0; l < d; ++l) {
          z = kappa_ * (x[l] - cols.y[l]);
          tanh_inplace(z);
          g[l] = (cols.w * z).sum();
          if (want_grad) s[l] = kappa_ * (cols.w * (1.0 - z * z)).sum();
        }
        for (int k = 0; k < d; ++k) {
          double acc = 0.0;
          for (int l = 0; l < d; ++l) acc += a_(k, l) * x[l];
          for (int l = 0; l < d; ++l) acc += c_(k, l) * g[l];
          out[i * d + k] = acc;
          if (want_grad) {
            for (int l = 0; l < d; ++l) grads[(i * d + k) * d + l] = a_(k, l) + c_(k, l) * s[l];
          }
        }
      }
    }
  }

  void diffusion(const Eigen::MatrixXd& s, double beta, Vec x, MutVec out) const {
    const int d = dims().d;
    const int cols = static_cast<int>(s.cols());
    for (int k = 0; k < d; ++k) {
      const double f = 1.0 + beta * tanh_scalar(x[k]);
      for (int j = 0; j < cols; ++j) out[static_cast<std::size_t>(k) * cols + j] = s(k, j) * f;
    }
  }

  static ModelTraits make_traits(const TanhInteractionParams& p) {
    ModelTraits tr;
    tr.name = "tanh";
    const double kc = std::abs(p.kappa) * op_norm(p.c);
    const double ls0 = std::abs(p.beta0) * p.s0.norm();
    const double ls1 = std::abs(p.beta1) * p.s1.norm();
    tr.lipschitz_L = p.lipschitz >= 0.0 ? p.lipschitz : std::max({op_norm(p.a) + kc, ls0, ls1});
    tr.derivative_bound = std::max({op_norm(p.a) + kc, std::abs(p.beta0) * p.s0.cwiseAbs().maxCoeff(),
                                    std::abs(p.beta1) * p.s1.cwiseAbs().maxCoeff()});
    tr.separable = false;
    tr.sigma0_state_independent = p.beta0 == 0.0;
    tr.lions_vanish = {false, true, true};
    return tr;
  }

  Eigen::MatrixXd a_, c_, s0_, s1_;
  double kappa_, beta0_, beta1_;
};

}  // namespace

std::unique_ptr<CoefficientSet> make_model(const BuiltinModel& spec) {
  return std::visit(
      [](const auto& p) -> std::unique_ptr<CoefficientSet> {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, ConstantParams>) {
          return std::make_unique<ConstantModel>(p);
        } else if constexpr (std::is_same_v<P, LinearMeanFieldParams>) {
          return std::make_unique<LinearModel>(p);
        } else {
          return std::make_unique<TanhModel>(p);
        }
      },
      spec);
}

}  // namespace mvcn
