#include "mvcn/kernels.hpp"

#include <algorithm>
#include <vector>

#include "mvcn/errors.hpp"

namespace mvcn {

namespace {

std::size_t carriers(const CoefficientSet& model, Vec xs) {
  const auto d = static_cast<std::size_t>(model.dims().d);
  if (xs.size() % d != 0) fail(ErrorKind::ShapeMismatch, "carrier states are not a multiple of d");
  return xs.size() / d;
}

// Only worth forking when there is enough pointwise work.
bool fork(std::size_t n, std::size_t m = 1) { return n * m >= 256; }

}  // namespace

void drift_batch(const CoefficientSet& model, double t, const EmpiricalMeasure& mu, Vec xs, MutVec out,
                 KernelPath path) {
  const int d = model.dims().d;
  const std::size_t n = carriers(model, xs);
  if (path == KernelPath::Auto && model.drift_batch_fast(t, mu, xs, out)) return;
#pragma omp parallel for schedule(static) if (fork(n, mu.size()))
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    model.drift(t, xs.subspan(i * d, d), mu, out.subspan(i * d, d));
  }
}

void sigma_batch(const CoefficientSet& model, Coef c, double t, const EmpiricalMeasure& mu, Vec xs, MutVec out) {
  const int d = model.dims().d;
  const std::size_t n = carriers(model, xs);
  const std::size_t block = static_cast<std::size_t>(d) * model.columns(c);
#pragma omp parallel for schedule(static) if (fork(n))
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    model.sigma(c, t, xs.subspan(i * d, d), mu, out.subspan(i * block, block));
  }
}

void grad_batch(const CoefficientSet& model, Coef c, int col, double t, const EmpiricalMeasure& mu, Vec xs,
                MutVec out, KernelPath path) {
  const int d = model.dims().d;
  const std::size_t n = carriers(model, xs);
  const std::size_t block = static_cast<std::size_t>(d) * d;
  if (c == Coef::Drift && path == KernelPath::Auto && model.grad_drift_batch_fast(t, mu, xs, out)) return;
#pragma omp parallel for schedule(static) if (fork(n, mu.size()))
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    model.grad_x(c, col, t, xs.subspan(i * d, d), mu, out.subspan(i * block, block));
  }
}

void coupling_apply(const CoefficientSet& model, Coef c, int col, double t, const EmpiricalMeasure& mu,
                    const EmpiricalMeasure& support, Vec tangents, int p, Vec xs, MutVec out, KernelPath path) {
  const int d = model.dims().d;
  const std::size_t n = carriers(model, xs);
  const std::size_t M = support.size();
  const std::size_t tb = static_cast<std::size_t>(d) * p;
  if (tangents.size() != M * tb || out.size() != n * tb) fail(ErrorKind::ShapeMismatch, "coupling buffers disagree");
  const ModelTraits& tr = model.traits();

  if (path == KernelPath::Auto) {
    if (tr.lions_vanish[static_cast<int>(c)]) {
      std::fill(out.begin(), out.end(), 0.0);
      return;
    }
    if (model.coupling_fast(c, col, t, mu, support, tangents, p, xs, out)) return;
    if (tr.separable) {
      // sum_k w_k L(x_i) R(y_k) T_k = L(x_i) * [sum_k w_k R(y_k) T_k]
      std::vector<double> agg(tb, 0.0), right(static_cast<std::size_t>(d) * d);
      for (std::size_t k = 0; k < M; ++k) {
        model.lions_right(c, col, t, mu, support.point(k), right);
        const double w = support.weight(k);
        const double* T = tangents.data() + k * tb;
        for (int a = 0; a < d; ++a) {
          for (int l = 0; l < d; ++l) {
            const double r = w * right[static_cast<std::size_t>(a) * d + l];
            if (r == 0.0) continue;
            for (int q = 0; q < p; ++q) agg[static_cast<std::size_t>(a) * p + q] += r * T[static_cast<std::size_t>(l) * p + q];
          }
        }
      }
#pragma omp parallel if (fork(n))
      {
        std::vector<double> left(static_cast<std::size_t>(d) * d);
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
          model.lions_left(c, col, t, xs.subspan(i * d, d), mu, left);
          double* o = out.data() + i * tb;
          for (int k = 0; k < d; ++k) {
            for (int q = 0; q < p; ++q) {
              double acc = 0.0;
              for (int a = 0; a < d; ++a) acc += left[static_cast<std::size_t>(k) * d + a] * agg[static_cast<std::size_t>(a) * p + q];
              o[static_cast<std::size_t>(k) * p + q] = acc;
            }
          }
        }
      }
      return;
    }
  }

#pragma omp parallel if (fork(n, M))
  {
    std::vector<double> kern(static_cast<std::size_t>(d) * d);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      double* o = out.data() + i * tb;
      std::fill(o, o + tb, 0.0);
      const Vec x = xs.subspan(i * d, d);
      for (std::size_t k = 0; k < M; ++k) {
        model.lions(c, col, t, x, mu, support.point(k), kern);
        const double w = support.weight(k);
        const double* T = tangents.data() + k * tb;
        for (int a = 0; a < d; ++a) {
          for (int l = 0; l < d; ++l) {
            const double r = w * kern[static_cast<std::size_t>(a) * d + l];
            for (int q = 0; q < p; ++q) o[static_cast<std::size_t>(a) * p + q] += r * T[static_cast<std::size_t>(l) * p + q];
          }
        }
      }
    }
  }
}

}  // namespace mvcn
