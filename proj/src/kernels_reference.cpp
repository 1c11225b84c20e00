#include "mvcn/errors.hpp"
#include "mvcn/kernels.hpp"

namespace mvcn::reference {

void drift_batch(const CoefficientSet& model, double t, const EmpiricalMeasure& mu, Vec xs, MutVec out) {
  const std::size_t d = static_cast<std::size_t>(model.dims().d);
  for (std::size_t i = 0; i < xs.size() / d; ++i) model.drift(t, xs.subspan(i * d, d), mu, out.subspan(i * d, d));
}

void grad_batch(const CoefficientSet& model, Coef c, int col, double t, const EmpiricalMeasure& mu, Vec xs,
                MutVec out) {
  const std::size_t d = static_cast<std::size_t>(model.dims().d);
  for (std::size_t i = 0; i < xs.size() / d; ++i) {
    model.grad_x(c, col, t, xs.subspan(i * d, d), mu, out.subspan(i * d * d, d * d));
  }
}

void coupling_apply(const CoefficientSet& model, Coef c, int col, double t, const EmpiricalMeasure& mu,
                    const EmpiricalMeasure& support, Vec tangents, int p, Vec xs, MutVec out) {
  const std::size_t d = static_cast<std::size_t>(model.dims().d);
  const std::size_t n = xs.size() / d;
  const std::size_t tb = d * p;
  if (tangents.size() != support.size() * tb || out.size() != n * tb) {
    fail(ErrorKind::ShapeMismatch, "coupling buffers disagree");
  }
  std::vector<double> kern(d * d);
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data() + i * tb;
    for (std::size_t q = 0; q < tb; ++q) o[q] = 0.0;
    for (std::size_t k = 0; k < support.size(); ++k) {
      model.lions(c, col, t, xs.subspan(i * d, d), mu, support.point(k), kern);
      const double w = support.weight(k);
      for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t l = 0; l < d; ++l) {
          for (int q = 0; q < p; ++q) o[a * p + q] += w * kern[a * d + l] * tangents[k * tb + l * p + q];
        }
      }
    }
  }
}

}  // namespace mvcn::reference
