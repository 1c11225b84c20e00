#include "mvcn/measure.hpp"

#include <cmath>

#include "mvcn/errors.hpp"

namespace mvcn {

EmpiricalMeasure::EmpiricalMeasure(Vec points, int d) : EmpiricalMeasure(points, d, Vec{}) {}

EmpiricalMeasure::EmpiricalMeasure(Vec points, int d, Vec weights)
    : points_(points), weights_(weights), d_(d) {
  if (d <= 0 || points.size() % static_cast<std::size_t>(d) != 0) {
    fail(ErrorKind::ShapeMismatch, "measure support is not a multiple of the dimension");
  }
  n_ = points.size() / static_cast<std::size_t>(d);
  if (n_ == 0) fail(ErrorKind::ShapeMismatch, "empty measure");
  uniform_ = 1.0 / static_cast<double>(n_);
  if (!weights_.empty()) {
    if (weights_.size() != n_) fail(ErrorKind::ShapeMismatch, "weight count differs from support size");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorKind::NonFiniteInput, "weights must be finite and non-negative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) fail(ErrorKind::ShapeMismatch, "weights must sum to one");
  }
  mean_.assign(static_cast<std::size_t>(d), 0.0);
  for (std::size_t k = 0; k < n_; ++k) {
    const double w = weight(k);
    for (int c = 0; c < d; ++c) mean_[c] += w * points_[k * d + c];
  }
}

}  // namespace mvcn
