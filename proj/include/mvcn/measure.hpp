#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mvcn {

using Vec = std::span<const double>;
using MutVec = std::span<double>;

/// Non-owning view of a finite empirical measure on R^d.
///
/// Points are stored row-major (size() x dim()). Weights default to the
/// uniform 1/N; the weighted mean is precomputed because several models read
/// it once per particle.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(Vec points, int d);
  EmpiricalMeasure(Vec points, int d, Vec weights);

  int dim() const noexcept { return d_; }
  std::size_t size() const noexcept { return n_; }
  Vec points() const noexcept { return points_; }
  Vec point(std::size_t k) const noexcept { return points_.subspan(k * d_, d_); }
  double weight(std::size_t k) const noexcept { return weights_.empty() ? uniform_ : weights_[k]; }
  bool uniform() const noexcept { return weights_.empty(); }
  Vec mean() const noexcept { return mean_; }

 private:
  Vec points_;
  Vec weights_;
  int d_;
  std::size_t n_;
  double uniform_;
  std::vector<double> mean_;
};

}  // namespace mvcn
