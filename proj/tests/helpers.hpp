#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "mvcn/engine.hpp"
#include "mvcn/model.hpp"

namespace mvcn::test {

inline Eigen::MatrixXd scalar(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

inline std::unique_ptr<CoefficientSet> constant_model(double s0 = 0.2, double s1 = 0.4) {
  return make_model(ConstantParams{scalar(s0), scalar(s1)});
}

inline std::unique_ptr<CoefficientSet> linear_model(double a = -0.5, double c = 0.3, double s0 = 0.2,
                                                    double s1 = 0.4, double lipschitz = -1.0) {
  return make_model(LinearMeanFieldParams{scalar(a), scalar(c), scalar(s0), scalar(s1), lipschitz});
}

inline std::unique_ptr<CoefficientSet> tanh_model(double beta0 = 0.3, double beta1 = 0.2, double c = 0.5) {
  TanhInteractionParams p;
  p.a = scalar(-0.5);
  p.c = scalar(c);
  p.kappa = 1.0;
  p.s0 = scalar(0.3);
  p.s1 = scalar(0.4);
  p.beta0 = beta0;
  p.beta1 = beta1;
  return make_model(p);
}

/// Two-dimensional tanh model with non-commuting couplings.
inline std::unique_ptr<CoefficientSet> tanh_model_2d() {
  TanhInteractionParams p;
  p.a = (Eigen::MatrixXd(2, 2) << -0.6, 0.1, 0.0, -0.4).finished();
  p.c = (Eigen::MatrixXd(2, 2) << 0.4, 0.1, -0.2, 0.3).finished();
  p.kappa = 1.3;
  p.s0 = (Eigen::MatrixXd(2, 1) << 0.3, 0.2).finished();
  p.s1 = (Eigen::MatrixXd(2, 2) << 0.4, 0.05, 0.0, 0.3).finished();
  p.beta0 = 0.25;
  p.beta1 = 0.15;
  return make_model(p);
}

inline std::vector<double> gaussian_init(int N, int d, std::uint64_t seed, double std_dev = 1.0) {
  const std::vector<double> mean(d, 0.0);
  return sample_initial(N, d, mean, std_dev, seed);
}

/// Bundle with hand-set increments.
inline NoiseBundle fixed_bundle(TimeGrid grid, int N, double dw0, double dw1) {
  NoiseBundle nb = generate(grid, N, 1, 1, 1);
  std::fill(nb.dW0.begin(), nb.dW0.end(), dw0);
  std::fill(nb.dW1.begin(), nb.dW1.end(), dw1);
  return nb;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace mvcn::test
