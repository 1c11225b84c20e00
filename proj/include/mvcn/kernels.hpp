#pragma once

#include "mvcn/model.hpp"

namespace mvcn {

/// Which implementation of the mean-field coupling sum to use.
/// Auto takes the model's specialised kernel, then the separable O(N) path,
/// then the generic O(N^2) pointwise sum. Generic always takes the last one.
enum class KernelPath { Auto, Generic };

// Batched evaluation over n carrier states `xs` (n x d) against the measure
// `mu`. The OpenMP versions split the outer carrier index only, so every
// per-carrier sum runs in a fixed order and results do not depend on the
// thread count.

/// out: n x d.
void drift_batch(const CoefficientSet& model, double t, const EmpiricalMeasure& mu, Vec xs, MutVec out,
                 KernelPath path = KernelPath::Auto);
/// out: n x d x cols(c), sigma0 or sigma1.
void sigma_batch(const CoefficientSet& model, Coef c, double t, const EmpiricalMeasure& mu, Vec xs, MutVec out);
/// out: n x d x d, Jacobian of column `col` of family c.
void grad_batch(const CoefficientSet& model, Coef c, int col, double t, const EmpiricalMeasure& mu, Vec xs,
                MutVec out, KernelPath path = KernelPath::Auto);

/// out_i = sum_k w_k d_mu coef(t, x_i, mu)(y_k) T_k, with (y_k, w_k) the
/// support measure and T_k (d x p) its tangents. out: n x d x p.
void coupling_apply(const CoefficientSet& model, Coef c, int col, double t, const EmpiricalMeasure& mu,
                    const EmpiricalMeasure& support, Vec tangents, int p, Vec xs, MutVec out,
                    KernelPath path = KernelPath::Auto);

/// Serial, pointwise implementations kept as the testing baseline.
namespace reference {

void drift_batch(const CoefficientSet& model, double t, const EmpiricalMeasure& mu, Vec xs, MutVec out);
void grad_batch(const CoefficientSet& model, Coef c, int col, double t, const EmpiricalMeasure& mu, Vec xs,
                MutVec out);
void coupling_apply(const CoefficientSet& model, Coef c, int col, double t, const EmpiricalMeasure& mu,
                    const EmpiricalMeasure& support, Vec tangents, int p, Vec xs, MutVec out);

}  // namespace reference

}  // namespace mvcn
