#pragma once

#include "mvcn/measure.hpp"

namespace mvcn {

/// Largest support handled by the exact assignment solver for d >= 2.
inline constexpr std::size_t kMaxAssignmentSize = 4096;

/// Exact Wasserstein-2 distance between two empirical measures.
///
/// d = 1: quantile coupling of the sorted supports, any sizes and weights.
/// d >= 2: uniform measures of equal size N <= kMaxAssignmentSize, solved as
/// an optimal assignment on the N x N squared-distance matrix. Anything else
/// raises UnsupportedSize.
double wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

/// Minimum-cost perfect matching for a dense n x n cost matrix (row-major).
/// Returns the column assigned to each row.
std::vector<int> solve_assignment(std::span<const double> cost, int n);

}  // namespace mvcn
