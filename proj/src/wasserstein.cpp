#include "mvcn/wasserstein.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "mvcn/errors.hpp"

namespace mvcn {

namespace {

double w2_line(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  auto sorted = [](const EmpiricalMeasure& m) {
    std::vector<std::pair<double, double>> v(m.size());
    for (std::size_t k = 0; k < m.size(); ++k) v[k] = {m.points()[k], m.weight(k)};
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto a = sorted(mu);
  const auto b = sorted(nu);
  // Walk both quantile functions, pairing mass in order.
  std::size_t i = 0, j = 0;
  double ra = a[0].second, rb = b[0].second, acc = 0.0;
  while (i < a.size() && j < b.size()) {
    const double mass = std::min(ra, rb);
    const double gap = a[i].first - b[j].first;
    acc += mass * gap * gap;
    ra -= mass;
    rb -= mass;
    if (ra <= 1e-15 && ++i < a.size()) ra += a[i].second;
    if (rb <= 1e-15 && ++j < b.size()) rb += b[j].second;
  }
  return std::sqrt(std::max(acc, 0.0));
}

}  // namespace

std::vector<int> solve_assignment(std::span<const double> cost, int n) {
  // Shortest augmenting path Hungarian method with potentials, O(n^3).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      const double* row = cost.data() + static_cast<std::size_t>(i0 - 1) * n;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n);
  for (int j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

double wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.dim() != nu.dim()) fail(ErrorKind::ShapeMismatch, "measures live in different dimensions");
  if (mu.dim() == 1) return w2_line(mu, nu);
  if (mu.size() != nu.size() || mu.size() > kMaxAssignmentSize) {
    fail(ErrorKind::UnsupportedSize, "d >= 2 needs equal supports of at most 4096 points; subsample first");
  }
  if (!mu.uniform() || !nu.uniform()) fail(ErrorKind::UnsupportedSize, "d >= 2 needs uniform weights");
  const int n = static_cast<int>(mu.size());
  const int d = mu.dim();
  std::vector<double> cost(static_cast<std::size_t>(n) * n);
#pragma omp parallel for schedule(static) if (n > 256)
  for (int i = 0; i < n; ++i) {
    const Vec x = mu.point(i);
    for (int j = 0; j < n; ++j) {
      const Vec y = nu.point(j);
      double s = 0.0;
      for (int c = 0; c < d; ++c) s += (x[c] - y[c]) * (x[c] - y[c]);
      cost[static_cast<std::size_t>(i) * n + j] = s;
    }
  }
  const auto match = solve_assignment(cost, n);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += cost[static_cast<std::size_t>(i) * n + match[i]];
  return std::sqrt(acc / n);
}

}  // namespace mvcn
