#pragma once

#include "midscale/measures.hpp"

#include <limits>
#include <vector>

namespace midscale {

/// Exact minimal-cost perfect assignment on a square cost matrix via
/// shortest augmenting paths with dual potentials, O(n^3). Returns the total
/// cost; row_of[j] is the row matched to column j when requested.
inline double solve_assignment(const Mat& C, std::vector<Eigen::Index>* row_of = nullptr) {
  if (C.rows() != C.cols())
    throw error(error::kind::validation, "solve_assignment: matrix must be square");
  const Eigen::Index n = C.rows();
  const double inf = std::numeric_limits<double>::infinity();

  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0), v(static_cast<std::size_t>(n) + 1, 0);
  std::vector<Eigen::Index> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Eigen::Index i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = C(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const Eigen::Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }

  double total = 0;
  if (row_of) row_of->assign(static_cast<std::size_t>(n), -1);
  for (Eigen::Index j = 1; j <= n; ++j) {
    total += C(p[static_cast<std::size_t>(j)] - 1, j - 1);
    if (row_of) (*row_of)[static_cast<std::size_t>(j - 1)] = p[static_cast<std::size_t>(j)] - 1;
  }
  return total;
}

/// Unregularized transport value between two uniform same-size empirical
/// measures: optimal assignment cost divided by n. This is the baseline the
/// regularized value approaches from above as eps decreases. A frozen spec
/// keeps its units; otherwise the raw cost is used directly, since the exact
/// problem needs no sup-norm normalization.
inline double exact_ot_value(const PointCloud& X, const PointCloud& Y, const CostSpec& spec) {
  if (X.n() != Y.n())
    throw error(error::kind::validation, "exact_ot_value: supports must have equal size");
  if (X.n() > 256)
    throw error(error::kind::validation, "exact_ot_value: limited to n <= 256");
  if (spec.frozen_rescale > 0) {
    const CostMatrixResult cm = cost_matrix(X, Y, spec);
    return solve_assignment(cm.C) / static_cast<double>(X.n());
  }
  return solve_assignment(raw_cost_matrix(spec, X, Y)) / static_cast<double>(X.n());
}

}  // namespace midscale
