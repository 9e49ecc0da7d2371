#pragma once

#include "midscale/measures.hpp"
#include "midscale/sinkhorn.hpp"

#include <vector>

namespace midscale {

struct NetResult {
  std::vector<Eigen::Index> centers;  // indices into the input cloud
  double delta = 0;
  Eigen::Index count = 0;
};

/// Farthest-point greedy proper delta-cover. Deterministic: the first center
/// is index 0 and ties pick the lowest index. The output is simultaneously a
/// delta-cover and a delta-packing, so its size K brackets the covering
/// number: N(A, delta) <= K <= N(A, delta/2).
inline NetResult greedy_net(const PointCloud& cloud, double delta) {
  cloud.validate();
  if (delta <= 0) throw error(error::kind::validation, "greedy_net: delta must be positive");
  const Eigen::Index n = cloud.n();
  const double d2 = delta * delta;

  NetResult res;
  res.delta = delta;
  res.centers.push_back(0);
  Vec min_d2 = (cloud.points.rowwise() - cloud.points.row(0)).rowwise().squaredNorm();
  while (true) {
    Eigen::Index far = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (min_d2[i] > best) {
        best = min_d2[i];
        far = i;
      }
    }
    if (best <= d2) break;
    res.centers.push_back(far);
    const Vec nd = (cloud.points.rowwise() - cloud.points.row(far)).rowwise().squaredNorm();
    min_d2 = min_d2.cwiseMin(nd);
  }
  res.count = static_cast<Eigen::Index>(res.centers.size());
  return res;
}

/// Exact minimal proper cover size (balls centered at data points) via
/// subset-cover dynamic programming. Exponential in n; a test oracle for the
/// greedy bracket, restricted to n <= 20.
inline Eigen::Index exact_proper_covering_number(const PointCloud& cloud, double delta) {
  cloud.validate();
  if (delta <= 0)
    throw error(error::kind::validation, "exact_proper_covering_number: delta must be positive");
  const Eigen::Index n = cloud.n();
  if (n > 20)
    throw error(error::kind::validation, "exact_proper_covering_number: n must be <= 20");
  const double d2 = delta * delta;

  std::vector<std::uint32_t> ball(static_cast<std::size_t>(n), 0);
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index i = 0; i < n; ++i)
      if ((cloud.points.row(i) - cloud.points.row(c)).squaredNorm() <= d2)
        ball[static_cast<std::size_t>(c)] |= (1u << i);

  const std::uint32_t full = (n == 32) ? 0xffffffffu : ((1u << n) - 1u);
  std::vector<std::uint8_t> dp(static_cast<std::size_t>(full) + 1, 255);
  dp[0] = 0;
  for (std::uint32_t mask = 1; mask <= full; ++mask) {
    const int low = __builtin_ctz(mask);
    std::uint8_t best = 255;
    for (Eigen::Index c = 0; c < n; ++c) {
      if (!(ball[static_cast<std::size_t>(c)] & (1u << low))) continue;
      const std::uint8_t sub = dp[mask & ~ball[static_cast<std::size_t>(c)]];
      if (sub != 255 && sub + 1 < best) best = static_cast<std::uint8_t>(sub + 1);
    }
    dp[mask] = best;
  }
  return static_cast<Eigen::Index>(dp[full]);
}

/// Weight of the closed ball B(z, r) under the measure.
inline double ball_mass(const DiscreteMeasure& measure, const Eigen::RowVectorXd& z, double r) {
  if (r < 0) throw error(error::kind::validation, "ball_mass: radius must be nonnegative");
  if (z.size() != measure.d())
    throw error(error::kind::validation, "ball_mass: dimension mismatch");
  const double r2 = r * r;
  double mass = 0;
  for (Eigen::Index i = 0; i < measure.n(); ++i)
    if ((measure.cloud.points.row(i) - z).squaredNorm() <= r2) mass += measure.weights[i];
  return mass;
}

/// Smallest closed-ball mass over the sample points.
inline double min_ball_mass(const DiscreteMeasure& measure, double r) {
  double mn = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < measure.n(); ++i)
    mn = std::min(mn, ball_mass(measure, measure.cloud.points.row(i), r));
  return mn;
}

/// sum_i w_i / P(B(y_i, delta)): the average inverse ball mass. Bounded by
/// the covering number at scale delta/4, hence by greedy_net(delta/4).count.
inline double inverse_mass_integral(const DiscreteMeasure& measure, double delta) {
  if (delta <= 0)
    throw error(error::kind::validation, "inverse_mass_integral: delta must be positive");
  const Eigen::Index n = measure.n();
  const double d2 = delta * delta;
  const Vec norms2 = measure.cloud.points.rowwise().squaredNorm();
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec dist2 = norms2 - 2.0 * (measure.cloud.points * measure.cloud.points.row(i).transpose());
    dist2.array() += norms2[i];
    double mass = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (dist2[j] <= d2) mass += measure.weights[j];
    total += measure.weights[i] / mass;
  }
  return total;
}

/// ||p||^2 in L^2(a x b) over the sample points: sum_ij a_i b_j p_ij^2.
/// Always >= 1 once the marginal equations hold, since the plan density has
/// product-mean 1.
inline double density_l2_norm(const DualSolution& sol) {
  if (!sol.C) throw error(error::kind::validation, "density_l2_norm: solution has no cost matrix");
  const Mat& C = *sol.C;
  const Vec la = sol.a.array().log().matrix();
  double total = 0;
  for (Eigen::Index j = 0; j < C.cols(); ++j) {
    const auto z = (sol.f.array() + sol.g[j] - C.col(j).array()) / sol.eps;
    total += sol.b[j] * (2.0 * z + la.array()).exp().sum();
  }
  return total;
}

/// max_ij p_ij over the sample points.
inline double max_on_sample_density(const DualSolution& sol) {
  if (!sol.C)
    throw error(error::kind::validation, "max_on_sample_density: solution has no cost matrix");
  const Mat& C = *sol.C;
  double zmax = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < C.cols(); ++j) {
    const double m = ((sol.f.array() + sol.g[j]) - C.col(j).array()).maxCoeff();
    zmax = std::max(zmax, m);
  }
  return std::exp(zmax / sol.eps);
}

}  // namespace midscale
