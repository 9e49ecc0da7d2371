#pragma once

#include "midscale/measures.hpp"
#include "midscale/sinkhorn.hpp"

namespace midscale {

/// On-sample plan density matrix: p_ij = exp((f_i + g_j - C_ij)/eps).
inline Mat plan_density(const DualSolution& sol) {
  if (!sol.C) throw error(error::kind::validation, "plan_density: solution has no cost matrix");
  const Mat& C = *sol.C;
  Mat P(C.rows(), C.cols());
  for (Eigen::Index j = 0; j < C.cols(); ++j)
    P.col(j) = (((sol.f.array() + sol.g[j]) - C.col(j).array()) / sol.eps).exp();
  return P;
}

/// Canonical out-of-sample evaluation of solved dual potentials, the plan
/// density, the transport map, and the gradient of the second potential.
/// All evaluators share one stabilized log-sum-exp pathway with the solver,
/// so evaluating at a sample point reproduces the stored value.
class ExtendedPotentials {
 public:
  ExtendedPotentials(DualSolution sol, PointCloud X, PointCloud Y, CostModel cost)
      : sol_(std::move(sol)), X_(std::move(X)), Y_(std::move(Y)), cost_(std::move(cost)) {
    if (X_.n() != sol_.n() || Y_.n() != sol_.m())
      throw error(error::kind::validation, "extension: cloud sizes do not match potentials");
    if (X_.d() != Y_.d())
      throw error(error::kind::validation, "extension: ambient dimensions differ");
    x2_ = X_.points.rowwise().squaredNorm();
    y2_ = Y_.points.rowwise().squaredNorm();
    lna_ = sol_.a.array().log().matrix();
    lnb_ = sol_.b.array().log().matrix();
  }

  const DualSolution& solution() const { return sol_; }
  const PointCloud& support_x() const { return X_; }
  const PointCloud& support_y() const { return Y_; }
  const CostModel& cost() const { return cost_; }

  /// f(x) = -eps log sum_j b_j exp(-(c(x, y_j) - g_j)/eps)
  double extend_f(const Eigen::RowVectorXd& x) const {
    const Vec t = sol_.g - costs_to_Y(x) + sol_.eps * lnb_;
    return -detail::scaled_lse(t, sol_.eps);
  }

  /// g(y) = -eps log sum_i a_i exp(-(c(x_i, y) - f_i)/eps)
  double extend_g(const Eigen::RowVectorXd& y) const {
    const Vec t = sol_.f - costs_to_X(y) + sol_.eps * lna_;
    return -detail::scaled_lse(t, sol_.eps);
  }

  Vec extend_f_batch(const Mat& pts) const {
    check_queries(pts);
    Vec out(pts.rows());
    for (Eigen::Index i = 0; i < pts.rows(); ++i) out[i] = extend_f(pts.row(i));
    return out;
  }

  Vec extend_g_batch(const Mat& pts) const {
    check_queries(pts);
    Vec out(pts.rows());
    for (Eigen::Index i = 0; i < pts.rows(); ++i) out[i] = extend_g(pts.row(i));
    return out;
  }

  /// p(x, y) = exp((f(x) + g(y) - c(x, y))/eps); strictly positive.
  double density(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) const {
    const double c = cost_(x, y);
    return std::exp((extend_f(x) + extend_g(y) - c) / sol_.eps);
  }

  /// T(x) = sum_j b_j y_j p(x, y_j): the conditional mean of y given x under
  /// the plan. Computed through softmax weights, which sum to 1 exactly by
  /// the definition of the extended f.
  Eigen::RowVectorXd entropic_map(const Eigen::RowVectorXd& x) const {
    const Vec t = (sol_.g - costs_to_Y(x)) / sol_.eps + lnb_;
    const double m = t.maxCoeff();
    Vec w = (t.array() - m).exp();
    w /= w.sum();
    return w.transpose() * Y_.points;
  }

  Mat entropic_map_batch(const Mat& pts) const {
    check_queries(pts);
    Mat out(pts.rows(), Y_.d());
    for (Eigen::Index i = 0; i < pts.rows(); ++i) out.row(i) = entropic_map(pts.row(i));
    return out;
  }

  /// grad g(y) = sum_i a_i grad_y c(x_i, y) p(x_i, y), which is exactly the
  /// gradient of the extension formula for g. Requires a differentiable cost
  /// family; the Euclidean family is singular where y hits a sample x_i.
  Eigen::RowVectorXd map_gradient_g(const Eigen::RowVectorXd& y) const {
    const Vec t = (sol_.f - costs_to_X(y)) / sol_.eps + lna_;
    const double m = t.maxCoeff();
    Vec w = (t.array() - m).exp();
    w /= w.sum();  // w_i = a_i p(x_i, y), summing to 1
    Eigen::RowVectorXd grad = Eigen::RowVectorXd::Zero(Y_.d());
    for (Eigen::Index i = 0; i < X_.n(); ++i)
      grad += w[i] * cost_.grad_y(X_.points.row(i), y);
    return grad;
  }

  Vec costs_to_Y(const Eigen::RowVectorXd& x) const {
    return costs_to_cloud(x, Y_.points, y2_);
  }

  Vec costs_to_X(const Eigen::RowVectorXd& y) const {
    return costs_to_cloud(y, X_.points, x2_);
  }

 private:
  void check_queries(const Mat& pts) const {
    if (pts.cols() != X_.d())
      throw error(error::kind::validation, "extension: query dimension mismatch");
  }

  Vec costs_to_cloud(const Eigen::RowVectorXd& q, const Mat& cloud, const Vec& cloud2) const {
    if (q.size() != cloud.cols())
      throw error(error::kind::validation, "extension: query dimension mismatch");
    switch (cost_.family) {
      case CostSpec::Family::squared_euclidean: {
        Vec c = cloud2 - 2.0 * (cloud * q.transpose());
        c.array() += q.squaredNorm();
        return cost_.rescale * c.cwiseMax(0.0);
      }
      case CostSpec::Family::euclidean: {
        Vec c = cloud2 - 2.0 * (cloud * q.transpose());
        c.array() += q.squaredNorm();
        return cost_.rescale * c.cwiseMax(0.0).cwiseSqrt();
      }
      case CostSpec::Family::custom: {
        Vec c(cloud.rows());
        for (Eigen::Index i = 0; i < cloud.rows(); ++i)
          c[i] = cost_.rescale * cost_.custom_cost(q, cloud.row(i));
        return c;
      }
    }
    return {};
  }

  DualSolution sol_;
  PointCloud X_, Y_;
  CostModel cost_;
  Vec x2_, y2_, lna_, lnb_;
};

}  // namespace midscale
