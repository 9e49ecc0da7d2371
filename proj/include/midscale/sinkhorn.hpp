#pragma once

#include "midscale/common.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace midscale {

/// Solved dual potentials for one entropic transport instance. The marginal
/// weights and the cost matrix ride along so downstream quantities (value,
/// densities, extensions, diagnostics) need no extra bookkeeping.
struct DualSolution {
  Vec f;  // length n
  Vec g;  // length m, normalized so b·g = 0
  double eps = 1.0;
  Vec a, b;
  std::shared_ptr<const Mat> C;
  double marginal_residual = std::numeric_limits<double>::infinity();
  std::int64_t iterations = 0;

  Eigen::Index n() const { return f.size(); }
  Eigen::Index m() const { return g.size(); }
};

struct SolveOptions {
  double tol = 1e-9;
  std::int64_t max_iter = 100000;
  Vec f0, g0;  // optional warm starts; empty means zeros
  int threads = 1;
};

namespace detail {

/// Stable log-sum-exp of t/eps scaled back by eps: eps * log sum_j exp(t_j / eps).
inline double scaled_lse(const Vec& t, double eps) {
  const double m = t.maxCoeff();
  const double s = ((t.array() - m) / eps).exp().sum();
  return m + eps * std::log(s);
}

}  // namespace detail

/// Component i is the marginal error 1 - sum_j b_j exp((f_i + g_j - C_ij)/eps),
/// and symmetrically for the second vector. These are the partial derivatives
/// of the dual objective in the weighted (L^2(a) x L^2(b)) geometry.
inline std::pair<Vec, Vec> dual_gradient(const Vec& f, const Vec& g, const Vec& a, const Vec& b,
                                         const Mat& C, double eps) {
  const Eigen::Index n = C.rows(), m = C.cols();
  if (f.size() != n || g.size() != m || a.size() != n || b.size() != m)
    throw error(error::kind::validation, "dual_gradient: shape mismatch");
  const Vec gb = g + eps * b.array().log().matrix();
  const Vec fa = f + eps * a.array().log().matrix();
  Vec grad_f(n), grad_g(m);
  const Mat Ct = C.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec t = gb - Ct.col(i);
    grad_f[i] = 1.0 - std::exp((f[i] + detail::scaled_lse(t, eps)) / eps);
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    const Vec t = fa - C.col(j);
    grad_g[j] = 1.0 - std::exp((g[j] + detail::scaled_lse(t, eps)) / eps);
  }
  return {grad_f, grad_g};
}

/// a·f + b·g - eps * (sum_ij a_i b_j exp((f_i + g_j - C_ij)/eps) - 1),
/// with the double sum evaluated through one global log-sum-exp.
inline double dual_objective(const Vec& f, const Vec& g, const Vec& a, const Vec& b, const Mat& C,
                             double eps) {
  const Eigen::Index n = C.rows(), m = C.cols();
  if (f.size() != n || g.size() != m || a.size() != n || b.size() != m)
    throw error(error::kind::validation, "dual_objective: shape mismatch");
  const Vec la = a.array().log().matrix();
  Vec colmax(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto z = ((f.array() - C.col(j).array() + g[j]) / eps + la.array());
    colmax[j] = z.maxCoeff() + std::log(b[j]);
  }
  const double M = colmax.maxCoeff();
  double S = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto z = ((f.array() - C.col(j).array() + g[j]) / eps + la.array()) + std::log(b[j]);
    S += (z - M).exp().sum();
  }
  const double E = std::exp(M) * S;
  return a.dot(f) + b.dot(g) - eps * (E - 1.0);
}

/// The rounded potential: f~_i = -eps log sum_j b_j exp(-(C_ij - g_j)/eps).
/// It satisfies the first marginal equation exactly, and never decreases the
/// dual objective relative to any other f paired with the same g.
inline Vec round_f(const Vec& g, const Mat& C, const Vec& b, double eps) {
  const Eigen::Index n = C.rows(), m = C.cols();
  if (g.size() != m || b.size() != m)
    throw error(error::kind::validation, "round_f: shape mismatch");
  const Vec gb = g + eps * b.array().log().matrix();
  const Mat Ct = C.transpose();
  Vec f(n);
  for (Eigen::Index i = 0; i < n; ++i) f[i] = -detail::scaled_lse(gb - Ct.col(i), eps);
  return f;
}

/// Symmetric rounding for the second potential.
inline Vec round_g(const Vec& f, const Mat& C, const Vec& a, double eps) {
  const Eigen::Index n = C.rows(), m = C.cols();
  if (f.size() != n || a.size() != n)
    throw error(error::kind::validation, "round_g: shape mismatch");
  const Vec fa = f + eps * a.array().log().matrix();
  Vec g(m);
  for (Eigen::Index j = 0; j < m; ++j) g[j] = -detail::scaled_lse(fa - C.col(j), eps);
  return g;
}

/// Dual objective after rounding f: a·round_f(g) + b·g. Maximized over
/// {g : b·g = 0} exactly at the solved second potential.
inline double semi_rounded_objective(const Vec& g, const Vec& a, const Vec& b, const Mat& C,
                                     double eps) {
  return a.dot(round_f(g, C, b, eps)) + b.dot(g);
}

inline double entropic_value(const DualSolution& sol) {
  return sol.a.dot(sol.f) + sol.b.dot(sol.g);
}

/// Alternating log-domain updates until the weighted L-infinity marginal
/// residual over both marginal equations drops to tol. The hot loop absorbs
/// the current potential into the exponent (so the summands are the entries
/// of the current transport plan, whose row/column sums are the residual),
/// falling back to an exact two-pass log-sum-exp on over/underflow.
inline DualSolution solve(const Vec& a, const Vec& b, Mat C_in, double eps,
                          const SolveOptions& opts = {}) {
  const Eigen::Index n = C_in.rows(), m = C_in.cols();
  if (eps <= 0) throw error(error::kind::validation, "solve: eps must be positive");
  if (opts.tol <= 0) throw error(error::kind::validation, "solve: tol must be positive");
  if (a.size() != n || b.size() != m)
    throw error(error::kind::validation, "solve: weight/cost shape mismatch");
  if ((a.array() <= 0).any() || (b.array() <= 0).any())
    throw error(error::kind::validation, "solve: weights must be strictly positive");
  if (std::abs(a.sum() - 1.0) > 1e-10 || std::abs(b.sum() - 1.0) > 1e-10)
    throw error(error::kind::validation, "solve: weights must sum to 1");
  if (!C_in.allFinite()) throw error(error::kind::validation, "solve: cost matrix not finite");

  auto C = std::make_shared<const Mat>(std::move(C_in));
  const double inv_eps = 1.0 / eps;

  // Pre-scaled copies for the hot loop: exponent_ij = fe_i + gbe_j - Ce_ij.
  const Mat Ce = *C * inv_eps;
  const Mat Cte = Ce.transpose();
  const Vec lbe = b.array().log().matrix();
  const Vec lae = a.array().log().matrix();

  Vec fe = opts.f0.size() ? (opts.f0 * inv_eps).eval() : Vec::Zero(n);
  Vec ge = opts.g0.size() ? (opts.g0 * inv_eps).eval() : Vec::Zero(m);
  if (fe.size() != n || ge.size() != m)
    throw error(error::kind::validation, "solve: warm start has wrong length");
  Vec gbe = ge + lbe;
  Vec fae = fe + lae;

  Vec fnew(n), resid(n), gnew(m), gresid(m);
  const auto row_pass = [&](Eigen::Index i) {
    const double s = ((gbe - Cte.col(i)).array() + fe[i]).exp().sum();
    if (std::isfinite(s) && s > 0) {
      fnew[i] = fe[i] - std::log(s);
      resid[i] = std::abs(s - 1.0);
    } else {
      const Vec t = gbe - Cte.col(i);
      const double mx = t.maxCoeff();
      fnew[i] = -(mx + std::log((t.array() - mx).exp().sum()));
      resid[i] = std::abs(std::expm1(fe[i] - fnew[i]));
    }
  };
  const auto col_pass = [&](Eigen::Index j) {
    const double s = ((fae - Ce.col(j)).array() + ge[j]).exp().sum();
    if (std::isfinite(s) && s > 0) {
      gnew[j] = ge[j] - std::log(s);
      gresid[j] = std::abs(s - 1.0);
    } else {
      const Vec t = fae - Ce.col(j);
      const double mx = t.maxCoeff();
      gnew[j] = -(mx + std::log((t.array() - mx).exp().sum()));
      gresid[j] = std::abs(std::expm1(ge[j] - gnew[j]));
    }
  };

  DualSolution sol;
  sol.eps = eps;
  sol.a = a;
  sol.b = b;
  sol.C = C;

  std::int64_t iter = 0;
  double last_rho = std::numeric_limits<double>::infinity();
  while (true) {
    // Row pass: measures the row-side residual of the current state and
    // produces the exact row update.
    parallel_for(n, opts.threads, row_pass);
    const double rho = resid.maxCoeff();
    if (rho <= opts.tol) {
      // Row side is feasible to tol; certify the column side before stopping.
      for (Eigen::Index j = 0; j < m; ++j) {
        const Vec t = fae - Ce.col(j);
        gresid[j] = std::abs(std::expm1(ge[j] + detail::scaled_lse(t, 1.0)));
      }
      const double sigma = gresid.maxCoeff();
      if (sigma <= opts.tol) {
        sol.marginal_residual = std::max(rho, sigma);
        break;
      }
    }
    if (iter >= opts.max_iter) {
      throw error(error::kind::solver,
                  "sinkhorn did not reach tol " + format_double(opts.tol) + " in " +
                      std::to_string(opts.max_iter) + " iterations; achieved residual " +
                      format_double(std::min(rho, last_rho)));
    }
    fe = fnew;
    fae = fe + lae;
    parallel_for(m, opts.threads, col_pass);
    ge = gnew;
    gbe = ge + lbe;
    ++iter;
    last_rho = rho;
  }

  sol.iterations = iter;
  sol.f = eps * fe;
  sol.g = eps * ge;
  // One normalization shift after convergence: b·g = 0, compensated in f.
  const double shift = b.dot(sol.g);
  sol.g.array() -= shift;
  sol.f.array() += shift;
  return sol;
}

inline DualSolution solve(const Vec& a, const Vec& b, const Mat& C, double eps, double tol,
                          std::int64_t max_iter) {
  SolveOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  return solve(a, b, C, eps, opts);
}

}  // namespace midscale
