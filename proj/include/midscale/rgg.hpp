#pragma once

#include "midscale/measures.hpp"
#include "midscale/sinkhorn.hpp"

#include <random>
#include <vector>

namespace midscale {

/// Thresholded geometric graph over a sample: j ~ k iff ||y_j - y_k|| < delta
/// (strict inequality, open ball, unlike the closed balls used for covering
/// quantities), every edge carrying the same weight C_rgg/(n delta^{d_nu+2}).
struct RggGraph {
  Eigen::Index n = 0;
  double w = 0;
  double delta = 0;
  int d_nu = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> edges;  // j < k, unordered
};

inline RggGraph build_rgg(const PointCloud& Y, double delta, int d_nu, double c_rgg = 1.0) {
  Y.validate();
  if (delta <= 0) throw error(error::kind::validation, "build_rgg: delta must be positive");
  if (d_nu < 0) throw error(error::kind::validation, "build_rgg: d_nu must be nonnegative");
  if (c_rgg <= 0) throw error(error::kind::validation, "build_rgg: weight constant must be positive");
  RggGraph g;
  g.n = Y.n();
  g.delta = delta;
  g.d_nu = d_nu;
  g.w = c_rgg / (static_cast<double>(g.n) * std::pow(delta, d_nu + 2));
  const double d2 = delta * delta;
  for (Eigen::Index j = 0; j < g.n; ++j) {
    const Vec dist2 = (Y.points.bottomRows(g.n - j - 1).rowwise() - Y.points.row(j))
                          .rowwise()
                          .squaredNorm();
    for (Eigen::Index k = j + 1; k < g.n; ++k)
      if (dist2[k - j - 1] < d2) g.edges.emplace_back(j, k);
  }
  return g;
}

/// D(alpha) = (1/n) sum over ordered adjacent pairs of w (alpha_k - alpha_j)^2.
/// Each stored unordered edge contributes twice.
inline double dirichlet_form(const RggGraph& g, const Vec& alpha) {
  if (alpha.size() != g.n) throw error(error::kind::validation, "dirichlet_form: length mismatch");
  double s = 0;
  for (const auto& [j, k] : g.edges) {
    const double d = alpha[k] - alpha[j];
    s += d * d;
  }
  return 2.0 * g.w * s / static_cast<double>(g.n);
}

namespace detail {

inline bool rgg_connected(const RggGraph& g) {
  if (g.n <= 1) return true;
  std::vector<std::vector<Eigen::Index>> adj(static_cast<std::size_t>(g.n));
  for (const auto& [j, k] : g.edges) {
    adj[static_cast<std::size_t>(j)].push_back(k);
    adj[static_cast<std::size_t>(k)].push_back(j);
  }
  std::vector<char> seen(static_cast<std::size_t>(g.n), 0);
  std::vector<Eigen::Index> stack{0};
  seen[0] = 1;
  Eigen::Index count = 1;
  while (!stack.empty()) {
    const Eigen::Index v = stack.back();
    stack.pop_back();
    for (Eigen::Index u : adj[static_cast<std::size_t>(v)]) {
      if (!seen[static_cast<std::size_t>(u)]) {
        seen[static_cast<std::size_t>(u)] = 1;
        ++count;
        stack.push_back(u);
      }
    }
  }
  return count == g.n;
}

}  // namespace detail

/// Second-smallest eigenvalue of the positive semidefinite operator
/// alpha -> w (D - A) alpha (the negated graph Laplacian). Dense symmetric
/// eigendecomposition; intended for n <= 2000. A disconnected graph has
/// lambda_2 = 0 and sets the flag.
inline double lambda2(const RggGraph& g, bool* disconnected = nullptr) {
  if (g.n < 2) throw error(error::kind::validation, "lambda2: need n >= 2");
  if (g.n > 2000)
    throw error(error::kind::validation, "lambda2: dense eigensolve limited to n <= 2000");
  const bool conn = detail::rgg_connected(g);
  if (disconnected) *disconnected = !conn;
  if (!conn) return 0.0;
  Mat L = Mat::Zero(g.n, g.n);
  for (const auto& [j, k] : g.edges) {
    L(j, j) += g.w;
    L(k, k) += g.w;
    L(j, k) -= g.w;
    L(k, j) -= g.w;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(L, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw error(error::kind::solver, "lambda2: eigensolver did not converge");
  return es.eigenvalues()[1];
}

// ---------------------------------------------------------------------------
// Quadratic-growth diagnostic for the semi-rounded dual objective
// Psi(g) = a·round_f(g) + b·g, which is maximized at the solved g over the
// slice {b·g = 0}. For each centered direction alpha the deficit
// Psi(g_hat) - Psi(g_hat + t alpha) should be nonnegative and quadratic in t.

struct QgDirectionResult {
  std::vector<double> t;
  std::vector<double> deficit;
  double coeff = 0;        // least-squares fit of deficit ~ coeff * t^2
  double ratio_spread = 0; // max/min - 1 over deficit/t^2
};

/// Deficits of one direction. The direction must satisfy b·alpha = 0.
inline QgDirectionResult qg_deficits(const DualSolution& sol, const Vec& alpha,
                                     const std::vector<double>& t_grid) {
  if (!sol.C) throw error(error::kind::validation, "qg_deficits: solution has no cost matrix");
  if (alpha.size() != sol.m())
    throw error(error::kind::validation, "qg_deficits: direction length mismatch");
  const double center = std::abs(sol.b.dot(alpha));
  if (center > 1e-10 * std::max(1.0, alpha.cwiseAbs().maxCoeff()))
    throw error(error::kind::validation, "qg_deficits: direction is not centered (b·alpha != 0)");

  const Mat& C = *sol.C;
  const double base = semi_rounded_objective(sol.g, sol.a, sol.b, C, sol.eps);
  QgDirectionResult r;
  r.t = t_grid;
  double num = 0, den = 0;
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (double t : t_grid) {
    const double psi = semi_rounded_objective(sol.g + t * alpha, sol.a, sol.b, C, sol.eps);
    const double deficit = base - psi;
    r.deficit.push_back(deficit);
    if (t != 0) {
      const double ratio = deficit / (t * t);
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
      num += deficit * t * t;
      den += t * t * t * t;
    }
  }
  r.coeff = den > 0 ? num / den : 0;
  r.ratio_spread = (lo > 0 && std::isfinite(lo)) ? hi / lo - 1.0 : std::numeric_limits<double>::infinity();
  return r;
}

/// Seeded battery of random centered directions, each normalized to unit
/// norm in L^2(b).
inline std::vector<QgDirectionResult> qg_diagnostic(const DualSolution& sol,
                                                    Eigen::Index directions,
                                                    const std::vector<double>& t_grid,
                                                    std::uint64_t seed) {
  if (directions < 1)
    throw error(error::kind::validation, "qg_diagnostic: need at least one direction");
  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<QgDirectionResult> out;
  out.reserve(static_cast<std::size_t>(directions));
  for (Eigen::Index k = 0; k < directions; ++k) {
    Vec alpha(sol.m());
    for (Eigen::Index j = 0; j < alpha.size(); ++j) alpha[j] = gauss(rng);
    alpha.array() -= sol.b.dot(alpha);  // weights sum to 1, so this centers it
    const double norm = std::sqrt(sol.b.dot(alpha.cwiseProduct(alpha)));
    if (norm == 0) continue;
    alpha /= norm;
    out.push_back(qg_deficits(sol, alpha, t_grid));
  }
  return out;
}

}  // namespace midscale
