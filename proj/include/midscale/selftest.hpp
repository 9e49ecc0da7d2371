#pragma once

#include "midscale/covering.hpp"
#include "midscale/extension.hpp"
#include "midscale/measures.hpp"
#include "midscale/sinkhorn.hpp"

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace midscale {

struct CheckResult {
  std::string name;
  bool pass = true;
  std::string detail;
};

struct SelftestOptions {
  std::uint64_t seed = 42;
  double tol = 1e-9;        // solver tolerance; feasibility slack is 10x this
  int instances = 100;      // solved instances feeding the instance-level checks
  int trials = 100;         // concavity / rounding trials
  int fd_points = 100;      // finite-difference evaluation points per gradient kind
  int pairs = 10000;        // Lipschitz pair draws
  int mass_pairs = 200;     // (cloud, delta) pairs for the inverse-mass bound
  double perturb = 0.0;     // negative control: shifts both potentials before checks
  long max_iter = 100000;
};

namespace detail {

struct BatteryInstance {
  GeneratorSpec sx, sy;
  double eps = 0.1;
  DiscreteMeasure mu, nu;
  CostSpec frozen;
  double lipschitz = 0;
  double rescale = 1;
  DualSolution sol;
  std::shared_ptr<const Mat> C;
};

/// Rotating family of small instances covering every generator kind and a
/// range of eps. Deterministic in (seed, index).
inline BatteryInstance make_battery_instance(int idx, std::uint64_t seed, double tol,
                                             long max_iter) {
  BatteryInstance bi;
  GeneratorSpec& sx = bi.sx;
  GeneratorSpec& sy = bi.sy;
  CostSpec cost;
  cost.family = CostSpec::Family::squared_euclidean;
  switch (idx % 6) {
    case 0:
      sx.kind = GeneratorSpec::Kind::uniform_ball;
      sx.d = 2;
      sy.kind = GeneratorSpec::Kind::finite_support;
      sy.d = 2;
      sy.k = 4;
      bi.eps = 0.1;
      break;
    case 1:
      sx.kind = GeneratorSpec::Kind::circle;
      sx.d = 4;
      sy.kind = GeneratorSpec::Kind::uniform_ball;
      sy.d = 4;
      bi.eps = 0.15;
      break;
    case 2:
      sx.kind = GeneratorSpec::Kind::uniform_ball;
      sx.d = 3;
      sy.kind = GeneratorSpec::Kind::uniform_ball;
      sy.d = 3;
      bi.eps = 0.3;
      cost.family = CostSpec::Family::euclidean;
      break;
    case 3:
      sx.kind = GeneratorSpec::Kind::sphere;
      sx.d = 5;
      sx.k = 2;
      sy.kind = GeneratorSpec::Kind::circle;
      sy.d = 5;
      bi.eps = 0.2;
      break;
    case 4:
      sx.kind = GeneratorSpec::Kind::torus;
      sx.d = 4;
      sy.kind = GeneratorSpec::Kind::finite_support;
      sy.d = 4;
      sy.k = 6;
      bi.eps = 0.08;
      break;
    default:
      sx.kind = GeneratorSpec::Kind::fattened;
      sx.base_kind = GeneratorSpec::Kind::circle;
      sx.d = 3;
      sx.delta_fat = 0.15;
      sy.kind = GeneratorSpec::Kind::uniform_ball;
      sy.d = 3;
      bi.eps = 0.12;
      break;
  }
  const std::uint64_t s = replicate_seed(seed, "selftest_battery", static_cast<std::uint64_t>(idx));
  const Eigen::Index n = 30 + static_cast<Eigen::Index>((7 * idx) % 41);
  const Eigen::Index m = 30 + static_cast<Eigen::Index>((11 * idx) % 41);
  bi.mu = empirical_measure(generate(sx, n, mix_seed(s, 1)));
  DiscreteMeasure nu = empirical_measure(generate(sy, m, mix_seed(s, 2)));
  bi.nu = (sy.kind == GeneratorSpec::Kind::finite_support) ? compress_measure(nu) : nu;
  bi.frozen = freeze_cost(cost, bi.mu.cloud, bi.nu.cloud);
  const CostMatrixResult cm = cost_matrix(bi.mu.cloud, bi.nu.cloud, bi.frozen);
  bi.lipschitz = cm.effective_L;
  bi.rescale = cm.rescale;
  bi.sol = solve(bi.mu.weights, bi.nu.weights, cm.C, bi.eps, tol, max_iter);
  bi.C = bi.sol.C;
  return bi;
}

inline std::string violation_detail(int total, double worst) {
  return std::to_string(total) + " trials, worst margin " + format_double(worst);
}

}  // namespace detail

/// The exact-inequality battery: duality, concavity, rounding, pointwise,
/// Lipschitz, density-covering, inverse-mass, and finite-difference gradient
/// checks on seeded small instances. Every inequality is asserted with the
/// slack stated next to it; a nonzero `perturb` intentionally breaks the
/// feasibility-dependent checks.
inline std::vector<CheckResult> run_selftest(const SelftestOptions& opts = {}) {
  if (opts.instances < 1 || opts.trials < 1 || opts.fd_points < 1 || opts.pairs < 1 ||
      opts.mass_pairs < 1)
    throw error(error::kind::validation, "selftest: counts must be positive");
  if (!(opts.tol > 0)) throw error(error::kind::validation, "selftest: tol must be positive");

  std::vector<detail::BatteryInstance> battery;
  battery.reserve(static_cast<std::size_t>(opts.instances));
  for (int i = 0; i < opts.instances; ++i) {
    battery.push_back(detail::make_battery_instance(i, opts.seed, opts.tol, opts.max_iter));
    if (opts.perturb != 0.0) {
      battery.back().sol.f.array() += opts.perturb;
      battery.back().sol.g.array() += opts.perturb;
    }
  }

  std::vector<CheckResult> results;

  // duality: residual of the returned potentials within 10*tol, and the
  // primal-side value agrees with the full dual objective within 1e-8.
  {
    CheckResult r;
    r.name = "duality";
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& bi : battery) {
      const auto [gf, gg] = dual_gradient(bi.sol.f, bi.sol.g, bi.sol.a, bi.sol.b, *bi.C, bi.eps);
      const double resid = std::max(gf.cwiseAbs().maxCoeff(), gg.cwiseAbs().maxCoeff());
      worst = std::max(worst, resid - 10.0 * opts.tol);
      const double gap =
          std::abs(entropic_value(bi.sol) -
                   dual_objective(bi.sol.f, bi.sol.g, bi.sol.a, bi.sol.b, *bi.C, bi.eps));
      worst = std::max(worst, gap - 1e-8);
      if (resid > 10.0 * opts.tol || gap > 1e-8) r.pass = false;
    }
    r.detail = detail::violation_detail(static_cast<int>(battery.size()), worst);
    results.push_back(r);
  }

  // concavity: two-sided gradient bounds for the concave dual, slack 1e-10.
  {
    CheckResult r;
    r.name = "concavity";
    double worst = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < opts.trials; ++t) {
      const auto& bi = battery[static_cast<std::size_t>(t) % battery.size()];
      std::mt19937_64 rng(replicate_seed(opts.seed, "selftest_concavity", static_cast<std::uint64_t>(t)));
      std::normal_distribution<double> gauss(0.0, 0.5);
      const Eigen::Index n = bi.sol.n(), m = bi.sol.m();
      Vec f0(n), g0(m), f1(n), g1(m);
      for (Eigen::Index i = 0; i < n; ++i) {
        f0[i] = gauss(rng);
        f1[i] = gauss(rng);
      }
      for (Eigen::Index j = 0; j < m; ++j) {
        g0[j] = gauss(rng);
        g1[j] = gauss(rng);
      }
      const double phi0 = dual_objective(f0, g0, bi.sol.a, bi.sol.b, *bi.C, bi.eps);
      const double phi1 = dual_objective(f1, g1, bi.sol.a, bi.sol.b, *bi.C, bi.eps);
      const auto [gf0, gg0] = dual_gradient(f0, g0, bi.sol.a, bi.sol.b, *bi.C, bi.eps);
      const auto [gf1, gg1] = dual_gradient(f1, g1, bi.sol.a, bi.sol.b, *bi.C, bi.eps);
      // weighted pairing: the true derivative w.r.t. f_i carries a_i
      const Vec df = f0 - f1, dg = g0 - g1;
      const double upper = (bi.sol.a.array() * gf1.array() * df.array()).sum() +
                           (bi.sol.b.array() * gg1.array() * dg.array()).sum();
      const double lower = (bi.sol.a.array() * gf0.array() * df.array()).sum() +
                           (bi.sol.b.array() * gg0.array() * dg.array()).sum();
      worst = std::max(worst, (phi0 - phi1) - upper - 1e-10);
      worst = std::max(worst, lower - (phi0 - phi1) - 1e-10);
      if ((phi0 - phi1) - upper > 1e-10 || lower - (phi0 - phi1) > 1e-10) r.pass = false;
    }
    r.detail = detail::violation_detail(opts.trials, worst);
    results.push_back(r);
  }

  // rounding: round_f(g) beats any other f for the same g (slack 1e-12), and
  // reproduces the solved f at the fixed point within 1e-9.
  {
    CheckResult r;
    r.name = "rounding";
    double worst = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < opts.trials; ++t) {
      const auto& bi = battery[static_cast<std::size_t>(t) % battery.size()];
      std::mt19937_64 rng(replicate_seed(opts.seed, "selftest_rounding", static_cast<std::uint64_t>(t)));
      std::normal_distribution<double> gauss(0.0, 0.5);
      const Eigen::Index n = bi.sol.n(), m = bi.sol.m();
      Vec f(n), g(m);
      for (Eigen::Index i = 0; i < n; ++i) f[i] = gauss(rng);
      for (Eigen::Index j = 0; j < m; ++j) g[j] = gauss(rng);
      const Vec fr = round_f(g, *bi.C, bi.sol.b, bi.eps);
      const double rounded = dual_objective(fr, g, bi.sol.a, bi.sol.b, *bi.C, bi.eps);
      const double other = dual_objective(f, g, bi.sol.a, bi.sol.b, *bi.C, bi.eps);
      const double zero =
          dual_objective(Vec::Zero(n), g, bi.sol.a, bi.sol.b, *bi.C, bi.eps);
      worst = std::max(worst, other - rounded - 1e-12);
      worst = std::max(worst, zero - rounded - 1e-12);
      if (other - rounded > 1e-12 || zero - rounded > 1e-12) r.pass = false;
    }
    if (opts.perturb == 0.0) {
      // idempotence at the fixed point: rounding the solved g returns the solved f
      for (const auto& bi : battery) {
        const Vec fr = round_f(bi.sol.g, *bi.C, bi.sol.b, bi.eps);
        const double gap = (fr - bi.sol.f).cwiseAbs().maxCoeff();
        worst = std::max(worst, gap - 1e-9);
        if (gap > 1e-9) r.pass = false;
      }
    }
    r.detail = detail::violation_detail(opts.trials, worst);
    results.push_back(r);
  }

  // pointwise: the solved-potential invariants. b.g = 0 within 1e-10 and both
  // sup norms at most 2 + 1e-6 whenever max|c| <= 1.
  {
    CheckResult r;
    r.name = "pointwise";
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& bi : battery) {
      const double norm_gap = std::abs(bi.sol.b.dot(bi.sol.g));
      const double fmax = bi.sol.f.cwiseAbs().maxCoeff();
      const double gmax = bi.sol.g.cwiseAbs().maxCoeff();
      worst = std::max(worst, norm_gap - 1e-10);
      worst = std::max(worst, fmax - (2.0 + 1e-6));
      worst = std::max(worst, gmax - (2.0 + 1e-6));
      if (norm_gap > 1e-10 || fmax > 2.0 + 1e-6 || gmax > 2.0 + 1e-6) r.pass = false;
    }
    r.detail = detail::violation_detail(static_cast<int>(battery.size()), worst);
    results.push_back(r);
  }

  // lipschitz: extended potentials are L-Lipschitz and the log-density is
  // (2L/eps)-Lipschitz, with the constant certified on cloud + query points,
  // slack factor 1 + 1e-8.
  {
    CheckResult r;
    r.name = "lipschitz";
    double worst = -std::numeric_limits<double>::infinity();
    const int n_lip = std::min<int>(6, static_cast<int>(battery.size()));
    std::vector<std::shared_ptr<ExtendedPotentials>> exts;
    std::vector<double> rx(static_cast<std::size_t>(n_lip)), ry(static_cast<std::size_t>(n_lip));
    for (int i = 0; i < n_lip; ++i) {
      const auto& bi = battery[static_cast<std::size_t>(i)];
      exts.push_back(std::make_shared<ExtendedPotentials>(
          bi.sol, bi.mu.cloud, bi.nu.cloud, make_cost_model(bi.frozen, bi.mu.cloud, bi.nu.cloud)));
      rx[static_cast<std::size_t>(i)] = bi.mu.cloud.points.rowwise().norm().maxCoeff();
      ry[static_cast<std::size_t>(i)] = bi.nu.cloud.points.rowwise().norm().maxCoeff();
    }
    const double slack = 1.0 + 1e-8;
    for (int p = 0; p < opts.pairs; ++p) {
      const int k = p % n_lip;
      const auto& bi = battery[static_cast<std::size_t>(k)];
      const auto& ext = *exts[static_cast<std::size_t>(k)];
      const std::uint64_t s = replicate_seed(opts.seed, "selftest_lipschitz", static_cast<std::uint64_t>(p));
      const Mat x = generate(bi.sx, 2, mix_seed(s, 1)).points;
      const Mat y = generate(bi.sy, 2, mix_seed(s, 2)).points;
      const double qx = std::max({rx[static_cast<std::size_t>(k)], x.row(0).norm(), x.row(1).norm()});
      const double qy = std::max({ry[static_cast<std::size_t>(k)], y.row(0).norm(), y.row(1).norm()});
      const double lq = (bi.frozen.family == CostSpec::Family::euclidean)
                            ? bi.rescale
                            : 2.0 * bi.rescale * (qx + qy);
      const double dx = (x.row(0) - x.row(1)).norm();
      const double dy = (y.row(0) - y.row(1)).norm();
      const double df = std::abs(ext.extend_f(x.row(0)) - ext.extend_f(x.row(1)));
      const double dg = std::abs(ext.extend_g(y.row(0)) - ext.extend_g(y.row(1)));
      const double dlp = std::abs(std::log(ext.density(x.row(0), y.row(0))) -
                                  std::log(ext.density(x.row(1), y.row(0))));
      worst = std::max(worst, df - lq * dx * slack);
      worst = std::max(worst, dg - lq * dy * slack);
      worst = std::max(worst, dlp - (2.0 * lq / bi.eps) * dx * slack);
      if (df > lq * dx * slack || dg > lq * dy * slack || dlp > (2.0 * lq / bi.eps) * dx * slack)
        r.pass = false;
    }
    r.detail = detail::violation_detail(opts.pairs, worst);
    results.push_back(r);
  }

  // density_covering: the explicit-constant chain
  // |p|^2 <= e^8 * min-side inverse-mass integral at radius 4 eps / L,
  // plus |p|^2 >= 1 from normalization.
  {
    CheckResult r;
    r.name = "density_covering";
    double worst = -std::numeric_limits<double>::infinity();
    const double e8 = std::exp(8.0);
    for (const auto& bi : battery) {
      const double l2 = density_l2_norm(bi.sol);
      const double radius = 4.0 * bi.eps / bi.lipschitz;
      const double bound =
          e8 * std::min(inverse_mass_integral(bi.mu, radius), inverse_mass_integral(bi.nu, radius));
      worst = std::max(worst, l2 - bound);
      worst = std::max(worst, (1.0 - 1e-9) - l2);
      if (l2 > bound || l2 < 1.0 - 1e-9) r.pass = false;
    }
    r.detail = detail::violation_detail(static_cast<int>(battery.size()), worst);
    results.push_back(r);
  }

  // inverse_mass: integral of inverse ball masses is at most the greedy
  // covering count at a quarter of the radius.
  {
    CheckResult r;
    r.name = "inverse_mass";
    double worst = -std::numeric_limits<double>::infinity();
    for (int p = 0; p < opts.mass_pairs; ++p) {
      GeneratorSpec spec;
      switch (p % 5) {
        case 0: spec.kind = GeneratorSpec::Kind::uniform_ball; spec.d = 2; break;
        case 1: spec.kind = GeneratorSpec::Kind::circle; spec.d = 3; break;
        case 2: spec.kind = GeneratorSpec::Kind::sphere; spec.d = 4; spec.k = 2; break;
        case 3: spec.kind = GeneratorSpec::Kind::finite_support; spec.d = 3; spec.k = 7; break;
        default: spec.kind = GeneratorSpec::Kind::uniform_ball; spec.d = 4; break;
      }
      const std::uint64_t s = replicate_seed(opts.seed, "selftest_mass", static_cast<std::uint64_t>(p));
      std::mt19937_64 rng(mix_seed(s, 3));
      std::uniform_real_distribution<double> unif(std::log(0.03), std::log(0.8));
      const double delta = std::exp(unif(rng));
      const Eigen::Index n = 15 + static_cast<Eigen::Index>(splitmix64(mix_seed(s, 4)) % 36);
      DiscreteMeasure P = empirical_measure(generate(spec, n, mix_seed(s, 5)));
      if (spec.kind == GeneratorSpec::Kind::finite_support) P = compress_measure(P);
      const double imi = inverse_mass_integral(P, delta);
      const double cnt = static_cast<double>(greedy_net(P.cloud, delta / 4.0).count);
      worst = std::max(worst, imi - cnt - 1e-9);
      if (imi > cnt + 1e-9) r.pass = false;
    }
    r.detail = detail::violation_detail(opts.mass_pairs, worst);
    results.push_back(r);
  }

  // gradient_fd: analytic gradients against central finite differences,
  // step 1e-5, relative error at most 1e-5.
  {
    CheckResult r;
    r.name = "gradient_fd";
    double worst_rel = 0;
    const double h = 1e-5;
    for (int p = 0; p < opts.fd_points; ++p) {
      const auto& bi = battery[static_cast<std::size_t>(p) % battery.size()];
      std::mt19937_64 rng(replicate_seed(opts.seed, "selftest_fd", static_cast<std::uint64_t>(p)));
      std::normal_distribution<double> gauss(0.0, 0.4);
      const Eigen::Index n = bi.sol.n(), m = bi.sol.m();
      Vec f(n), g(m);
      for (Eigen::Index i = 0; i < n; ++i) f[i] = gauss(rng);
      for (Eigen::Index j = 0; j < m; ++j) g[j] = gauss(rng);
      const auto [gf, gg] = dual_gradient(f, g, bi.sol.a, bi.sol.b, *bi.C, bi.eps);
      // probe a handful of coordinates per point
      std::uniform_int_distribution<Eigen::Index> pick_i(0, n - 1), pick_j(0, m - 1);
      double fd_max = 0, diff_max = 0;
      for (int c = 0; c < 4; ++c) {
        const Eigen::Index i = pick_i(rng);
        Vec fp = f, fm = f;
        fp[i] += h;
        fm[i] -= h;
        const double fd = (dual_objective(fp, g, bi.sol.a, bi.sol.b, *bi.C, bi.eps) -
                           dual_objective(fm, g, bi.sol.a, bi.sol.b, *bi.C, bi.eps)) /
                          (2 * h);
        fd_max = std::max(fd_max, std::abs(fd));
        diff_max = std::max(diff_max, std::abs(fd - bi.sol.a[i] * gf[i]));
        const Eigen::Index j = pick_j(rng);
        Vec gp = g, gm = g;
        gp[j] += h;
        gm[j] -= h;
        const double fdg = (dual_objective(f, gp, bi.sol.a, bi.sol.b, *bi.C, bi.eps) -
                            dual_objective(f, gm, bi.sol.a, bi.sol.b, *bi.C, bi.eps)) /
                           (2 * h);
        fd_max = std::max(fd_max, std::abs(fdg));
        diff_max = std::max(diff_max, std::abs(fdg - bi.sol.b[j] * gg[j]));
      }
      const double rel = diff_max / std::max(fd_max, 1e-12);
      worst_rel = std::max(worst_rel, rel);
      if (rel > 1e-5) r.pass = false;
    }
    // conditional-mean gradient against finite differences of the extended
    // second potential; needs the differentiable cost family
    {
      const auto& bi = battery[0];
      const ExtendedPotentials ext(bi.sol, bi.mu.cloud, bi.nu.cloud,
                                   make_cost_model(bi.frozen, bi.mu.cloud, bi.nu.cloud));
      for (int p = 0; p < opts.fd_points; ++p) {
        const std::uint64_t s = replicate_seed(opts.seed, "selftest_fd_map", static_cast<std::uint64_t>(p));
        const Eigen::RowVectorXd y = generate(bi.sy, 1, s).points.row(0);
        const Eigen::RowVectorXd grad = ext.map_gradient_g(y);
        double fd_max = 0, diff_max = 0;
        for (Eigen::Index c = 0; c < y.size(); ++c) {
          Eigen::RowVectorXd yp = y, ym = y;
          yp[c] += h;
          ym[c] -= h;
          const double fd = (ext.extend_g(yp) - ext.extend_g(ym)) / (2 * h);
          fd_max = std::max(fd_max, std::abs(fd));
          diff_max = std::max(diff_max, std::abs(fd - grad[c]));
        }
        const double rel = diff_max / std::max(fd_max, 1e-12);
        worst_rel = std::max(worst_rel, rel);
        if (rel > 1e-5) r.pass = false;
      }
    }
    r.detail = std::to_string(2 * opts.fd_points) + " points, worst relative error " +
               format_double(worst_rel);
    results.push_back(r);
  }

  return results;
}

}  // namespace midscale
