// Acceptance harness: one check per release criterion, each printing a single
// PASS/FAIL line with its measured numbers. Run with a list of criterion ids
// (c01..c12) or "all". Thresholds are pinned here on purpose; loosening them
// is a release decision, not a code change.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "midscale/assignment.hpp"
#include "midscale/covering.hpp"
#include "midscale/experiments.hpp"
#include "midscale/extension.hpp"
#include "midscale/measures.hpp"
#include "midscale/rgg.hpp"
#include "midscale/selftest.hpp"
#include "midscale/sinkhorn.hpp"

namespace {

using namespace midscale;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) { return format_double(v); }

bool in_band(double v, double lo, double hi) { return v >= lo && v <= hi; }

GeneratorSpec ball(int d) {
  GeneratorSpec s;
  s.kind = GeneratorSpec::Kind::uniform_ball;
  s.d = d;
  return s;
}

// ---------------------------------------------------------------------------
// c01: feasibility and duality. 50 instances, n = m = 200, squared-euclidean
// rescaled cost, eps cycling {0.05, 0.1, 0.5}: marginal residual <= 1e-9
// within 1e5 iterations and |value - dual objective| <= 1e-8, all within 60 s.
Outcome c01() {
  const auto t0 = Clock::now();
  double worst_resid = 0, worst_gap = 0;
  for (int i = 0; i < 50; ++i) {
    const double eps = (i % 3 == 0) ? 0.05 : (i % 3 == 1) ? 0.1 : 0.5;
    const std::uint64_t s = replicate_seed(4001, "accept_feasibility", static_cast<std::uint64_t>(i));
    const DiscreteMeasure mu = empirical_measure(generate(ball(3), 200, mix_seed(s, 1)));
    const DiscreteMeasure nu = empirical_measure(generate(ball(3), 200, mix_seed(s, 2)));
    CostSpec cost;
    const CostSpec frozen = freeze_cost(cost, mu.cloud, nu.cloud);
    const CostMatrixResult cm = cost_matrix(mu.cloud, nu.cloud, frozen);
    const DualSolution sol = solve(mu.weights, nu.weights, cm.C, eps, 1e-9, 100000);
    worst_resid = std::max(worst_resid, sol.marginal_residual);
    const double gap = std::abs(entropic_value(sol) -
                                dual_objective(sol.f, sol.g, sol.a, sol.b, *sol.C, eps));
    worst_gap = std::max(worst_gap, gap);
  }
  const double el = seconds_since(t0);
  Outcome o;
  o.pass = worst_resid <= 1e-9 && worst_gap <= 1e-8 && el <= 60.0;
  o.detail = "50 instances, worst residual " + fmt(worst_resid) + ", worst duality gap " +
             fmt(worst_gap) + ", " + fmt(el) + " s";
  return o;
}

// Shared helper for c02/c03/c04: run the invariant battery once and pick out
// the named checks.
Outcome battery_subset(const std::vector<std::string>& names) {
  const auto t0 = Clock::now();
  const std::vector<CheckResult> results = run_selftest(SelftestOptions{});
  Outcome o;
  o.pass = true;
  std::string parts;
  for (const std::string& want : names) {
    bool found = false;
    for (const CheckResult& r : results) {
      if (r.name != want) continue;
      found = true;
      if (!r.pass) o.pass = false;
      parts += (parts.empty() ? "" : "; ") + r.name + " " + (r.pass ? "ok" : "VIOLATED") + " (" +
               r.detail + ")";
    }
    if (!found) {
      o.pass = false;
      parts += (parts.empty() ? "" : "; ") + want + " MISSING";
    }
  }
  o.detail = parts + "; " + fmt(seconds_since(t0)) + " s";
  return o;
}

// c02: exact-inequality battery (concavity, rounding improvement, pointwise
// sup bounds, Lipschitz certificates) on 100 instances / 1e4 pairs.
Outcome c02() { return battery_subset({"concavity", "rounding", "pointwise", "lipschitz"}); }

// c03: analytic gradients against central finite differences, 100 points per
// gradient kind, relative error <= 1e-5.
Outcome c03() { return battery_subset({"gradient_fd"}); }

// c04: explicit-constant chain |p|^2 <= e^8 * min-side inverse-mass integral
// at radius 4 eps / L on every battery instance, plus the covering bound
// on the inverse-mass integral over 200 (cloud, delta) pairs. Zero violations.
Outcome c04() { return battery_subset({"density_covering", "inverse_mass"}); }

// ---------------------------------------------------------------------------
// c05: scale scan at 4000 points. Against log(L/eps), the squared plan-density
// norm and the sup density must expose the smaller intrinsic dimension:
// circle target gives l2 slope in [0.7, 1.3] and sup slope in [0.6, 1.5];
// 2-sphere target gives [1.5, 2.6] and [1.4, 2.8]. Both scans within 15 min.
Outcome c05() {
  const auto t0 = Clock::now();
  std::vector<double> grid;  // geometric, endpoints 0.02 and 0.2
  for (int k = 0; k < 7; ++k) grid.push_back(0.02 * std::pow(10.0, k / 6.0));

  GeneratorSpec circ;
  circ.kind = GeneratorSpec::Kind::circle;
  circ.d = 6;
  GeneratorSpec sph;
  sph.kind = GeneratorSpec::Kind::sphere;
  sph.d = 6;
  sph.k = 2;

  const EpsScanResult rc = eps_scan_experiment(ball(6), circ, 4000, grid, 501, CostSpec{}, 1e-6);
  const EpsScanResult rs = eps_scan_experiment(ball(6), sph, 4000, grid, 502, CostSpec{}, 1e-6);
  const double el = seconds_since(t0);

  Outcome o;
  o.pass = rc.l2.slope_valid && in_band(rc.l2.slope, 0.7, 1.3) && rs.l2.slope_valid &&
           in_band(rs.l2.slope, 1.5, 2.6) && rc.sup.slope_valid &&
           in_band(rc.sup.slope, 0.6, 1.5) && rs.sup.slope_valid &&
           in_band(rs.sup.slope, 1.4, 2.8) && el <= 900.0;
  o.detail = "circle l2 slope " + fmt(rc.l2.slope) + " (band [0.7,1.3]), sphere l2 slope " +
             fmt(rs.l2.slope) + " ([1.5,2.6]), circle sup slope " + fmt(rc.sup.slope) +
             " ([0.6,1.5]), sphere sup slope " + fmt(rs.sup.slope) + " ([1.4,2.8]), " + fmt(el) +
             " s";
  return o;
}

// ---------------------------------------------------------------------------
// Shared setup for c06/c07: 5-atom target in R^4, uniform-ball source,
// eps = 0.1, m = 5000 oracle.
OracleSolution semidiscrete_oracle() {
  GeneratorSpec nu;
  nu.kind = GeneratorSpec::Kind::finite_support;
  nu.d = 4;
  nu.k = 5;
  return population_oracle(ball(4), nu, 5000, 0.1, CostSpec{}, 601, 1e-10);
}

const std::vector<Eigen::Index> kNGrid{50, 100, 200, 400, 800};

// c06: value-error rate against the oracle across n in {50..800}, 30 reps:
// fitted log-log slope in [-0.65, -0.35], with the oracle's half-size drift
// below the smallest mean error (doubling check).
Outcome c06() {
  const auto t0 = Clock::now();
  const OracleSolution o = semidiscrete_oracle();
  const double gap = oracle_doubling_gap(o);
  const RateTable t = value_rate_experiment(o, kNGrid, 30, 602);
  double min_mean = std::numeric_limits<double>::infinity();
  for (double m : t.mean_errors()) min_mean = std::min(min_mean, std::abs(m));
  Outcome out;
  out.pass = t.slope_valid && in_band(t.slope, -0.65, -0.35) && gap <= min_mean;
  out.detail = "slope " + fmt(t.slope) + " (se " + fmt(t.slope_se) +
               ", band [-0.65,-0.35]), oracle drift " + fmt(gap) + " vs smallest mean " +
               fmt(min_mean) + ", " + fmt(seconds_since(t0)) + " s";
  return out;
}

// c07: signed bias over the same setup: slope of log |mean bias| in
// [-1.3, -0.7] and mean bias nonnegative within two standard errors at
// every n.
Outcome c07() {
  const auto t0 = Clock::now();
  const OracleSolution o = semidiscrete_oracle();
  const RateTable t = bias_experiment(o, kNGrid, 30, 702);
  const bool nonneg = t.metadata.at("bias_nonneg_within_2se") == "true";
  Outcome out;
  out.pass = t.slope_valid && in_band(t.slope, -1.3, -0.7) && nonneg;
  out.detail = "bias slope " + fmt(t.slope) + " (se " + fmt(t.slope_se) +
               ", band [-1.3,-0.7]), nonnegative within 2 se: " + (nonneg ? "yes" : "NO") + ", " +
               fmt(seconds_since(t0)) + " s";
  return out;
}

// c08: potential, map, and density rates against one shared m = 5000 oracle
// with a circle-supported target in R^6 at eps = 0.15: potential slope in
// [-1.3, -0.6], map slope in [-1.35, -0.5], density L1 slope in
// [-0.6, -0.15]. Combined runtime <= 30 min.
Outcome c08() {
  const auto t0 = Clock::now();
  GeneratorSpec circ;
  circ.kind = GeneratorSpec::Kind::circle;
  circ.d = 6;
  const OracleSolution o = population_oracle(ball(6), circ, 5000, 0.15, CostSpec{}, 801, 1e-10);
  const RateTable pot = potential_error_experiment(o, kNGrid, 30, 802);
  const RateTable map = map_error_experiment(o, kNGrid, 30, 803);
  const DensityErrorResult den = density_error_experiment(o, kNGrid, 30, 804);
  const double el = seconds_since(t0);
  Outcome out;
  out.pass = pot.slope_valid && in_band(pot.slope, -1.3, -0.6) && map.slope_valid &&
             in_band(map.slope, -1.35, -0.5) && den.l1.slope_valid &&
             in_band(den.l1.slope, -0.6, -0.15) && el <= 1800.0;
  out.detail = "potential slope " + fmt(pot.slope) + " ([-1.3,-0.6]), map slope " +
               fmt(map.slope) + " ([-1.35,-0.5]), density L1 slope " + fmt(den.l1.slope) +
               " ([-0.6,-0.15]), " + fmt(el) + " s";
  return out;
}

// ---------------------------------------------------------------------------
// c09: geometric-graph spectral gap on circle samples, delta = 0.3, d_nu = 1,
// n in {200, 400, 800}: lambda_2 > 0 everywhere, max/min over n at most 2,
// and D(alpha) >= 2 lambda_2 Var(alpha) for 50 random alpha per n.
Outcome c09() {
  const auto t0 = Clock::now();
  GeneratorSpec circ;
  circ.kind = GeneratorSpec::Kind::circle;
  circ.d = 2;
  double lmin = std::numeric_limits<double>::infinity(), lmax = 0;
  int violations = 0;
  for (Eigen::Index n : {200, 400, 800}) {
    const PointCloud Y = generate(circ, n, mix_seed(901, static_cast<std::uint64_t>(n)));
    const RggGraph g = build_rgg(Y, 0.3, 1);
    bool disc = true;
    const double l2 = lambda2(g, &disc);
    if (disc || !(l2 > 0)) ++violations;
    lmin = std::min(lmin, l2);
    lmax = std::max(lmax, l2);
    const Vec b = Vec::Constant(n, 1.0 / static_cast<double>(n));
    std::mt19937_64 rng(replicate_seed(902, "accept_rgg", static_cast<std::uint64_t>(n)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int k = 0; k < 50; ++k) {
      Vec alpha(n);
      for (Eigen::Index i = 0; i < n; ++i) alpha[i] = gauss(rng);
      const double mean = b.dot(alpha);
      const double var = b.dot((alpha.array() - mean).square().matrix());
      if (dirichlet_form(g, alpha) < 2.0 * l2 * var - 1e-9) ++violations;
    }
  }
  Outcome o;
  const double ratio = lmax / lmin;
  o.pass = violations == 0 && ratio <= 2.0;
  o.detail = "lambda2 in [" + fmt(lmin) + ", " + fmt(lmax) + "], ratio " + fmt(ratio) +
             " (max 2), " + std::to_string(violations) + " violations over 150 directions, " +
             fmt(seconds_since(t0)) + " s";
  return o;
}

// c10: quadratic growth of the semi-rounded objective on a solved 200x200
// instance: 20 random centered directions, t in {1e-3, 2e-3, 4e-3}; every
// deficit >= -1e-10, every fitted coefficient positive, per-direction
// deficit/t^2 spread below 10%.
Outcome c10() {
  const auto t0 = Clock::now();
  const DiscreteMeasure mu = empirical_measure(generate(ball(3), 200, mix_seed(1001, 1)));
  const DiscreteMeasure nu = empirical_measure(generate(ball(3), 200, mix_seed(1001, 2)));
  CostSpec cost;
  const CostSpec frozen = freeze_cost(cost, mu.cloud, nu.cloud);
  const CostMatrixResult cm = cost_matrix(mu.cloud, nu.cloud, frozen);
  const DualSolution sol = solve(mu.weights, nu.weights, cm.C, 0.1, 1e-10, 200000);
  const std::vector<QgDirectionResult> dirs =
      qg_diagnostic(sol, 20, {1e-3, 2e-3, 4e-3}, 1002);
  double worst_deficit = 0, min_coeff = std::numeric_limits<double>::infinity(),
         worst_spread = 0;
  for (const QgDirectionResult& d : dirs) {
    for (double v : d.deficit) worst_deficit = std::min(worst_deficit, v);
    min_coeff = std::min(min_coeff, d.coeff);
    worst_spread = std::max(worst_spread, d.ratio_spread);
  }
  Outcome o;
  o.pass = dirs.size() == 20 && worst_deficit >= -1e-10 && min_coeff > 0 && worst_spread < 0.10;
  o.detail = "20 directions, min deficit " + fmt(worst_deficit) + ", min coefficient " +
             fmt(min_coeff) + ", max deficit/t^2 spread " + fmt(worst_spread) + " (max 0.1), " +
             fmt(seconds_since(t0)) + " s";
  return o;
}

// c11: entropic estimate of the unregularized transport distance under the
// eps(n) = n^(-1/4) schedule (d = 2 balls, euclidean cost): mean errors
// strictly decreasing over n in {32, 64, 128, 256} with 20 reps; and at fixed
// n the normalized gap (S_eps - W) / (eps log(1/eps)) stays within one order
// of magnitude across eps in [0.02, 0.2].
Outcome c11() {
  const auto t0 = Clock::now();
  CostSpec euc;
  euc.family = CostSpec::Family::euclidean;
  const RateTable sched = w1_schedule_experiment(ball(2), ball(2), {32, 64, 128, 256}, 20, 5, euc);
  const std::vector<double> means = sched.mean_errors();
  bool decreasing = true;
  for (std::size_t g = 0; g + 1 < means.size(); ++g)
    if (!(means[g] > means[g + 1])) decreasing = false;

  std::vector<double> eps_grid;  // geometric, endpoints 0.02 and 0.2
  for (int k = 0; k < 7; ++k) eps_grid.push_back(0.02 * std::pow(10.0, k / 6.0));
  const RateTable ratio = w1_eps_ratio_experiment(ball(2), ball(2), 128, eps_grid, 5, 1102, euc);
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (double m : ratio.mean_errors()) {
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  const double spread = hi / lo;

  Outcome o;
  o.pass = decreasing && lo > 0 && spread < 10.0;
  std::string seq;
  for (double m : means) seq += (seq.empty() ? "" : " > ") + fmt(m);
  o.detail = "schedule means " + seq + (decreasing ? " (decreasing)" : " (NOT decreasing)") +
             ", ratio band [" + fmt(lo) + ", " + fmt(hi) + "] spread " + fmt(spread) +
             " (max 10), " + fmt(seconds_since(t0)) + " s";
  return o;
}

// ---------------------------------------------------------------------------
// c12: determinism through the command line. Two experiment families run
// twice each with the same seed; results.csv must match byte for byte.
#ifndef MIDSCALE_CLI_PATH
#error "MIDSCALE_CLI_PATH must point at the CLI binary"
#endif

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome c12() {
  namespace fs = std::filesystem;
  const auto t0 = Clock::now();
  const fs::path dir = fs::temp_directory_path() / ("midscale_accept_" + std::to_string(getpid()));
  fs::create_directories(dir);

  const std::string rate_cfg =
      "experiment = \"value_rate\"\n"
      "seed = 9\n"
      "eps = 0.1\n"
      "n_grid = [50, 100, 200]\n"
      "reps = 5\n"
      "oracle_m = 600\n"
      "[x]\nkind = \"uniform_ball\"\nd = 2\n"
      "[y]\nkind = \"finite_support\"\nd = 2\nk = 4\n";
  const std::string qg_cfg =
      "experiment = \"qg_check\"\n"
      "seed = 9\n"
      "n_dense = 80\n"
      "eps = 0.15\n"
      "[qg]\ndirections = 5\nt_grid = [0.001, 0.002, 0.004]\n"
      "[x]\nkind = \"uniform_ball\"\nd = 2\n"
      "[y]\nkind = \"uniform_ball\"\nd = 2\n";

  Outcome o;
  o.pass = true;
  int runs = 0;
  const std::pair<std::string, std::string> cases[] = {{"rate", rate_cfg}, {"qg", qg_cfg}};
  for (const auto& [name, body] : cases) {
    const fs::path cfg = dir / (name + ".toml");
    {
      std::ofstream out(cfg, std::ios::binary);
      out << body;
    }
    std::string first;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path out_dir = dir / (name + "_run" + std::to_string(rep));
      const std::string cmd = std::string(MIDSCALE_CLI_PATH) + " run " + cfg.string() + " --out " +
                              out_dir.string() + " >" + (dir / "stdout.txt").string() + " 2>" +
                              (dir / "stderr.txt").string();
      const int rc = std::system(cmd.c_str());
      ++runs;
      if (!WIFEXITED(rc) || WEXITSTATUS(rc) != 0) {
        o.pass = false;
        o.detail = name + " run exited with " + std::to_string(WEXITSTATUS(rc)) + ": " +
                   slurp(dir / "stderr.txt");
        return o;
      }
      const std::string csv = slurp(out_dir / "results.csv");
      if (csv.empty()) o.pass = false;
      if (rep == 0)
        first = csv;
      else if (csv != first)
        o.pass = false;
    }
  }
  o.detail = std::to_string(runs) + " runs over 2 configs, csv bodies " +
             (o.pass ? "identical" : "DIFFER") + ", " + fmt(seconds_since(t0)) + " s";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::function<Outcome()>> checks{
      {"c01", c01}, {"c02", c02}, {"c03", c03}, {"c04", c04}, {"c05", c05}, {"c06", c06},
      {"c07", c07}, {"c08", c08}, {"c09", c09}, {"c10", c10}, {"c11", c11}, {"c12", c12}};

  std::vector<std::string> ids;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "all") {
      ids.clear();
      for (const auto& [k, fn] : checks) ids.push_back(k);
      break;
    }
    if (!checks.count(arg)) {
      std::cerr << "unknown criterion '" << arg << "'; expected c01..c12 or all\n";
      return 2;
    }
    ids.push_back(arg);
  }
  if (ids.empty()) {
    std::cerr << "usage: acceptance <c01..c12|all> [...]\n";
    return 2;
  }

  bool all_pass = true;
  for (const std::string& id : ids) {
    Outcome o;
    try {
      o = checks.at(id)();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << id << ": " << o.detail << std::endl;
    if (!o.pass) all_pass = false;
  }
  return all_pass ? 0 : 1;
}
