#include <catch2/catch_amalgamated.hpp>

#include "midscale/experiments.hpp"

#include <Eigen/Dense>
#include <sstream>

using namespace midscale;

namespace {

GeneratorSpec ball2() {
  GeneratorSpec s;
  s.kind = GeneratorSpec::Kind::uniform_ball;
  s.d = 2;
  return s;
}

OracleSolution small_oracle() {
  static const OracleSolution o =
      population_oracle(ball2(), ball2(), 200, 0.35, CostSpec{}, 71, 1e-10);
  return o;
}

}  // namespace

TEST_CASE("log-log fit recovers an exact power law") {
  std::vector<double> xs{1, 2, 4, 8, 16};
  std::vector<double> ys;
  for (double x : xs) ys.push_back(3.0 * std::pow(x, -0.7));
  const SlopeFit fit = fit_loglog_slope(xs, ys);
  REQUIRE(fit.slope == Catch::Approx(-0.7).margin(1e-10));
  REQUIRE(fit.se == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("log-log fit agrees with a least-squares solve") {
  const std::vector<double> xs{1, 10, 100, 1000};
  const std::vector<double> ys{2.0, 4.5, 7.0, 20.0};
  const SlopeFit fit = fit_loglog_slope(xs, ys);

  Eigen::MatrixXd A(4, 2);
  Eigen::VectorXd ly(4);
  for (int i = 0; i < 4; ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = std::log10(xs[static_cast<std::size_t>(i)]);
    ly[i] = std::log10(ys[static_cast<std::size_t>(i)]);
  }
  const Eigen::VectorXd beta = A.colPivHouseholderQr().solve(ly);
  REQUIRE(fit.slope == Catch::Approx(beta[1]).epsilon(1e-12));
  const Eigen::VectorXd resid = ly - A * beta;
  const Eigen::VectorXd lx = A.col(1).array() - A.col(1).mean();
  const double se = std::sqrt(resid.squaredNorm() / 2.0 / lx.squaredNorm());
  REQUIRE(fit.se == Catch::Approx(se).epsilon(1e-10));
}

TEST_CASE("log-log fit rejects degenerate inputs") {
  REQUIRE_THROWS_AS(fit_loglog_slope({1, 2}, {1, 2, 3}), error);
  REQUIRE_THROWS_AS(fit_loglog_slope({1, 2}, {1, 2}), error);
  REQUIRE_THROWS_AS(fit_loglog_slope({1, 2, 3}, {1, -2, 3}), error);
  REQUIRE_THROWS_AS(fit_loglog_slope({1, 2, 0}, {1, 2, 3}), error);
  REQUIRE_THROWS_AS(fit_loglog_slope({2, 2, 2}, {1, 2, 3}), error);
}

TEST_CASE("rate table means and standard errors") {
  RateTable t;
  t.grid = {10, 20};
  t.errors = {{1.0, 2.0, 3.0}, {4.0, 6.0}};
  const std::vector<double> m = t.mean_errors();
  REQUIRE(m[0] == Catch::Approx(2.0).margin(1e-15));
  REQUIRE(m[1] == Catch::Approx(5.0).margin(1e-15));
  const std::vector<double> se = t.stderr_of_means();
  REQUIRE(se[0] == Catch::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-14));
  REQUIRE(se[1] == Catch::Approx(1.0).epsilon(1e-14));
  RateTable single;
  single.grid = {5};
  single.errors = {{0.7}};
  REQUIRE(single.stderr_of_means()[0] == 0.0);
}

TEST_CASE("slope fitting declines short grids and vanishing means") {
  RateTable t;
  t.grid = {10, 20};
  t.errors = {{0.5}, {0.25}};
  detail::fit_table_slope(t);
  REQUIRE_FALSE(t.slope_valid);
  RateTable z;
  z.grid = {1, 2, 4};
  z.errors = {{0.0}, {0.1}, {0.2}};
  detail::fit_table_slope(z);
  REQUIRE_FALSE(z.slope_valid);
}

TEST_CASE("rate csv layout") {
  RateTable t;
  t.experiment = "value_rate";
  t.grid_var = "n";
  t.grid = {10, 20};
  t.errors = {{0.5}, {0.25, 0.125}};
  std::ostringstream os;
  write_rate_csv(os, {t});
  REQUIRE(os.str() ==
          "experiment,grid_var,grid_value,rep,error\n"
          "value_rate,n,10,0,0.5\n"
          "value_rate,n,20,0,0.25\n"
          "value_rate,n,20,1,0.125\n");
}

TEST_CASE("population oracle is deterministic") {
  const OracleSolution a = population_oracle(ball2(), ball2(), 120, 0.3, CostSpec{}, 42);
  const OracleSolution b = population_oracle(ball2(), ball2(), 120, 0.3, CostSpec{}, 42);
  REQUIRE(a.S_ref == b.S_ref);
  REQUIRE(a.density_l2 == b.density_l2);
  REQUIRE(a.sol.f == b.sol.f);
  REQUIRE(a.sol.g == b.sol.g);
  REQUIRE(a.density_l2 >= 1.0 - 1e-9);
}

TEST_CASE("population oracle uses exact atoms for finite support") {
  GeneratorSpec sy;
  sy.kind = GeneratorSpec::Kind::finite_support;
  sy.d = 2;
  sy.k = 5;
  const OracleSolution o = population_oracle(ball2(), sy, 100, 0.3, CostSpec{}, 77);
  REQUIRE(o.nu.n() == 5);
  for (Eigen::Index j = 0; j < 5; ++j)
    REQUIRE(o.nu.weights[j] == Catch::Approx(0.2).margin(1e-15));
  const DiscreteMeasure pop = finite_support_population(sy);
  REQUIRE((o.nu.cloud.points - pop.cloud.points).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("oracle self-consistency gap is reproducible") {
  const OracleSolution o = small_oracle();
  const double g1 = oracle_doubling_gap(o);
  const double g2 = oracle_doubling_gap(o);
  REQUIRE(g1 == g2);
  REQUIRE(g1 >= 0.0);
  REQUIRE(std::isfinite(g1));
}

TEST_CASE("value rate errors are nonnegative and reproducible") {
  const OracleSolution o = small_oracle();
  const std::vector<Eigen::Index> grid{16, 32, 64};
  const RateTable t1 = value_rate_experiment(o, grid, 3, 11);
  const RateTable t2 = value_rate_experiment(o, grid, 3, 11);
  REQUIRE(t1.errors == t2.errors);
  REQUIRE(t1.grid == std::vector<double>{16, 32, 64});
  for (const auto& row : t1.errors) {
    REQUIRE(row.size() == 3);
    for (double e : row) REQUIRE(e >= 0.0);
  }
  REQUIRE(t1.slope_valid);
  REQUIRE(t1.metadata.at("oracle_m") == "200");
  REQUIRE(t1.metadata.at("oracle_value") == format_double(o.S_ref));
  REQUIRE(t1.metadata.count("cost_rescale") == 1);
}

TEST_CASE("bias experiment records signed values and the sign flag") {
  const OracleSolution o = small_oracle();
  const RateTable t = bias_experiment(o, {16, 32, 64}, 4, 13);
  REQUIRE(t.signed_errors);
  // The flag must agree with the recorded table; whether it is actually
  // "true" depends on oracle quality, which this small setup does not
  // guarantee.
  const std::vector<double> means = t.mean_errors();
  const std::vector<double> ses = t.stderr_of_means();
  bool expect = true;
  for (std::size_t g = 0; g < means.size(); ++g) {
    REQUIRE(std::isfinite(means[g]));
    if (means[g] + 2.0 * ses[g] < 0) expect = false;
  }
  REQUIRE(t.metadata.at("bias_nonneg_within_2se") == (expect ? "true" : "false"));
}

TEST_CASE("potential errors satisfy the gradient variance identity") {
  const OracleSolution o = small_oracle();
  const RateTable t = potential_error_experiment(o, {16, 32, 64}, 3, 17);
  for (const auto& row : t.errors)
    for (double e : row) REQUIRE(e >= 0.0);
  const double mean_ratio = std::stod(t.metadata.at("gradient_identity_mean_ratio"));
  const double max_ratio = std::stod(t.metadata.at("gradient_identity_max_ratio"));
  REQUIRE(mean_ratio > 0.0);
  REQUIRE(mean_ratio <= 4.0);
  REQUIRE(max_ratio >= mean_ratio);
  REQUIRE(std::isfinite(max_ratio));
}

TEST_CASE("map and density errors are nonnegative") {
  const OracleSolution o = small_oracle();
  const RateTable m = map_error_experiment(o, {16, 32}, 2, 19);
  for (const auto& row : m.errors)
    for (double e : row) REQUIRE(e >= 0.0);
  const DensityErrorResult d = density_error_experiment(o, {16, 32}, 2, 23, 1e-9, 200000, 64);
  for (const auto& row : d.l1.errors)
    for (double e : row) {
      REQUIRE(e >= 0.0);
      REQUIRE(std::isfinite(e));
    }
  for (const auto& row : d.l2.errors)
    for (double e : row) REQUIRE(e >= 0.0);
  REQUIRE(d.l2.metadata.at("n_fresh") == "64");
}

TEST_CASE("eps scan produces three aligned scale curves") {
  GeneratorSpec circ;
  circ.kind = GeneratorSpec::Kind::circle;
  circ.d = 2;
  const std::vector<double> eps_grid{0.05, 0.1, 0.2, 0.4};
  const EpsScanResult r = eps_scan_experiment(ball2(), circ, 256, eps_grid, 29);
  REQUIRE(r.lipschitz > 0.0);
  for (const RateTable* t : {&r.l2, &r.sup, &r.mass}) {
    REQUIRE(t->grid.size() == 4);
    REQUIRE(std::is_sorted(t->grid.begin(), t->grid.end()));
    REQUIRE(t->metadata.at("lipschitz") == format_double(r.lipschitz));
    for (const auto& row : t->errors) REQUIRE(row.size() == 1);
  }
  // Smaller eps concentrates the plan: the squared L2 norm and the sup grow
  // as eps decreases, and sup^2 dominates the squared L2 norm.
  REQUIRE(r.l2.errors.front()[0] >= r.l2.errors.back()[0]);
  REQUIRE(r.sup.errors.front()[0] >= r.sup.errors.back()[0]);
  for (std::size_t g = 0; g < 4; ++g) {
    REQUIRE(r.l2.errors[g][0] >= 1.0 - 1e-9);
    REQUIRE(r.sup.errors[g][0] * r.sup.errors[g][0] >= r.l2.errors[g][0] - 1e-9);
    REQUIRE(r.mass.errors[g][0] > 0.0);
    REQUIRE(r.mass.errors[g][0] <= 1.0 + 1e-15);
  }
  // Ball mass grows with the radius eps/L.
  REQUIRE(r.mass.errors.front()[0] <= r.mass.errors.back()[0]);
}

TEST_CASE("transport schedule reports against a fixed reference") {
  CostSpec euc;
  euc.family = CostSpec::Family::euclidean;
  const std::vector<Eigen::Index> grid{16, 32, 64};
  const RateTable t1 = w1_schedule_experiment(ball2(), ball2(), grid, 2, 5, euc);
  const RateTable t2 = w1_schedule_experiment(ball2(), ball2(), grid, 2, 5, euc);
  REQUIRE(t1.errors == t2.errors);
  REQUIRE(std::stod(t1.metadata.at("w_reference")) > 0.0);
  REQUIRE(t1.metadata.at("n_reference") == "256");
  for (const auto& row : t1.errors)
    for (double e : row) REQUIRE(e >= 0.0);
  CostSpec sq;
  REQUIRE_THROWS_AS(w1_schedule_experiment(ball2(), ball2(), grid, 2, 5, sq), error);
}

TEST_CASE("normalized entropic gap stays in a constant band") {
  CostSpec euc;
  euc.family = CostSpec::Family::euclidean;
  const std::vector<double> eps_grid{0.05, 0.1, 0.2};
  const RateTable t = w1_eps_ratio_experiment(ball2(), ball2(), 64, eps_grid, 3, 37, euc);
  REQUIRE(t.grid == eps_grid);
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (const auto& row : t.errors)
    for (double e : row) {
      REQUIRE(e > 0.0);
      lo = std::min(lo, e);
      hi = std::max(hi, e);
    }
  REQUIRE(hi / lo < 10.0);
  REQUIRE_THROWS_AS(w1_eps_ratio_experiment(ball2(), ball2(), 1, eps_grid, 3, 37, euc), error);
  REQUIRE_THROWS_AS(w1_eps_ratio_experiment(ball2(), ball2(), 64, {0.5}, 3, 37, euc), error);
}

TEST_CASE("experiment grids are validated") {
  const OracleSolution o = small_oracle();
  REQUIRE_THROWS_AS(value_rate_experiment(o, {}, 2, 1), error);
  REQUIRE_THROWS_AS(value_rate_experiment(o, {32, 16}, 2, 1), error);
  REQUIRE_THROWS_AS(value_rate_experiment(o, {16, 32}, 0, 1), error);
  REQUIRE_THROWS_AS(population_oracle(ball2(), ball2(), 0, 0.3, CostSpec{}, 1), error);
  REQUIRE_THROWS_AS(eps_scan_experiment(ball2(), ball2(), 1, {0.1}, 1), error);
  REQUIRE_THROWS_AS(eps_scan_experiment(ball2(), ball2(), 64, {}, 1), error);
}
