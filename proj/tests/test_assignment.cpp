#include <catch2/catch_amalgamated.hpp>

#include "midscale/assignment.hpp"

#include <algorithm>
#include <numeric>
#include <random>

using namespace midscale;

namespace {

double brute_force_assignment(const Mat& C) {
  const Eigen::Index n = C.rows();
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0;
    for (Eigen::Index i = 0; i < n; ++i) total += C(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

PointCloud line_cloud(std::initializer_list<double> xs) {
  PointCloud p;
  p.points.resize(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) p.points(i++, 0) = x;
  return p;
}

}  // namespace

TEST_CASE("assignment matches exhaustive search") {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> unif(-2.0, 3.0);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index n = 2 + trial % 6;
    Mat C(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) C(i, j) = unif(rng);
    const double got = solve_assignment(C);
    const double want = brute_force_assignment(C);
    REQUIRE(got == Catch::Approx(want).margin(1e-11));
  }
}

TEST_CASE("assignment on a hand-traced matrix") {
  Mat C(2, 2);
  C << 1, 2, 3, 1;
  REQUIRE(solve_assignment(C) == Catch::Approx(2.0).margin(1e-14));
}

TEST_CASE("assignment reports a consistent permutation") {
  std::mt19937_64 rng(456);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 3 + trial % 5;
    Mat C(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) C(i, j) = unif(rng);
    std::vector<Eigen::Index> row_of;
    const double total = solve_assignment(C, &row_of);
    REQUIRE(row_of.size() == static_cast<std::size_t>(n));
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    double recomputed = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index i = row_of[static_cast<std::size_t>(j)];
      REQUIRE(i >= 0);
      REQUIRE(i < n);
      REQUIRE_FALSE(seen[static_cast<std::size_t>(i)]);
      seen[static_cast<std::size_t>(i)] = 1;
      recomputed += C(i, j);
    }
    REQUIRE(total == Catch::Approx(recomputed).margin(1e-12));
  }
}

TEST_CASE("unregularized value on a shifted pair") {
  const PointCloud X = line_cloud({0.0, 1.0});
  const PointCloud Y = line_cloud({0.5, 1.5});
  CostSpec spec;
  spec.family = CostSpec::Family::euclidean;
  REQUIRE(exact_ot_value(X, Y, spec) == Catch::Approx(0.5).margin(1e-14));
  CostSpec sq;
  sq.family = CostSpec::Family::squared_euclidean;
  REQUIRE(exact_ot_value(X, Y, sq) == Catch::Approx(0.25).margin(1e-14));
}

TEST_CASE("unregularized value vanishes on identical supports") {
  GeneratorSpec s;
  s.kind = GeneratorSpec::Kind::uniform_ball;
  s.d = 3;
  const PointCloud X = generate(s, 40, 9);
  CostSpec spec;
  REQUIRE(exact_ot_value(X, X, spec) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("a frozen cost keeps its units") {
  const PointCloud X = line_cloud({0.0, 3.0});
  const PointCloud Y = line_cloud({1.0, 5.0});
  CostSpec spec;
  spec.family = CostSpec::Family::euclidean;
  const double raw = exact_ot_value(X, Y, spec);
  REQUIRE(raw == Catch::Approx(1.5).margin(1e-14));
  const CostSpec frozen = freeze_cost(spec, X, Y);
  REQUIRE(frozen.frozen_rescale == Catch::Approx(0.2).epsilon(1e-15));
  REQUIRE(exact_ot_value(X, Y, frozen) ==
          Catch::Approx(frozen.frozen_rescale * raw).epsilon(1e-14));
}

TEST_CASE("unregularized value ignores point ordering") {
  GeneratorSpec s;
  s.kind = GeneratorSpec::Kind::uniform_ball;
  s.d = 2;
  const PointCloud X = generate(s, 15, 11);
  const PointCloud Y = generate(s, 15, 12);
  CostSpec spec;
  const double base = exact_ot_value(X, Y, spec);
  PointCloud Xr = X;
  Xr.points = X.points.colwise().reverse().eval();
  REQUIRE(exact_ot_value(Xr, Y, spec) == Catch::Approx(base).epsilon(1e-12));
}

TEST_CASE("assignment validation") {
  Mat rect(2, 3);
  rect.setZero();
  REQUIRE_THROWS_AS(solve_assignment(rect), error);
  const PointCloud X = line_cloud({0.0, 1.0});
  const PointCloud Y = line_cloud({0.0, 1.0, 2.0});
  CostSpec spec;
  REQUIRE_THROWS_AS(exact_ot_value(X, Y, spec), error);
  GeneratorSpec s;
  s.kind = GeneratorSpec::Kind::uniform_ball;
  s.d = 1;
  const PointCloud big = generate(s, 257, 1);
  REQUIRE_THROWS_AS(exact_ot_value(big, big, spec), error);
}
