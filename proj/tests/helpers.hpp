#pragma once

#include "midscale/extension.hpp"
#include "midscale/measures.hpp"
#include "midscale/sinkhorn.hpp"

#include <random>

namespace testutil {

using namespace midscale;

// Symmetric two-atom instance with every quantity available in closed form:
// X = {0, 1} = Y on the line, uniform weights, raw squared-euclidean cost
// C = [[0,1],[1,0]], eps = 1. The optimal potentials are f = (phi, phi),
// g = (0, 0) with phi = log 2 - log(1 + 1/e).
struct TwoPoint {
  PointCloud X, Y;
  DiscreteMeasure mu, nu;
  CostSpec frozen;
  DualSolution sol;
  double phi = 0;
};

inline TwoPoint make_two_point(double tol = 1e-12) {
  TwoPoint tp;
  tp.X.points = Mat(2, 1);
  tp.X.points << 0.0, 1.0;
  tp.Y = tp.X;
  tp.mu = empirical_measure(tp.X);
  tp.nu = empirical_measure(tp.Y);
  CostSpec spec;
  spec.family = CostSpec::Family::squared_euclidean;
  spec.frozen_rescale = 1.0;
  spec.frozen_effective_L = 4.0;
  tp.frozen = spec;
  Mat C = cost_matrix(tp.X, tp.Y, spec).C;
  tp.sol = solve(tp.mu.weights, tp.nu.weights, std::move(C), 1.0, tol, 10000);
  tp.phi = std::log(2.0) - std::log(1.0 + std::exp(-1.0));
  return tp;
}

// Small random instance for property tests.
struct RandomInstance {
  DiscreteMeasure mu, nu;
  CostSpec frozen;
  Mat C;
  double eps = 0;
};

inline RandomInstance make_random_instance(std::uint64_t seed, Eigen::Index n = 12,
                                           Eigen::Index m = 9, int d = 3, double eps = 0.3) {
  RandomInstance ri;
  GeneratorSpec ball;
  ball.kind = GeneratorSpec::Kind::uniform_ball;
  ball.d = d;
  ri.mu = empirical_measure(generate(ball, n, mix_seed(seed, 0x111)));
  ri.nu = empirical_measure(generate(ball, m, mix_seed(seed, 0x222)));
  CostSpec spec;
  ri.frozen = freeze_cost(spec, ri.mu.cloud, ri.nu.cloud);
  ri.C = cost_matrix(ri.mu.cloud, ri.nu.cloud, ri.frozen).C;
  ri.eps = eps;
  return ri;
}

inline Vec random_vec(Eigen::Index n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> gauss(0.0, scale);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = gauss(rng);
  return v;
}

}  // namespace testutil
