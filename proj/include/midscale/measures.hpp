#pragma once

#include "midscale/common.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>

namespace midscale {

// ---------------------------------------------------------------------------
// Point clouds and discrete measures.

struct PointCloud {
  Mat points;  // n x d, one row per point

  Eigen::Index n() const { return points.rows(); }
  Eigen::Index d() const { return points.cols(); }

  void validate() const {
    if (points.rows() < 1 || points.cols() < 1)
      throw error(error::kind::validation, "point cloud must be non-empty with d >= 1");
    if (!points.allFinite())
      throw error(error::kind::validation, "point cloud contains non-finite coordinates");
  }
};

struct DiscreteMeasure {
  PointCloud cloud;
  Vec weights;  // strictly positive, sums to 1

  Eigen::Index n() const { return cloud.n(); }
  Eigen::Index d() const { return cloud.d(); }
};

/// Builds a measure from a cloud and raw nonnegative weights. Zero-weight
/// atoms are dropped; the rest are renormalized to sum to exactly 1.
inline DiscreteMeasure make_measure(const PointCloud& cloud, const Vec& raw) {
  cloud.validate();
  if (raw.size() != cloud.n())
    throw error(error::kind::validation, "weights length does not match cloud size");
  if ((raw.array() < 0).any() || !raw.allFinite())
    throw error(error::kind::validation, "weights must be finite and nonnegative");
  const double total = raw.sum();
  if (total <= 0) throw error(error::kind::validation, "weights must have positive sum");

  Eigen::Index kept = (raw.array() > 0).count();
  DiscreteMeasure m;
  m.cloud.points.resize(kept, cloud.d());
  m.weights.resize(kept);
  Eigen::Index out = 0;
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    if (raw[i] > 0) {
      m.cloud.points.row(out) = cloud.points.row(i);
      m.weights[out] = raw[i] / total;
      ++out;
    }
  }
  return m;
}

inline DiscreteMeasure empirical_measure(const PointCloud& cloud) {
  cloud.validate();
  DiscreteMeasure m;
  m.cloud = cloud;
  m.weights = Vec::Constant(cloud.n(), 1.0 / static_cast<double>(cloud.n()));
  return m;
}

/// Merges bitwise-identical points, accumulating their weights. Useful for
/// draws from finitely supported laws, where the empirical measure collapses
/// to at most K weighted atoms; the represented measure is unchanged.
inline DiscreteMeasure compress_measure(const DiscreteMeasure& m) {
  std::vector<Eigen::Index> rep;
  std::vector<double> w;
  for (Eigen::Index i = 0; i < m.n(); ++i) {
    bool found = false;
    for (std::size_t r = 0; r < rep.size(); ++r) {
      if (m.cloud.points.row(i) == m.cloud.points.row(rep[r])) {
        w[r] += m.weights[i];
        found = true;
        break;
      }
    }
    if (!found) {
      rep.push_back(i);
      w.push_back(m.weights[i]);
    }
  }
  DiscreteMeasure out;
  out.cloud.points.resize(static_cast<Eigen::Index>(rep.size()), m.d());
  out.weights.resize(static_cast<Eigen::Index>(rep.size()));
  for (std::size_t r = 0; r < rep.size(); ++r) {
    out.cloud.points.row(static_cast<Eigen::Index>(r)) = m.cloud.points.row(rep[r]);
    out.weights[static_cast<Eigen::Index>(r)] = w[r];
  }
  out.weights /= out.weights.sum();
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generators. Every supported law lives inside the closed unit
// ball; embedded manifolds (circle, sphere, torus) use embedding radius 1/2
// so that fattened variants stay inside the ball as well.

constexpr double kEmbedRadius = 0.5;

struct TiltSpec {
  double beta = 0.0;  // |beta| < 1 keeps the weight bounded away from 0
  int axis = 0;
};

struct GeneratorSpec {
  enum class Kind {
    uniform_ball,    // uniform on B(0,1) in R^d
    hyperplane,      // uniform on a k-dimensional unit disk embedded in R^d
    circle,          // radius-1/2 circle in the first two coordinates
    sphere,          // radius-1/2 sphere S^{d_nu} in the first d_nu+1 coords
    torus,           // 2-torus in the first four coordinates, outer radius 1/2
    fattened,        // base manifold plus a uniform perturbation of size <= delta_fat
    finite_support,  // K fixed atoms, uniform sampling weights
  };

  Kind kind = Kind::uniform_ball;
  int d = 1;                 // ambient dimension
  int k = 0;                 // hyperplane k / sphere d_nu / finite-support K
  Kind base_kind = Kind::circle;  // for fattened
  int base_k = 0;                 // for fattened sphere bases
  double delta_fat = 0.0;
  std::uint64_t atom_seed = 1234567;  // finite-support atom locations (spec-level)
  std::optional<TiltSpec> tilt;       // manifold kinds only

  int intrinsic_dim() const {
    switch (kind) {
      case Kind::uniform_ball: return d;
      case Kind::hyperplane: return k;
      case Kind::circle: return 1;
      case Kind::sphere: return k;
      case Kind::torus: return 2;
      case Kind::fattened: return d;
      case Kind::finite_support: return 0;
    }
    return d;
  }

  void validate() const {
    if (d < 1) throw error(error::kind::validation, "generator: ambient dimension must be >= 1");
    switch (kind) {
      case Kind::uniform_ball:
        break;
      case Kind::hyperplane:
        if (k < 1 || k > d)
          throw error(error::kind::validation, "hyperplane: need 1 <= k <= d");
        break;
      case Kind::circle:
        if (d < 2) throw error(error::kind::validation, "circle: need d >= 2");
        break;
      case Kind::sphere:
        if (k < 1 || k + 1 > d)
          throw error(error::kind::validation, "sphere: need 1 <= d_nu and d_nu + 1 <= d");
        break;
      case Kind::torus:
        if (d < 4) throw error(error::kind::validation, "torus: need d >= 4");
        break;
      case Kind::fattened: {
        if (delta_fat <= 0 || delta_fat > kEmbedRadius)
          throw error(error::kind::validation, "fattened: need 0 < delta_fat <= 1/2");
        if (base_kind == Kind::fattened || base_kind == Kind::finite_support ||
            base_kind == Kind::uniform_ball)
          throw error(error::kind::validation, "fattened: base must be an embedded manifold");
        GeneratorSpec base = *this;
        base.kind = base_kind;
        base.k = base_k;
        base.delta_fat = 0;
        base.tilt.reset();
        base.validate();
        break;
      }
      case Kind::finite_support:
        if (k < 1) throw error(error::kind::validation, "finite-support: need K >= 1");
        break;
    }
    if (tilt) {
      const bool manifold = kind == Kind::circle || kind == Kind::sphere || kind == Kind::torus;
      if (!manifold)
        throw error(error::kind::validation, "density tilt is only defined for manifold kinds");
      if (std::abs(tilt->beta) >= 1)
        throw error(error::kind::validation, "tilt: need |beta| < 1");
      if (tilt->axis < 0 || tilt->axis >= d)
        throw error(error::kind::validation, "tilt: axis out of range");
    }
  }
};

namespace detail {

inline Vec sample_unit_sphere(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec v(dim);
  double norm2;
  do {
    for (int i = 0; i < dim; ++i) v[i] = gauss(rng);
    norm2 = v.squaredNorm();
  } while (norm2 == 0.0);
  return v / std::sqrt(norm2);
}

inline Vec sample_manifold_point(const GeneratorSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec p = Vec::Zero(spec.d);
  switch (spec.kind) {
    case GeneratorSpec::Kind::circle: {
      const double theta = 2.0 * M_PI * unif(rng);
      p[0] = kEmbedRadius * std::cos(theta);
      p[1] = kEmbedRadius * std::sin(theta);
      break;
    }
    case GeneratorSpec::Kind::sphere: {
      p.head(spec.k + 1) = kEmbedRadius * sample_unit_sphere(spec.k + 1, rng);
      break;
    }
    case GeneratorSpec::Kind::torus: {
      // Flat 2-torus in R^4; each point has norm exactly 1/2.
      const double r = kEmbedRadius / std::sqrt(2.0);
      const double theta = 2.0 * M_PI * unif(rng);
      const double phi = 2.0 * M_PI * unif(rng);
      p[0] = r * std::cos(theta);
      p[1] = r * std::sin(theta);
      p[2] = r * std::cos(phi);
      p[3] = r * std::sin(phi);
      break;
    }
    default:
      throw error(error::kind::validation, "not a manifold kind");
  }
  return p;
}

// Accept-reject against the Lipschitz weight 1 + beta * (x_axis / r_embed),
// which is bounded inside [1 - |beta|, 1 + |beta|], hence non-vanishing.
inline Vec sample_tilted_manifold(const GeneratorSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double beta = spec.tilt ? spec.tilt->beta : 0.0;
  const int axis = spec.tilt ? spec.tilt->axis : 0;
  const double wmax = 1.0 + std::abs(beta);
  while (true) {
    Vec p = sample_manifold_point(spec, rng);
    if (!spec.tilt) return p;
    const double w = 1.0 + beta * (p[axis] / kEmbedRadius);
    if (unif(rng) * wmax <= w) return p;
  }
}

inline Mat finite_support_atoms(const GeneratorSpec& spec) {
  std::mt19937_64 rng(splitmix64(spec.atom_seed));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Mat atoms(spec.k, spec.d);
  for (int a = 0; a < spec.k; ++a) {
    Vec dir = sample_unit_sphere(spec.d, rng);
    const double r = std::pow(unif(rng), 1.0 / spec.d);
    atoms.row(a) = (r * dir).transpose();
  }
  return atoms;
}

}  // namespace detail

inline PointCloud generate(const GeneratorSpec& spec, Eigen::Index n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw error(error::kind::validation, "generate: need n >= 1");
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  PointCloud out;
  out.points.resize(n, spec.d);

  switch (spec.kind) {
    case GeneratorSpec::Kind::uniform_ball: {
      for (Eigen::Index i = 0; i < n; ++i) {
        Vec dir = detail::sample_unit_sphere(spec.d, rng);
        const double r = std::pow(unif(rng), 1.0 / spec.d);
        out.points.row(i) = (r * dir).transpose();
      }
      break;
    }
    case GeneratorSpec::Kind::hyperplane: {
      for (Eigen::Index i = 0; i < n; ++i) {
        Vec dir = detail::sample_unit_sphere(spec.k, rng);
        const double r = std::pow(unif(rng), 1.0 / spec.k);
        Vec p = Vec::Zero(spec.d);
        p.head(spec.k) = r * dir;
        out.points.row(i) = p.transpose();
      }
      break;
    }
    case GeneratorSpec::Kind::circle:
    case GeneratorSpec::Kind::sphere:
    case GeneratorSpec::Kind::torus: {
      for (Eigen::Index i = 0; i < n; ++i)
        out.points.row(i) = detail::sample_tilted_manifold(spec, rng).transpose();
      break;
    }
    case GeneratorSpec::Kind::fattened: {
      GeneratorSpec base = spec;
      base.kind = spec.base_kind;
      base.k = spec.base_k;
      base.delta_fat = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        Vec p = detail::sample_tilted_manifold(base, rng);
        Vec dir = detail::sample_unit_sphere(spec.d, rng);
        const double r = spec.delta_fat * std::pow(unif(rng), 1.0 / spec.d);
        out.points.row(i) = (p + r * dir).transpose();
      }
      break;
    }
    case GeneratorSpec::Kind::finite_support: {
      const Mat atoms = detail::finite_support_atoms(spec);
      std::uniform_int_distribution<int> pick(0, spec.k - 1);
      for (Eigen::Index i = 0; i < n; ++i) out.points.row(i) = atoms.row(pick(rng));
      break;
    }
  }
  return out;
}

/// The fixed atom locations of a finite-support spec (uniform weights); the
/// exact population measure for semi-discrete experiments.
inline DiscreteMeasure finite_support_population(const GeneratorSpec& spec) {
  spec.validate();
  if (spec.kind != GeneratorSpec::Kind::finite_support)
    throw error(error::kind::validation, "finite_support_population: wrong generator kind");
  PointCloud cloud;
  cloud.points = detail::finite_support_atoms(spec);
  return empirical_measure(cloud);
}

// ---------------------------------------------------------------------------
// Costs. Raw families are rescaled so the matrix entries over the concrete
// supports have magnitude at most 1; the Lipschitz constant is rescaled by
// the same factor. Experiments freeze one rescaling (from their oracle
// clouds) and reuse it across all sample sizes.

struct CostSpec {
  enum class Family { squared_euclidean, euclidean, custom };
  Family family = Family::squared_euclidean;

  // Custom costs supply their own evaluator, raw Lipschitz constant, and raw
  // sup bound. Built-in families derive both from the clouds at hand.
  std::function<double(const Eigen::RowVectorXd&, const Eigen::RowVectorXd&)> custom_cost;
  double custom_lipschitz = 0.0;
  double custom_sup = 0.0;

  // Optional frozen rescale factor and effective Lipschitz constant; when
  // set, cost_matrix applies them instead of recomputing from the clouds.
  double frozen_rescale = 0.0;
  double frozen_effective_L = 0.0;
};

/// A rescaled, ready-to-evaluate cost: c(x, y) = rescale * c_raw(x, y).
struct CostModel {
  CostSpec::Family family = CostSpec::Family::squared_euclidean;
  std::function<double(const Eigen::RowVectorXd&, const Eigen::RowVectorXd&)> custom_cost;
  double rescale = 1.0;
  double effective_L = 1.0;

  double operator()(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) const {
    switch (family) {
      case CostSpec::Family::squared_euclidean: return rescale * (x - y).squaredNorm();
      case CostSpec::Family::euclidean: return rescale * (x - y).norm();
      case CostSpec::Family::custom: return rescale * custom_cost(x, y);
    }
    return 0.0;
  }

  /// Gradient in the second argument. The Euclidean family is singular where
  /// x == y; that is a caller error, reported as such.
  Eigen::RowVectorXd grad_y(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) const {
    switch (family) {
      case CostSpec::Family::squared_euclidean: return 2.0 * rescale * (y - x);
      case CostSpec::Family::euclidean: {
        const double nrm = (y - x).norm();
        if (nrm == 0.0)
          throw error(error::kind::validation,
                      "euclidean cost gradient is singular at coinciding points");
        return rescale * (y - x) / nrm;
      }
      case CostSpec::Family::custom:
        throw error(error::kind::validation, "custom costs expose no gradient");
    }
    return {};
  }
};

namespace detail {

inline double raw_cost(const CostSpec& spec, const Eigen::RowVectorXd& x,
                       const Eigen::RowVectorXd& y) {
  switch (spec.family) {
    case CostSpec::Family::squared_euclidean: return (x - y).squaredNorm();
    case CostSpec::Family::euclidean: return (x - y).norm();
    case CostSpec::Family::custom: return spec.custom_cost(x, y);
  }
  return 0.0;
}

inline double raw_lipschitz(const CostSpec& spec, const PointCloud& X, const PointCloud& Y) {
  switch (spec.family) {
    case CostSpec::Family::squared_euclidean: {
      // |c(x,y) - c(x',y)| <= (‖x‖ + ‖x'‖ + 2‖y‖)·‖x - x'‖, and symmetrically.
      const double rx = X.points.rowwise().norm().maxCoeff();
      const double ry = Y.points.rowwise().norm().maxCoeff();
      return 2.0 * (rx + ry);
    }
    case CostSpec::Family::euclidean: return 1.0;
    case CostSpec::Family::custom:
      if (spec.custom_lipschitz <= 0)
        throw error(error::kind::validation, "custom cost needs a positive Lipschitz constant");
      return spec.custom_lipschitz;
  }
  return 1.0;
}

}  // namespace detail

inline Mat raw_cost_matrix(const CostSpec& spec, const PointCloud& X, const PointCloud& Y) {
  if (X.d() != Y.d())
    throw error(error::kind::validation, "cost matrix: ambient dimensions differ");
  const Eigen::Index n = X.n(), m = Y.n();
  Mat C(n, m);
  if (spec.family == CostSpec::Family::squared_euclidean) {
    const Vec x2 = X.points.rowwise().squaredNorm();
    const Vec y2 = Y.points.rowwise().squaredNorm();
    C.noalias() = -2.0 * X.points * Y.points.transpose();
    C.colwise() += x2;
    C.rowwise() += y2.transpose();
    C = C.cwiseMax(0.0);
  } else if (spec.family == CostSpec::Family::euclidean) {
    const Vec x2 = X.points.rowwise().squaredNorm();
    const Vec y2 = Y.points.rowwise().squaredNorm();
    C.noalias() = -2.0 * X.points * Y.points.transpose();
    C.colwise() += x2;
    C.rowwise() += y2.transpose();
    C = C.cwiseMax(0.0).cwiseSqrt();
  } else {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        C(i, j) = spec.custom_cost(X.points.row(i), Y.points.row(j));
  }
  return C;
}

/// Builds the rescaled evaluator for a pair of supports. Rescale factor is
/// 1 / max(1, max raw |c|) over the given clouds unless the spec froze one.
inline CostModel make_cost_model(const CostSpec& spec, const PointCloud& X, const PointCloud& Y) {
  CostModel m;
  m.family = spec.family;
  m.custom_cost = spec.custom_cost;
  if (spec.frozen_rescale > 0) {
    m.rescale = spec.frozen_rescale;
    m.effective_L = spec.frozen_effective_L > 0
                        ? spec.frozen_effective_L
                        : detail::raw_lipschitz(spec, X, Y) * spec.frozen_rescale;
  } else {
    const Mat raw = raw_cost_matrix(spec, X, Y);
    const double sup = raw.cwiseAbs().maxCoeff();
    m.rescale = 1.0 / std::max(1.0, sup);
    m.effective_L = detail::raw_lipschitz(spec, X, Y) * m.rescale;
  }
  return m;
}

struct CostMatrixResult {
  Mat C;
  double effective_L;
  double rescale;
};

inline CostMatrixResult cost_matrix(const PointCloud& X, const PointCloud& Y,
                                    const CostSpec& spec) {
  const CostModel model = make_cost_model(spec, X, Y);
  CostMatrixResult r;
  r.C = model.rescale * raw_cost_matrix(spec, X, Y);
  r.effective_L = model.effective_L;
  r.rescale = model.rescale;
  return r;
}

/// Freezes the rescaling computed on (X, Y) into a reusable spec, so cost
/// matrices built later (e.g. per replicate) share one fixed cost function.
inline CostSpec freeze_cost(const CostSpec& spec, const PointCloud& X, const PointCloud& Y) {
  const CostModel model = make_cost_model(spec, X, Y);
  CostSpec frozen = spec;
  frozen.frozen_rescale = model.rescale;
  frozen.frozen_effective_L = model.effective_L;
  return frozen;
}

// ---------------------------------------------------------------------------
// CSV serialization of clouds: one row per point, no header.

inline void write_cloud_csv(const PointCloud& cloud, std::ostream& os) {
  for (Eigen::Index i = 0; i < cloud.n(); ++i) {
    for (Eigen::Index j = 0; j < cloud.d(); ++j) {
      if (j) os << ',';
      os << format_double(cloud.points(i, j));
    }
    os << '\n';
  }
}

inline void write_cloud_csv(const PointCloud& cloud, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw error(error::kind::io, "cannot open for writing: " + path);
  write_cloud_csv(cloud, f);
  if (!f.good()) throw error(error::kind::io, "write failed: " + path);
}

inline PointCloud read_cloud_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw error(error::kind::io, "bad numeric cell in cloud CSV: '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw error(error::kind::io, "ragged rows in cloud CSV");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw error(error::kind::io, "empty cloud CSV");
  PointCloud cloud;
  cloud.points.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j)
      cloud.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  cloud.validate();
  return cloud;
}

inline PointCloud read_cloud_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw error(error::kind::io, "cannot open cloud CSV: " + path);
  return read_cloud_csv(f);
}

}  // namespace midscale
