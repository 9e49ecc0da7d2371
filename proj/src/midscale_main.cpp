// midscale: entropic optimal transport solver and scaling-experiment harness.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "midscale/assignment.hpp"
#include "midscale/common.hpp"
#include "midscale/config.hpp"
#include "midscale/covering.hpp"
#include "midscale/experiments.hpp"
#include "midscale/extension.hpp"
#include "midscale/jsonio.hpp"
#include "midscale/measures.hpp"
#include "midscale/rgg.hpp"
#include "midscale/selftest.hpp"
#include "midscale/sinkhorn.hpp"

namespace {

using midscale::error;
using midscale::format_double;

const char* kind_name(error::kind k) {
  switch (k) {
    case error::kind::validation: return "validation";
    case error::kind::solver: return "solver";
    case error::kind::precondition: return "precondition";
    case error::kind::io: return "io";
  }
  return "error";
}

std::string iso_timestamp_utc() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw error(error::kind::io, "cannot open for writing: " + path);
  f << body;
  if (!f) throw error(error::kind::io, "write failed: " + path);
}

// Results land on disk only after every computation has finished, so an
// aborted run never leaves a half-written results directory behind.
void emit_run_outputs(const midscale::RunConfig& cfg, const std::string& csv_body,
                      const nlohmann::json& sidecar_extra,
                      const std::vector<midscale::RateTable>* tables) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw error(error::kind::io, "cannot create output directory: " + cfg.out_dir);

  nlohmann::json side;
  side["experiment"] = cfg.experiment;
  side["config_hash"] = midscale::config_hash(cfg);
  side["config"] = midscale::config_canonical(cfg);
  side["seed"] = cfg.seed;
  side["timestamp"] = iso_timestamp_utc();
  if (tables) {
    nlohmann::json arr = nlohmann::json::array();
    for (const midscale::RateTable& t : *tables) arr.push_back(midscale::table_to_json(t));
    side["tables"] = arr;
  }
  for (auto it = sidecar_extra.begin(); it != sidecar_extra.end(); ++it)
    side[it.key()] = it.value();

  write_text_file(cfg.out_dir + "/results.csv", csv_body);
  write_text_file(cfg.out_dir + "/sidecar.json", side.dump(2) + "\n");
}

std::string qg_csv(const std::vector<midscale::QgDirectionResult>& dirs) {
  std::string s = "direction_id,t,deficit,fitted_coeff\n";
  for (std::size_t k = 0; k < dirs.size(); ++k)
    for (std::size_t i = 0; i < dirs[k].t.size(); ++i)
      s += std::to_string(k) + "," + format_double(dirs[k].t[i]) + "," +
           format_double(dirs[k].deficit[i]) + "," + format_double(dirs[k].coeff) + "\n";
  return s;
}

// Dense solve for the quadratic-growth diagnostic. Used by both `run` with
// experiment = "qg_check" and the dedicated `qg-check` subcommand.
void run_qg_check(const midscale::RunConfig& cfg) {
  using namespace midscale;
  DiscreteMeasure mu = empirical_measure(generate(cfg.x, cfg.n_dense, mix_seed(cfg.seed, 0xD1CE)));
  DiscreteMeasure nu = empirical_measure(generate(cfg.y, cfg.n_dense, mix_seed(cfg.seed, 0xD1CF)));
  if (cfg.y.kind == GeneratorSpec::Kind::finite_support) nu = compress_measure(nu);
  const CostSpec frozen = freeze_cost(cfg.cost, mu.cloud, nu.cloud);
  CostMatrixResult cm = cost_matrix(mu.cloud, nu.cloud, frozen);
  SolveOptions opts;
  opts.tol = cfg.tol;
  opts.max_iter = cfg.max_iter;
  opts.threads = cfg.threads;
  const DualSolution sol = solve(mu.weights, nu.weights, std::move(cm.C), cfg.eps, opts);
  const std::vector<QgDirectionResult> dirs =
      qg_diagnostic(sol, cfg.qg_directions, cfg.qg_t_grid, mix_seed(cfg.seed, 0x96C4EC));

  nlohmann::json extra;
  extra["n_dense"] = cfg.n_dense;
  extra["eps"] = cfg.eps;
  extra["residual"] = sol.marginal_residual;
  nlohmann::json darr = nlohmann::json::array();
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    nlohmann::json d;
    d["direction_id"] = k;
    d["coeff"] = dirs[k].coeff;
    d["ratio_spread"] = dirs[k].ratio_spread;
    darr.push_back(d);
  }
  extra["directions"] = darr;
  emit_run_outputs(cfg, qg_csv(dirs), extra, nullptr);
  std::cout << "qg_check: " << dirs.size() << " directions, results in " << cfg.out_dir << "\n";
}

void run_experiment(const midscale::RunConfig& cfg) {
  using namespace midscale;
  cfg.validate();

  if (cfg.experiment == "qg_check") {
    run_qg_check(cfg);
    return;
  }

  std::vector<RateTable> tables;
  nlohmann::json extra;

  const bool oracle_kind = cfg.experiment == "value_rate" || cfg.experiment == "bias" ||
                           cfg.experiment == "map_error" || cfg.experiment == "density_error" ||
                           cfg.experiment == "potential_error";
  if (oracle_kind) {
    const OracleSolution o =
        population_oracle(cfg.x, cfg.y, cfg.oracle_m, cfg.eps, cfg.cost, cfg.seed, cfg.oracle_tol,
                          std::max<long>(cfg.max_iter, 500000), cfg.threads);
    extra["oracle_value"] = o.S_ref;
    extra["oracle_density_l2"] = o.density_l2;
    if (cfg.experiment == "value_rate")
      tables.push_back(value_rate_experiment(o, cfg.n_grid, cfg.reps, cfg.seed, cfg.tol, cfg.max_iter));
    else if (cfg.experiment == "bias")
      tables.push_back(bias_experiment(o, cfg.n_grid, cfg.reps, cfg.seed, cfg.tol, cfg.max_iter));
    else if (cfg.experiment == "map_error")
      tables.push_back(map_error_experiment(o, cfg.n_grid, cfg.reps, cfg.seed, cfg.tol, cfg.max_iter));
    else if (cfg.experiment == "potential_error")
      tables.push_back(potential_error_experiment(o, cfg.n_grid, cfg.reps, cfg.seed, cfg.tol, cfg.max_iter));
    else {
      DensityErrorResult de =
          density_error_experiment(o, cfg.n_grid, cfg.reps, cfg.seed, cfg.tol, cfg.max_iter);
      tables.push_back(std::move(de.l1));
      tables.push_back(std::move(de.l2));
    }
    if (cfg.oracle_doubling_check) {
      const double gap = oracle_doubling_gap(o, cfg.threads);
      extra["oracle_doubling_gap"] = gap;
      double min_mean = std::numeric_limits<double>::infinity();
      for (const RateTable& t : tables)
        for (double m : t.mean_errors()) min_mean = std::min(min_mean, std::abs(m));
      if (gap > min_mean)
        throw error(error::kind::precondition,
                    "oracle drift " + format_double(gap) + " exceeds smallest measured error " +
                        format_double(min_mean) + "; increase oracle_m");
    }
  } else if (cfg.experiment == "eps_scan") {
    EpsScanResult r = eps_scan_experiment(cfg.x, cfg.y, cfg.n_dense, cfg.eps_grid, cfg.seed,
                                          cfg.cost, cfg.tol, cfg.max_iter, cfg.threads);
    extra["lipschitz"] = r.lipschitz;
    tables.push_back(std::move(r.l2));
    tables.push_back(std::move(r.sup));
    tables.push_back(std::move(r.mass));
  } else if (cfg.experiment == "w1_schedule") {
    tables.push_back(w1_schedule_experiment(cfg.x, cfg.y, cfg.n_grid, cfg.reps, cfg.seed, cfg.cost,
                                            cfg.tol, cfg.max_iter));
  } else if (cfg.experiment == "w1_eps_ratio") {
    tables.push_back(w1_eps_ratio_experiment(cfg.x, cfg.y, cfg.n_fixed, cfg.eps_grid, cfg.reps,
                                             cfg.seed, cfg.cost, cfg.tol, cfg.max_iter));
  } else {
    throw error(error::kind::validation, "unknown experiment: " + cfg.experiment);
  }

  std::ostringstream csv;
  write_rate_csv(csv, tables);
  emit_run_outputs(cfg, csv.str(), extra, &tables);

  for (const RateTable& t : tables) {
    std::cout << t.experiment << ": ";
    if (t.slope_valid)
      std::cout << "slope " << format_double(t.slope) << " (se " << format_double(t.slope_se) << ")";
    else
      std::cout << "slope not fitted";
    std::cout << ", " << t.grid.size() << " grid points x " << cfg.reps << " reps\n";
  }
  std::cout << "results in " << cfg.out_dir << "\n";
}

int run_selftest_cmd(const midscale::SelftestOptions& opts) {
  const std::vector<midscale::CheckResult> results = midscale::run_selftest(opts);
  bool all = true;
  for (const midscale::CheckResult& r : results) {
    if (r.pass) {
      std::cout << "PASS " << r.name << "\n";
    } else {
      std::cout << "FAIL " << r.name << " (" << r.detail << ")\n";
      all = false;
    }
  }
  std::cout << (all ? "selftest: all checks passed\n" : "selftest: FAILURES\n");
  return all ? 0 : 1;
}

void run_covering(const std::string& cloud_path, std::vector<double> deltas,
                  const std::string& out_path) {
  using namespace midscale;
  if (deltas.empty()) throw error(error::kind::validation, "covering: no deltas given");
  for (double d : deltas)
    if (!(d > 0)) throw error(error::kind::validation, "covering: deltas must be positive");
  const PointCloud cloud = read_cloud_csv(cloud_path);
  const DiscreteMeasure m = empirical_measure(cloud);
  std::string s = "delta,greedy_count,inverse_mass_integral\n";
  for (double d : deltas) {
    const NetResult net = greedy_net(cloud, d);
    s += format_double(d) + "," + std::to_string(net.count) + "," +
         format_double(inverse_mass_integral(m, d)) + "\n";
  }
  if (out_path.empty())
    std::cout << s;
  else
    write_text_file(out_path, s);
}

void run_solve(const std::string& x_path, const std::string& y_path, double eps,
               const std::string& family, double tol, long max_iter, int threads,
               const std::string& out_path, const std::string& eval_path,
               const std::string& eval_out) {
  using namespace midscale;
  const PointCloud X = read_cloud_csv(x_path);
  const PointCloud Y = read_cloud_csv(y_path);
  const DiscreteMeasure mu = empirical_measure(X);
  const DiscreteMeasure nu = empirical_measure(Y);
  CostSpec spec;
  spec.family = cost_family_from_name(family);
  const CostSpec frozen = freeze_cost(spec, X, Y);
  CostMatrixResult cm = cost_matrix(X, Y, frozen);
  SolveOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  opts.threads = threads;
  const DualSolution sol = solve(mu.weights, nu.weights, std::move(cm.C), eps, opts);

  const std::string body = solution_to_json(sol).dump(2) + "\n";
  if (out_path.empty())
    std::cout << body;
  else
    write_text_file(out_path, body);

  if (!eval_path.empty()) {
    const PointCloud P = read_cloud_csv(eval_path);
    if (P.d() != X.d())
      throw error(error::kind::validation, "eval points have ambient dimension " +
                                               std::to_string(P.d()) + ", clouds have " +
                                               std::to_string(X.d()));
    const ExtendedPotentials ext(sol, X, Y, make_cost_model(frozen, X, Y));
    const Vec fhat = ext.extend_f_batch(P.points);
    const Vec ghat = ext.extend_g_batch(P.points);
    const Mat T = ext.entropic_map_batch(P.points);
    std::string s = "fhat,ghat";
    for (Eigen::Index j = 0; j < T.cols(); ++j) s += ",map_" + std::to_string(j + 1);
    s += "\n";
    for (Eigen::Index i = 0; i < P.n(); ++i) {
      s += format_double(fhat[i]) + "," + format_double(ghat[i]);
      for (Eigen::Index j = 0; j < T.cols(); ++j) s += "," + format_double(T(i, j));
      s += "\n";
    }
    write_text_file(eval_out, s);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"entropic optimal transport: solver, dual extensions, and scaling experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "midscale 0.1.0");

  // run ----------------------------------------------------------------
  auto* run = app.add_subcommand("run", "run an experiment described by a TOML config");
  std::string run_config;
  run->add_option("config", run_config, "path to the TOML config")->required();
  std::int64_t ov_seed = 0;
  int ov_threads = 0;
  std::string ov_out;
  double ov_tol = 0;
  CLI::Option* o_seed =
      run->add_option("--seed", ov_seed, "override the config seed")->envname("MIDSCALE_SEED");
  CLI::Option* o_threads = run->add_option("--threads", ov_threads, "override solver threads")
                               ->envname("MIDSCALE_THREADS");
  CLI::Option* o_out =
      run->add_option("--out", ov_out, "override the output directory")->envname("MIDSCALE_OUT");
  CLI::Option* o_tol = run->add_option("--tol", ov_tol, "override the replicate solver tolerance")
                           ->envname("MIDSCALE_TOL");

  // selftest -----------------------------------------------------------
  auto* st = app.add_subcommand("selftest", "run the internal invariant battery");
  midscale::SelftestOptions st_opts;
  st->add_option("--seed", st_opts.seed, "battery seed");
  st->add_option("--tol", st_opts.tol, "solver tolerance for battery instances");
  st->add_option("--instances", st_opts.instances, "number of solved instances");
  st->add_option("--trials", st_opts.trials, "random trials per property check");
  st->add_option("--pairs", st_opts.pairs, "point pairs for the smoothness certificate");
  st->add_option("--fd-points", st_opts.fd_points, "query points for finite-difference checks");
  st->add_option("--mass-pairs", st_opts.mass_pairs, "instances for the mass-integral bound");
  st->add_option("--perturb", st_opts.perturb,
                 "shift applied to solved potentials; nonzero values must make checks fail");

  // covering -----------------------------------------------------------
  auto* cov = app.add_subcommand("covering", "covering counts and mass integrals for a point cloud");
  std::string cov_cloud, cov_out;
  std::vector<double> cov_deltas;
  cov->add_option("--cloud", cov_cloud, "point cloud CSV, one row per point")->required();
  cov->add_option("--deltas", cov_deltas, "comma-separated radii")->required()->delimiter(',');
  cov->add_option("--out", cov_out, "output CSV path (stdout if omitted)");

  // qg-check -----------------------------------------------------------
  auto* qg = app.add_subcommand("qg-check", "quadratic growth diagnostic on a dense solve");
  std::string qg_config;
  qg->add_option("config", qg_config, "path to the TOML config (experiment must be qg_check)")
      ->required();
  std::int64_t qg_seed = 0;
  int qg_threads = 0;
  std::string qg_out;
  CLI::Option* q_seed =
      qg->add_option("--seed", qg_seed, "override the config seed")->envname("MIDSCALE_SEED");
  CLI::Option* q_threads = qg->add_option("--threads", qg_threads, "override solver threads")
                               ->envname("MIDSCALE_THREADS");
  CLI::Option* q_out =
      qg->add_option("--out", qg_out, "override the output directory")->envname("MIDSCALE_OUT");

  // solve --------------------------------------------------------------
  auto* sv = app.add_subcommand("solve", "solve one entropic OT problem on two point clouds");
  std::string sv_x, sv_y, sv_out, sv_eval, sv_eval_out, sv_family = "squared_euclidean";
  double sv_eps = 0.1, sv_tol = 1e-9;
  long sv_max_iter = 200000;
  int sv_threads = 1;
  sv->add_option("--x", sv_x, "source cloud CSV")->required();
  sv->add_option("--y", sv_y, "target cloud CSV")->required();
  sv->add_option("--eps", sv_eps, "regularization parameter");
  sv->add_option("--cost-family", sv_family, "squared_euclidean or euclidean");
  sv->add_option("--tol", sv_tol, "marginal residual tolerance");
  sv->add_option("--max-iter", sv_max_iter, "iteration budget");
  sv->add_option("--threads", sv_threads, "solver threads");
  sv->add_option("--out", sv_out, "write the solution JSON here (stdout if omitted)");
  CLI::Option* e_in = sv->add_option(
      "--eval", sv_eval,
      "evaluate the solved potentials at these points (CSV, one row per point); "
      "writes columns fhat,ghat,map_1..map_d in that order");
  CLI::Option* e_out = sv->add_option("--eval-out", sv_eval_out, "output CSV for --eval");
  e_in->needs(e_out);
  e_out->needs(e_in);

  try {
    app.parse(argc, argv);

    if (*run) {
      midscale::RunConfig cfg = midscale::config_from_toml_file(run_config);
      if (o_seed->count()) cfg.seed = static_cast<std::uint64_t>(ov_seed);
      if (o_threads->count()) cfg.threads = ov_threads;
      if (o_out->count()) cfg.out_dir = ov_out;
      if (o_tol->count()) cfg.tol = ov_tol;
      run_experiment(cfg);
      return 0;
    }
    if (*st) return run_selftest_cmd(st_opts);
    if (*cov) {
      run_covering(cov_cloud, cov_deltas, cov_out);
      return 0;
    }
    if (*qg) {
      midscale::RunConfig cfg = midscale::config_from_toml_file(qg_config);
      if (q_seed->count()) cfg.seed = static_cast<std::uint64_t>(qg_seed);
      if (q_threads->count()) cfg.threads = qg_threads;
      if (q_out->count()) cfg.out_dir = qg_out;
      if (cfg.experiment != "qg_check")
        throw midscale::error(midscale::error::kind::validation,
                              "qg-check needs a config with experiment = \"qg_check\"");
      cfg.validate();
      run_qg_check(cfg);
      return 0;
    }
    if (*sv) {
      run_solve(sv_x, sv_y, sv_eps, sv_family, sv_tol, sv_max_iter, sv_threads, sv_out, sv_eval,
                sv_eval_out);
      return 0;
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const midscale::error& e) {
    nlohmann::json j;
    j["error"] = kind_name(e.k);
    j["message"] = e.what();
    std::cerr << j.dump() << "\n";
    return midscale::exit_code_for(e.k);
  } catch (const std::exception& e) {
    nlohmann::json j;
    j["error"] = "internal";
    j["message"] = e.what();
    std::cerr << j.dump() << "\n";
    return 1;
  }
  return 0;
}
