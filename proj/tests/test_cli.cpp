#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace {

namespace fs = std::filesystem;

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("midscale_cli_" + std::to_string(getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary);
  out << body;
}

struct CmdResult {
  int code = -1;
  std::string out, err;
};

CmdResult run_cli(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const fs::path out = scratch() / ("stdout" + std::to_string(counter) + ".txt");
  const fs::path err = scratch() / ("stderr" + std::to_string(counter) + ".txt");
  ++counter;
  std::string cmd = env.empty() ? std::string() : env + " ";
  cmd += std::string(MIDSCALE_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int rc = std::system(cmd.c_str());
  CmdResult r;
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

}  // namespace

TEST_CASE("help and version") {
  REQUIRE(run_cli("--help").code == 0);
  const CmdResult v = run_cli("--version");
  REQUIRE(v.code == 0);
  REQUIRE_THAT(v.out, Catch::Matchers::ContainsSubstring("midscale"));
  REQUIRE(run_cli("").code == 2);
  REQUIRE(run_cli("frobnicate").code == 2);
}

TEST_CASE("solve emits the solution contract") {
  const fs::path x = scratch() / "x.csv";
  const fs::path y = scratch() / "y.csv";
  spit(x, "0\n1\n");
  spit(y, "0\n1\n");
  const fs::path sol_path = scratch() / "sol.json";
  const CmdResult r = run_cli("solve --x " + x.string() + " --y " + y.string() +
                              " --eps 1 --out " + sol_path.string());
  REQUIRE(r.code == 0);
  const nlohmann::json j = nlohmann::json::parse(slurp(sol_path));
  REQUIRE(j.size() == 5);
  for (const char* key : {"eps", "f", "g", "residual", "iterations"}) REQUIRE(j.contains(key));
  REQUIRE(j["eps"].get<double>() == 1.0);
  const double phi = std::log(2.0) - std::log(1.0 + std::exp(-1.0));
  REQUIRE(j["f"][0].get<double>() == Catch::Approx(phi).margin(1e-9));
  REQUIRE(j["f"][1].get<double>() == Catch::Approx(phi).margin(1e-9));
  REQUIRE(j["g"][0].get<double>() == Catch::Approx(0.0).margin(1e-9));
  REQUIRE(j["residual"].get<double>() <= 1e-9);
}

TEST_CASE("solve evaluates potentials and map at query points") {
  const fs::path x = scratch() / "ex.csv";
  const fs::path y = scratch() / "ey.csv";
  const fs::path q = scratch() / "eq.csv";
  spit(x, "0\n1\n");
  spit(y, "0\n1\n");
  spit(q, "0\n1\n");
  const fs::path eval_out = scratch() / "eval.csv";
  const CmdResult r = run_cli("solve --x " + x.string() + " --y " + y.string() +
                              " --eps 1 --eval " + q.string() + " --eval-out " +
                              eval_out.string() + " --out " + (scratch() / "s2.json").string());
  REQUIRE(r.code == 0);
  const std::string csv = slurp(eval_out);
  REQUIRE_THAT(csv, Catch::Matchers::StartsWith("fhat,ghat,map_1\n"));
  std::istringstream lines(csv);
  std::string header, row0;
  std::getline(lines, header);
  std::getline(lines, row0);
  double fhat, ghat, map1;
  char c1, c2;
  std::istringstream(row0) >> fhat >> c1 >> ghat >> c2 >> map1;
  const double phi = std::log(2.0) - std::log(1.0 + std::exp(-1.0));
  REQUIRE(fhat == Catch::Approx(phi).margin(1e-8));
  REQUIRE(ghat == Catch::Approx(0.0).margin(1e-8));
  REQUIRE(map1 == Catch::Approx(1.0 / (1.0 + std::exp(1.0))).margin(1e-8));

  // --eval without --eval-out is a usage error
  REQUIRE(run_cli("solve --x " + x.string() + " --y " + y.string() + " --eval " + q.string())
              .code == 2);
}

TEST_CASE("solve reports budget exhaustion as a solver error") {
  const fs::path x = scratch() / "bx.csv";
  const fs::path y = scratch() / "by.csv";
  std::string xs, ys;
  for (int i = 0; i < 20; ++i) {
    xs += std::to_string(0.05 * i) + "\n";
    ys += std::to_string(0.05 * i + 0.02) + "\n";
  }
  spit(x, xs);
  spit(y, ys);
  const CmdResult r = run_cli("solve --x " + x.string() + " --y " + y.string() +
                              " --eps 0.02 --max-iter 1 --out " + (scratch() / "b.json").string());
  REQUIRE(r.code == 3);
  const nlohmann::json j = nlohmann::json::parse(r.err);
  REQUIRE(j["error"] == "solver");
}

TEST_CASE("covering prints an exact table") {
  const fs::path cloud = scratch() / "cov.csv";
  spit(cloud, "0\n0.3\n0.6\n0.9\n");
  const CmdResult r = run_cli("covering --cloud " + cloud.string() + " --deltas 0.35");
  REQUIRE(r.code == 0);
  // Hand-traced: greedy picks 0 then 0.9; masses are (0.5, 0.75, 0.75, 0.5)
  // so the integral is 5/3 up to summation order (one ulp here).
  const std::string prefix = "delta,greedy_count,inverse_mass_integral\n0.35,2,";
  REQUIRE(r.out.substr(0, prefix.size()) == prefix);
  const double imi = std::stod(r.out.substr(prefix.size()));
  REQUIRE(imi == Catch::Approx(5.0 / 3.0).epsilon(1e-14));
  REQUIRE(run_cli("covering --cloud " + cloud.string() + " --deltas 0").code == 2);
}

TEST_CASE("config errors carry exit codes and json diagnostics") {
  const fs::path bad = scratch() / "bad.toml";
  spit(bad,
       "experiment = \"nope\"\n[x]\nkind = \"uniform_ball\"\nd = 2\n"
       "[y]\nkind = \"uniform_ball\"\nd = 2\n");
  const CmdResult r = run_cli("run " + bad.string());
  REQUIRE(r.code == 2);
  const nlohmann::json j = nlohmann::json::parse(r.err);
  REQUIRE(j["error"] == "validation");
  REQUIRE_THAT(j["message"].get<std::string>(),
               Catch::Matchers::ContainsSubstring("unknown experiment"));

  const CmdResult missing = run_cli("run " + (scratch() / "absent.toml").string());
  REQUIRE(missing.code == 5);
  REQUIRE(nlohmann::json::parse(missing.err)["error"] == "io");
}

TEST_CASE("runs are reproducible byte for byte") {
  const fs::path cfg = scratch() / "ratio.toml";
  spit(cfg,
       "experiment = \"w1_eps_ratio\"\n"
       "seed = 3\n"
       "n = 32\n"
       "reps = 2\n"
       "eps_grid = [0.1, 0.2]\n"
       "[cost]\nfamily = \"euclidean\"\n"
       "[x]\nkind = \"uniform_ball\"\nd = 2\n"
       "[y]\nkind = \"uniform_ball\"\nd = 2\n");
  const fs::path a = scratch() / "run_a";
  const fs::path b = scratch() / "run_b";
  REQUIRE(run_cli("run " + cfg.string() + " --out " + a.string()).code == 0);
  REQUIRE(run_cli("run " + cfg.string() + " --out " + b.string()).code == 0);
  const std::string csv_a = slurp(a / "results.csv");
  REQUIRE_FALSE(csv_a.empty());
  REQUIRE(csv_a == slurp(b / "results.csv"));

  const nlohmann::json side = nlohmann::json::parse(slurp(a / "sidecar.json"));
  REQUIRE(side["experiment"] == "w1_eps_ratio");
  REQUIRE(side["seed"].get<std::uint64_t>() == 3);
  REQUIRE(side.contains("config_hash"));
  REQUIRE(side.contains("timestamp"));
  REQUIRE(side["tables"].is_array());

  // a seed override (via the environment) must change the recorded numbers
  const fs::path c = scratch() / "run_c";
  REQUIRE(run_cli("run " + cfg.string() + " --out " + c.string(), "MIDSCALE_SEED=7").code == 0);
  REQUIRE(slurp(c / "results.csv") != csv_a);
  const nlohmann::json side_c = nlohmann::json::parse(slurp(c / "sidecar.json"));
  REQUIRE(side_c["seed"].get<std::uint64_t>() == 7);
}

TEST_CASE("quadratic growth subcommand") {
  const fs::path cfg = scratch() / "qg.toml";
  spit(cfg,
       "experiment = \"qg_check\"\n"
       "seed = 5\n"
       "n_dense = 30\n"
       "eps = 0.2\n"
       "[qg]\ndirections = 3\nt_grid = [0.001, 0.002]\n"
       "[x]\nkind = \"uniform_ball\"\nd = 2\n"
       "[y]\nkind = \"uniform_ball\"\nd = 2\n");
  const fs::path out = scratch() / "run_qg";
  const CmdResult r = run_cli("qg-check " + cfg.string() + " --out " + out.string());
  REQUIRE(r.code == 0);
  REQUIRE_THAT(slurp(out / "results.csv"),
               Catch::Matchers::StartsWith("direction_id,t,deficit,fitted_coeff\n"));
  const nlohmann::json side = nlohmann::json::parse(slurp(out / "sidecar.json"));
  REQUIRE(side["directions"].size() == 3);

  // the dedicated subcommand refuses configs for other experiments
  const fs::path other = scratch() / "other.toml";
  spit(other,
       "experiment = \"w1_eps_ratio\"\nn = 32\neps_grid = [0.1, 0.2]\n"
       "[cost]\nfamily = \"euclidean\"\n"
       "[x]\nkind = \"uniform_ball\"\nd = 2\n[y]\nkind = \"uniform_ball\"\nd = 2\n");
  REQUIRE(run_cli("qg-check " + other.string()).code == 2);
}

TEST_CASE("selftest battery passes and the negative control fails") {
  const std::string small =
      " --instances 10 --trials 20 --pairs 500 --fd-points 10 --mass-pairs 20";
  const CmdResult ok = run_cli("selftest" + small);
  REQUIRE(ok.code == 0);
  REQUIRE_THAT(ok.out, Catch::Matchers::ContainsSubstring("all checks passed"));
  REQUIRE_THAT(ok.out, !Catch::Matchers::ContainsSubstring("FAIL"));

  const CmdResult bad = run_cli("selftest" + small + " --perturb 0.1");
  REQUIRE(bad.code == 1);
  REQUIRE_THAT(bad.out, Catch::Matchers::ContainsSubstring("FAIL"));
}
