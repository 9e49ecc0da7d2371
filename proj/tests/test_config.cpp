#include <catch2/catch_amalgamated.hpp>

#include "midscale/config.hpp"

using namespace midscale;

namespace {

std::string catch_message(const std::string& toml) {
  try {
    config_from_toml_text(toml);
  } catch (const error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("toml parser handles the supported value shapes") {
  const std::string text =
      "top = 3.5\n"
      "flag = true\r\n"
      "name = \"abc\"  # trailing comment\n"
      "empty_arr = []\n"
      "\n"
      "# full-line comment\n"
      "[sec]\n"
      "vals = [1, 2.5, 1e-3]\n";
  const auto kv = parse_toml(text);
  REQUIRE(kv.at("top").type == TomlValue::Type::number);
  REQUIRE(kv.at("top").num == 3.5);
  REQUIRE(kv.at("flag").type == TomlValue::Type::boolean);
  REQUIRE(kv.at("flag").flag);
  REQUIRE(kv.at("name").type == TomlValue::Type::string);
  REQUIRE(kv.at("name").str == "abc");
  REQUIRE(kv.at("empty_arr").arr.empty());
  REQUIRE(kv.at("sec.vals").arr == std::vector<double>{1.0, 2.5, 1e-3});
}

TEST_CASE("toml parser errors carry line numbers") {
  REQUIRE_THAT(catch_message("experiment = \"bias\"\nx = 1\nx = 2\n"),
               Catch::Matchers::ContainsSubstring("line 3") &&
                   Catch::Matchers::ContainsSubstring("duplicate"));
  REQUIRE_THAT(catch_message("a b = 1\n"), Catch::Matchers::ContainsSubstring("line 1"));
  REQUIRE_THAT(catch_message("k = \"open\n"),
               Catch::Matchers::ContainsSubstring("unterminated string"));
  REQUIRE_THAT(catch_message("k = [1, 2\n"),
               Catch::Matchers::ContainsSubstring("unterminated array"));
  REQUIRE_THAT(catch_message("k = 12x4\n"), Catch::Matchers::ContainsSubstring("bad number"));
  REQUIRE_THAT(catch_message("[bad name\n"), Catch::Matchers::ContainsSubstring("line 1"));
  REQUIRE_THAT(catch_message("novalue\n"),
               Catch::Matchers::ContainsSubstring("expected key = value"));
}

TEST_CASE("full config parses every recognized key") {
  const std::string text =
      "experiment = \"eps_scan\"\n"
      "seed = 42\n"
      "eps = 0.1\n"
      "eps_grid = [0.05, 0.1, 0.2]\n"
      "n_dense = 500\n"
      "reps = 3\n"
      "tol = 1e-8\n"
      "max_iter = 50000\n"
      "threads = 2\n"
      "out_dir = \"outx\"\n"
      "\n"
      "[cost]\n"
      "family = \"euclidean\"\n"
      "\n"
      "[x]\n"
      "kind = \"uniform_ball\"\n"
      "d = 4\n"
      "\n"
      "[y]\n"
      "kind = \"circle\"\n"
      "d = 4\n"
      "tilt_beta = 0.4\n"
      "tilt_axis = 1\n";
  const RunConfig c = config_from_toml_text(text);
  REQUIRE(c.experiment == "eps_scan");
  REQUIRE(c.seed == 42);
  REQUIRE(c.eps == 0.1);
  REQUIRE(c.eps_grid == std::vector<double>{0.05, 0.1, 0.2});
  REQUIRE(c.n_dense == 500);
  REQUIRE(c.reps == 3);
  REQUIRE(c.tol == 1e-8);
  REQUIRE(c.max_iter == 50000);
  REQUIRE(c.threads == 2);
  REQUIRE(c.out_dir == "outx");
  REQUIRE(c.cost.family == CostSpec::Family::euclidean);
  REQUIRE(c.x.kind == GeneratorSpec::Kind::uniform_ball);
  REQUIRE(c.x.d == 4);
  REQUIRE(c.y.kind == GeneratorSpec::Kind::circle);
  REQUIRE(c.y.tilt.has_value());
  REQUIRE(c.y.tilt->beta == 0.4);
  REQUIRE(c.y.tilt->axis == 1);
}

TEST_CASE("generator-specific and experiment-specific keys") {
  const std::string text =
      "experiment = \"qg_check\"\n"
      "n_dense = 60\n"
      "eps = 0.2\n"
      "\n"
      "[qg]\n"
      "directions = 5\n"
      "t_grid = [0.001, 0.002, 0.004]\n"
      "\n"
      "[x]\n"
      "kind = \"fattened\"\n"
      "d = 3\n"
      "base_kind = \"circle\"\n"
      "delta_fat = 0.05\n"
      "\n"
      "[y]\n"
      "kind = \"finite_support\"\n"
      "d = 3\n"
      "k = 7\n"
      "atom_seed = 99\n";
  const RunConfig c = config_from_toml_text(text);
  REQUIRE(c.qg_directions == 5);
  REQUIRE(c.qg_t_grid == std::vector<double>{0.001, 0.002, 0.004});
  REQUIRE(c.x.kind == GeneratorSpec::Kind::fattened);
  REQUIRE(c.x.base_kind == GeneratorSpec::Kind::circle);
  REQUIRE(c.x.delta_fat == 0.05);
  REQUIRE(c.y.kind == GeneratorSpec::Kind::finite_support);
  REQUIRE(c.y.k == 7);
  REQUIRE(c.y.atom_seed == 99);
}

TEST_CASE("oracle gate key must be boolean") {
  const std::string base =
      "experiment = \"value_rate\"\n"
      "n_grid = [50, 100]\n"
      "oracle_m = 600\n"
      "[x]\nkind = \"uniform_ball\"\nd = 2\n"
      "[y]\nkind = \"uniform_ball\"\nd = 2\n";
  const RunConfig off = config_from_toml_text(base);
  REQUIRE_FALSE(off.oracle_doubling_check);
  const RunConfig on = config_from_toml_text("oracle_doubling_check = true\n" + base);
  REQUIRE(on.oracle_doubling_check);
  REQUIRE_THROWS_AS(config_from_toml_text("oracle_doubling_check = 1\n" + base), error);
}

TEST_CASE("config round-trips through its own serialization") {
  const std::string text =
      "experiment = \"w1_schedule\"\n"
      "seed = 7\n"
      "reps = 20\n"
      "n_grid = [32, 64, 128, 256]\n"
      "[cost]\nfamily = \"euclidean\"\n"
      "[x]\nkind = \"uniform_ball\"\nd = 2\n"
      "[y]\nkind = \"uniform_ball\"\nd = 2\n";
  const RunConfig c = config_from_toml_text(text);
  const RunConfig back = config_from_toml_text(config_to_toml(c));
  REQUIRE(config_canonical(back) == config_canonical(c));
  REQUIRE(config_hash(back) == config_hash(c));

  // qg configs round-trip their own table too
  const std::string qg =
      "experiment = \"qg_check\"\nn_dense = 60\n"
      "[qg]\ndirections = 4\nt_grid = [0.001, 0.002]\n"
      "[x]\nkind = \"uniform_ball\"\nd = 2\n"
      "[y]\nkind = \"uniform_ball\"\nd = 2\n";
  const RunConfig q = config_from_toml_text(qg);
  REQUIRE(config_canonical(config_from_toml_text(config_to_toml(q))) == config_canonical(q));
}

TEST_CASE("config hash tracks semantics, not presentation") {
  const std::string text =
      "experiment = \"w1_eps_ratio\"\n"
      "seed = 7\n"
      "n = 64\n"
      "eps_grid = [0.05, 0.1]\n"
      "[cost]\nfamily = \"euclidean\"\n"
      "[x]\nkind = \"uniform_ball\"\nd = 2\n"
      "[y]\nkind = \"uniform_ball\"\nd = 2\n";
  RunConfig c = config_from_toml_text(text);
  const std::string h = config_hash(c);
  REQUIRE(h.size() == 16);

  RunConfig moved = c;
  moved.threads = 8;
  moved.out_dir = "elsewhere";
  REQUIRE(config_hash(moved) == h);

  RunConfig reseeded = c;
  reseeded.seed = 8;
  REQUIRE(config_hash(reseeded) != h);
  RunConfig regridded = c;
  regridded.eps_grid.push_back(0.2);
  REQUIRE(config_hash(regridded) != h);
}

TEST_CASE("per-experiment validation requirements") {
  auto base = [](const std::string& head) {
    return head + "[x]\nkind = \"uniform_ball\"\nd = 2\n[y]\nkind = \"uniform_ball\"\nd = 2\n";
  };
  REQUIRE_THROWS_AS(config_from_toml_text(base("experiment = \"value_rate\"\noracle_m = 100\n")),
                    error);  // missing n_grid
  REQUIRE_THROWS_AS(
      config_from_toml_text(base("experiment = \"value_rate\"\nn_grid = [10, 20]\n")),
      error);  // missing oracle_m
  REQUIRE_THROWS_AS(config_from_toml_text(base("experiment = \"eps_scan\"\nn_dense = 100\n")),
                    error);  // eps grid too short
  REQUIRE_THROWS_AS(
      config_from_toml_text(base("experiment = \"eps_scan\"\neps_grid = [0.1, 0.2, 0.4]\n")),
      error);  // missing n_dense
  REQUIRE_THROWS_AS(
      config_from_toml_text(base("experiment = \"w1_eps_ratio\"\neps_grid = [0.1, 0.2]\n")),
      error);  // missing n
  REQUIRE_THROWS_AS(config_from_toml_text(base("experiment = \"qg_check\"\nn_dense = 50\n")),
                    error);  // missing t_grid
  REQUIRE_THROWS_AS(config_from_toml_text(base("experiment = \"mystery\"\n")), error);
  REQUIRE_THROWS_AS(config_from_toml_text(base("")), error);  // missing experiment
  REQUIRE_THROWS_AS(
      config_from_toml_text(base("experiment = \"bias\"\nn_grid = [10]\noracle_m = 50\nreps = 0\n")),
      error);
  REQUIRE_THROWS_AS(config_from_toml_text(
                        base("experiment = \"bias\"\nn_grid = [10]\noracle_m = 50\neps = -1\n")),
                    error);
}

TEST_CASE("unknown names are rejected with context") {
  REQUIRE_THAT(catch_message("experiment = \"bias\"\nn_grid = [10]\noracle_m = 50\n"
                             "[x]\nkind = \"blob\"\nd = 2\n[y]\nkind = \"uniform_ball\"\nd = 2\n"),
               Catch::Matchers::ContainsSubstring("unknown generator kind 'blob'"));
  REQUIRE_THAT(catch_message("experiment = \"bias\"\nn_grid = [10]\noracle_m = 50\n"
                             "[cost]\nfamily = \"manhattan\"\n"
                             "[x]\nkind = \"uniform_ball\"\nd = 2\n[y]\nkind = \"uniform_ball\"\nd = 2\n"),
               Catch::Matchers::ContainsSubstring("unknown cost family 'manhattan'"));
}
