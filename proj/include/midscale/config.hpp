#pragma once

#include "midscale/measures.hpp"

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace midscale {

/// Minimal TOML-shaped config reader: [tables], key = value with string,
/// number, boolean, or flat numeric array values, and # comments. Keys are
/// flattened to "table.key".
struct TomlValue {
  enum class Type { string, number, boolean, array };
  Type type = Type::number;
  std::string str;
  double num = 0;
  bool flag = false;
  std::vector<double> arr;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  return true;
}

inline double parse_number(const std::string& s, int line_no) {
  const std::string t = trim(s);
  if (t.empty()) throw error(error::kind::validation, "config line " + std::to_string(line_no) + ": empty number");
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size())
    throw error(error::kind::validation,
                "config line " + std::to_string(line_no) + ": bad number '" + t + "'");
  return v;
}

inline TomlValue parse_value(const std::string& raw, int line_no) {
  const std::string v = trim(raw);
  TomlValue out;
  if (v.empty())
    throw error(error::kind::validation, "config line " + std::to_string(line_no) + ": missing value");
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"')
      throw error(error::kind::validation,
                  "config line " + std::to_string(line_no) + ": unterminated string");
    const std::string body = v.substr(1, v.size() - 2);
    if (body.find('"') != std::string::npos)
      throw error(error::kind::validation,
                  "config line " + std::to_string(line_no) + ": embedded quotes unsupported");
    out.type = TomlValue::Type::string;
    out.str = body;
    return out;
  }
  if (v == "true" || v == "false") {
    out.type = TomlValue::Type::boolean;
    out.flag = (v == "true");
    return out;
  }
  if (v.front() == '[') {
    if (v.back() != ']')
      throw error(error::kind::validation,
                  "config line " + std::to_string(line_no) + ": unterminated array");
    out.type = TomlValue::Type::array;
    const std::string body = trim(v.substr(1, v.size() - 2));
    if (!body.empty()) {
      std::size_t pos = 0;
      while (pos <= body.size()) {
        const std::size_t comma = body.find(',', pos);
        const std::string item = body.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        out.arr.push_back(parse_number(item, line_no));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    }
    return out;
  }
  out.type = TomlValue::Type::number;
  out.num = parse_number(v, line_no);
  return out;
}

}  // namespace detail

inline std::map<std::string, TomlValue> parse_toml(const std::string& text) {
  std::map<std::string, TomlValue> out;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // strip comments; quotes in this dialect never contain '#'
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw error(error::kind::validation,
                    "config line " + std::to_string(line_no) + ": unterminated table header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (!detail::valid_key(section))
        throw error(error::kind::validation,
                    "config line " + std::to_string(line_no) + ": bad table name");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw error(error::kind::validation,
                  "config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    if (!detail::valid_key(key))
      throw error(error::kind::validation,
                  "config line " + std::to_string(line_no) + ": bad key '" + key + "'");
    const std::string full = section.empty() ? key : section + "." + key;
    if (out.count(full))
      throw error(error::kind::validation,
                  "config line " + std::to_string(line_no) + ": duplicate key '" + full + "'");
    out[full] = detail::parse_value(line.substr(eq + 1), line_no);
  }
  return out;
}

inline std::string generator_kind_name(GeneratorSpec::Kind k) {
  switch (k) {
    case GeneratorSpec::Kind::uniform_ball: return "uniform_ball";
    case GeneratorSpec::Kind::hyperplane: return "hyperplane";
    case GeneratorSpec::Kind::circle: return "circle";
    case GeneratorSpec::Kind::sphere: return "sphere";
    case GeneratorSpec::Kind::torus: return "torus";
    case GeneratorSpec::Kind::fattened: return "fattened";
    case GeneratorSpec::Kind::finite_support: return "finite_support";
  }
  return "uniform_ball";
}

inline GeneratorSpec::Kind generator_kind_from_name(const std::string& s) {
  if (s == "uniform_ball") return GeneratorSpec::Kind::uniform_ball;
  if (s == "hyperplane") return GeneratorSpec::Kind::hyperplane;
  if (s == "circle") return GeneratorSpec::Kind::circle;
  if (s == "sphere") return GeneratorSpec::Kind::sphere;
  if (s == "torus") return GeneratorSpec::Kind::torus;
  if (s == "fattened") return GeneratorSpec::Kind::fattened;
  if (s == "finite_support") return GeneratorSpec::Kind::finite_support;
  throw error(error::kind::validation, "unknown generator kind '" + s + "'");
}

inline std::string cost_family_name(CostSpec::Family f) {
  switch (f) {
    case CostSpec::Family::squared_euclidean: return "squared_euclidean";
    case CostSpec::Family::euclidean: return "euclidean";
    case CostSpec::Family::custom: return "custom";
  }
  return "squared_euclidean";
}

inline CostSpec::Family cost_family_from_name(const std::string& s) {
  if (s == "squared_euclidean") return CostSpec::Family::squared_euclidean;
  if (s == "euclidean") return CostSpec::Family::euclidean;
  throw error(error::kind::validation, "unknown cost family '" + s + "'");
}

/// Everything one experiment run needs, in one file. Round-trips through
/// to_toml()/from_toml_text(), and the canonical form below feeds the hash
/// recorded in every output.
struct RunConfig {
  std::string experiment;
  GeneratorSpec x, y;
  CostSpec cost;
  double eps = 0.1;
  std::vector<double> eps_grid;
  std::vector<Eigen::Index> n_grid;
  Eigen::Index n_dense = 0;  // eps_scan dense sample size
  Eigen::Index n_fixed = 0;  // w1_eps_ratio fixed n
  int reps = 30;
  Eigen::Index oracle_m = 0;
  double oracle_tol = 1e-10;
  bool oracle_doubling_check = false;  // re-solve at m/2, gate on the drift
  double tol = 1e-9;
  long max_iter = 200000;
  int threads = 1;
  std::uint64_t seed = 1;
  std::string out_dir = "results";
  // qg-check knobs
  int qg_directions = 20;
  std::vector<double> qg_t_grid;

  void validate() const {
    static const char* kinds[] = {"value_rate",       "bias",       "map_error",
                                  "density_error",    "potential_error", "eps_scan",
                                  "w1_schedule",      "w1_eps_ratio",    "qg_check"};
    bool known = false;
    for (const char* k : kinds) known = known || (experiment == k);
    if (!known) throw error(error::kind::validation, "unknown experiment '" + experiment + "'");
    x.validate();
    y.validate();
    if (cost.family == CostSpec::Family::custom)
      throw error(error::kind::validation, "custom cost family is not configurable");
    if (!(eps > 0)) throw error(error::kind::validation, "eps must be positive");
    for (double e : eps_grid)
      if (!(e > 0)) throw error(error::kind::validation, "eps grid values must be positive");
    if (!(tol > 0) || !(oracle_tol > 0))
      throw error(error::kind::validation, "tolerances must be positive");
    if (max_iter < 1) throw error(error::kind::validation, "max_iter must be positive");
    if (reps < 1) throw error(error::kind::validation, "reps must be >= 1");
    if (threads < 1) throw error(error::kind::validation, "threads must be >= 1");
    const bool needs_ngrid = experiment == "value_rate" || experiment == "bias" ||
                             experiment == "map_error" || experiment == "density_error" ||
                             experiment == "potential_error" || experiment == "w1_schedule";
    if (needs_ngrid && n_grid.empty())
      throw error(error::kind::validation, experiment + " requires n_grid");
    const bool needs_oracle = experiment == "value_rate" || experiment == "bias" ||
                              experiment == "map_error" || experiment == "density_error" ||
                              experiment == "potential_error";
    if (needs_oracle && oracle_m < 2)
      throw error(error::kind::validation, experiment + " requires oracle_m >= 2");
    if (experiment == "eps_scan") {
      if (n_dense < 2) throw error(error::kind::validation, "eps_scan requires n_dense >= 2");
      if (eps_grid.size() < 3)
        throw error(error::kind::validation, "eps_scan requires an eps_grid with >= 3 values");
    }
    if (experiment == "w1_eps_ratio") {
      if (n_fixed < 2) throw error(error::kind::validation, "w1_eps_ratio requires n >= 2");
      if (eps_grid.size() < 2)
        throw error(error::kind::validation, "w1_eps_ratio requires an eps_grid");
    }
    if (experiment == "qg_check") {
      if (n_dense < 2) throw error(error::kind::validation, "qg_check requires n_dense >= 2");
      if (qg_directions < 1)
        throw error(error::kind::validation, "qg_check requires directions >= 1");
      if (qg_t_grid.empty())
        throw error(error::kind::validation, "qg_check requires a t_grid");
      for (double t : qg_t_grid)
        if (!(t > 0)) throw error(error::kind::validation, "t_grid values must be positive");
    }
  }
};

namespace detail {

inline void read_generator(const std::map<std::string, TomlValue>& kv, const std::string& prefix,
                           GeneratorSpec& spec) {
  auto get = [&](const std::string& key) -> const TomlValue* {
    const auto it = kv.find(prefix + "." + key);
    return it == kv.end() ? nullptr : &it->second;
  };
  auto need_num = [&](const TomlValue* v, const std::string& key) {
    if (v->type != TomlValue::Type::number)
      throw error(error::kind::validation, prefix + "." + key + " must be a number");
    return v->num;
  };
  if (const TomlValue* v = get("kind")) {
    if (v->type != TomlValue::Type::string)
      throw error(error::kind::validation, prefix + ".kind must be a string");
    spec.kind = generator_kind_from_name(v->str);
  }
  if (const TomlValue* v = get("d")) spec.d = static_cast<int>(need_num(v, "d"));
  if (const TomlValue* v = get("k")) spec.k = static_cast<int>(need_num(v, "k"));
  if (const TomlValue* v = get("base_kind")) {
    if (v->type != TomlValue::Type::string)
      throw error(error::kind::validation, prefix + ".base_kind must be a string");
    spec.base_kind = generator_kind_from_name(v->str);
  }
  if (const TomlValue* v = get("base_k")) spec.base_k = static_cast<int>(need_num(v, "base_k"));
  if (const TomlValue* v = get("delta_fat")) spec.delta_fat = need_num(v, "delta_fat");
  if (const TomlValue* v = get("atom_seed"))
    spec.atom_seed = static_cast<std::uint64_t>(need_num(v, "atom_seed"));
  const TomlValue* beta = get("tilt_beta");
  if (beta) {
    TiltSpec t;
    t.beta = need_num(beta, "tilt_beta");
    if (const TomlValue* ax = get("tilt_axis")) t.axis = static_cast<int>(need_num(ax, "tilt_axis"));
    spec.tilt = t;
  }
}

inline std::string generator_toml(const GeneratorSpec& s, const std::string& name) {
  std::string out = "[" + name + "]\n";
  out += "kind = \"" + generator_kind_name(s.kind) + "\"\n";
  out += "d = " + std::to_string(s.d) + "\n";
  out += "k = " + std::to_string(s.k) + "\n";
  if (s.kind == GeneratorSpec::Kind::fattened) {
    out += "base_kind = \"" + generator_kind_name(s.base_kind) + "\"\n";
    out += "base_k = " + std::to_string(s.base_k) + "\n";
    out += "delta_fat = " + format_double(s.delta_fat) + "\n";
  }
  if (s.kind == GeneratorSpec::Kind::finite_support)
    out += "atom_seed = " + std::to_string(s.atom_seed) + "\n";
  if (s.tilt) {
    out += "tilt_beta = " + format_double(s.tilt->beta) + "\n";
    out += "tilt_axis = " + std::to_string(s.tilt->axis) + "\n";
  }
  return out;
}

inline std::string array_text(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_double(v[i]);
  }
  return out + "]";
}

}  // namespace detail

inline RunConfig config_from_toml_text(const std::string& text) {
  const std::map<std::string, TomlValue> kv = parse_toml(text);
  RunConfig c;
  auto get = [&](const std::string& key) -> const TomlValue* {
    const auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  auto need_num = [&](const TomlValue* v, const std::string& key) {
    if (v->type != TomlValue::Type::number)
      throw error(error::kind::validation, key + " must be a number");
    return v->num;
  };
  auto need_str = [&](const TomlValue* v, const std::string& key) -> const std::string& {
    if (v->type != TomlValue::Type::string)
      throw error(error::kind::validation, key + " must be a string");
    return v->str;
  };
  auto need_arr = [&](const TomlValue* v, const std::string& key) -> const std::vector<double>& {
    if (v->type != TomlValue::Type::array)
      throw error(error::kind::validation, key + " must be an array");
    return v->arr;
  };
  const TomlValue* ex = get("experiment");
  if (!ex) throw error(error::kind::validation, "config missing 'experiment'");
  c.experiment = need_str(ex, "experiment");
  if (const TomlValue* v = get("eps")) c.eps = need_num(v, "eps");
  if (const TomlValue* v = get("eps_grid")) c.eps_grid = need_arr(v, "eps_grid");
  if (const TomlValue* v = get("n_grid")) {
    for (double n : need_arr(v, "n_grid")) c.n_grid.push_back(static_cast<Eigen::Index>(n));
  }
  if (const TomlValue* v = get("n_dense")) c.n_dense = static_cast<Eigen::Index>(need_num(v, "n_dense"));
  if (const TomlValue* v = get("n")) c.n_fixed = static_cast<Eigen::Index>(need_num(v, "n"));
  if (const TomlValue* v = get("reps")) c.reps = static_cast<int>(need_num(v, "reps"));
  if (const TomlValue* v = get("oracle_m")) c.oracle_m = static_cast<Eigen::Index>(need_num(v, "oracle_m"));
  if (const TomlValue* v = get("oracle_tol")) c.oracle_tol = need_num(v, "oracle_tol");
  if (const TomlValue* v = get("oracle_doubling_check")) {
    if (v->type != TomlValue::Type::boolean)
      throw error(error::kind::validation, "oracle_doubling_check must be a boolean");
    c.oracle_doubling_check = v->flag;
  }
  if (const TomlValue* v = get("tol")) c.tol = need_num(v, "tol");
  if (const TomlValue* v = get("max_iter")) c.max_iter = static_cast<long>(need_num(v, "max_iter"));
  if (const TomlValue* v = get("threads")) c.threads = static_cast<int>(need_num(v, "threads"));
  if (const TomlValue* v = get("seed")) c.seed = static_cast<std::uint64_t>(need_num(v, "seed"));
  if (const TomlValue* v = get("out_dir")) c.out_dir = need_str(v, "out_dir");
  if (const TomlValue* v = get("qg.directions"))
    c.qg_directions = static_cast<int>(need_num(v, "qg.directions"));
  if (const TomlValue* v = get("qg.t_grid")) c.qg_t_grid = need_arr(v, "qg.t_grid");
  if (const TomlValue* v = get("cost.family")) c.cost.family = cost_family_from_name(need_str(v, "cost.family"));
  detail::read_generator(kv, "x", c.x);
  detail::read_generator(kv, "y", c.y);
  c.validate();
  return c;
}

inline RunConfig config_from_toml_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error(error::kind::io, "cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_toml_text(ss.str());
}

/// Canonical flat form: every field, fixed order, one key=value per line.
/// This is what gets hashed, so defaults participate and key order never
/// depends on the input file.
inline std::string config_canonical(const RunConfig& c) {
  std::string s;
  auto kv = [&](const std::string& k, const std::string& v) { s += k + "=" + v + "\n"; };
  kv("experiment", c.experiment);
  kv("eps", format_double(c.eps));
  {
    std::string grid = "[";
    for (std::size_t i = 0; i < c.eps_grid.size(); ++i)
      grid += (i ? "," : "") + format_double(c.eps_grid[i]);
    kv("eps_grid", grid + "]");
  }
  {
    std::string grid = "[";
    for (std::size_t i = 0; i < c.n_grid.size(); ++i)
      grid += (i ? "," : "") + std::to_string(c.n_grid[i]);
    kv("n_grid", grid + "]");
  }
  kv("n_dense", std::to_string(c.n_dense));
  kv("n", std::to_string(c.n_fixed));
  kv("reps", std::to_string(c.reps));
  kv("oracle_m", std::to_string(c.oracle_m));
  kv("oracle_tol", format_double(c.oracle_tol));
  kv("oracle_doubling_check", c.oracle_doubling_check ? "true" : "false");
  kv("tol", format_double(c.tol));
  kv("max_iter", std::to_string(c.max_iter));
  kv("seed", std::to_string(c.seed));
  kv("cost.family", cost_family_name(c.cost.family));
  kv("qg.directions", std::to_string(c.qg_directions));
  {
    std::string grid = "[";
    for (std::size_t i = 0; i < c.qg_t_grid.size(); ++i)
      grid += (i ? "," : "") + format_double(c.qg_t_grid[i]);
    kv("qg.t_grid", grid + "]");
  }
  auto gen = [&](const GeneratorSpec& g, const std::string& p) {
    kv(p + ".kind", generator_kind_name(g.kind));
    kv(p + ".d", std::to_string(g.d));
    kv(p + ".k", std::to_string(g.k));
    kv(p + ".base_kind", generator_kind_name(g.base_kind));
    kv(p + ".base_k", std::to_string(g.base_k));
    kv(p + ".delta_fat", format_double(g.delta_fat));
    kv(p + ".atom_seed", std::to_string(g.atom_seed));
    kv(p + ".tilt_beta", format_double(g.tilt ? g.tilt->beta : 0.0));
    kv(p + ".tilt_axis", std::to_string(g.tilt ? g.tilt->axis : 0));
  };
  gen(c.x, "x");
  gen(c.y, "y");
  // threads and out_dir affect where and how fast, never what; they stay out
  // of the hash so overriding them on the command line reproduces bytes.
  return s;
}

inline std::string config_hash(const RunConfig& c) {
  const std::uint64_t h = fnv1a64(config_canonical(c));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline std::string config_to_toml(const RunConfig& c) {
  std::string s;
  s += "experiment = \"" + c.experiment + "\"\n";
  s += "seed = " + std::to_string(c.seed) + "\n";
  s += "eps = " + format_double(c.eps) + "\n";
  if (!c.eps_grid.empty()) s += "eps_grid = " + detail::array_text(c.eps_grid) + "\n";
  if (!c.n_grid.empty()) {
    std::vector<double> g;
    for (Eigen::Index n : c.n_grid) g.push_back(static_cast<double>(n));
    s += "n_grid = " + detail::array_text(g) + "\n";
  }
  if (c.n_dense > 0) s += "n_dense = " + std::to_string(c.n_dense) + "\n";
  if (c.n_fixed > 0) s += "n = " + std::to_string(c.n_fixed) + "\n";
  s += "reps = " + std::to_string(c.reps) + "\n";
  if (c.oracle_m > 0) s += "oracle_m = " + std::to_string(c.oracle_m) + "\n";
  s += "oracle_tol = " + format_double(c.oracle_tol) + "\n";
  if (c.oracle_doubling_check) s += "oracle_doubling_check = true\n";
  s += "tol = " + format_double(c.tol) + "\n";
  s += "max_iter = " + std::to_string(c.max_iter) + "\n";
  s += "threads = " + std::to_string(c.threads) + "\n";
  s += "out_dir = \"" + c.out_dir + "\"\n";
  s += "\n[cost]\nfamily = \"" + cost_family_name(c.cost.family) + "\"\n";
  if (c.experiment == "qg_check") {
    s += "\n[qg]\ndirections = " + std::to_string(c.qg_directions) + "\n";
    s += "t_grid = " + detail::array_text(c.qg_t_grid) + "\n";
  }
  s += "\n" + detail::generator_toml(c.x, "x");
  s += "\n" + detail::generator_toml(c.y, "y");
  return s;
}

}  // namespace midscale
