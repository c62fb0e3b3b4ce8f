#pragma once

// Run configuration: a line-oriented key-value tree ("a.b.c = v", '#'
// comments, vectors space-separated) and the typed RunConfig built from it.
// Cross-field validity is checked before any work starts.

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbcert/benchmarks.hpp"
#include "sbcert/geometry.hpp"

namespace sbcert::config {

struct KeyValueTree {
  // insertion-ordered keys; dotted names form the tree
  std::vector<std::pair<std::string, std::string>> entries;

  const std::string* find(const std::string& key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return &v;
    return nullptr;
  }

  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries)
      if (k == key) {
        v = value;
        return;
      }
    entries.push_back({key, value});
  }

  bool operator==(const KeyValueTree& other) const { return entries == other.entries; }
};

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline KeyValueTree parse_tree(std::istream& in, const std::string& origin = "<input>") {
  KeyValueTree t;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    auto eq = s.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                               ": expected 'key = value'");
    std::string key = trim(s.substr(0, eq));
    std::string val = trim(s.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty key");
    if (t.find(key))
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": duplicate key '" +
                               key + "'");
    t.entries.push_back({key, val});
  }
  return t;
}

inline KeyValueTree load_tree(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  return parse_tree(in, path);
}

inline std::string serialize_tree(const KeyValueTree& t) {
  std::ostringstream os;
  for (const auto& [k, v] : t.entries) os << k << " = " << v << "\n";
  return os.str();
}

struct RunConfig {
  std::string system;
  std::string network;  // pendulum-nndm weight file
  std::string declared_activation;
  geometry::Box safe_set, initial_set;
  std::vector<int> grid;
  int T = 10;
  double epsilon = 0.005;
  std::optional<double> beta;
  std::optional<long> samples_count;
  double M = 1.0;
  int bisection_depth = 10;
  long seed = 0;
  benchmarks::Params params;  // namespaced system parameters
  KeyValueTree raw;

  benchmarks::Benchmark make_benchmark() const {
    auto b = benchmarks::make(system, params, network);
    b.safe_set = safe_set;
    b.initial_set = initial_set;
    b.grid = grid;
    b.T = T;
    b.epsilon = epsilon;
    return b;
  }
};

namespace detail {

inline std::vector<double> parse_vector(const std::string& s, const std::string& key) {
  std::vector<double> out;
  std::istringstream is(s);
  double v;
  while (is >> v) out.push_back(v);
  if (out.empty() || !is.eof())
    throw std::runtime_error("config: key '" + key + "' is not a numeric vector");
  return out;
}

inline double parse_double(const KeyValueTree& t, const std::string& key) {
  const std::string* s = t.find(key);
  if (!s) throw std::runtime_error("config: missing key '" + key + "'");
  try {
    size_t pos = 0;
    double v = std::stod(*s, &pos);
    if (trim(s->substr(pos)).size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "' is not a number");
  }
}

inline double parse_double_or(const KeyValueTree& t, const std::string& key, double fb) {
  return t.find(key) ? parse_double(t, key) : fb;
}

}  // namespace detail

inline RunConfig make_run_config(const KeyValueTree& t, const std::string& base_dir = "") {
  RunConfig c;
  c.raw = t;
  const std::string* sys = t.find("system");
  if (!sys) throw std::runtime_error("config: missing key 'system'");
  c.system = *sys;
  if (!benchmarks::known(c.system))
    throw std::runtime_error("config: unknown system '" + c.system + "'");

  // benchmark defaults fill anything not stated
  benchmarks::Params params;
  for (const auto& [k, v] : t.entries) {
    auto dot = k.find('.');
    if (dot == std::string::npos) continue;
    std::string ns = k.substr(0, dot);
    std::string leaf = k.substr(dot + 1);
    if (ns != c.system) continue;
    if (leaf == "network") {
      bool absolute = !v.empty() && v[0] == '/';
      c.network = (absolute || base_dir.empty()) ? v : base_dir + "/" + v;
      continue;
    }
    if (leaf == "activation") {
      c.declared_activation = v;
      continue;
    }
    params[leaf] = detail::parse_double(t, k);
  }
  c.params = params;

  auto defaults = benchmarks::make(c.system, params,
                                   c.system == "pendulum-nndm" ? c.network : "");

  auto box_from_keys = [&](const std::string& lo_key, const std::string& hi_key,
                           const geometry::Box& fb) {
    const std::string* lo = t.find(lo_key);
    const std::string* hi = t.find(hi_key);
    if (!lo && !hi) return fb;
    if (!lo || !hi)
      throw std::runtime_error("config: " + lo_key + " and " + hi_key +
                               " must be given together");
    auto l = detail::parse_vector(*lo, lo_key);
    auto h = detail::parse_vector(*hi, hi_key);
    Eigen::VectorXd vl(l.size()), vh(h.size());
    std::copy(l.begin(), l.end(), vl.data());
    std::copy(h.begin(), h.end(), vh.data());
    return geometry::Box(vl, vh);
  };
  c.safe_set = box_from_keys("safe_lo", "safe_hi", defaults.safe_set);
  c.initial_set = box_from_keys("init_lo", "init_hi", defaults.initial_set);

  if (const std::string* g = t.find("grid")) {
    for (double v : detail::parse_vector(*g, "grid")) {
      if (v < 1 || v != static_cast<long>(v))
        throw std::runtime_error("config: grid entries must be positive integers");
      c.grid.push_back(static_cast<int>(v));
    }
  } else {
    c.grid = defaults.grid;
  }

  c.T = static_cast<int>(detail::parse_double_or(t, "T", defaults.T));
  c.epsilon = detail::parse_double_or(t, "epsilon", defaults.epsilon);
  c.M = detail::parse_double_or(t, "M", 1.0);
  c.bisection_depth =
      static_cast<int>(detail::parse_double_or(t, "bisection_depth", 10));
  c.seed = static_cast<long>(detail::parse_double_or(t, "seed", 0));
  if (t.find("beta")) c.beta = detail::parse_double(t, "beta");
  if (t.find("samples_count"))
    c.samples_count = static_cast<long>(detail::parse_double(t, "samples_count"));

  // cross-field validity, checked before any work
  if (c.T < 1) throw std::runtime_error("config check failed: T >= 1");
  if (!(c.epsilon > 0 && c.epsilon < 1))
    throw std::runtime_error("config check failed: epsilon in (0,1)");
  if (c.M < 1.0) throw std::runtime_error("config check failed: M >= 1");
  if (c.bisection_depth < 0)
    throw std::runtime_error("config check failed: bisection_depth >= 0");
  if (c.beta && !(*c.beta > 0 && *c.beta < 1))
    throw std::runtime_error("config check failed: beta in (0,1)");
  if (c.beta && c.samples_count)
    throw std::runtime_error("config check failed: beta and samples_count are exclusive");
  if (static_cast<int>(c.grid.size()) != c.safe_set.dim())
    throw std::runtime_error("config check failed: grid dimension matches safe set");
  if (c.initial_set.dim() != c.safe_set.dim())
    throw std::runtime_error("config check failed: initial set dimension matches safe set");
  if (!c.safe_set.contains_box(c.initial_set, 1e-12))
    throw std::runtime_error("config check failed: X0 within Xs");
  if (c.system == "pendulum-nndm") {
    if (c.declared_activation.empty())
      throw std::runtime_error(
          "config check failed: pendulum-nndm.activation must be declared");
    std::ifstream nf(c.network);
    std::string word, act;
    int layers = 0;
    if (!(nf >> word >> layers >> word >> act))
      throw std::runtime_error("config check failed: cannot read network header from " +
                               c.network);
    if (act != c.declared_activation)
      throw std::runtime_error("config check failed: declared activation '" +
                               c.declared_activation + "' does not match network file ('" +
                               act + "')");
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::string base;
  auto slash = path.find_last_of('/');
  if (slash != std::string::npos) base = path.substr(0, slash);
  return make_run_config(load_tree(path), base);
}

}  // namespace sbcert::config
