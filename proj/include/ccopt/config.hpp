#pragma once

#include <cstdint>
#include <cstdlib>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ccopt/graph.hpp"
#include "ccopt/serialize.hpp"

namespace ccopt {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Fully resolved run description: config file values with command-line
/// flags already applied on top.
struct RunConfig {
  // Problem source: exactly one of an instance file or generator parameters.
  std::optional<std::string> instance_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> n;
  std::optional<int> p;
  std::optional<double> kappa;

  // Topology: a named builder or an explicit weighted edge list.
  std::string topology;
  std::vector<Edge> topology_edges;

  std::string algo = "accelerated";
  std::optional<double> rho;  // defaults to 1/(||W|| N) at run time
  int horizon = 0;
  double step_c = 1.0;
  std::optional<double> inner_tol;
  std::string out_dir;
  int workers = 0;  // 0 resolves to the hardware thread count
  bool debug = false;
  std::optional<std::string> reference_path;
  std::vector<int> sweep_horizons;
};

inline const std::set<std::string>& known_algorithms() {
  static const std::set<std::string> algos = {"accelerated", "subgradient",
                                              "accelerated-literal-lambda"};
  return algos;
}

inline RunConfig parse_config(const Json& j) {
  static const std::set<std::string> known = {
      "seed",   "n",       "p",     "kappa",   "instance",  "topology",
      "algo",   "rho",     "N",     "step_c",  "inner_tol", "out",
      "workers", "debug",  "reference", "sweep_horizons"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key)) throw ConfigError("config: unknown key '" + key + "'");
  }

  RunConfig cfg;
  const auto integer = [&](const char* key) -> std::optional<int> {
    if (!j.contains(key)) return std::nullopt;
    if (!j.at(key).is_number_integer())
      throw ConfigError(std::string("config: '") + key + "' must be an integer");
    return j.at(key).get<int>();
  };
  if (j.contains("seed")) {
    const Json& v = j.at("seed");
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
      throw ConfigError("config: 'seed' must be a nonnegative integer");
    cfg.seed = v.get<std::uint64_t>();
  }
  cfg.n = integer("n");
  cfg.p = integer("p");
  if (j.contains("kappa")) {
    if (!j.at("kappa").is_number())
      throw ConfigError("config: 'kappa' must be a number");
    cfg.kappa = j.at("kappa").get<double>();
  }
  if (j.contains("instance")) cfg.instance_path = j.at("instance").get<std::string>();
  if (j.contains("topology")) {
    const Json& t = j.at("topology");
    if (t.is_string()) {
      cfg.topology = t.get<std::string>();
    } else if (t.is_array()) {
      for (const Json& e : t) {
        if (!e.is_array() || e.size() < 2 || e.size() > 3)
          throw ConfigError("config: topology edges must be [i, j] or [i, j, weight]");
        Edge edge;
        edge.i = e[0].get<int>();
        edge.j = e[1].get<int>();
        edge.weight = e.size() == 3 ? e[2].get<double>() : 1.0;
        cfg.topology_edges.push_back(edge);
      }
      if (cfg.topology_edges.empty())
        throw ConfigError("config: topology edge list must not be empty");
    } else {
      throw ConfigError("config: 'topology' must be a name or an edge list");
    }
  }
  if (j.contains("algo")) cfg.algo = j.at("algo").get<std::string>();
  if (j.contains("rho")) cfg.rho = j.at("rho").get<double>();
  if (j.contains("N")) {
    if (!j.at("N").is_number_integer()) throw ConfigError("config: 'N' must be an integer");
    cfg.horizon = j.at("N").get<int>();
  }
  if (j.contains("step_c")) cfg.step_c = j.at("step_c").get<double>();
  if (j.contains("inner_tol")) cfg.inner_tol = j.at("inner_tol").get<double>();
  if (j.contains("out")) cfg.out_dir = j.at("out").get<std::string>();
  if (j.contains("workers")) {
    if (!j.at("workers").is_number_integer())
      throw ConfigError("config: 'workers' must be an integer");
    cfg.workers = j.at("workers").get<int>();
  }
  if (j.contains("debug")) {
    if (!j.at("debug").is_boolean()) throw ConfigError("config: 'debug' must be a boolean");
    cfg.debug = j.at("debug").get<bool>();
  }
  if (j.contains("reference")) cfg.reference_path = j.at("reference").get<std::string>();
  if (j.contains("sweep_horizons")) {
    for (const Json& e : j.at("sweep_horizons")) {
      if (!e.is_number_integer())
        throw ConfigError("config: 'sweep_horizons' must hold integers");
      cfg.sweep_horizons.push_back(e.get<int>());
    }
  }
  return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
  return parse_config(load_json(path));
}

enum class ConfigScope {
  Run,        // needs topology, algorithm and horizon
  Reference,  // needs only a problem source and an output directory
};

/// Validates a fully merged config. Throws ConfigError naming the offending
/// key. Resolves the output directory from COUPLED_OPT_OUT when unset.
inline void finalize_config(RunConfig& cfg, ConfigScope scope = ConfigScope::Run) {
  const bool generator = cfg.seed || cfg.n || cfg.p || cfg.kappa;
  if (cfg.instance_path && generator)
    throw ConfigError("config: give either 'instance' or generator parameters "
                      "(seed/n/p/kappa), not both");
  if (!cfg.instance_path) {
    if (!cfg.seed) throw ConfigError("config: missing 'seed' (or an 'instance' file)");
    if (!cfg.n) throw ConfigError("config: missing 'n'");
    if (!cfg.p) throw ConfigError("config: missing 'p'");
    if (!cfg.kappa) throw ConfigError("config: missing 'kappa'");
    if (*cfg.n < 2) throw ConfigError("config: 'n' must be >= 2");
    if (*cfg.p < 1) throw ConfigError("config: 'p' must be >= 1");
    if (!(*cfg.kappa >= 1.0)) throw ConfigError("config: 'kappa' must be >= 1");
  }
  if (scope == ConfigScope::Run) {
    if (cfg.topology.empty() && cfg.topology_edges.empty())
      throw ConfigError("config: missing 'topology'");
    if (!cfg.topology.empty() && !cfg.topology_edges.empty())
      throw ConfigError("config: give a topology name or an edge list, not both");
    if (!cfg.topology.empty() && cfg.topology != "ring_plus" && cfg.topology != "path" &&
        cfg.topology != "complete")
      throw ConfigError("config: unknown topology '" + cfg.topology + "'");
    if (!known_algorithms().count(cfg.algo))
      throw ConfigError("config: unknown algo '" + cfg.algo + "'");
    if (cfg.horizon < 1) throw ConfigError("config: 'N' must be >= 1");
  }
  if (cfg.rho && !(*cfg.rho > 0.0)) throw ConfigError("config: 'rho' must be > 0");
  if (!(cfg.step_c > 0.0)) throw ConfigError("config: 'step_c' must be > 0");
  if (cfg.inner_tol && !(*cfg.inner_tol > 0.0))
    throw ConfigError("config: 'inner_tol' must be > 0");
  if (cfg.workers < 0) throw ConfigError("config: 'workers' must be >= 1");
  for (int h : cfg.sweep_horizons)
    if (h < 1) throw ConfigError("config: 'sweep_horizons' entries must be >= 1");
  if (cfg.out_dir.empty()) {
    if (const char* env = std::getenv("COUPLED_OPT_OUT"); env && *env) cfg.out_dir = env;
  }
  if (cfg.out_dir.empty())
    throw ConfigError("config: missing output directory ('out', --out, or COUPLED_OPT_OUT)");
}

inline Network build_network(const RunConfig& cfg, int n) {
  if (!cfg.topology_edges.empty()) return Network::from_edges(n, cfg.topology_edges);
  if (cfg.topology == "ring_plus") return build_ring_plus(n);
  if (cfg.topology == "path") return build_path(n);
  if (cfg.topology == "complete") return build_complete(n);
  throw ConfigError("config: unknown topology '" + cfg.topology + "'");
}

}  // namespace ccopt
