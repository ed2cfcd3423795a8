#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ccopt/config.hpp"
#include "ccopt/runner.hpp"
#include "ccopt/version.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> n;
  std::optional<int> p;
  std::optional<double> kappa;
  std::optional<std::string> instance;
  std::optional<std::string> topology;
  std::optional<std::string> algo;
  std::optional<double> rho;
  std::optional<int> horizon;
  std::optional<double> step_c;
  std::optional<double> inner_tol;
  std::optional<std::string> out;
  std::optional<int> workers;
  std::optional<std::string> reference;
  std::vector<int> sweep;
  bool debug = false;
};

void add_common_flags(CLI::App& cmd, Flags& f) {
  cmd.add_option("--config", f.config, "JSON config file; flags override its values");
  cmd.add_option("--seed", f.seed, "generator seed");
  cmd.add_option("--n", f.n, "number of agents");
  cmd.add_option("--p", f.p, "primal dimension per agent");
  cmd.add_option("--kappa", f.kappa, "condition number of the quadratics");
  cmd.add_option("--instance", f.instance, "instance JSON file (instead of the generator)");
  cmd.add_option("--topology", f.topology, "ring_plus | path | complete");
  cmd.add_option("--out", f.out, "output directory (or COUPLED_OPT_OUT)");
  cmd.add_option("--workers", f.workers, "parallel inner-solve workers");
  cmd.add_flag("--debug", f.debug, "verbose traces with timing and inner-solver columns");
}

ccopt::RunConfig merge(const Flags& f) {
  ccopt::RunConfig cfg;
  if (!f.config.empty()) cfg = ccopt::parse_config_file(f.config);
  if (f.seed) cfg.seed = f.seed;
  if (f.n) cfg.n = f.n;
  if (f.p) cfg.p = f.p;
  if (f.kappa) cfg.kappa = f.kappa;
  if (f.instance) cfg.instance_path = f.instance;
  if (f.topology) {
    cfg.topology = *f.topology;
    cfg.topology_edges.clear();
  }
  if (f.algo) cfg.algo = *f.algo;
  if (f.rho) cfg.rho = f.rho;
  if (f.horizon) cfg.horizon = *f.horizon;
  if (f.step_c) cfg.step_c = *f.step_c;
  if (f.inner_tol) cfg.inner_tol = f.inner_tol;
  if (f.out) cfg.out_dir = *f.out;
  if (f.workers) cfg.workers = *f.workers;
  if (f.reference) cfg.reference_path = f.reference;
  if (!f.sweep.empty()) cfg.sweep_horizons = f.sweep;
  if (f.debug) cfg.debug = true;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed solver for coupling-constrained convex programs"};
  app.set_version_flag("--version", std::string(ccopt::kVersion));
  app.require_subcommand(1);

  Flags run_flags;
  CLI::App* run = app.add_subcommand("run", "run one algorithm and write trace + summary");
  add_common_flags(*run, run_flags);
  run->add_option("--algo", run_flags.algo,
                  "accelerated | subgradient | accelerated-literal-lambda");
  run->add_option("--rho", run_flags.rho, "consensus penalty scale");
  run->add_option("--horizon", run_flags.horizon, "iteration count N");
  run->add_option("--step-c", run_flags.step_c, "subgradient step scale c");
  run->add_option("--inner-tol", run_flags.inner_tol, "fixed inner tolerance override");
  run->add_option("--reference", run_flags.reference, "reference.json for error reporting");
  run->add_option("--sweep-horizons", run_flags.sweep,
                  "run several horizons, one subdirectory each")
      ->delimiter(',');

  Flags ref_flags;
  double ref_tol = 1e-9;
  CLI::App* ref = app.add_subcommand("reference", "solve to high accuracy, write reference.json");
  add_common_flags(*ref, ref_flags);
  ref->add_option("--tol", ref_tol, "projected-gradient tolerance");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      ccopt::RunConfig cfg = merge(run_flags);
      ccopt::finalize_config(cfg);
      ccopt::execute_run(cfg, std::cout);
    } else {
      ccopt::RunConfig cfg = merge(ref_flags);
      ccopt::finalize_config(cfg, ccopt::ConfigScope::Reference);
      ccopt::execute_reference(cfg, ref_tol, std::cout);
    }
  } catch (const ccopt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ccopt::SolveError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
