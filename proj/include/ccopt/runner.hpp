#pragma once

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "ccopt/config.hpp"
#include "ccopt/engine.hpp"
#include "ccopt/metrics.hpp"
#include "ccopt/reference.hpp"
#include "ccopt/serialize.hpp"
#include "ccopt/version.hpp"

namespace ccopt {

namespace detail {

inline ProblemInstance obtain_instance(const RunConfig& cfg) {
  if (cfg.instance_path) return load_instance(*cfg.instance_path);
  return generate_instance(*cfg.seed, *cfg.n, *cfg.p, *cfg.kappa);
}

inline Json config_echo(const RunConfig& cfg) {
  Json j;
  if (cfg.instance_path) j["instance"] = *cfg.instance_path;
  if (cfg.seed) j["seed"] = *cfg.seed;
  if (cfg.n) j["n"] = *cfg.n;
  if (cfg.p) j["p"] = *cfg.p;
  if (cfg.kappa) j["kappa"] = *cfg.kappa;
  if (!cfg.topology.empty()) {
    j["topology"] = cfg.topology;
  } else {
    Json edges = Json::array();
    for (const Edge& e : cfg.topology_edges) edges.push_back({e.i, e.j, e.weight});
    j["topology"] = std::move(edges);
  }
  j["algo"] = cfg.algo;
  if (cfg.rho) j["rho"] = *cfg.rho;
  j["N"] = cfg.horizon;
  if (cfg.algo == "subgradient") j["step_c"] = cfg.step_c;
  if (cfg.inner_tol) j["inner_tol"] = *cfg.inner_tol;
  j["workers"] = cfg.workers;
  j["debug"] = cfg.debug;
  return j;
}

inline void check_reference_shape(const ReferenceSolution& ref, const ProblemInstance& inst) {
  if (ref.y_star.size() != inst.d + inst.m ||
      ref.x_star.size() != static_cast<Eigen::Index>(inst.n) * inst.p)
    throw std::invalid_argument("reference: shape does not match the instance");
}

}  // namespace detail

/// Tolerance used when a run has to compute its own reference optimum
/// because no reference.json is available.
inline constexpr double kInlineReferenceTol = 1e-9;

/// Runs the configured algorithm and writes instance.json, trace.csv and
/// summary.json under the output directory (one subdirectory per horizon
/// when sweeping). Nothing is written anywhere else.
inline void execute_run(const RunConfig& cfg, std::ostream& log) {
  namespace fs = std::filesystem;
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);

  const ProblemInstance inst = detail::obtain_instance(cfg);
  save_instance(out / "instance.json", inst);

  const Network net = build_network(cfg, inst.n);
  const SpectralData spec = spectral(net);

  ReferenceSolution ref;
  std::string ref_source;
  if (cfg.reference_path) {
    ref = load_reference(*cfg.reference_path);
    ref_source = *cfg.reference_path;
  } else if (fs::exists(out / "reference.json")) {
    ref = load_reference(out / "reference.json");
    ref_source = (out / "reference.json").string();
  } else {
    log << "no reference fixture found; computing one (tol " << kInlineReferenceTol << ")\n";
    ref = solve_reference(inst, kInlineReferenceTol);
    ref_source = "computed";
  }
  detail::check_reference_shape(ref, inst);

  const int workers =
      cfg.workers > 0 ? cfg.workers
                      : std::max(1u, std::thread::hardware_concurrency());

  std::vector<int> horizons = cfg.sweep_horizons;
  const bool sweeping = !horizons.empty();
  if (!sweeping) horizons.push_back(cfg.horizon);

  Json sweep_rows = Json::array();
  for (int horizon : horizons) {
    const fs::path dir = sweeping ? out / ("N" + std::to_string(horizon)) : out;
    fs::create_directories(dir);
    const double rho = cfg.rho ? *cfg.rho : default_rho(spec, horizon);

    RunResult result;
    if (cfg.algo == "subgradient") {
      SubgradientOptions opt;
      opt.step_c = cfg.step_c;
      opt.horizon = horizon;
      opt.workers = workers;
      opt.inner_tol_override = cfg.inner_tol.value_or(0.0);
      opt.f_star = ref.f_star;
      opt.collect_timing = cfg.debug;
      result = run_subgradient(inst, net, std::move(opt));
    } else {
      RunOptions opt;
      opt.rho = rho;
      opt.horizon = horizon;
      opt.workers = workers;
      opt.literal_lambda_update = cfg.algo == "accelerated-literal-lambda";
      opt.inner_tol_override = cfg.inner_tol.value_or(0.0);
      opt.f_star = ref.f_star;
      opt.collect_timing = cfg.debug;
      result = run_accelerated(inst, net, std::move(opt));
    }

    {
      std::ofstream trace(dir / "trace.csv");
      if (!trace) throw std::runtime_error("cannot write " + (dir / "trace.csv").string());
      write_trace_csv(trace, result.trace, cfg.debug);
    }

    const TraceRecord& last = result.trace.back();
    Json summary;
    summary["version"] = kVersion;
    summary["algorithm"] = cfg.algo;
    summary["config"] = detail::config_echo(cfg);
    summary["instance"] = {{"n", inst.n},
                           {"p", inst.p},
                           {"d", inst.d},
                           {"m", inst.m},
                           {"mu_f", inst.constants.mu_f},
                           {"l_h", inst.constants.l_h},
                           {"l_g", inst.constants.l_g}};
    summary["network"] = {{"edges", net.edges.size()},
                          {"norm_w", spec.norm_w},
                          {"lambda2_w", spec.lambda2_w}};
    Json run;
    run["horizon"] = horizon;
    run["workers"] = workers;
    if (cfg.algo == "subgradient") {
      run["step_c"] = cfg.step_c;
    } else {
      run["rho"] = rho;
    }
    summary["run"] = std::move(run);
    summary["reference"] = {{"f_star", ref.f_star}, {"source", ref_source}};
    summary["final"] = {{"k", last.k},
                        {"f_value", last.f_value},
                        {"rel_primal_error", last.rel_primal_error},
                        {"feas_residual", last.feas_residual},
                        {"consensus_error", last.consensus_error}};
    if (cfg.algo != "subgradient") {
      const Vector y1 = Vector::Zero(static_cast<Eigen::Index>(net.n) * (inst.d + inst.m));
      const BoundReport b = evaluate_bounds(inst, net, ref, rho, horizon, y1);
      summary["bounds"] = {{"eps_c", b.eps_c},
                           {"eps_p_lower", b.eps_p_lower},
                           {"eps_p_upper", b.eps_p_upper},
                           {"xi", b.xi},
                           {"dist_y1", b.dist_y1},
                           {"grad_norm", b.grad_norm},
                           {"grad_wdag_norm", b.grad_wdag_norm},
                           {"y_star_norm", b.y_star_norm}};
    }
    save_json(dir / "summary.json", summary);

    if (sweeping)
      sweep_rows.push_back({{"horizon", horizon},
                            {"rel_primal_error", last.rel_primal_error},
                            {"feas_residual", last.feas_residual},
                            {"consensus_error", last.consensus_error},
                            {"f_value", last.f_value}});

    log << "algo=" << cfg.algo << " N=" << horizon
        << " rel_primal_error=" << last.rel_primal_error
        << " feas_residual=" << last.feas_residual
        << " consensus_error=" << last.consensus_error << "\n";
  }
  if (sweeping) save_json(out / "sweep.json", sweep_rows);
}

/// Solves the instance to the requested tolerance and writes reference.json.
/// On tiny instances (n <= 3, p <= 2) the dual route must agree with the
/// derivative-free grid oracle or the command fails.
inline void execute_reference(const RunConfig& cfg, double tol, std::ostream& log) {
  namespace fs = std::filesystem;
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);

  const ProblemInstance inst = detail::obtain_instance(cfg);
  const ReferenceSolution ref = solve_reference(inst, tol);

  if (inst.n <= 3 && inst.p <= 2) {
    const GridOracleResult grid = grid_reference(inst);
    const double gap = std::abs(grid.penalized - ref.f_star);
    const double budget = 10.0 * tol * (1.0 + std::abs(ref.f_star));
    log << "grid cross-check: |" << grid.penalized << " - " << ref.f_star
        << "| = " << gap << " (budget " << budget << ")\n";
    if (!(gap <= budget))
      throw SolveError("reference: grid oracle disagrees with the dual solve (gap " +
                           std::to_string(gap) + ")",
                       gap, 0);
  }

  save_reference(out / "reference.json", ref);
  log << "f_star=" << ref.f_star << " tol=" << tol << "\n";
}

}  // namespace ccopt
