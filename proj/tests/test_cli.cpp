#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "ccopt/config.hpp"
#include "ccopt/runner.hpp"
#include "ccopt/serialize.hpp"

namespace fs = std::filesystem;
using ccopt::ConfigError;
using ccopt::Json;
using ccopt::RunConfig;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("ccopt_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

RunConfig base_config(const fs::path& out) {
  RunConfig cfg;
  cfg.seed = 7;
  cfg.n = 3;
  cfg.p = 2;
  cfg.kappa = 10.0;
  cfg.topology = "ring_plus";
  cfg.horizon = 5;
  cfg.rho = 0.3;
  cfg.workers = 1;
  cfg.out_dir = out.string();
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CCOPT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WEXITSTATUS(rc);
}

std::string expect_config_error(RunConfig cfg, ccopt::ConfigScope scope = ccopt::ConfigScope::Run) {
  try {
    ccopt::finalize_config(cfg, scope);
  } catch (const ConfigError& e) {
    return e.what();
  }
  FAIL("expected ConfigError");
  return {};
}

}  // namespace

TEST_CASE("config parsing fills every field", "[cli]") {
  const Json j = Json::parse(R"({
    "seed": 202, "n": 20, "p": 5, "kappa": 100,
    "topology": "ring_plus", "algo": "subgradient",
    "rho": 0.25, "N": 1200, "step_c": 0.05, "inner_tol": 1e-9,
    "out": "/tmp/somewhere", "workers": 2, "debug": true,
    "reference": "ref.json", "sweep_horizons": [100, 200]
  })");
  const RunConfig cfg = ccopt::parse_config(j);
  CHECK(cfg.seed == 202);
  CHECK(cfg.n == 20);
  CHECK(cfg.p == 5);
  CHECK(cfg.kappa == 100.0);
  CHECK(cfg.topology == "ring_plus");
  CHECK(cfg.algo == "subgradient");
  CHECK(cfg.rho == 0.25);
  CHECK(cfg.horizon == 1200);
  CHECK(cfg.step_c == 0.05);
  CHECK(cfg.inner_tol == 1e-9);
  CHECK(cfg.out_dir == "/tmp/somewhere");
  CHECK(cfg.workers == 2);
  CHECK(cfg.debug);
  CHECK(cfg.reference_path == "ref.json");
  CHECK(cfg.sweep_horizons == std::vector<int>{100, 200});
}

TEST_CASE("config parsing names offenders", "[cli]") {
  try {
    ccopt::parse_config(Json::parse(R"({"sed": 1})"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("sed") != std::string::npos);
  }

  CHECK_THROWS_AS(ccopt::parse_config(Json::parse(R"({"N": "many"})")), ConfigError);
  CHECK_THROWS_AS(ccopt::parse_config(Json::parse(R"({"seed": -4})")), ConfigError);
  CHECK_THROWS_AS(ccopt::parse_config(Json::parse(R"({"debug": 1})")), ConfigError);
  CHECK_THROWS_AS(ccopt::parse_config(Json::parse(R"({"workers": "all"})")), ConfigError);
  CHECK_THROWS_AS(ccopt::parse_config(Json::parse(R"({"kappa": "big"})")), ConfigError);
  CHECK_THROWS_AS(ccopt::parse_config(Json::parse(R"({"topology": 7})")), ConfigError);
  CHECK_THROWS_AS(ccopt::parse_config(Json::parse(R"({"topology": [[0]]})")), ConfigError);
  CHECK_THROWS_AS(ccopt::parse_config(Json::parse(R"({"topology": []})")), ConfigError);
  CHECK_THROWS_AS(ccopt::parse_config(Json::parse(R"({"sweep_horizons": [1.5]})")), ConfigError);
}

TEST_CASE("explicit edge lists parse and build", "[cli]") {
  const Json j = Json::parse(R"({"topology": [[0, 1], [1, 2, 2.5]]})");
  const RunConfig cfg = ccopt::parse_config(j);
  REQUIRE(cfg.topology_edges.size() == 2);
  CHECK(cfg.topology_edges[0].weight == 1.0);
  CHECK(cfg.topology_edges[1].weight == 2.5);

  const ccopt::Network net = ccopt::build_network(cfg, 3);
  CHECK(net.laplacian(1, 2) == -2.5);
  CHECK(net.laplacian(1, 1) == 3.5);
}

TEST_CASE("finalize validates the merged config and names the key", "[cli]") {
  const TempDir dir("final");
  {
    RunConfig ok = base_config(dir.path);
    ccopt::finalize_config(ok);  // must not throw
    CHECK(ok.out_dir == dir.path.string());
  }

  RunConfig cfg = base_config(dir.path);
  cfg.instance_path = "inst.json";
  CHECK(expect_config_error(cfg).find("not both") != std::string::npos);

  cfg = base_config(dir.path);
  cfg.seed.reset();
  CHECK(expect_config_error(cfg).find("seed") != std::string::npos);
  cfg = base_config(dir.path);
  cfg.n.reset();
  CHECK(expect_config_error(cfg).find("'n'") != std::string::npos);
  cfg = base_config(dir.path);
  cfg.p.reset();
  CHECK(expect_config_error(cfg).find("'p'") != std::string::npos);
  cfg = base_config(dir.path);
  cfg.kappa.reset();
  CHECK(expect_config_error(cfg).find("kappa") != std::string::npos);

  cfg = base_config(dir.path);
  cfg.n = 1;
  CHECK(expect_config_error(cfg).find("'n'") != std::string::npos);
  cfg = base_config(dir.path);
  cfg.kappa = 0.5;
  CHECK(expect_config_error(cfg).find("kappa") != std::string::npos);

  cfg = base_config(dir.path);
  cfg.topology.clear();
  CHECK(expect_config_error(cfg).find("topology") != std::string::npos);
  cfg = base_config(dir.path);
  cfg.topology = "star";
  CHECK(expect_config_error(cfg).find("star") != std::string::npos);
  cfg = base_config(dir.path);
  cfg.topology_edges.push_back({0, 1, 1.0});
  CHECK(expect_config_error(cfg).find("not both") != std::string::npos);

  cfg = base_config(dir.path);
  cfg.algo = "magic";
  CHECK(expect_config_error(cfg).find("magic") != std::string::npos);
  cfg = base_config(dir.path);
  cfg.horizon = 0;
  CHECK(expect_config_error(cfg).find("'N'") != std::string::npos);
  cfg = base_config(dir.path);
  cfg.rho = -1.0;
  CHECK(expect_config_error(cfg).find("rho") != std::string::npos);
  cfg = base_config(dir.path);
  cfg.step_c = 0.0;
  CHECK(expect_config_error(cfg).find("step_c") != std::string::npos);
  cfg = base_config(dir.path);
  cfg.inner_tol = 0.0;
  CHECK(expect_config_error(cfg).find("inner_tol") != std::string::npos);
  cfg = base_config(dir.path);
  cfg.workers = -1;
  CHECK(expect_config_error(cfg).find("workers") != std::string::npos);
  cfg = base_config(dir.path);
  cfg.sweep_horizons = {10, 0};
  CHECK(expect_config_error(cfg).find("sweep_horizons") != std::string::npos);
}

TEST_CASE("reference scope skips run-only requirements", "[cli]") {
  const TempDir dir("refscope");
  RunConfig cfg;
  cfg.seed = 7;
  cfg.n = 3;
  cfg.p = 2;
  cfg.kappa = 10.0;
  cfg.out_dir = dir.path.string();
  ccopt::finalize_config(cfg, ccopt::ConfigScope::Reference);  // no topology, no N
  CHECK(cfg.out_dir == dir.path.string());
}

TEST_CASE("output directory falls back to the environment", "[cli]") {
  const TempDir dir("envout");
  RunConfig cfg = base_config(dir.path);
  cfg.out_dir.clear();
  ::unsetenv("COUPLED_OPT_OUT");
  CHECK(expect_config_error(cfg).find("COUPLED_OPT_OUT") != std::string::npos);

  ::setenv("COUPLED_OPT_OUT", dir.path.c_str(), 1);
  RunConfig filled = base_config(dir.path);
  filled.out_dir.clear();
  ccopt::finalize_config(filled);
  CHECK(filled.out_dir == dir.path.string());
  ::unsetenv("COUPLED_OPT_OUT");
}

TEST_CASE("a run writes instance, trace and summary", "[cli]") {
  const TempDir dir("run");
  const RunConfig cfg = base_config(dir.path);
  std::ostringstream log;
  ccopt::execute_run(cfg, log);

  REQUIRE(fs::exists(dir.path / "instance.json"));
  REQUIRE(fs::exists(dir.path / "trace.csv"));
  REQUIRE(fs::exists(dir.path / "summary.json"));
  CHECK(log.str().find("computing one") != std::string::npos);

  const std::string trace = read_file(dir.path / "trace.csv");
  CHECK(count_lines(trace) == 6);  // header + five rows
  CHECK(trace.rfind("k,rel_primal_error,feas_residual,consensus_error,wall_ns\n", 0) == 0);

  // The stored instance round-trips bit-exactly to the generator output.
  const ccopt::ProblemInstance loaded = ccopt::load_instance(dir.path / "instance.json");
  const ccopt::ProblemInstance gen = ccopt::generate_instance(7, 3, 2, 10.0);
  REQUIRE(loaded.n == 3);
  CHECK((loaded.agents[0].objective.quad - gen.agents[0].objective.quad).norm() == 0.0);
  CHECK((loaded.agents[2].coupling.matrix - gen.agents[2].coupling.matrix).norm() == 0.0);

  const Json summary = ccopt::load_json(dir.path / "summary.json");
  for (const char* key :
       {"version", "algorithm", "config", "instance", "network", "run", "reference", "final",
        "bounds"})
    REQUIRE(summary.contains(key));
  CHECK(summary.at("algorithm") == "accelerated");
  CHECK(summary.at("run").at("rho").get<double>() == 0.3);
  CHECK(summary.at("run").at("horizon").get<int>() == 5);
  CHECK(summary.at("reference").at("source") == "computed");
  CHECK(summary.at("final").at("k").get<int>() == 5);
  CHECK(summary.at("bounds").at("eps_c").get<double>() > 0.0);
  CHECK(summary.at("instance").at("l_g").get<double>() > 0.0);
}

TEST_CASE("identical runs produce identical trace bytes", "[cli]") {
  const TempDir a("bytes_a");
  const TempDir b("bytes_b");
  RunConfig cfg_a = base_config(a.path);
  RunConfig cfg_b = base_config(b.path);
  cfg_b.workers = 2;
  std::ostringstream log;
  ccopt::execute_run(cfg_a, log);
  ccopt::execute_run(cfg_b, log);
  CHECK(read_file(a.path / "trace.csv") == read_file(b.path / "trace.csv"));
}

TEST_CASE("debug mode adds the inner-solver columns", "[cli]") {
  const TempDir dir("debug");
  RunConfig cfg = base_config(dir.path);
  cfg.debug = true;
  std::ostringstream log;
  ccopt::execute_run(cfg, log);
  const std::string trace = read_file(dir.path / "trace.csv");
  CHECK(trace.find(",f_value,max_inner_residual,max_inner_iterations\n") != std::string::npos);
}

TEST_CASE("horizon sweeps write one directory per horizon", "[cli]") {
  const TempDir dir("sweep");
  RunConfig cfg = base_config(dir.path);
  cfg.sweep_horizons = {3, 5};
  std::ostringstream log;
  ccopt::execute_run(cfg, log);

  for (int h : {3, 5}) {
    const fs::path sub = dir.path / ("N" + std::to_string(h));
    REQUIRE(fs::exists(sub / "trace.csv"));
    REQUIRE(fs::exists(sub / "summary.json"));
    const Json summary = ccopt::load_json(sub / "summary.json");
    CHECK(summary.at("run").at("horizon").get<int>() == h);
  }
  const Json sweep = ccopt::load_json(dir.path / "sweep.json");
  REQUIRE(sweep.is_array());
  REQUIRE(sweep.size() == 2);
  CHECK(sweep[0].at("horizon").get<int>() == 3);
  CHECK(sweep[1].at("horizon").get<int>() == 5);
}

TEST_CASE("subgradient summaries report the step constant", "[cli]") {
  const TempDir dir("subgrad");
  RunConfig cfg = base_config(dir.path);
  cfg.algo = "subgradient";
  cfg.step_c = 0.05;
  std::ostringstream log;
  ccopt::execute_run(cfg, log);
  const Json summary = ccopt::load_json(dir.path / "summary.json");
  CHECK(summary.at("algorithm") == "subgradient");
  CHECK(summary.at("run").at("step_c").get<double>() == 0.05);
  CHECK(!summary.at("run").contains("rho"));
  CHECK(!summary.contains("bounds"));
  CHECK(summary.at("config").at("step_c").get<double>() == 0.05);
}

TEST_CASE("reference command writes and reuses the fixture", "[cli]") {
  const TempDir dir("refcmd");
  RunConfig cfg = base_config(dir.path);
  std::ostringstream log;
  ccopt::execute_reference(cfg, 1e-9, log);
  REQUIRE(fs::exists(dir.path / "reference.json"));
  CHECK(log.str().find("grid cross-check") != std::string::npos);

  const ccopt::ReferenceSolution ref = ccopt::load_reference(dir.path / "reference.json");
  CHECK(ref.tol == 1e-9);
  CHECK(ref.y_star.size() == 3);
  CHECK(ref.x_star.size() == 6);

  // Rewriting is byte-stable.
  const std::string first = read_file(dir.path / "reference.json");
  std::ostringstream log2;
  ccopt::execute_reference(cfg, 1e-9, log2);
  CHECK(read_file(dir.path / "reference.json") == first);

  // A later run in the same directory picks the fixture up instead of
  // recomputing, and says where it came from.
  std::ostringstream log3;
  ccopt::execute_run(cfg, log3);
  CHECK(log3.str().find("computing one") == std::string::npos);
  const Json summary = ccopt::load_json(dir.path / "summary.json");
  CHECK(summary.at("reference").at("source").get<std::string>() ==
        (dir.path / "reference.json").string());

  // An explicit path wins over everything else.
  const TempDir other("refuse");
  RunConfig uses = base_config(other.path);
  uses.reference_path = (dir.path / "reference.json").string();
  std::ostringstream log4;
  ccopt::execute_run(uses, log4);
  const Json summary2 = ccopt::load_json(other.path / "summary.json");
  CHECK(summary2.at("reference").at("source").get<std::string>() == *uses.reference_path);
}

TEST_CASE("mismatched reference shapes are rejected", "[cli]") {
  const TempDir dir("refbad");
  RunConfig cfg = base_config(dir.path);
  std::ostringstream log;
  ccopt::execute_reference(cfg, 1e-8, log);

  RunConfig wrong = base_config(dir.path);
  wrong.seed = 7;
  wrong.n = 4;  // reference was built for n = 3
  wrong.out_dir = (dir.path / "other").string();
  wrong.reference_path = (dir.path / "reference.json").string();
  CHECK_THROWS_AS(ccopt::execute_run(wrong, log), std::invalid_argument);
}

TEST_CASE("command line maps errors to exit codes", "[cli]") {
  const TempDir dir("exit");
  const std::string out = " --out " + (dir.path / "o").string();

  CHECK(run_cli("--version") == 0);
  CHECK(run_cli("") != 0);  // a subcommand is required
  CHECK(run_cli("run --seed 1 --n 1 --p 2 --kappa 10 --topology ring_plus --horizon 3" + out) ==
        2);
  CHECK(run_cli("run --seed 1 --n 3 --p 2 --kappa 10 --topology star --horizon 3" + out) == 2);
  // Condition number 1e12 stalls the inner solver at its iteration cap.
  CHECK(run_cli("run --seed 4 --n 2 --p 2 --kappa 1e12 --topology path --horizon 1 --rho 0.5" +
                out) == 3);
}

TEST_CASE("command line flags override the config file", "[cli]") {
  const TempDir dir("override");
  const fs::path cfg_path = dir.path / "cfg.json";
  {
    std::ofstream out(cfg_path);
    out << R"({"seed": 7, "n": 3, "p": 2, "kappa": 10, "topology": "ring_plus",)"
        << R"( "algo": "accelerated", "rho": 0.001, "N": 4, "workers": 1})" << "\n";
  }
  const fs::path out_dir = dir.path / "out";
  const int rc = run_cli("run --config " + cfg_path.string() + " --rho 0.01 --out " +
                         out_dir.string());
  REQUIRE(rc == 0);
  const Json summary = ccopt::load_json(out_dir / "summary.json");
  CHECK(summary.at("run").at("rho").get<double>() == 0.01);
  CHECK(summary.at("run").at("horizon").get<int>() == 4);
}
