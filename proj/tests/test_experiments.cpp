#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "sls/experiments.hpp"

using namespace sls;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg = experiment_config_from_json(R"({
    "system": "laplacian-example",
    "N": [10],
    "T": 6,
    "trials": 1,
    "methods": ["nominal"],
    "error_source": "oracle",
    "seed": 5,
    "run_id": "tiny",
    "out_dir": "exp_test_out"
  })");
  return cfg;
}

}  // namespace

TEST_CASE("method strings round trip") {
  for (const char* text : {"nominal", "cl", "fir(32)", "fixed-gamma(0.999)"})
    CHECK(to_string(parse_method(text)) == text);
  CHECK(parse_method("fir(8)").L == 8);
  CHECK(parse_method("fixed-gamma(0.5)").gamma == doctest::Approx(0.5));
  CHECK_THROWS(parse_method("pid"));
  CHECK_THROWS(parse_method("fir(0)"));
  CHECK_THROWS(parse_method("fixed-gamma(1.5)"));
}

TEST_CASE("config parsing covers named and explicit systems") {
  ExperimentConfig named = tiny_config();
  CHECK(named.system.n() == 3);
  CHECK(named.cost.Q(0, 0) == doctest::Approx(1e-3));

  ExperimentConfig explicit_cfg = experiment_config_from_json(R"({
    "system": {"A": [[0.5, 0.1], [0.0, 0.4]], "B": [[1.0], [0.5]]},
    "cost": {"Q": [[1, 0], [0, 1]], "R": [[2]]},
    "noise": {"sigma_u": 0.5, "sigma_w": 2.0},
    "N": [20, 40],
    "methods": ["cl"],
    "trials": 3
  })");
  CHECK(explicit_cfg.system.p() == 1);
  CHECK(explicit_cfg.cost.R(0, 0) == doctest::Approx(2.0));
  CHECK(explicit_cfg.noise.sigma_w == doctest::Approx(2.0));

  // Round trip through the serializer.
  ExperimentConfig again = experiment_config_from_json(experiment_config_to_json(explicit_cfg));
  CHECK((again.system.A - explicit_cfg.system.A).norm() == 0.0);
  CHECK(again.Ns == explicit_cfg.Ns);

  CHECK_THROWS(experiment_config_from_json(R"({"system": "laplacian-example", "N": [],
    "methods": ["cl"]})"));
  CHECK_THROWS(experiment_config_from_json(R"({"system": "laplacian-example", "N": [10],
    "methods": ["cl"], "schema_version": 99})"));
  CHECK_THROWS(experiment_config_from_json(R"({"system": "unknown-name", "N": [10],
    "methods": ["cl"]})"));
}

TEST_CASE("single nominal cell is deterministic") {
  ExperimentConfig cfg = tiny_config();
  ExperimentTable a = run_experiment(cfg);
  ExperimentTable b = run_experiment(cfg);
  REQUIRE(a.rows.size() == 1);
  CHECK(a.rows[0].status == "feasible");
  CHECK(a.rows[0].eps_A == b.rows[0].eps_A);
  CHECK(a.rows[0].true_cost == b.rows[0].true_cost);

  save_table_csv(a, "exp_a.csv");
  save_table_csv(b, "exp_b.csv");
  CHECK(slurp("exp_a.csv") == slurp("exp_b.csv"));
  std::remove("exp_a.csv");
  std::remove("exp_b.csv");
}

TEST_CASE("runs are byte-identical across thread counts") {
  ExperimentConfig cfg = tiny_config();
  cfg.Ns = {20, 30};
  cfg.trials = 3;
  cfg.methods = {parse_method("nominal"), parse_method("cl")};

  setenv("SLS_THREADS", "1", 1);
  ExperimentTable serial = run_experiment(cfg);
  setenv("SLS_THREADS", "8", 1);
  ExperimentTable parallel = run_experiment(cfg);
  unsetenv("SLS_THREADS");

  save_table_csv(serial, "exp_serial.csv");
  save_table_csv(parallel, "exp_parallel.csv");
  CHECK(slurp("exp_serial.csv") == slurp("exp_parallel.csv"));
  std::remove("exp_serial.csv");
  std::remove("exp_parallel.csv");
}

TEST_CASE("robust rows never fail to stabilize when feasible") {
  ExperimentConfig cfg = tiny_config();
  cfg.Ns = {30};
  cfg.trials = 5;
  cfg.methods = {parse_method("nominal"), parse_method("cl")};
  ExperimentTable table = run_experiment(cfg);
  int nominal_stab = 0, nominal_total = 0;
  for (const auto& r : table.rows) {
    if (r.method.kind == MethodSpec::Kind::cl && r.status == "feasible") CHECK(r.stabilized);
    if (r.method.kind == MethodSpec::Kind::nominal) {
      ++nominal_total;
      nominal_stab += r.stabilized ? 1 : 0;
    }
  }
  REQUIRE(nominal_total == 5);
  CHECK(nominal_stab <= nominal_total);
}

TEST_CASE("extended-real quantiles") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(median_ext({1.0, 2.0, 3.0}) == doctest::Approx(2.0));
  CHECK(median_ext({1.0, inf, inf}) == inf);
  CHECK(std::isnan(median_ext({})));
  CHECK(quantile_ext({1.0, 2.0, 3.0, 4.0}, 0.25) == doctest::Approx(1.0));
  CHECK(quantile_ext({1.0, 2.0, 3.0, 4.0}, 0.75) == doctest::Approx(3.0));
}

TEST_CASE("report emission writes CSV and plots") {
  ExperimentConfig cfg = tiny_config();
  cfg.Ns = {10, 20};
  cfg.trials = 2;
  ExperimentTable table = run_experiment(cfg);
  auto files = emit_report(table);
  REQUIRE(files.size() == 4);
  for (const auto& f : files) CHECK(std::filesystem::exists(f));

  // CSV reload matches what was written.
  ExperimentTable loaded = load_table_csv(files[0]);
  REQUIRE(loaded.rows.size() == table.rows.size());
  CHECK(loaded.rows[0].N == table.rows[0].N);
  CHECK(loaded.rows[0].eps_A == table.rows[0].eps_A);
  CHECK(loaded.rows[0].status == table.rows[0].status);

  // SVG output is self-contained and timestamp-free.
  std::string svg = slurp(files[1]);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("date") == std::string::npos);

  ExperimentTable empty;
  CHECK_THROWS(emit_report(empty));
  std::filesystem::remove_all("exp_test_out");
}

TEST_CASE("header schema is stable") {
  ExperimentTable table = run_experiment(tiny_config());
  save_table_csv(table, "exp_schema.csv");
  std::ifstream in("exp_schema.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "run_id,N,T,trial,method,eps_A_source,eps_A,eps_B,status,gamma,alpha,"
        "nominal_cost,true_cost,J_star,rel_subopt,stabilized");
  in.close();
  std::remove("exp_schema.csv");
}
