#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sls/bootstrap.hpp"
#include "sls/experiments.hpp"
#include "sls/lti.hpp"
#include "sls/synthesis.hpp"
#include "sls/sysid.hpp"

namespace {

using namespace sls;

MatrixXd matrix_from_json(const nlohmann::json& j) {
  MatrixXd m(j.size(), j.at(0).size());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) = j.at(i).at(k).get<double>();
  return m;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct SeedOverride {
  bool set = false;
  std::uint64_t value = 0;
};

ExperimentConfig load_config(const std::string& path, const SeedOverride& seed) {
  ExperimentConfig cfg = load_experiment_config(path);
  if (seed.set) cfg.seed = seed.value;
  return cfg;
}

void add_seed_flag(CLI::App* cmd, SeedOverride& seed) {
  cmd->add_option_function<std::uint64_t>(
      "--seed",
      [&seed](std::uint64_t v) {
        seed.set = true;
        seed.value = v;
      },
      "Override the config master seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Least-squares identification and robust LQR synthesis toolkit"};
  app.require_subcommand(1);

  std::string config_path, csv_path, header_path, out_path, out_dir = ".";
  SeedOverride seed;

  // simulate: roll out the configured system and store the dataset.
  auto* simulate = app.add_subcommand("simulate", "Generate excitation rollouts");
  int sim_N = 0;
  simulate->add_option("--config", config_path, "Experiment config JSON")->required();
  simulate->add_option("--N", sim_N, "Number of rollouts")->required();
  simulate->add_option("--out", out_path, "Output CSV path (header JSON written alongside)")
      ->required();
  add_seed_flag(simulate, seed);

  // estimate: least-squares fit plus an optional error bound.
  auto* estimate = app.add_subcommand("estimate", "Least-squares fit from stored rollouts");
  std::string est_mode = "full", est_bound = "none";
  double est_delta = 0.05;
  estimate->add_option("--csv", csv_path, "Rollout CSV")->required();
  estimate->add_option("--header", header_path, "Rollout header JSON")->required();
  estimate->add_option("--mode", est_mode, "full | last-sample");
  estimate->add_option("--bound", est_bound, "none | theory | data-dependent");
  estimate->add_option("--delta", est_delta, "Bound failure probability");
  estimate->add_option("--config", config_path,
                       "Config JSON (true system; required for the theory bound)");

  // bootstrap: percentile error radii from synthetic refits.
  auto* bootstrap = app.add_subcommand("bootstrap", "Parametric-bootstrap error radii");
  int boot_M = 200;
  double boot_delta = 0.05;
  std::uint64_t boot_seed = 0;
  std::string trials_path;
  bootstrap->add_option("--csv", csv_path, "Rollout CSV")->required();
  bootstrap->add_option("--header", header_path, "Rollout header JSON")->required();
  bootstrap->add_option("--M", boot_M, "Bootstrap trial count");
  bootstrap->add_option("--delta", boot_delta, "Failure probability");
  bootstrap->add_option("--seed", boot_seed, "Bootstrap master seed");
  bootstrap->add_option("--trials-out", trials_path, "Optional per-trial CSV dump");

  // synthesize: robust controller from explicit error radii.
  auto* synthesize = app.add_subcommand("synthesize", "Robust controller synthesis");
  std::string method_str = "cl", model_path, fir_csv;
  double syn_eps_A = 0.0, syn_eps_B = 0.0;
  synthesize->add_option("--config", config_path, "Config JSON (nominal = config system)");
  synthesize->add_option("--model", model_path,
                         "Nominal model JSON {A,B} (overrides the config system)");
  synthesize->add_option("--method", method_str, "cl | fir(L) | fixed-gamma(g)");
  synthesize->add_option("--eps-A", syn_eps_A, "Operator-norm radius for A")->required();
  synthesize->add_option("--eps-B", syn_eps_B, "Operator-norm radius for B")->required();
  synthesize->add_option("--out", out_path, "Result JSON path (default stdout)");
  synthesize->add_option("--fir-csv", fir_csv, "Optional FIR coefficient dump");

  // certify: small-gain check of a static gain against error radii.
  auto* certify = app.add_subcommand("certify", "Certify a static gain under uncertainty");
  std::string gain_path;
  double cert_alpha = 0.5, cert_eps_A = 0.0, cert_eps_B = 0.0;
  certify->add_option("--config", config_path, "Config JSON (nominal = config system)")
      ->required();
  certify->add_option("--gain", gain_path, "JSON file with a \"K\" matrix")->required();
  certify->add_option("--eps-A", cert_eps_A, "Operator-norm radius for A")->required();
  certify->add_option("--eps-B", cert_eps_B, "Operator-norm radius for B")->required();
  certify->add_option("--alpha", cert_alpha, "Uncertainty split in (0,1)");

  // experiment: the full config-driven sweep.
  auto* experiment = app.add_subcommand("experiment", "Run the configured (N, trial) sweep");
  experiment->add_option("--config", config_path, "Experiment config JSON")->required();
  experiment->add_option("--out-dir", out_dir, "Override the config output directory");
  add_seed_flag(experiment, seed);

  // report: re-render plots from a stored results table.
  auto* report = app.add_subcommand("report", "Render plots from a results CSV");
  report->add_option("--csv", csv_path, "Results CSV from a previous run")->required();
  report->add_option("--out-dir", out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      ExperimentConfig cfg = load_config(config_path, seed);
      RolloutData data = simulate_rollouts(cfg.system, cfg.noise, sim_N, cfg.T, cfg.seed);
      save_rollouts_csv(data, out_path, out_path + ".json");
      std::cout << "wrote " << out_path << " and " << out_path << ".json\n";
      return 0;
    }

    if (estimate->parsed()) {
      RolloutData data = load_rollouts_csv(csv_path, header_path);
      LsMode mode = est_mode == "last-sample" ? LsMode::last_sample : LsMode::full;
      if (est_mode != "full" && est_mode != "last-sample")
        throw std::invalid_argument("--mode must be full or last-sample");
      auto [A_hat, B_hat] = ls_estimate(data, mode);
      nlohmann::json j;
      auto dump = [](const MatrixXd& m) {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
          std::vector<double> r;
          for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
          rows.push_back(std::move(r));
        }
        return rows;
      };
      j["A_hat"] = dump(A_hat);
      j["B_hat"] = dump(B_hat);
      if (est_bound == "theory") {
        if (config_path.empty())
          throw std::invalid_argument("--bound theory needs --config for the true system");
        ExperimentConfig cfg = load_config(config_path, seed);
        double lam = gramians(cfg.system, data.noise, data.T).lambda_g;
        TheoryBound tb = theory_bound_independent(lam, static_cast<int>(data.n),
                                                  static_cast<int>(data.p), data.N, est_delta,
                                                  data.noise);
        j["eps_A"] = tb.eps_A;
        j["eps_B"] = tb.eps_B;
        j["source"] = to_string(ErrorSource::theory_independent);
      } else if (est_bound == "data-dependent") {
        RegressionMatrices rm = regression_matrices(data, LsMode::last_sample);
        DataDependentBound db = data_dependent_bound(rm.Z, est_delta, data.noise.sigma_w,
                                                     static_cast<int>(data.n),
                                                     static_cast<int>(data.p));
        j["eps_A"] = db.eps_A;
        j["eps_B"] = db.eps_B;
        j["source"] = to_string(ErrorSource::data_dependent);
      } else if (est_bound != "none") {
        throw std::invalid_argument("--bound must be none, theory or data-dependent");
      }
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (bootstrap->parsed()) {
      RolloutData data = load_rollouts_csv(csv_path, header_path);
      auto [A_hat, B_hat] = ls_estimate(data, LsMode::full);
      BootstrapConfig bc;
      bc.M = boot_M;
      bc.delta = boot_delta;
      bc.seed = boot_seed;
      bc.noise = data.noise;
      BootstrapResult br = bootstrap_errors(data, A_hat, B_hat, bc);
      if (!trials_path.empty()) save_bootstrap_trials_csv(br, trials_path);
      nlohmann::json j;
      j["eps_A"] = br.eps_A;
      j["eps_B"] = br.eps_B;
      j["M"] = boot_M;
      j["delta"] = boot_delta;
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (synthesize->parsed()) {
      EstimateWithError est;
      CostWeights cost;
      if (!model_path.empty()) {
        nlohmann::json j = nlohmann::json::parse(slurp(model_path));
        est.A_hat = matrix_from_json(j.at("A"));
        est.B_hat = matrix_from_json(j.at("B"));
        cost = CostWeights(MatrixXd::Identity(est.n(), est.n()),
                           MatrixXd::Identity(est.p(), est.p()));
      } else if (!config_path.empty()) {
        ExperimentConfig cfg = load_config(config_path, seed);
        est.A_hat = cfg.system.A;
        est.B_hat = cfg.system.B;
        cost = cfg.cost;
      } else {
        throw std::invalid_argument("synthesize needs --config or --model");
      }
      est.eps_A = syn_eps_A;
      est.eps_B = syn_eps_B;
      MethodSpec method = parse_method(method_str);
      SynthesisResult result;
      switch (method.kind) {
        case MethodSpec::Kind::cl:
          result = cl_synthesis(est, cost);
          break;
        case MethodSpec::Kind::fir:
          result = fir_synthesis(est, cost, method.L);
          break;
        case MethodSpec::Kind::fixed_gamma: {
          GammaSearch gs;
          gs.fixed = true;
          gs.fixed_value = method.gamma;
          gs.nominal_objective = true;
          result = cl_synthesis(est, cost, gs);
          break;
        }
        case MethodSpec::Kind::nominal:
          throw std::invalid_argument("use a plain Riccati tool for the nominal gain");
      }
      std::string text = synthesis_result_to_json(result);
      if (out_path.empty()) {
        std::cout << text << "\n";
      } else {
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("cannot write " + out_path);
        out << text << "\n";
      }
      if (!fir_csv.empty() && !result.is_static &&
          result.status == SynthesisStatus::feasible)
        save_fir_csv(result.response, fir_csv);
      return result.status == SynthesisStatus::feasible ? 0 : 1;
    }

    if (certify->parsed()) {
      ExperimentConfig cfg = load_config(config_path, seed);
      nlohmann::json j = nlohmann::json::parse(slurp(gain_path));
      StateFeedbackGain K(matrix_from_json(j.at("K")));
      EstimateWithError est;
      est.A_hat = cfg.system.A;
      est.B_hat = cfg.system.B;
      est.eps_A = cert_eps_A;
      est.eps_B = cert_eps_B;
      CertifyResult cr = certify_and_bound(est, K, cfg.cost, cert_alpha, cfg.noise.sigma_w);
      nlohmann::json out;
      out["certified"] = cr.certified;
      out["H_value"] = cr.h_value;
      out["cost_upper_bound"] = cr.cost_upper_bound;
      std::cout << out.dump(2) << "\n";
      return cr.certified ? 0 : 1;
    }

    if (experiment->parsed()) {
      ExperimentConfig cfg = load_config(config_path, seed);
      if (experiment->count("--out-dir") > 0) cfg.out_dir = out_dir;
      ExperimentTable table = run_experiment(cfg);
      for (const auto& path : emit_report(table)) std::cout << "wrote " << path << "\n";
      if (table.any_hard_failure()) {
        for (const auto& r : table.rows)
          if (r.status == "error")
            std::cerr << "cell N=" << r.N << " trial=" << r.trial << " method="
                      << to_string(r.method) << ": " << r.error << "\n";
        return 1;
      }
      return 0;
    }

    if (report->parsed()) {
      ExperimentTable table = load_table_csv(csv_path);
      table.cfg.out_dir = out_dir;
      for (const auto& path : emit_report(table)) std::cout << "wrote " << path << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
