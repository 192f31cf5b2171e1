#include "sls/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "sls/bootstrap.hpp"
#include "sls/lti.hpp"
#include "sls/parallel.hpp"
#include "sls/rng.hpp"
#include "sls/svg.hpp"

namespace sls {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ErrorSource error_source_from_string(const std::string& s) {
  if (s == "theory-independent") return ErrorSource::theory_independent;
  if (s == "data-dependent") return ErrorSource::data_dependent;
  if (s == "bootstrap") return ErrorSource::bootstrap;
  if (s == "oracle") return ErrorSource::oracle;
  throw std::invalid_argument("unknown error source '" + s + "'");
}

std::string num_to_csv(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double num_from_csv(const std::string& s) {
  if (s == "nan") return kNaN;
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  return std::stod(s);
}

MatrixXd matrix_from_json(const nlohmann::json& j) {
  auto rows = j.size();
  if (rows == 0) throw std::invalid_argument("config: empty matrix");
  auto cols = j.at(0).size();
  MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (j.at(i).size() != cols) throw std::invalid_argument("config: ragged matrix");
    for (std::size_t k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).get<double>();
  }
  return m;
}

nlohmann::json matrix_to_json(const MatrixXd& m) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    j.push_back(row);
  }
  return j;
}

}  // namespace

MethodSpec parse_method(const std::string& text) {
  MethodSpec m;
  if (text == "nominal") {
    m.kind = MethodSpec::Kind::nominal;
    return m;
  }
  if (text == "cl") {
    m.kind = MethodSpec::Kind::cl;
    return m;
  }
  auto arg_of = [&](const std::string& head) -> std::string {
    if (text.rfind(head + "(", 0) != 0 || text.back() != ')') return {};
    return text.substr(head.size() + 1, text.size() - head.size() - 2);
  };
  if (std::string a = arg_of("fir"); !a.empty()) {
    m.kind = MethodSpec::Kind::fir;
    m.L = std::stoi(a);
    if (m.L < 1) throw std::invalid_argument("method fir(L): L must be >= 1");
    return m;
  }
  if (std::string a = arg_of("fixed-gamma"); !a.empty()) {
    m.kind = MethodSpec::Kind::fixed_gamma;
    m.gamma = std::stod(a);
    if (!(m.gamma > 0.0 && m.gamma < 1.0))
      throw std::invalid_argument("method fixed-gamma(g): g must be in (0,1)");
    return m;
  }
  throw std::invalid_argument("unknown method '" + text + "'");
}

std::string to_string(const MethodSpec& m) {
  switch (m.kind) {
    case MethodSpec::Kind::nominal: return "nominal";
    case MethodSpec::Kind::cl: return "cl";
    case MethodSpec::Kind::fir: return "fir(" + std::to_string(m.L) + ")";
    case MethodSpec::Kind::fixed_gamma: {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "fixed-gamma(%g)", m.gamma);
      return buf;
    }
  }
  return "?";
}

void ExperimentConfig::validate() const {
  if (system.n() == 0) throw std::invalid_argument("config: system is empty");
  if (Ns.empty()) throw std::invalid_argument("config: N grid is empty");
  for (int N : Ns)
    if (N < 1) throw std::invalid_argument("config: N values must be positive");
  if (T < 1) throw std::invalid_argument("config: T must be >= 1");
  if (trials < 1) throw std::invalid_argument("config: trials must be >= 1");
  if (methods.empty()) throw std::invalid_argument("config: method list is empty");
  if (bootstrap_M < 1) throw std::invalid_argument("config: bootstrap_M must be >= 1");
  if (!(bootstrap_delta > 0.0 && bootstrap_delta < 1.0))
    throw std::invalid_argument("config: bootstrap_delta in (0,1)");
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  int version = j.value("schema_version", kExperimentSchemaVersion);
  if (version != kExperimentSchemaVersion)
    throw std::invalid_argument("config: unsupported schema_version " + std::to_string(version));

  ExperimentConfig cfg;
  const auto& sys = j.at("system");
  if (sys.is_string()) {
    if (sys.get<std::string>() != "laplacian-example")
      throw std::invalid_argument("config: unknown named system '" + sys.get<std::string>() + "'");
    cfg.system = laplacian_example_system();
    cfg.cost = laplacian_example_cost();
  } else {
    cfg.system = LinearSystem(matrix_from_json(sys.at("A")), matrix_from_json(sys.at("B")));
    cfg.cost = CostWeights(MatrixXd::Identity(cfg.system.n(), cfg.system.n()),
                           MatrixXd::Identity(cfg.system.p(), cfg.system.p()));
  }
  if (j.contains("cost"))
    cfg.cost = CostWeights(matrix_from_json(j.at("cost").at("Q")),
                           matrix_from_json(j.at("cost").at("R")));
  if (j.contains("noise"))
    cfg.noise = NoiseSpec(j.at("noise").value("sigma_u", 1.0), j.at("noise").value("sigma_w", 1.0));
  cfg.Ns = j.at("N").get<std::vector<int>>();
  cfg.T = j.value("T", 6);
  cfg.trials = j.value("trials", 20);
  for (const auto& m : j.at("methods")) cfg.methods.push_back(parse_method(m.get<std::string>()));
  cfg.error_source = error_source_from_string(j.value("error_source", std::string("bootstrap")));
  if (j.contains("bootstrap")) {
    cfg.bootstrap_M = j.at("bootstrap").value("M", 200);
    cfg.bootstrap_delta = j.at("bootstrap").value("delta", 0.05);
  }
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.run_id = j.value("run_id", std::string("run"));
  cfg.out_dir = j.value("out_dir", std::string("."));
  cfg.validate();
  return cfg;
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["schema_version"] = kExperimentSchemaVersion;
  j["system"] = {{"A", matrix_to_json(cfg.system.A)}, {"B", matrix_to_json(cfg.system.B)}};
  j["cost"] = {{"Q", matrix_to_json(cfg.cost.Q)}, {"R", matrix_to_json(cfg.cost.R)}};
  j["noise"] = {{"sigma_u", cfg.noise.sigma_u}, {"sigma_w", cfg.noise.sigma_w}};
  j["N"] = cfg.Ns;
  j["T"] = cfg.T;
  j["trials"] = cfg.trials;
  std::vector<std::string> methods;
  for (const auto& m : cfg.methods) methods.push_back(to_string(m));
  j["methods"] = methods;
  j["error_source"] = to_string(cfg.error_source);
  j["bootstrap"] = {{"M", cfg.bootstrap_M}, {"delta", cfg.bootstrap_delta}};
  j["seed"] = cfg.seed;
  j["run_id"] = cfg.run_id;
  j["out_dir"] = cfg.out_dir;
  return j.dump(2);
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return experiment_config_from_json(buf.str());
}

bool ExperimentTable::any_hard_failure() const {
  return std::any_of(rows.begin(), rows.end(),
                     [](const CellResult& r) { return r.status == "error"; });
}

namespace {

// Shared per-(N, trial) inputs for every method row.
struct CellContext {
  EstimateWithError est;
};

void fill_synthesis_row(CellResult& row, const SynthesisResult& r, const ExperimentConfig& cfg,
                        double J_star) {
  row.status = to_string(r.status);
  if (r.status != SynthesisStatus::feasible) {
    row.gamma = kNaN;
    row.alpha = kNaN;
    row.nominal_cost = kNaN;
    row.true_cost = kInf;
    row.rel_subopt = kInf;
    row.error = r.message;
    return;
  }
  double sw2 = cfg.noise.sigma_w * cfg.noise.sigma_w;
  row.gamma = r.gamma_star;
  row.alpha = r.alpha;
  row.nominal_cost = r.nominal_cost * sw2;
  if (r.is_static) {
    row.true_cost = lqr_cost_closed_loop(cfg.system, r.gain, cfg.cost, cfg.noise.sigma_w);
  } else {
    RealizedController ctrl = realize_controller(r.response);
    row.true_cost = closed_loop_nominal_cost(cfg.system, ctrl, cfg.cost, cfg.noise.sigma_w);
  }
  row.stabilized = std::isfinite(row.true_cost);
  row.rel_subopt = row.stabilized ? (row.true_cost - J_star) / J_star : kInf;
}

}  // namespace

ExperimentTable run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  DareResult opt = dare_lqr(cfg.system, cfg.cost);
  const double sw2 = cfg.noise.sigma_w * cfg.noise.sigma_w;
  const double J_star = opt.cost_per_sigma * sw2;
  const int n = static_cast<int>(cfg.system.n());
  const int p = static_cast<int>(cfg.system.p());
  // Oracle Gramian excitation, needed only for the theory bound.
  double lambda_g = 0.0;
  if (cfg.error_source == ErrorSource::theory_independent)
    lambda_g = gramians(cfg.system, cfg.noise, cfg.T).lambda_g;

  const int num_cells = static_cast<int>(cfg.Ns.size()) * cfg.trials;
  const int num_methods = static_cast<int>(cfg.methods.size());
  ExperimentTable table;
  table.cfg = cfg;
  table.rows.assign(static_cast<std::size_t>(num_cells) * num_methods, CellResult{});

  parallel_for(num_cells, [&](int cell) {
    const int N = cfg.Ns[cell / cfg.trials];
    const int trial = cell % cfg.trials;
    CellResult* rows = table.rows.data() + static_cast<std::size_t>(cell) * num_methods;
    for (int m = 0; m < num_methods; ++m) {
      rows[m].N = N;
      rows[m].trial = trial;
      rows[m].method = cfg.methods[m];
      rows[m].source = cfg.error_source;
      rows[m].gamma = kNaN;
      rows[m].alpha = kNaN;
      rows[m].nominal_cost = kNaN;
      rows[m].true_cost = kNaN;
      rows[m].J_star = J_star;
      rows[m].rel_subopt = kNaN;
    }

    CellContext ctx;
    try {
      const std::uint64_t cell_seed =
          derive_seed(cfg.seed, static_cast<std::uint64_t>(N), static_cast<std::uint64_t>(trial));
      const LsMode mode = cfg.error_source == ErrorSource::theory_independent
                              ? LsMode::last_sample
                              : LsMode::full;
      RolloutData data = simulate_rollouts(cfg.system, cfg.noise, N, cfg.T, cell_seed);
      auto [A_hat, B_hat] = ls_estimate(data, mode);
      ctx.est.A_hat = A_hat;
      ctx.est.B_hat = B_hat;
      ctx.est.source = cfg.error_source;
      switch (cfg.error_source) {
        case ErrorSource::oracle:
          ctx.est.eps_A = (A_hat - cfg.system.A).operatorNorm();
          ctx.est.eps_B = (B_hat - cfg.system.B).operatorNorm();
          break;
        case ErrorSource::bootstrap: {
          BootstrapConfig bc;
          bc.M = cfg.bootstrap_M;
          bc.delta = cfg.bootstrap_delta;
          bc.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(N),
                                static_cast<std::uint64_t>(trial), 1);
          bc.noise = cfg.noise;
          BootstrapResult br = bootstrap_errors(data, A_hat, B_hat, bc);
          ctx.est.eps_A = br.eps_A;
          ctx.est.eps_B = br.eps_B;
          break;
        }
        case ErrorSource::theory_independent: {
          TheoryBound tb =
              theory_bound_independent(lambda_g, n, p, N, cfg.bootstrap_delta, cfg.noise);
          ctx.est.eps_A = tb.eps_A;
          ctx.est.eps_B = tb.eps_B;
          break;
        }
        case ErrorSource::data_dependent: {
          RegressionMatrices rm = regression_matrices(data, LsMode::last_sample);
          DataDependentBound db =
              data_dependent_bound(rm.Z, cfg.bootstrap_delta, cfg.noise.sigma_w, n, p);
          ctx.est.eps_A = db.eps_A;
          ctx.est.eps_B = db.eps_B;
          break;
        }
      }
    } catch (const std::exception& e) {
      for (int m = 0; m < num_methods; ++m) {
        rows[m].status = "error";
        rows[m].error = e.what();
      }
      return;
    }

    for (int m = 0; m < num_methods; ++m) {
      CellResult& row = rows[m];
      row.eps_A = ctx.est.eps_A;
      row.eps_B = ctx.est.eps_B;
      try {
        switch (row.method.kind) {
          case MethodSpec::Kind::nominal: {
            DareResult nom = dare_lqr(ctx.est.nominal(), cfg.cost);
            row.status = "feasible";
            row.nominal_cost = nom.cost_per_sigma * sw2;
            row.true_cost = lqr_cost_closed_loop(cfg.system, nom.gain, cfg.cost,
                                                 cfg.noise.sigma_w);
            row.stabilized = std::isfinite(row.true_cost);
            row.rel_subopt = row.stabilized ? (row.true_cost - J_star) / J_star : kInf;
            break;
          }
          case MethodSpec::Kind::cl:
            fill_synthesis_row(row, cl_synthesis(ctx.est, cfg.cost), cfg, J_star);
            break;
          case MethodSpec::Kind::fir:
            fill_synthesis_row(row, fir_synthesis(ctx.est, cfg.cost, row.method.L), cfg, J_star);
            break;
          case MethodSpec::Kind::fixed_gamma: {
            GammaSearch gs;
            gs.fixed = true;
            gs.fixed_value = row.method.gamma;
            gs.nominal_objective = true;
            fill_synthesis_row(row, cl_synthesis(ctx.est, cfg.cost, gs), cfg, J_star);
            break;
          }
        }
      } catch (const std::exception& e) {
        row.status = "error";
        row.error = e.what();
      }
    }
  });
  return table;
}

void save_table_csv(const ExperimentTable& table, const std::string& path) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << "run_id,N,T,trial,method,eps_A_source,eps_A,eps_B,status,gamma,alpha,"
           "nominal_cost,true_cost,J_star,rel_subopt,stabilized\n";
    for (const auto& r : table.rows) {
      out << table.cfg.run_id << "," << r.N << "," << table.cfg.T << "," << r.trial << ","
          << to_string(r.method) << "," << to_string(r.source) << "," << num_to_csv(r.eps_A)
          << "," << num_to_csv(r.eps_B) << "," << r.status << "," << num_to_csv(r.gamma) << ","
          << num_to_csv(r.alpha) << "," << num_to_csv(r.nominal_cost) << ","
          << num_to_csv(r.true_cost) << "," << num_to_csv(r.J_star) << ","
          << num_to_csv(r.rel_subopt) << "," << (r.stabilized ? 1 : 0) << "\n";
    }
  }
  std::filesystem::rename(tmp, path);
}

ExperimentTable load_table_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  ExperimentTable table;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 16) throw std::runtime_error(path + ": malformed row '" + line + "'");
    CellResult r;
    table.cfg.run_id = f[0];
    r.N = std::stoi(f[1]);
    table.cfg.T = std::stoi(f[2]);
    r.trial = std::stoi(f[3]);
    r.method = parse_method(f[4]);
    r.source = error_source_from_string(f[5]);
    r.eps_A = num_from_csv(f[6]);
    r.eps_B = num_from_csv(f[7]);
    r.status = f[8];
    r.gamma = num_from_csv(f[9]);
    r.alpha = num_from_csv(f[10]);
    r.nominal_cost = num_from_csv(f[11]);
    r.true_cost = num_from_csv(f[12]);
    r.J_star = num_from_csv(f[13]);
    r.rel_subopt = num_from_csv(f[14]);
    r.stabilized = f[15] == "1";
    table.rows.push_back(std::move(r));
  }
  return table;
}

double quantile_ext(std::vector<double> values, double q) {
  values.erase(std::remove_if(values.begin(), values.end(),
                              [](double v) { return std::isnan(v); }),
               values.end());
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

double median_ext(std::vector<double> values) { return quantile_ext(std::move(values), 0.5); }

std::vector<std::string> emit_report(const ExperimentTable& table) {
  if (table.rows.empty()) throw std::invalid_argument("emit_report: empty result table");
  namespace fs = std::filesystem;
  fs::create_directories(table.cfg.out_dir);
  std::vector<std::string> written;

  std::string csv = (fs::path(table.cfg.out_dir) / (table.cfg.run_id + "_results.csv")).string();
  save_table_csv(table, csv);
  written.push_back(csv);

  // Distinct N values in ascending order and distinct methods in row order.
  std::vector<int> Ns;
  std::vector<std::string> methods;
  for (const auto& r : table.rows) {
    if (std::find(Ns.begin(), Ns.end(), r.N) == Ns.end()) Ns.push_back(r.N);
    std::string m = to_string(r.method);
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
  }
  std::sort(Ns.begin(), Ns.end());

  auto collect = [&](int N, const std::string& method, auto&& get) {
    std::vector<double> vals;
    for (const auto& r : table.rows)
      if (r.N == N && (method.empty() || to_string(r.method) == method) && r.status != "error")
        vals.push_back(get(r));
    return vals;
  };

  {
    svg::Plot plot;
    plot.title = "Estimation error radius vs rollouts";
    plot.x_label = "rollouts N";
    plot.y_label = "eps_A";
    plot.log_x = true;
    plot.log_y = true;
    svg::Series s;
    s.label = "eps_A (" + to_string(table.cfg.error_source) + ")";
    s.color = svg::palette_color(0);
    for (int N : Ns) {
      auto vals = collect(N, "", [](const CellResult& r) { return r.eps_A; });
      s.x.push_back(N);
      s.y.push_back(median_ext(vals));
      s.y_lo.push_back(quantile_ext(vals, 0.25));
      s.y_hi.push_back(quantile_ext(vals, 0.75));
    }
    plot.series.push_back(std::move(s));
    std::string path =
        (fs::path(table.cfg.out_dir) / (table.cfg.run_id + "_estimation_error.svg")).string();
    svg::write_plot(plot, path);
    written.push_back(path);
  }

  {
    svg::Plot plot;
    plot.title = "Relative suboptimality vs rollouts";
    plot.x_label = "rollouts N";
    plot.y_label = "(J - J*) / J*";
    plot.log_x = true;
    plot.log_y = true;
    for (std::size_t m = 0; m < methods.size(); ++m) {
      svg::Series s;
      s.label = methods[m];
      s.color = svg::palette_color(m);
      for (int N : Ns) {
        auto vals = collect(N, methods[m], [](const CellResult& r) { return r.rel_subopt; });
        s.x.push_back(N);
        s.y.push_back(median_ext(vals));
        s.y_lo.push_back(quantile_ext(vals, 0.25));
        s.y_hi.push_back(quantile_ext(vals, 0.75));
      }
      plot.series.push_back(std::move(s));
    }
    std::string path =
        (fs::path(table.cfg.out_dir) / (table.cfg.run_id + "_suboptimality.svg")).string();
    svg::write_plot(plot, path);
    written.push_back(path);
  }

  {
    svg::Plot plot;
    plot.title = "Stabilization frequency vs rollouts";
    plot.x_label = "rollouts N";
    plot.y_label = "fraction stabilizing";
    for (std::size_t m = 0; m < methods.size(); ++m) {
      svg::Series s;
      s.label = methods[m];
      s.color = svg::palette_color(m);
      for (int N : Ns) {
        auto vals =
            collect(N, methods[m], [](const CellResult& r) { return r.stabilized ? 1.0 : 0.0; });
        double freq = kNaN;
        if (!vals.empty()) {
          double sum = 0.0;
          for (double v : vals) sum += v;
          freq = sum / static_cast<double>(vals.size());
        }
        s.x.push_back(N);
        s.y.push_back(freq);
      }
      plot.series.push_back(std::move(s));
    }
    std::string path =
        (fs::path(table.cfg.out_dir) / (table.cfg.run_id + "_stabilization.svg")).string();
    svg::write_plot(plot, path);
    written.push_back(path);
  }
  return written;
}

}  // namespace sls
