#include "sls/sysid.hpp"

#include <Eigen/QR>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "sls/parallel.hpp"
#include "sls/rng.hpp"

#include "json.hpp"

namespace sls {

void RolloutData::validate() const {
  if (static_cast<int>(states.size()) != N || static_cast<int>(inputs.size()) != N)
    throw std::invalid_argument("RolloutData: rollout count mismatch");
  for (int l = 0; l < N; ++l) {
    if (states[l].rows() != n || states[l].cols() != T + 1)
      throw std::invalid_argument("RolloutData: state block has wrong shape");
    if (inputs[l].rows() != p || inputs[l].cols() != T)
      throw std::invalid_argument("RolloutData: input block has wrong shape");
    if (states[l].col(0).norm() != 0.0)
      throw std::invalid_argument("RolloutData: rollouts must start at x_0 = 0");
  }
}

std::string to_string(ErrorSource s) {
  switch (s) {
    case ErrorSource::theory_independent: return "theory-independent";
    case ErrorSource::data_dependent: return "data-dependent";
    case ErrorSource::bootstrap: return "bootstrap";
    case ErrorSource::oracle: return "oracle";
  }
  return "?";
}

RolloutData simulate_rollouts(const LinearSystem& sys, const NoiseSpec& noise, int N, int T,
                              std::uint64_t seed, bool record_noises) {
  if (N < 1 || T < 1) throw std::invalid_argument("simulate_rollouts: need N >= 1 and T >= 1");
  RolloutData data;
  data.N = N;
  data.T = T;
  data.n = sys.n();
  data.p = sys.p();
  data.seed = seed;
  data.noise = noise;
  data.states.resize(N);
  data.inputs.resize(N);
  if (record_noises) data.noises.resize(N);

  parallel_for(N, [&](int l) {
    GaussianStream rng(derive_seed(seed, static_cast<std::uint64_t>(l)));
    MatrixXd x(sys.n(), T + 1), u(sys.p(), T), w(sys.n(), T);
    x.col(0).setZero();
    for (int t = 0; t < T; ++t) {
      u.col(t) = rng.draw_vector(sys.p(), noise.sigma_u);
      w.col(t) = rng.draw_vector(sys.n(), noise.sigma_w);
      x.col(t + 1) = sys.A * x.col(t) + sys.B * u.col(t) + w.col(t);
    }
    data.states[l] = std::move(x);
    data.inputs[l] = std::move(u);
    if (record_noises) data.noises[l] = std::move(w);
  });
  return data;
}

RegressionMatrices regression_matrices(const RolloutData& data, LsMode mode) {
  data.validate();
  const int rows_per = (mode == LsMode::full) ? data.T : 1;
  RegressionMatrices rm;
  rm.mode = mode;
  rm.Z.resize(static_cast<Eigen::Index>(data.N) * rows_per, data.n + data.p);
  rm.X_next.resize(rm.Z.rows(), data.n);
  Eigen::Index r = 0;
  for (int l = 0; l < data.N; ++l) {
    int t0 = (mode == LsMode::full) ? 0 : data.T - 1;
    for (int t = t0; t < data.T; ++t, ++r) {
      rm.Z.row(r).head(data.n) = data.states[l].col(t).transpose();
      rm.Z.row(r).tail(data.p) = data.inputs[l].col(t).transpose();
      rm.X_next.row(r) = data.states[l].col(t + 1).transpose();
    }
  }
  return rm;
}

std::pair<MatrixXd, MatrixXd> ls_estimate(const RolloutData& data, LsMode mode) {
  RegressionMatrices rm = regression_matrices(data, mode);
  const Eigen::Index cols = rm.Z.cols();
  if (rm.Z.rows() < cols)
    throw std::runtime_error("ls_estimate: underdetermined design (" + std::to_string(rm.Z.rows()) +
                             " rows for " + std::to_string(cols) + " unknowns)");
  Eigen::ColPivHouseholderQR<MatrixXd> qr(rm.Z);
  qr.setThreshold(1e-10);
  if (qr.rank() < cols)
    throw std::runtime_error("ls_estimate: rank-deficient design (rank " +
                             std::to_string(qr.rank()) + " of " + std::to_string(cols) + ")");
  MatrixXd theta = qr.solve(rm.X_next);  // (n+p) x n
  MatrixXd A_hat = theta.topRows(data.n).transpose();
  MatrixXd B_hat = theta.bottomRows(data.p).transpose();
  return {A_hat, B_hat};
}

TheoryBound theory_bound_independent(double lambda_g, int n, int p, int N, double delta,
                                     const NoiseSpec& noise) {
  if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("theory_bound: delta in (0,1)");
  if (lambda_g <= 0.0) throw std::invalid_argument("theory_bound: lambda_g must be positive");
  double min_samples = 8.0 * (n + p) + 16.0 * std::log(4.0 / delta);
  if (N < min_samples)
    throw std::runtime_error("theory_bound: N=" + std::to_string(N) + " below sample threshold " +
                             std::to_string(min_samples));
  double common = std::sqrt((n + 2.0 * p) * std::log(36.0 / delta) / N);
  return TheoryBound{16.0 * noise.sigma_w / std::sqrt(lambda_g) * common,
                     16.0 * noise.sigma_w / noise.sigma_u * common, min_samples};
}

DataDependentBound data_dependent_bound(const MatrixXd& zs, double delta, double sigma_w, int n,
                                        int p) {
  if (zs.cols() != n + p) throw std::invalid_argument("data_dependent_bound: rows must be [x' u']");
  if (zs.rows() < n + p)
    throw std::runtime_error("data_dependent_bound: need at least n+p independent samples");
  double c = sigma_w * (std::sqrt(static_cast<double>(n + p)) + std::sqrt(static_cast<double>(n)) +
                        std::sqrt(2.0 * std::log(1.0 / delta)));
  double C = c * c;
  MatrixXd gram = zs.transpose() * zs;

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram);
  DataDependentBound out;
  const double inf = std::numeric_limits<double>::infinity();
  if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff())) {
    // Singular Gram: the inverse of a zero eigenvalue is infinity.
    out.dominator = MatrixXd::Constant(n + p, n + p, inf);
    out.eps_A = C > 0.0 ? inf : 0.0;
    out.eps_B = out.eps_A;
    return out;
  }
  out.dominator = C * gram.inverse();
  Eigen::SelfAdjointEigenSolver<MatrixXd> ea(out.dominator.topLeftCorner(n, n));
  Eigen::SelfAdjointEigenSolver<MatrixXd> eb(out.dominator.bottomRightCorner(p, p));
  out.eps_A = std::sqrt(std::max(0.0, ea.eigenvalues().maxCoeff()));
  out.eps_B = std::sqrt(std::max(0.0, eb.eigenvalues().maxCoeff()));
  return out;
}

void save_rollouts_csv(const RolloutData& data, const std::string& csv_path,
                       const std::string& header_path) {
  data.validate();
  {
    nlohmann::json hdr;
    hdr["schema_version"] = kRolloutSchemaVersion;
    hdr["n"] = data.n;
    hdr["p"] = data.p;
    hdr["N"] = data.N;
    hdr["T"] = data.T;
    hdr["seed"] = data.seed;
    hdr["sigma_u"] = data.noise.sigma_u;
    hdr["sigma_w"] = data.noise.sigma_w;
    std::ofstream out(header_path);
    if (!out) throw std::runtime_error("cannot write " + header_path);
    out << hdr.dump(2) << "\n";
  }
  std::ofstream out(csv_path);
  if (!out) throw std::runtime_error("cannot write " + csv_path);
  out.precision(17);
  out << "rollout,t";
  for (Eigen::Index i = 0; i < data.n; ++i) out << ",x_" << (i + 1);
  for (Eigen::Index j = 0; j < data.p; ++j) out << ",u_" << (j + 1);
  out << "\n";
  for (int l = 0; l < data.N; ++l) {
    for (int t = 0; t <= data.T; ++t) {
      out << l << "," << t;
      for (Eigen::Index i = 0; i < data.n; ++i) out << "," << data.states[l](i, t);
      for (Eigen::Index j = 0; j < data.p; ++j) {
        out << ",";
        if (t < data.T) out << data.inputs[l](j, t);
      }
      out << "\n";
    }
  }
}

RolloutData load_rollouts_csv(const std::string& csv_path, const std::string& header_path) {
  nlohmann::json hdr;
  {
    std::ifstream in(header_path);
    if (!in) throw std::runtime_error("cannot read " + header_path);
    in >> hdr;
  }
  if (hdr.value("schema_version", -1) != kRolloutSchemaVersion)
    throw std::runtime_error("unsupported rollout schema version");
  RolloutData data;
  data.n = hdr.at("n").get<int>();
  data.p = hdr.at("p").get<int>();
  data.N = hdr.at("N").get<int>();
  data.T = hdr.at("T").get<int>();
  data.seed = hdr.at("seed").get<std::uint64_t>();
  data.noise = NoiseSpec(hdr.at("sigma_u").get<double>(), hdr.at("sigma_w").get<double>());
  data.states.assign(data.N, MatrixXd::Zero(data.n, data.T + 1));
  data.inputs.assign(data.N, MatrixXd::Zero(data.p, data.T));

  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot read " + csv_path);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    int l = std::stoi(cell);
    std::getline(ss, cell, ',');
    int t = std::stoi(cell);
    if (l < 0 || l >= data.N || t < 0 || t > data.T)
      throw std::runtime_error("rollout CSV row out of range");
    for (Eigen::Index i = 0; i < data.n; ++i) {
      std::getline(ss, cell, ',');
      data.states[l](i, t) = std::stod(cell);
    }
    for (Eigen::Index j = 0; j < data.p; ++j) {
      if (!std::getline(ss, cell, ',')) cell.clear();
      if (t < data.T) data.inputs[l](j, t) = cell.empty() ? 0.0 : std::stod(cell);
    }
  }
  data.validate();
  return data;
}

}  // namespace sls
