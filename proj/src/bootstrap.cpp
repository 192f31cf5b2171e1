#include "sls/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "sls/parallel.hpp"
#include "sls/rng.hpp"

namespace sls {

void BootstrapConfig::validate() const {
  if (M < 1) throw std::invalid_argument("BootstrapConfig: M must be at least 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("BootstrapConfig: delta in (0,1)");
}

double nearest_rank_percentile(std::vector<double> values, double delta) {
  if (values.empty()) throw std::invalid_argument("nearest_rank_percentile: empty sample");
  std::sort(values.begin(), values.end());
  auto m = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil((1.0 - delta) * m));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

double estimate_sigma_w(const RolloutData& data, const MatrixXd& A_hat, const MatrixXd& B_hat) {
  double ss = 0.0;
  long count = 0;
  for (int l = 0; l < data.N; ++l) {
    for (int t = 0; t < data.T; ++t) {
      VectorXd r = data.states[l].col(t + 1) - A_hat * data.states[l].col(t) -
                   B_hat * data.inputs[l].col(t);
      ss += r.squaredNorm();
      count += data.n;
    }
  }
  return std::sqrt(ss / static_cast<double>(count));
}

BootstrapResult bootstrap_errors(const RolloutData& data, const MatrixXd& A_hat,
                                 const MatrixXd& B_hat, const BootstrapConfig& cfg) {
  cfg.validate();
  data.validate();
  if (A_hat.rows() != data.n || A_hat.cols() != data.n || B_hat.rows() != data.n ||
      B_hat.cols() != data.p)
    throw std::invalid_argument("bootstrap_errors: estimate dimensions mismatch data");

  NoiseSpec noise = cfg.noise;
  if (cfg.estimate_noise) noise.sigma_w = estimate_sigma_w(data, A_hat, B_hat);

  BootstrapResult out;
  out.trial_eps_A.assign(cfg.M, 0.0);
  out.trial_eps_B.assign(cfg.M, 0.0);
  std::vector<std::string> failures(cfg.M);
  std::vector<char> ok(cfg.M, 0);

  parallel_for(cfg.M, [&](int m) {
    for (std::uint64_t retry = 0; retry <= 3; ++retry) {
      try {
        RolloutData synth;
        synth.N = data.N;
        synth.T = data.T;
        synth.n = data.n;
        synth.p = data.p;
        synth.noise = noise;
        synth.states.resize(data.N);
        synth.inputs.resize(data.N);
        for (int l = 0; l < data.N; ++l) {
          GaussianStream rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(m),
                                         static_cast<std::uint64_t>(l), retry));
          MatrixXd x(data.n, data.T + 1), u(data.p, data.T);
          x.col(0) = data.states[l].col(0);
          for (int t = 0; t < data.T; ++t) {
            u.col(t) = rng.draw_vector(data.p, noise.sigma_u);
            VectorXd w = rng.draw_vector(data.n, noise.sigma_w);
            x.col(t + 1) = A_hat * x.col(t) + B_hat * u.col(t) + w;
          }
          synth.states[l] = std::move(x);
          synth.inputs[l] = std::move(u);
        }
        auto [A_tilde, B_tilde] = ls_estimate(synth, LsMode::full);
        out.trial_eps_A[m] = (A_hat - A_tilde).operatorNorm();
        out.trial_eps_B[m] = (B_hat - B_tilde).operatorNorm();
        ok[m] = 1;
        return;
      } catch (const std::exception& e) {
        failures[m] = e.what();
      }
    }
  });

  for (int m = 0; m < cfg.M; ++m)
    if (!ok[m])
      throw std::runtime_error("bootstrap trial " + std::to_string(m) +
                               " failed after retries: " + failures[m]);

  out.eps_A = nearest_rank_percentile(out.trial_eps_A, cfg.delta);
  out.eps_B = nearest_rank_percentile(out.trial_eps_B, cfg.delta);
  return out;
}

void save_bootstrap_trials_csv(const BootstrapResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << "trial,eps_A_tilde,eps_B_tilde\n";
  for (std::size_t m = 0; m < result.trial_eps_A.size(); ++m)
    out << m << "," << result.trial_eps_A[m] << "," << result.trial_eps_B[m] << "\n";
}

}  // namespace sls
