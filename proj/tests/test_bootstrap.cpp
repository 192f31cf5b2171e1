#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <vector>

#include "doctest.h"
#include "sls/bootstrap.hpp"
#include "sls/parallel.hpp"
#include "sls/rng.hpp"

using namespace sls;

TEST_CASE("nearest-rank percentile arithmetic") {
  std::vector<double> v(2000);
  for (int i = 0; i < 2000; ++i) v[i] = i + 1.0;  // 1..2000 already the sorted ranks
  CHECK(nearest_rank_percentile(v, 0.05) == doctest::Approx(1900.0));
  CHECK(nearest_rank_percentile({3.0, 1.0, 2.0}, 0.5) == doctest::Approx(2.0));
  CHECK_THROWS(nearest_rank_percentile({}, 0.05));
}

TEST_CASE("raising delta never increases the radius") {
  LinearSystem sys = laplacian_example_system();
  RolloutData data = simulate_rollouts(sys, NoiseSpec(1.0, 1.0), 20, 6, 5);
  auto [A_hat, B_hat] = ls_estimate(data, LsMode::full);
  BootstrapConfig cfg;
  cfg.M = 60;
  cfg.seed = 12;
  double prev = 1e100;
  for (double delta : {0.05, 0.1, 0.25, 0.5}) {
    cfg.delta = delta;
    BootstrapResult r = bootstrap_errors(data, A_hat, B_hat, cfg);
    CHECK(r.eps_A <= prev + 1e-15);
    prev = r.eps_A;
  }
}

TEST_CASE("noise-free data collapses the radii to zero") {
  LinearSystem sys(0.4 * MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2));
  RolloutData data = simulate_rollouts(sys, NoiseSpec(1.0, 0.0), 10, 6, 3);
  auto [A_hat, B_hat] = ls_estimate(data, LsMode::full);
  BootstrapConfig cfg;
  cfg.M = 20;
  cfg.noise = NoiseSpec(1.0, 0.0);
  BootstrapResult r = bootstrap_errors(data, A_hat, B_hat, cfg);
  CHECK(r.eps_A < 1e-10);
  CHECK(r.eps_B < 1e-10);
}

TEST_CASE("result is independent of thread count") {
  LinearSystem sys = laplacian_example_system();
  RolloutData data = simulate_rollouts(sys, NoiseSpec(1.0, 1.0), 15, 6, 8);
  auto [A_hat, B_hat] = ls_estimate(data, LsMode::full);
  BootstrapConfig cfg;
  cfg.M = 40;
  cfg.seed = 77;

  setenv("SLS_THREADS", "1", 1);
  BootstrapResult serial = bootstrap_errors(data, A_hat, B_hat, cfg);
  setenv("SLS_THREADS", "8", 1);
  BootstrapResult parallel = bootstrap_errors(data, A_hat, B_hat, cfg);
  unsetenv("SLS_THREADS");

  CHECK(serial.eps_A == parallel.eps_A);
  CHECK(serial.eps_B == parallel.eps_B);
  for (int m = 0; m < cfg.M; ++m) {
    CHECK(serial.trial_eps_A[m] == parallel.trial_eps_A[m]);
    CHECK(serial.trial_eps_B[m] == parallel.trial_eps_B[m]);
  }
}

TEST_CASE("plug-in noise estimate recovers the simulation level") {
  LinearSystem sys = laplacian_example_system();
  RolloutData data = simulate_rollouts(sys, NoiseSpec(1.0, 0.7), 200, 6, 21);
  auto [A_hat, B_hat] = ls_estimate(data, LsMode::full);
  double sw = estimate_sigma_w(data, A_hat, B_hat);
  CHECK(sw == doctest::Approx(0.7).epsilon(0.05));
}

TEST_CASE("coverage of the true error at desk scale") {
  LinearSystem sys = laplacian_example_system();
  const int outer = 100;
  std::vector<int> covered(outer, 0);
  parallel_for(outer, [&](int t) {
    RolloutData data =
        simulate_rollouts(sys, NoiseSpec(1.0, 1.0), 40, 6, derive_seed(900, 0, t));
    auto [A_hat, B_hat] = ls_estimate(data, LsMode::full);
    BootstrapConfig cfg;
    cfg.M = 100;
    cfg.delta = 0.05;
    cfg.seed = derive_seed(901, 0, t);
    BootstrapResult r = bootstrap_errors(data, A_hat, B_hat, cfg);
    covered[t] = (A_hat - sys.A).operatorNorm() <= r.eps_A ? 1 : 0;
  });
  int total = 0;
  for (int c : covered) total += c;
  CHECK(total >= 90);
}
