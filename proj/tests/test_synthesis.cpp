#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "sls/lti.hpp"
#include "sls/state_space.hpp"
#include "sls/synthesis.hpp"

using namespace sls;

namespace {

EstimateWithError oracle_estimate(const LinearSystem& sys, double eps_A, double eps_B) {
  EstimateWithError est;
  est.A_hat = sys.A;
  est.B_hat = sys.B;
  est.eps_A = eps_A;
  est.eps_B = eps_B;
  est.source = ErrorSource::oracle;
  return est;
}

FirResponse unit_l1_response() {
  FirResponse resp;
  resp.L = 1;
  resp.Phi_x = {MatrixXd::Identity(1, 1)};
  resp.Phi_u = {MatrixXd::Zero(1, 1)};
  resp.V = MatrixXd::Zero(1, 1);
  return resp;
}

}  // namespace

TEST_CASE("stacked-response norm oracles") {
  FirResponse resp = unit_l1_response();
  CHECK(halpha(resp, 0.0, 0.0, 0.5) == 0.0);
  CHECK(halpha(resp, 0.1, 0.0, 0.5) == doctest::Approx(0.1 * std::sqrt(2.0)).epsilon(1e-6));
  // Homogeneity in eps_A when Phi_u = 0.
  CHECK(halpha(resp, 0.3, 0.0, 0.5) == doctest::Approx(3.0 * halpha(resp, 0.1, 0.0, 0.5)));
  CHECK_THROWS(halpha(resp, 0.1, 0.1, 0.0));
  CHECK_THROWS(halpha(resp, -0.1, 0.0, 0.5));
}

TEST_CASE("static synthesis recovers the Riccati optimum without uncertainty") {
  LinearSystem sys = laplacian_example_system();
  CostWeights cost = laplacian_example_cost();
  DareResult opt = dare_lqr(sys, cost);
  SynthesisResult r = cl_synthesis(oracle_estimate(sys, 0.0, 0.0), cost);
  REQUIRE(r.status == SynthesisStatus::feasible);
  CHECK(r.nominal_cost == doctest::Approx(opt.cost_per_sigma).epsilon(1e-3));
}

TEST_CASE("static synthesis is infeasible under overwhelming uncertainty") {
  LinearSystem sys = laplacian_example_system();
  SynthesisResult r = cl_synthesis(oracle_estimate(sys, 2.0, 0.0), laplacian_example_cost());
  CHECK(r.status == SynthesisStatus::infeasible);
}

TEST_CASE("feasible static synthesis stabilizes inside the uncertainty ball") {
  LinearSystem sys = laplacian_example_system();
  CostWeights cost = laplacian_example_cost();
  SynthesisResult r = cl_synthesis(oracle_estimate(sys, 0.05, 0.02), cost);
  REQUIRE(r.status == SynthesisStatus::feasible);
  CHECK(r.gamma_star < 1.0);
  CHECK(r.alpha > 0.0);
  CHECK(r.alpha < 1.0);
  CHECK(spectral_radius(sys.A + sys.B * r.gain.K) < 1.0);
  CHECK(r.robust_upper_bound >= r.nominal_cost - 1e-9);
  CertifyResult cr = certify_and_bound(oracle_estimate(sys, 0.05, 0.02), r.gain, cost, r.alpha, 1.0);
  CHECK(cr.certified);
}

TEST_CASE("upper bound grows with the uncertainty radii") {
  LinearSystem sys = laplacian_example_system();
  CostWeights cost = laplacian_example_cost();
  auto bound = [&](double ea, double eb) {
    SynthesisResult r = cl_synthesis(oracle_estimate(sys, ea, eb), cost);
    REQUIRE(r.status == SynthesisStatus::feasible);
    return r.robust_upper_bound;
  };
  double b00 = bound(0.01, 0.01);
  double b10 = bound(0.05, 0.01);
  double b01 = bound(0.01, 0.05);
  double b11 = bound(0.05, 0.05);
  CHECK(b10 >= b00 - 1e-6);
  CHECK(b01 >= b00 - 1e-6);
  CHECK(b11 >= b10 - 1e-6);
  CHECK(b11 >= b01 - 1e-6);
}

TEST_CASE("inner value is unimodal along the contraction parameter") {
  LinearSystem sys = laplacian_example_system();
  CostWeights cost = laplacian_example_cost();
  EstimateWithError est = oracle_estimate(sys, 0.05, 0.02);
  std::vector<double> values;
  for (int i = 0; i < 20; ++i) {
    GammaSearch gs;
    gs.fixed = true;
    gs.fixed_value = 0.05 + 0.9 * i / 19.0;
    SynthesisResult r = cl_synthesis(est, cost, gs);
    values.push_back(r.status == SynthesisStatus::feasible
                         ? r.robust_upper_bound
                         : std::numeric_limits<double>::infinity());
  }
  auto best = std::min_element(values.begin(), values.end()) - values.begin();
  for (long i = 0; i + 1 < best; ++i) {
    double tol = 1e-3 * std::min(values[i], values[i + 1]) + 1e-6;
    CHECK(values[i] >= values[i + 1] - tol);
  }
  for (std::size_t i = best; i + 1 < values.size(); ++i) {
    if (std::isinf(values[i + 1])) continue;
    double tol = 1e-3 * std::min(values[i], values[i + 1]) + 1e-6;
    CHECK(values[i + 1] >= values[i] - tol);
  }
}

TEST_CASE("FIR synthesis matches the Riccati optimum on a well-damped system") {
  MatrixXd A(2, 2);
  A << 0.5, 0.2, 0.0, 0.4;
  LinearSystem sys(A, MatrixXd::Identity(2, 2));
  CostWeights cost(MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2));
  DareResult opt = dare_lqr(sys, cost);
  SynthesisResult r = fir_synthesis(oracle_estimate(sys, 0.0, 0.0), cost, 32);
  REQUIRE(r.status == SynthesisStatus::feasible);
  CHECK(r.nominal_cost == doctest::Approx(opt.cost_per_sigma).epsilon(1e-2));
}

TEST_CASE("single-tap program on the scalar integrator") {
  EstimateWithError est;
  est.A_hat = MatrixXd::Zero(1, 1);
  est.B_hat = MatrixXd::Identity(1, 1);
  CostWeights cost(MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1));
  SynthesisResult r = fir_synthesis(est, cost, 1);
  REQUIRE(r.status == SynthesisStatus::feasible);
  CHECK(r.nominal_cost == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(std::fabs(r.response.Phi_u[0](0, 0)) < 1e-4);
  CHECK(r.response.V.norm() < 1e-4);
}

TEST_CASE("longer FIR horizons never hurt the certified bound") {
  LinearSystem sys = laplacian_example_system();
  CostWeights cost = laplacian_example_cost();
  EstimateWithError est = oracle_estimate(sys, 0.05, 0.02);
  double prev = std::numeric_limits<double>::infinity();
  for (int L : {2, 4, 8}) {
    SynthesisResult r = fir_synthesis(est, cost, L);
    if (r.status != SynthesisStatus::feasible) continue;
    CHECK(r.robust_upper_bound <= prev * 1.01 + 1e-9);
    prev = std::min(prev, r.robust_upper_bound);
  }
  CHECK(std::isfinite(prev));
}

TEST_CASE("realization of a single tap is the static gain") {
  FirResponse resp;
  resp.L = 1;
  resp.Phi_x = {MatrixXd::Identity(2, 2)};
  MatrixXd K(1, 2);
  K << 0.3, -0.4;
  resp.Phi_u = {K};
  resp.V = MatrixXd::Zero(2, 2);
  RealizedController ctrl = realize_controller(resp);
  CHECK(ctrl.state.size() == 0);
  VectorXd x(2);
  x << 1.0, 2.0;
  CHECK((ctrl.step(x) - K * x).norm() < 1e-14);
}

TEST_CASE("zero input response yields zero control") {
  FirResponse resp;
  resp.L = 3;
  LinearSystem sys = laplacian_example_system();
  resp.Phi_x.assign(3, MatrixXd::Identity(3, 3));
  resp.Phi_x[1] = sys.A;
  resp.Phi_x[2] = sys.A * sys.A;
  resp.Phi_u.assign(3, MatrixXd::Zero(3, 3));
  resp.V = MatrixXd::Zero(3, 3);
  RealizedController ctrl = realize_controller(resp);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int t = 0; t < 10; ++t) {
    VectorXd x(3);
    for (int i = 0; i < 3; ++i) x(i) = g(rng);
    CHECK(ctrl.step(x).norm() == 0.0);
  }
}

TEST_CASE("closed loop reproduces the response blocks by convolution") {
  LinearSystem sys = laplacian_example_system();
  CostWeights cost = laplacian_example_cost();
  SynthesisResult r = fir_synthesis(oracle_estimate(sys, 0.05, 0.02), cost, 8);
  REQUIRE(r.status == SynthesisStatus::feasible);
  const int L = r.response.L;

  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  std::vector<VectorXd> w(L + 1);
  for (auto& v : w) {
    v = VectorXd(3);
    for (int i = 0; i < 3; ++i) v(i) = g(rng);
  }

  RealizedController ctrl = realize_controller(r.response);
  VectorXd x = VectorXd::Zero(3);
  std::vector<VectorXd> xs = {x};
  for (int t = 0; t <= L; ++t) {
    VectorXd u = ctrl.step(x);
    x = (sys.A * x + sys.B * u + w[t]).eval();
    xs.push_back(x);
  }
  for (int t = 1; t <= L; ++t) {
    VectorXd expect = VectorXd::Zero(3);
    for (int k = 1; k <= t; ++k) expect += r.response.Phi_x[k - 1] * w[t - k];
    CHECK((xs[t] - expect).norm() < 1e-9 * (1.0 + expect.norm()));
  }
}

TEST_CASE("realized nominal cost matches the program objective") {
  LinearSystem sys = laplacian_example_system();
  CostWeights cost = laplacian_example_cost();
  SynthesisResult r = fir_synthesis(oracle_estimate(sys, 0.05, 0.02), cost, 16);
  REQUIRE(r.status == SynthesisStatus::feasible);
  double tau_sq = r.robust_upper_bound * (1.0 - r.gamma_star) * (1.0 - r.gamma_star);
  CHECK(r.nominal_cost == doctest::Approx(tau_sq).epsilon(0.01));
}

TEST_CASE("small-gain certificate oracles") {
  EstimateWithError est;
  est.A_hat = MatrixXd::Constant(1, 1, 0.5);
  est.B_hat = MatrixXd::Identity(1, 1);
  CostWeights cost(MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1));
  StateFeedbackGain K(MatrixXd::Zero(1, 1));

  est.eps_A = 0.0;
  CertifyResult none = certify_and_bound(est, K, cost, 0.5, 1.0);
  CHECK(none.certified);
  CHECK(none.h_value == 0.0);
  CHECK(none.cost_upper_bound == doctest::Approx(4.0 / 3.0));

  est.eps_A = 0.2;
  CertifyResult mid = certify_and_bound(est, K, cost, 0.5, 1.0);
  CHECK(mid.certified);
  CHECK(mid.h_value == doctest::Approx(0.2 * std::sqrt(2.0) * 2.0).epsilon(1e-4));
  CHECK(mid.cost_upper_bound == doctest::Approx((4.0 / 3.0) / (1.0 - mid.h_value)).epsilon(1e-6));

  est.eps_A = 0.5;
  CertifyResult wide = certify_and_bound(est, K, cost, 0.5, 1.0);
  CHECK(!wide.certified);
  CHECK(wide.h_value == doctest::Approx(std::sqrt(2.0)).epsilon(1e-4));

  // Controller must stabilize the nominal model.
  EstimateWithError bad = est;
  bad.A_hat = MatrixXd::Constant(1, 1, 2.0);
  CHECK_THROWS(certify_and_bound(bad, K, cost, 0.5, 1.0));
}

TEST_CASE("horizon lower bound arithmetic") {
  DecayEnvelope env{1.0, 0.5};
  CHECK(fir_horizon_bound(env, 0.05) == 24);
  CHECK(fir_horizon_bound(env, 1.0) == 0);
  int base = fir_horizon_bound(env, 0.05);
  int halved = fir_horizon_bound(env, 0.025);
  double inc = 4.0 * std::log(2.0) / (1.0 - env.rho);
  CHECK(std::abs((halved - base) - inc) <= 1.0);
  CHECK_THROWS(fir_horizon_bound(env, 0.0));
}

TEST_CASE("relative suboptimality calculator") {
  StateFeedbackGain K(MatrixXd::Zero(1, 1));
  CHECK(suboptimality_calculator(0.1, 0.0, K, 1.0, SuboptMode::infinite) ==
        doctest::Approx(0.5));
  CHECK(suboptimality_calculator(0.1, 0.0, K, 1.0, SuboptMode::fir) == doctest::Approx(1.0));
  CHECK(suboptimality_calculator(0.0, 0.0, K, 10.0, SuboptMode::infinite) == 0.0);
  CHECK_THROWS(suboptimality_calculator(0.25, 0.0, K, 1.0, SuboptMode::infinite));
}

TEST_CASE("result serialization round trips as JSON and CSV") {
  LinearSystem sys = laplacian_example_system();
  CostWeights cost = laplacian_example_cost();
  SynthesisResult r = cl_synthesis(oracle_estimate(sys, 0.02, 0.02), cost);
  REQUIRE(r.status == SynthesisStatus::feasible);
  nlohmann::json j = nlohmann::json::parse(synthesis_result_to_json(r));
  CHECK(j.at("status").get<std::string>() == "feasible");
  CHECK(j.at("K").size() == 3);

  SynthesisResult f = fir_synthesis(oracle_estimate(sys, 0.02, 0.02), cost, 4);
  REQUIRE(f.status == SynthesisStatus::feasible);
  save_fir_csv(f.response, "fir_test.csv");
  std::ifstream in("fir_test.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "block,k,row,col,value");
  in.close();
  std::remove("fir_test.csv");
}
