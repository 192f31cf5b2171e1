#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "sls/lti.hpp"

using namespace sls;

namespace {

MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> g;
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

LinearSystem random_stable_system(std::mt19937_64& rng, int n, int p, double radius) {
  MatrixXd A = random_matrix(rng, n, n);
  A *= radius / std::max(spectral_radius(A), 1e-6);
  return LinearSystem(A, random_matrix(rng, n, p));
}

}  // namespace

TEST_CASE("spectral radius on closed-form instances") {
  CHECK(spectral_radius(MatrixXd::Identity(3, 3)) == doctest::Approx(1.0));
  MatrixXd nilpotent(2, 2);
  nilpotent << 0, 1, 0, 0;
  CHECK(spectral_radius(nilpotent) == doctest::Approx(0.0).epsilon(1e-9));
  // Tridiagonal Toeplitz: eigenvalues 1.01 + 0.02 cos(k pi / 4).
  CHECK(spectral_radius(laplacian_example_system().A) ==
        doctest::Approx(1.01 + 0.01 * std::sqrt(2.0)).epsilon(1e-9));
  CHECK_THROWS(spectral_radius(MatrixXd::Zero(2, 3)));
}

TEST_CASE("dlyap closed forms and residual contract") {
  CHECK((dlyap(MatrixXd::Zero(3, 3), MatrixXd::Identity(3, 3)) - MatrixXd::Identity(3, 3))
            .norm() < 1e-12);
  MatrixXd half = MatrixXd::Constant(1, 1, 0.5);
  CHECK(dlyap(half, MatrixXd::Identity(1, 1))(0, 0) == doctest::Approx(4.0 / 3.0));

  MatrixXd M(2, 2);
  M << 0.5, 0.1, 0, 0.5;
  MatrixXd X = dlyap(M, MatrixXd::Identity(2, 2));
  // Fixed-point iteration as an independent oracle.
  MatrixXd Y = MatrixXd::Identity(2, 2);
  for (int i = 0; i < 200; ++i) Y = M * Y * M.transpose() + MatrixXd::Identity(2, 2);
  CHECK((X - Y).norm() < 1e-9);
  CHECK((X - M * X * M.transpose() - MatrixXd::Identity(2, 2)).norm() <=
        1e-9 * (1.0 + X.norm()));
  CHECK((X - X.transpose()).norm() < 1e-10);

  CHECK_THROWS(dlyap(2.0 * MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2)));
}

TEST_CASE("dlyap residual on random stable matrices") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 2 + static_cast<int>(rng() % 3);
    MatrixXd M = random_matrix(rng, n, n);
    M *= 0.85 / std::max(spectral_radius(M), 1e-6);
    MatrixXd W = random_matrix(rng, n, n);
    W = (W * W.transpose()).eval();
    MatrixXd X = dlyap(M, W);
    CHECK((X - M * X * M.transpose() - W).norm() <= 1e-9 * (1.0 + X.norm()));
  }
}

TEST_CASE("dare_lqr scalar oracles") {
  LinearSystem integ(MatrixXd::Zero(1, 1), MatrixXd::Identity(1, 1));
  CostWeights unit(MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1));
  DareResult r = dare_lqr(integ, unit);
  CHECK(r.P(0, 0) == doctest::Approx(1.0));
  CHECK(r.gain.K(0, 0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(r.cost_per_sigma == doctest::Approx(1.0));

  LinearSystem half(MatrixXd::Constant(1, 1, 0.5), MatrixXd::Identity(1, 1));
  DareResult r2 = dare_lqr(half, unit);
  CHECK(r2.P(0, 0) == doctest::Approx(1.13278).epsilon(1e-4));
  CHECK(r2.gain.K(0, 0) == doctest::Approx(-0.26556).epsilon(1e-3));
  // Riccati residual.
  double P = r2.P(0, 0);
  CHECK(std::fabs(P - (1.0 + 0.25 * P - 0.25 * P * P / (1.0 + P))) < 1e-8);
}

TEST_CASE("dare_lqr stabilizes the marginally unstable example") {
  DareResult r = dare_lqr(laplacian_example_system(), laplacian_example_cost());
  LinearSystem sys = laplacian_example_system();
  CHECK(spectral_radius(sys.A + sys.B * r.gain.K) < 1.0);
}

TEST_CASE("dare_lqr gain is locally optimal on random systems") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + static_cast<int>(rng() % 3);
    int p = 1 + static_cast<int>(rng() % 3);
    LinearSystem sys = random_stable_system(rng, n, p, 0.9);
    CostWeights cost(MatrixXd::Identity(n, n), MatrixXd::Identity(p, p));
    DareResult r = dare_lqr(sys, cost);
    double base = lqr_cost_closed_loop(sys, r.gain, cost, 1.0);
    CHECK(base == doctest::Approx(r.cost_per_sigma).epsilon(1e-6));
    for (int k = 0; k < 20; ++k) {
      MatrixXd delta = random_matrix(rng, p, n);
      delta *= 1e-3 / delta.norm();
      double perturbed =
          lqr_cost_closed_loop(sys, StateFeedbackGain(r.gain.K + delta), cost, 1.0);
      CHECK(base <= perturbed + 1e-10);
    }
  }
}

TEST_CASE("closed-loop cost oracles and instability marker") {
  CostWeights unit(MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1));
  LinearSystem half(MatrixXd::Constant(1, 1, 0.5), MatrixXd::Identity(1, 1));
  CHECK(lqr_cost_closed_loop(half, StateFeedbackGain(MatrixXd::Zero(1, 1)), unit, 1.0) ==
        doctest::Approx(4.0 / 3.0));
  DareResult r = dare_lqr(half, unit);
  CHECK(lqr_cost_closed_loop(half, r.gain, unit, 1.0) == doctest::Approx(1.13278).epsilon(1e-4));

  LinearSystem two(MatrixXd::Constant(1, 1, 2.0), MatrixXd::Identity(1, 1));
  CHECK(std::isinf(lqr_cost_closed_loop(two, StateFeedbackGain(MatrixXd::Zero(1, 1)), unit, 1.0)));
}

TEST_CASE("gramian closed forms") {
  LinearSystem zero(MatrixXd::Zero(3, 3), MatrixXd::Identity(3, 3));
  GramianResult g = gramians(zero, NoiseSpec(1.0, 1.0), 3);
  CHECK((g.GG - MatrixXd::Identity(3, 3)).norm() < 1e-12);
  CHECK((g.FF - MatrixXd::Identity(3, 3)).norm() < 1e-12);
  CHECK(g.lambda_g == doctest::Approx(2.0));

  LinearSystem half(MatrixXd::Constant(1, 1, 0.5), MatrixXd::Identity(1, 1));
  GramianResult g2 = gramians(half, NoiseSpec(1.0, 1.0), 2);
  CHECK(g2.GG(0, 0) == doctest::Approx(1.25));
  CHECK(g2.FF(0, 0) == doctest::Approx(1.25));

  GramianResult g1 = gramians(half, NoiseSpec(1.0, 1.0), 1);
  CHECK(g1.GG(0, 0) == doctest::Approx(1.0));
  CHECK(g1.FF(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("gramian excitation is monotone in the horizon") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    LinearSystem sys = random_stable_system(rng, 3, 2, 0.95);
    NoiseSpec noise(0.7, 1.3);
    double prev = gramians(sys, noise, 1).lambda_g;
    for (int T = 2; T <= 8; ++T) {
      double cur = gramians(sys, noise, T).lambda_g;
      CHECK(cur >= prev - 1e-12);
      prev = cur;
    }
  }
}

TEST_CASE("decay envelope closed forms and certificate") {
  MatrixXd sym(2, 2);
  sym << 0.3, 0.2, 0.2, 0.3;  // symmetric, eigenvalues 0.5 and 0.1
  DecayEnvelope e = decay_envelope(sym);
  CHECK(e.rho == doctest::Approx(0.75));
  CHECK(e.C == doctest::Approx(1.0).epsilon(1e-9));

  MatrixXd jordan(2, 2);
  jordan << 0.5, 1.0, 0.0, 0.5;
  DecayEnvelope ej = decay_envelope(jordan);
  CHECK(ej.C > 1.0);

  DecayEnvelope ez = decay_envelope(MatrixXd::Zero(2, 2));
  CHECK(ez.C == doctest::Approx(1.0));
  CHECK(ez.rho == doctest::Approx(0.5));

  CHECK_THROWS(decay_envelope(MatrixXd::Identity(2, 2)));

  // Direct power certificate over a long horizon.
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 2 + static_cast<int>(rng() % 3);
    MatrixXd M = random_matrix(rng, n, n);
    M *= 0.8 / std::max(spectral_radius(M), 1e-6);
    DecayEnvelope env = decay_envelope(M);
    MatrixXd Mt = MatrixXd::Identity(n, n);
    double rho_t = 1.0;
    for (int t = 0; t <= 200; ++t) {
      CHECK(Mt.operatorNorm() <= env.C * rho_t * (1.0 + 1e-9) + 1e-12);
      Mt = (M * Mt).eval();
      rho_t *= env.rho;
    }
  }
}
