#pragma once

#include <cstdint>
#include <random>

#include "sls/types.hpp"

namespace sls {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stable derivation of independent stream seeds from a master seed and a
// path of indices (e.g. rollout or trial numbers).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  std::uint64_t s = splitmix64(master ^ 0x6a09e667f3bcc908ULL);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ (b + 0x510e527fade682d1ULL));
  s = splitmix64(s ^ (c + 0x9b05688c2b3e6c1fULL));
  return s;
}

class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  double draw(double stddev) { return stddev * normal_(engine_); }

  VectorXd draw_vector(Eigen::Index dim, double stddev) {
    VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = draw(stddev);
    return v;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace sls
