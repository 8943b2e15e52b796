#pragma once

#include <vector>

#include "mvaug/distribution.hpp"

namespace mvaug::test {

/// Two-patch family with K views, uniform frequencies unless given.
inline DistParams small_params(int d, int K, double sigma_xi, std::vector<double> rho = {}) {
  DistParams p;
  p.d = d;
  p.P = 2;
  p.K = K;
  p.rho = rho.empty() ? std::vector<double>(K, 1.0 / K) : std::move(rho);
  p.sigma_xi = sigma_xi;
  return p;
}

/// Four-patch family with constant feature noise on the two background patches.
inline DistParams noisy_params(int d, int K, double sigma_xi, double alpha) {
  DistParams p = small_params(d, K, sigma_xi);
  p.P = 4;
  p.alpha = alpha;
  return p;
}

}  // namespace mvaug::test
