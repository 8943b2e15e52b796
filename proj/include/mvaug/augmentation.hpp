#pragma once

// Fixed-point-free coordinate permutations that cycle the feature vectors,
// and the augmented dataset built from them.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mvaug/distribution.hpp"

namespace mvaug {

/// Coordinate permutation T: (T x)[pi[i]] = x[i], so T(e_i) = e_{pi[i]}.
struct FeaturePermutation {
  std::vector<int> pi;
  int shift = 1;
  int K = 1;
  int d = 0;

  [[nodiscard]] Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Feature index that v_k is mapped to.
  [[nodiscard]] int feature_image(int k) const { return (k + shift) % K; }
};

/// Feature block [0, K) shifted cyclically by `shift`; tail [K, d) shifted by
/// shift mod (d-K), with 0 replaced by 1. Requires 1 <= shift <= K-1 and d-K >= 2.
FeaturePermutation build_permutation(int shift, int d, int K);

/// Every violated FeaturePermutation invariant (bijection, no fixed points, feature cycling).
std::vector<std::string> check_permutation(const FeaturePermutation& perm);

/// Apply T to every patch. Feature indices advance by shift; xi, zeta and the
/// spurious vector are coordinate-permuted. With preserve_spurious the spurious
/// vector is copied unchanged instead.
Sample apply(const FeaturePermutation& perm, const Sample& sample, bool preserve_spurious = false);

/// D u T_1(D) u ... u T_{K-1}(D), source-major and shift-minor. Requires the standard basis.
Dataset augment_dataset(const Dataset& dataset);

/// One transformed copy per source with shift 1 + (i mod (K-1)); appended after
/// the sources when keep_sources is set.
Dataset augment_once(const Dataset& dataset, bool keep_sources = true);

struct NoiseCorrelationStats {
  int trials = 0;
  double mean = 0.0;
  double max = 0.0;
  double q50 = 0.0;
  double q90 = 0.0;
  double q99 = 0.0;
  double bound = 0.0;  // c * sigma_xi^2 * sqrt(log(1/delta) / d)
  bool pass = false;   // q99 <= bound
};

/// Statistics of |<xi, T_shift(xi)>| over fresh noise draws.
NoiseCorrelationStats permuted_noise_correlation(const DistParams& params, int shift, int trials,
                                                 std::uint64_t seed, double c = 3.0,
                                                 double delta = 0.005);

/// Same, for an explicit permutation; throws on a permutation with fixed points.
NoiseCorrelationStats permuted_noise_correlation(const FeaturePermutation& perm, double sigma_xi,
                                                 int trials, std::uint64_t seed, double c = 3.0,
                                                 double delta = 0.005);

}  // namespace mvaug
