#include "mvaug/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mvaug {

namespace {

double quantile(std::vector<double> sorted_values, double q) {
  // Linear interpolation between order statistics.
  const double pos = q * (static_cast<double>(sorted_values.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted_values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted_values[lo] * (1.0 - frac) + sorted_values[hi] * frac;
}

}  // namespace

Eigen::VectorXd FeaturePermutation::apply(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != d) throw std::invalid_argument("FeaturePermutation::apply: dimension mismatch");
  Eigen::VectorXd out(d);
  for (int i = 0; i < d; ++i) out[pi[i]] = x[i];
  return out;
}

FeaturePermutation build_permutation(int shift, int d, int K) {
  if (K < 1 || K > d) throw std::invalid_argument("build_permutation: need 1 <= K <= d");
  if (shift < 1 || shift > K - 1) throw std::invalid_argument("build_permutation: shift outside [1, K-1]");
  const int tail = d - K;
  if (tail < 2) throw std::invalid_argument("build_permutation: need d - K >= 2 for a fixed-point-free tail");
  FeaturePermutation perm;
  perm.shift = shift;
  perm.K = K;
  perm.d = d;
  perm.pi.resize(d);
  for (int i = 0; i < K; ++i) perm.pi[i] = (i + shift) % K;
  int s = shift % tail;
  if (s == 0) s = 1;
  for (int j = 0; j < tail; ++j) perm.pi[K + j] = K + (j + s) % tail;
  return perm;
}

std::vector<std::string> check_permutation(const FeaturePermutation& perm) {
  std::vector<std::string> out;
  if (static_cast<int>(perm.pi.size()) != perm.d) {
    out.emplace_back("pi length differs from d");
    return out;
  }
  std::vector<char> seen(perm.d, 0);
  bool bijective = true;
  bool fixed = false;
  for (int i = 0; i < perm.d; ++i) {
    const int t = perm.pi[i];
    if (t < 0 || t >= perm.d || seen[t]) {
      bijective = false;
      continue;
    }
    seen[t] = 1;
    fixed |= t == i;
  }
  if (!bijective) out.emplace_back("pi is not a bijection");
  if (fixed) out.emplace_back("pi has a fixed point");
  for (int k = 0; k < perm.K && bijective; ++k)
    if (perm.pi[k] != perm.feature_image(k)) {
      out.emplace_back("feature block does not cycle by shift");
      break;
    }
  return out;
}

Sample apply(const FeaturePermutation& perm, const Sample& sample, bool preserve_spurious) {
  if (sample.xi.size() != perm.d) throw std::invalid_argument("apply: dimension mismatch");
  Sample out = sample;
  out.k_star = perm.feature_image(sample.k_star);
  out.xi = perm.apply(sample.xi);
  for (auto& b : out.background) {
    b.k = perm.feature_image(b.k);
    if (b.zeta.size() > 0) b.zeta = perm.apply(b.zeta);
  }
  if (sample.spurious.size() > 0 && !preserve_spurious) {
    out.spurious = perm.apply(sample.spurious);
    out.has_spurious = false;
  }
  return out;
}

Dataset augment_dataset(const Dataset& dataset) {
  const DistParams& params = dataset.params;
  if (!params.standard_basis()) throw std::invalid_argument("augment_dataset: requires the standard feature basis");
  const int K = params.K;
  Dataset out;
  out.params = params;
  out.seed = dataset.seed;
  out.mode = dataset.mode;
  AugmentationInfo info;
  info.source_seed = dataset.seed;
  for (int s = 1; s < K; ++s) info.shifts_applied.push_back(s);
  std::vector<FeaturePermutation> perms;
  for (int s = 1; s < K; ++s) perms.push_back(build_permutation(s, params.d, K));
  out.samples.reserve(dataset.size() * K);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out.samples.push_back(dataset.samples[i]);
    info.pairing.emplace_back(static_cast<int>(i), 0);
    for (int s = 1; s < K; ++s) {
      out.samples.push_back(apply(perms[s - 1], dataset.samples[i]));
      info.pairing.emplace_back(static_cast<int>(i), s);
    }
  }
  out.augmented_from = std::move(info);
  return out;
}

Dataset augment_once(const Dataset& dataset, bool keep_sources) {
  const DistParams& params = dataset.params;
  if (!params.standard_basis()) throw std::invalid_argument("augment_once: requires the standard feature basis");
  if (params.K < 2) throw std::invalid_argument("augment_once: needs K >= 2");
  Dataset out;
  out.params = params;
  out.seed = dataset.seed;
  out.mode = dataset.mode;
  AugmentationInfo info;
  info.source_seed = dataset.seed;
  std::vector<FeaturePermutation> perms;
  for (int s = 1; s < params.K; ++s) {
    perms.push_back(build_permutation(s, params.d, params.K));
    info.shifts_applied.push_back(s);
  }
  if (keep_sources) {
    out.samples = dataset.samples;
    for (std::size_t i = 0; i < dataset.size(); ++i) info.pairing.emplace_back(static_cast<int>(i), 0);
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const int s = 1 + static_cast<int>(i % (params.K - 1));
    out.samples.push_back(apply(perms[s - 1], dataset.samples[i]));
    info.pairing.emplace_back(static_cast<int>(i), s);
  }
  out.augmented_from = std::move(info);
  return out;
}

NoiseCorrelationStats permuted_noise_correlation(const FeaturePermutation& perm, double sigma_xi,
                                                 int trials, std::uint64_t seed, double c,
                                                 double delta) {
  if (trials < 100) throw std::invalid_argument("permuted_noise_correlation: need at least 100 trials");
  for (int i = 0; i < perm.d; ++i)
    if (perm.pi[i] == i) throw std::invalid_argument("permuted_noise_correlation: permutation has a fixed point");
  const int d = perm.d;
  const double scale = sigma_xi / std::sqrt(static_cast<double>(d));
  const RngStream root(seed);
  std::vector<double> values(trials);
  Eigen::VectorXd xi(d);
  for (int t = 0; t < trials; ++t) {
    RngStream rng = root.split(static_cast<std::uint64_t>(t));
    for (int j = 0; j < d; ++j) xi[j] = scale * rng.normal();
    double dot = 0.0;
    for (int j = 0; j < d; ++j) dot += xi[perm.pi[j]] * xi[j];
    values[t] = std::abs(dot);
  }
  NoiseCorrelationStats st;
  st.trials = trials;
  double sum = 0.0;
  for (double v : values) sum += v;
  st.mean = sum / trials;
  std::sort(values.begin(), values.end());
  st.max = values.back();
  st.q50 = quantile(values, 0.50);
  st.q90 = quantile(values, 0.90);
  st.q99 = quantile(values, 0.99);
  st.bound = c * sigma_xi * sigma_xi * std::sqrt(std::log(1.0 / delta) / d);
  st.pass = st.q99 <= st.bound;
  return st;
}

NoiseCorrelationStats permuted_noise_correlation(const DistParams& params, int shift, int trials,
                                                 std::uint64_t seed, double c, double delta) {
  return permuted_noise_correlation(build_permutation(shift, params.d, params.K), params.sigma_xi, trials,
                                    seed, c, delta);
}

}  // namespace mvaug
