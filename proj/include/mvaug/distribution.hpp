#pragma once

// Multi-view synthetic data: a sample is a set of P patches in R^d holding
// one signed feature vector y*v_k, one dominant Gaussian noise vector and
// P-2 background patches carrying feature noise -alpha_p*y*v_{k_p} (+ zeta_p).
//
// Indices (features, patches, samples) are 0-based throughout.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvaug/rng.hpp"

namespace mvaug {

enum class AlphaPolicyKind {
  kConstant,  // alpha_p = alpha on every background patch
  kUniform,   // alpha_p ~ U[0, alpha] independently per patch
  kTwoLevel,  // per sample: all alpha_p = alpha w.p. high_prob, else low_value
};

struct AlphaPolicy {
  AlphaPolicyKind kind = AlphaPolicyKind::kConstant;
  double high_prob = 0.5;
  double low_value = 0.0;
};

struct SpuriousConfig {
  Eigen::VectorXd u;
  double rho_u_pos = 0.0;  // fraction of y=+1 samples carrying u
  double rho_u_neg = 0.0;  // fraction of y=-1 samples carrying u
  int slot = 2;            // background patch receiving u
};

struct DistParams {
  int d = 0;
  int P = 2;
  int K = 1;
  std::vector<double> rho;
  double sigma_xi = 1.0;
  double sigma_zeta = 0.0;
  double alpha = 0.0;
  AlphaPolicy alpha_policy;
  /// K x d, rows are the features. Absent means the first K standard basis vectors.
  std::optional<Eigen::MatrixXd> feature_basis;
  std::optional<SpuriousConfig> spurious;
  int p_star = 0;
  int p_xi = 1;
  /// Feature patch drawn uniformly from [P] per sample (the linear-impossibility variant).
  bool uniform_feature_patch = false;

  [[nodiscard]] bool standard_basis() const { return !feature_basis.has_value(); }
  /// Feature vector v_k as a dense d-vector.
  [[nodiscard]] Eigen::VectorXd feature(int k) const;
  /// <v_k, x> for a dense x.
  [[nodiscard]] double feature_dot(int k, const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// All <v_k, x>, k in [K].
  [[nodiscard]] Eigen::VectorXd feature_coords(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

/// Every violated DistParams invariant, one message per violation. Empty iff valid.
std::vector<std::string> validate_params(const DistParams& params);
/// Throws std::invalid_argument listing the violations.
void require_valid(const DistParams& params);

struct BackgroundPatch {
  int p = 0;
  double alpha = 0.0;
  int k = 0;
  Eigen::VectorXd zeta;  // empty when sigma_zeta == 0
};

struct Sample {
  int y = 1;
  int k_star = 0;
  int p_star = 0;
  int p_xi = 1;
  Eigen::VectorXd xi;
  std::vector<BackgroundPatch> background;
  /// Carries exactly the configured spurious vector u.
  bool has_spurious = false;
  /// Extra vector added to the spurious slot (u, or a transformed u); empty if none.
  Eigen::VectorXd spurious;
  int spurious_slot = -1;
};

enum class SamplingMode { kIid, kStratified };

struct AugmentationInfo {
  std::uint64_t source_seed = 0;
  std::vector<int> shifts_applied;
  /// Per output sample: (source index, shift); shift 0 is the untouched source.
  std::vector<std::pair<int, int>> pairing;
};

struct Dataset {
  std::vector<Sample> samples;
  DistParams params;
  std::uint64_t seed = 0;
  SamplingMode mode = SamplingMode::kIid;
  std::optional<AugmentationInfo> augmented_from;

  [[nodiscard]] std::size_t size() const { return samples.size(); }
};

/// Draw one sample. `label` forces y; `k_star` forces the main feature.
Sample sample_point(const DistParams& params, RngStream& rng, std::optional<int> label = std::nullopt,
                    std::optional<int> k_star = std::nullopt);

/// Largest-remainder apportionment of n over rho; ties go to the lower index.
std::vector<int> stratified_counts(const std::vector<double>& rho, int n);

/// Sample i is drawn from RngStream(seed).split(i). Stratified mode lays out
/// main features in blocks of stratified_counts(rho, n).
Dataset generate_dataset(const DistParams& params, int n, SamplingMode mode, std::uint64_t seed);

/// P x d dense patch matrix (row p is patch p).
Eigen::MatrixXd materialize(const Sample& sample, const DistParams& params);

/// Rebuild the sparse representation from a dense patch matrix given the slot layout.
Sample encode(const Eigen::MatrixXd& patches, int y, int p_star, int p_xi, const DistParams& params);

/// Sum of all patches.
Eigen::VectorXd patch_sum(const Sample& sample, const DistParams& params);

struct DatasetStats {
  std::vector<int> n_k;
  std::vector<double> rho_hat;
  /// Feature-noise frequency over background patches; absent when there are none.
  std::optional<std::vector<double>> rho_noise_hat;
  int n_pos = 0;
  int n_neg = 0;
  int spurious_pos = 0;
  int spurious_neg = 0;
};

DatasetStats dataset_stats(const Dataset& dataset);

}  // namespace mvaug
