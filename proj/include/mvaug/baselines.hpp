#pragma once

// Linear and tensor predictors, the max-margin closed form and its QP oracle,
// hand-built single-channel networks and the linear impossibility probe.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvaug/distribution.hpp"
#include "mvaug/network.hpp"

namespace mvaug {

enum class LinearKind { kMean, kMaxMarginClosed, kMaxMarginOracle };
const char* to_string(LinearKind kind);

struct LinearPredictor {
  LinearKind kind = LinearKind::kMean;
  Eigen::VectorXd theta;
  std::optional<Eigen::VectorXd> signal_part;  // projection onto the feature span
  std::optional<Eigen::VectorXd> noise_part;
  /// Score sum_p <theta, x_p>.
  [[nodiscard]] double score(const Sample& sample, const DistParams& params) const;
};

/// theta = (1/n) sum_i sum_p y_i x_p^(i), split into feature span and remainder.
LinearPredictor mean_linear(const Dataset& dataset);

struct Cutoffs {
  double rho_cut_linear = 0.0;  // sigma_xi^2 / sqrt(n d)
  double rho_cut_tensor = 0.0;  // sigma_xi^(2q) / sqrt(n d^q)
};
Cutoffs cutoffs(const DistParams& params, int n, int q);

/// (1/n) sum_i sum_{p'} sum_p y_i <x_{p'}^(i), x_p>^q for one input. Rejects even q.
double tensor_score(const Dataset& train, const Sample& x, int q);
/// Batched tensor scores for every sample of `test`.
Eigen::VectorXd tensor_scores(const Dataset& train, const Dataset& test, int q);

struct ViewAccuracy {
  int n_test = 0;
  std::vector<int> view_counts;
  std::vector<int> view_correct;
  std::vector<double> view_accuracy;
  double accuracy = 0.0;
};

/// Test sample j has main feature j mod K and is drawn from RngStream(seed).split(j);
/// score <= 0 counts as wrong under y = +1 and score >= 0 under y = -1.
Dataset balanced_test_set(const DistParams& params, int n_test, std::uint64_t seed);
ViewAccuracy view_accuracy(const Dataset& test, const Eigen::VectorXd& scores);
ViewAccuracy evaluate_linear(const LinearPredictor& pred, const DistParams& params, int n_test, std::uint64_t seed);
ViewAccuracy evaluate_tensor(const Dataset& train, int q, int n_test, std::uint64_t seed);

struct MaxMarginSolution {
  Eigen::VectorXd theta;
  Eigen::VectorXd dual;     // nu >= 0
  Eigen::MatrixXd kernel;   // G_ij = <y_i xbar_i, y_j xbar_j>
  Eigen::VectorXd margins;  // y_i <theta, xbar_i>
  double min_margin = 0.0;
  double kkt_residual = 0.0;
  long iterations = 0;
  bool converged = false;
};

/// sum_k (1 + sigma_xi^2/n_k)^-1 (v_k + (1/n_k) sum_{i in I_k} y_i xi_i). Requires alpha = 0.
LinearPredictor maxmargin_closed_form(const Dataset& dataset);
/// nu_i = 1 / (n_{k_i} + sigma_xi^2).
Eigen::VectorXd maxmargin_closed_form_dual(const Dataset& dataset);

/// Hard-margin linear classifier on patch sums via projected coordinate ascent on the dual.
/// The residual is the largest of primal infeasibility max(0, 1 - m_i) and |nu_i (m_i - 1)|.
MaxMarginSolution maxmargin_oracle(const Dataset& dataset, double tol = 1e-9, long max_sweeps = 200000);
MaxMarginSolution maxmargin_oracle(const Eigen::MatrixXd& Z, double tol = 1e-9, long max_sweeps = 200000);

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

enum class HandbuiltKind { kGen, kOverfit };

/// gen: w_1 = gamma sum_k v_k. overfit: w_1 = gamma sum_i y_i xi_i (zero for an empty dataset).
Model construct_handbuilt(HandbuiltKind kind, double gamma, const DistParams& params, int q,
                          const Dataset* dataset = nullptr);

struct FeatureNoiseStats {
  std::vector<double> lambda;  // sum of background coefficients per sample
  double mu_lambda = 0.0;      // fraction with lambda > 1
};
FeatureNoiseStats feature_noise_stats(const Dataset& dataset);

enum class Separability { kSeparable, kInfeasible, kBudgetExhausted };
const char* to_string(Separability s);

struct ImpossibilityReport {
  Separability verdict = Separability::kBudgetExhausted;
  bool lp_separable = false;
  /// |sum_i lambda_i y_i vec(x_i)| at the final simplex weights.
  double min_norm = 0.0;
  long iterations = 0;
  /// Smallest training error found over linear classifiers on vec(x) in R^{dP}.
  double best_linear_error = 1.0;
  /// (1/P) min(mu, 1 - mu) min_k rho_k.
  double linear_error_lower_bound = 0.0;
  double mu_lambda = 0.0;
  /// (patch, feature) cells holding main features with both lambda <= 1 and lambda > 1.
  std::vector<std::pair<int, int>> mixed_cells;
  int cells_total = 0;
  /// Sample indices (lambda <= 1, lambda > 1) for each mixed cell.
  std::vector<std::pair<int, int>> witness_samples;
  double witness_error = 0.0;       // error of w_1 = sum_k v_k on the dataset
  double witness_min_margin = 0.0;  // min_i y_i F for that network
  double witness_margin_bound = 0.0;  // 1/q - alpha^q P / q
};

ImpossibilityReport linear_impossibility_probe(const Dataset& dataset, int q = 3, long max_iter = 50000,
                                               double tol = 1e-9);

}  // namespace mvaug
