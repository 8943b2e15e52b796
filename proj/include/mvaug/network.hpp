#pragma once

// Patch-wise convolutional model F(w, x) = sum_c sum_p psi(<w_c, x_p>), logistic
// loss, full-batch gradient descent and margin-based stopping.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvaug/distribution.hpp"

namespace mvaug {

/// sign(z)|z|^q/q on [-1, 1], z -/+ (q-1)/q outside.
double psi(double z, int q);
/// |z|^(q-1) on [-1, 1], 1 outside.
double psi_prime(double z, int q);
/// log(1 + exp(-z)), stable for large |z|.
double logistic_loss(double z);
/// d/dz log(1 + exp(-z)) = -1 / (1 + exp(z)).
double logistic_loss_prime(double z);

struct Model {
  Eigen::MatrixXd W;  // C x d, row c is w_c
  int q = 3;

  [[nodiscard]] int C() const { return static_cast<int>(W.rows()); }
  [[nodiscard]] int d() const { return static_cast<int>(W.cols()); }
};

/// Entries iid N(0, sigma_0^2); row c is drawn from RngStream(seed).split(c).
Model init_weights(int C, int d, double sigma_0, std::uint64_t seed, int q = 3);

/// Dense views of a dataset for the batched forward and gradient.
struct PreparedData {
  DistParams params;
  int n = 0;
  Eigen::VectorXd y;
  std::vector<int> k_star;
  Eigen::MatrixXd Xi;  // d x n, column i is xi^(i)
  /// Background patches flattened: owner sample, alpha, feature index, and a
  /// column of Extra (or -1 when the patch has no dense part).
  std::vector<int> bg_sample;
  std::vector<double> bg_alpha;
  std::vector<int> bg_k;
  std::vector<int> bg_extra;
  Eigen::MatrixXd Extra;  // d x m dense parts: zeta plus any spurious vector
};

PreparedData prepare(const Dataset& dataset);

/// Per-sample scores F(w, x^(i)).
Eigen::VectorXd forward_all(const Model& model, const PreparedData& data);
double forward(const Model& model, const Sample& sample, const DistParams& params);

double dataset_loss(const Model& model, const Dataset& dataset);
double dataset_loss(const Model& model, const PreparedData& data);

Eigen::MatrixXd gradient(const Model& model, const Dataset& dataset);
Eigen::MatrixXd gradient(const Model& model, const PreparedData& data);

Model gd_step(const Model& model, const Dataset& dataset, double eta);
Model gd_step(const Model& model, const PreparedData& data, double eta);

struct TrainConfig {
  double eta = 0.5;
  double sigma_0 = 0.02;
  double margin_target = 1.0;
  long max_steps = 100000;
  int record_every = 1;
  std::uint64_t seed = 0;
  /// When > 1, keep training (and recording) until continue_factor * stop_time.
  double continue_factor = 0.0;
};

std::vector<std::string> validate_config(const TrainConfig& config);

/// Correlations at one step.
struct ProbeFrame {
  long t = 0;
  Eigen::MatrixXd feat_corr;   // K x C, <w_c, v_k>
  Eigen::VectorXd noise_corr;  // n, max_c y_i <w_c, xi^(i)>
  std::optional<Eigen::MatrixXd> noise_corr_full;  // n x C, y_i <w_c, xi^(i)>
  std::optional<Eigen::VectorXd> spurious_corr;    // C, <w_c, u>
  std::optional<Eigen::MatrixXd> heldout_corr;     // C x m, <w_c, xi_test^(j)>
  double min_margin = 0.0;
  double loss = 0.0;
};

struct ProbeOptions {
  bool enabled = true;
  bool full_noise = false;
  /// d x m held-out noise vectors tracked alongside training.
  std::optional<Eigen::MatrixXd> heldout;
};

struct CurvePoint {
  long t = 0;
  double loss = 0.0;
  double min_margin = 0.0;
};

struct TrainResult {
  std::optional<long> stop_time;
  Model model;  // weights at stop_time, or at the last step when not converged
  std::optional<Model> continued_model;
  std::optional<long> continued_until;
  std::vector<ProbeFrame> frames;
  std::vector<CurvePoint> curve;
  std::string stop_reason;
  Eigen::VectorXd final_margins;
  /// Ten equal-width bins over [min, max] of the final margins.
  std::vector<int> margin_histogram;
  double hist_lo = 0.0;
  double hist_hi = 0.0;
};

/// Frame for the given model; `scores` are the per-sample F values.
ProbeFrame make_frame(long t, const Model& model, const PreparedData& data, const ProbeOptions& options,
                      const Eigen::VectorXd& scores);

/// Gradient descent from `model` until min_i y_i F >= margin_target or max_steps.
/// The margin is checked at every step; frames are kept at multiples of record_every.
TrainResult train(const Dataset& dataset, const Model& model, const TrainConfig& config,
                  const ProbeOptions& probes = {});

}  // namespace mvaug
