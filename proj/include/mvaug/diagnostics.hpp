#pragma once

// Initialization checks, correlation probes, fit classification, test error
// estimation and per-step envelope monitors for training trajectories.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvaug/distribution.hpp"
#include "mvaug/network.hpp"

namespace mvaug {

struct GinitTolerances {
  double c_lo = 0.2;     // lower bands: max_c <w_c, v_k> > c_lo * sigma_0, noise analog
  double c_hi = 4.0;     // upper bands: c_hi * sigma_0 * sqrt(log(dC)), noise analog
  double c_norm = 5.0;   // |xi|^2 in sigma_xi^2 (1 +- c_norm sqrt(log d / d))
  double c_cross = 3.0;  // cross terms <= c_cross * sqrt(log d / d) * scale
  double norm_lo = 0.9;  // |w_c| in [norm_lo, norm_hi] * sigma_0 sqrt(d)
  double norm_hi = 1.1;
  /// Divide the noise-vs-parameter lower band by sqrt(log(dC)).
  bool relax_noise_lower = true;
};

struct GinitCondition {
  std::string name;
  bool pass = false;
  double measured_lo = 0.0;  // smallest value entering a lower band
  double measured_hi = 0.0;  // largest value entering an upper band
  double band_lo = 0.0;
  double band_hi = 0.0;
  /// Pairwise term for the conditions that also bound cross products.
  double measured_cross = 0.0;
  double band_cross = 0.0;
};

struct GinitReport {
  std::vector<GinitCondition> conditions;  // always five, in the fixed order below
  GinitTolerances tolerances;
  double sigma_0 = 0.0;
  [[nodiscard]] bool all_pass() const;
};

/// Conditions: feature_vs_parameter, noise_vs_parameter, noise_vs_noise,
/// feature_vs_noise, parameter_norm. Lower bands are strict.
GinitReport check_ginit(const Model& model0, const Dataset& dataset, double sigma_0,
                        const GinitTolerances& tol = {});

/// Exact inner products for the given model.
ProbeFrame correlation_probe(const Model& model, const Dataset& dataset, const ProbeOptions& options = {});

enum class FitTag { kFeatureLearned, kNoiseMemorized, kBoth, kUnfit };
const char* to_string(FitTag tag);

struct FitLabel {
  FitTag tag = FitTag::kUnfit;
  double feature_corr = 0.0;  // max_c <w_c, v_{k*}>
  double noise_corr = 0.0;    // max_c y <w_c, xi>
  [[nodiscard]] bool feature_learned() const { return tag == FitTag::kFeatureLearned || tag == FitTag::kBoth; }
  [[nodiscard]] bool noise_memorized() const { return tag == FitTag::kNoiseMemorized || tag == FitTag::kBoth; }
};

struct FitThresholds {
  double tau_f = 0.0;
  double tau_n = 0.0;
};

/// 0.5 * C^(-1/q) for both thresholds.
FitThresholds default_thresholds(int C, int q);

std::vector<FitLabel> classify_fit(const Model& model, const Dataset& dataset, const FitThresholds& thresholds);
std::vector<FitLabel> classify_fit(const TrainResult& result, const Dataset& dataset,
                                   const FitThresholds& thresholds);

struct TestErrorReport {
  int n_test = 0;
  int errors = 0;
  double error = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::vector<int> view_counts;
  std::vector<int> view_errors;
  std::vector<double> view_error;  // NaN for views with no test samples
};

/// Wilson score interval at z (default 95%).
std::pair<double, double> wilson_interval(int successes, int trials, double z = 1.959963984540054);

/// Test sample j is drawn from RngStream(seed).split(j); y F <= 0 counts as an error.
TestErrorReport estimate_test_error(const Model& model, const DistParams& params, int n_test, std::uint64_t seed);

struct EnvelopeBands {
  double c1 = 0.1;
  double c2 = 10.0;
  double quota = 0.95;
  /// Premise caps: correlations at most cap_factor * C^(-1/q).
  double cap_factor = 1.0;
  /// Noise premise of the feature recurrence: max noise <= premise_noise * sigma_0 sigma_xi sqrt(log d).
  double premise_noise = 3.0;
  /// Constant in front of the per-step drift bounds.
  double drift_c = 10.0;
  /// Held-out drift band in units of sigma_0 sigma_xi.
  double heldout_band = 1.0;
  int max_listed = 50;
};

struct EnvelopeViolation {
  long t = 0;
  int index = 0;  // feature, sample or held-out vector index
  double value = 0.0;
  double band_lo = 0.0;
  double band_hi = 0.0;
};

struct EnvelopeCheck {
  std::string name;
  long checked = 0;
  long compliant = 0;
  double fraction = 1.0;
  bool pass = true;  // fraction >= quota, vacuously true when nothing was checked
  std::vector<EnvelopeViolation> violations;  // first max_listed
  double ratio_median = 0.0;
};

struct EnvelopeReport {
  EnvelopeCheck feature_growth;  // main feature recurrence
  EnvelopeCheck noise_growth;    // dominant noise recurrence
  EnvelopeCheck feature_drift;   // per-step decrease of min_c <w_c, v_k>
  EnvelopeCheck noise_drift;     // per-step decrease of min_c y <w_c, xi>
  EnvelopeCheck heldout_drift;   // |<w_c(t) - w_c(0), xi_test>|
};

struct EnvelopeContext {
  double eta = 0.0;
  double sigma_0 = 0.0;
  int C = 1;
  int q = 3;
};

/// Needs frames at stride 1 with noise_corr_full; heldout_corr is optional.
EnvelopeReport envelope_monitor(const TrainResult& result, const Dataset& dataset, const EnvelopeContext& ctx,
                                const EnvelopeBands& bands = {});

}  // namespace mvaug
