#pragma once

// Scenario runner, assumption validator, parameter sweeps with log-log scaling
// fits, and report emission.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvaug/diagnostics.hpp"
#include "mvaug/distribution.hpp"
#include "mvaug/network.hpp"

namespace mvaug {

// ---------------------------------------------------------------------------
// Assumption validation

enum class AssumptionStatus { kOk, kBorderline, kViolated, kInactive };
const char* to_string(AssumptionStatus s);

/// One condition, reduced to a ratio that the condition asks to be small.
struct AssumptionCheck {
  int index = 0;
  std::string name;
  double ratio = 0.0;
  AssumptionStatus status = AssumptionStatus::kOk;
  std::map<std::string, double> terms;
  std::string note;
  /// ratio < 1: the finite-d value sits on the side the asymptotic condition asks for.
  [[nodiscard]] bool sign_consistent() const { return status == AssumptionStatus::kInactive || ratio < 1.0; }
};

struct AssumptionThresholds {
  double ok = 0.5;        // ratio <= ok
  double violated = 2.0;  // ratio >= violated; in between is borderline
};

struct AssumptionReport {
  std::vector<AssumptionCheck> conditions;  // five, in order
  [[nodiscard]] bool sign_consistent() const;
};

/// Conditions: dominant_view, noise_scale, init_scale, sample_budget, feature_noise_window.
AssumptionReport validate_assumptions(const DistParams& params, int n, double sigma_0, int q, double eta,
                                      int C, const AssumptionThresholds& thresholds = {});

// ---------------------------------------------------------------------------
// Scenarios

enum class ScenarioKind { kThm1, kThm2, kScaling, kCutoff, kSpurious, kUnbalanced, kAugVsIid };
const char* to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& name);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::kThm1;
  DistParams params;
  int n = 24;
  SamplingMode mode = SamplingMode::kStratified;
  TrainConfig train;
  int C = 12;
  int q = 3;
  /// Record probe frames (stride train.record_every) and run the envelope monitors.
  bool probes = true;
  bool envelopes = true;
  /// Held-out noise vectors tracked for the drift monitor.
  int heldout = 16;
  EnvelopeBands bands;
  GinitTolerances ginit;
  int n_test = 10000;
  std::vector<std::uint64_t> seeds = {1};

  /// When > 0, minor views k >= 1 keep rho_k = minor_count / n under sweeps over n and K.
  double minor_count = 0.0;
  /// scaling: train on the augmented dataset.
  bool augment = false;
  /// aug_vs_iid: fraction of the n samples that are independent.
  double p = 0.5;
  /// unbalanced: view-0 samples added to the balanced set to form the full set.
  int extra_view0 = 0;
  /// spurious: also run the balancing countermeasure arm.
  bool countermeasure = true;
  /// cutoff: also evaluate the tensor predictor of this odd order (0 disables).
  int tensor_q = 0;
};

/// Missing or inconsistent fields for the scenario kind. Empty iff runnable.
std::vector<std::string> validate_spec(const ScenarioSpec& spec);

nlohmann::json to_json(const ScenarioSpec& spec);
/// Fields absent from `j` keep the values of `base`.
ScenarioSpec spec_from_json(const nlohmann::json& j, const ScenarioSpec& base = {});

/// Built-in calibrated configurations, one per scenario kind.
ScenarioSpec preset(ScenarioKind kind);

/// Derived streams for one seed s: data s, initialization s + 1000, test set s + 2000,
/// held-out noise s + 3000, auxiliary datasets s + 4000.
struct SeedPlan {
  std::uint64_t data, init, test, heldout, aux;
};
SeedPlan seed_plan(std::uint64_t seed);

struct Assertion {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct TrainSummary {
  std::optional<long> stop_time;
  std::string stop_reason;
  long steps = 0;
  double final_loss = 0.0;
  double final_min_margin = 0.0;
  std::vector<int> margin_histogram;
  double hist_lo = 0.0;
  double hist_hi = 0.0;
};

struct FitSummary {
  /// counts[k][tag] over training samples with main feature k.
  std::vector<std::array<int, 4>> counts;
  std::vector<FitLabel> labels;
};

/// One trained configuration inside a run (a scenario may compare several).
struct ArmSummary {
  std::string name;
  int n_train = 0;
  TrainSummary train;
  TestErrorReport test;
  std::vector<double> feature_max;  // max_c <w_c, v_k> at the stop time
};

struct RunRecord {
  ScenarioSpec spec;  // snapshot holding the single seed of this run
  std::uint64_t seed = 0;
  std::optional<std::pair<std::string, double>> axis;
  std::optional<AssumptionReport> assumptions;
  std::optional<TrainSummary> train;
  std::optional<GinitReport> ginit;
  std::optional<FitSummary> fit;
  std::optional<TestErrorReport> test;
  std::optional<EnvelopeReport> envelopes;
  std::vector<ArmSummary> arms;
  std::map<std::string, double> metrics;
  /// Named per-step or per-view series (for example max minor feature correlation over time).
  std::map<std::string, std::vector<double>> series;
  std::vector<Assertion> assertions;
  std::vector<std::string> skipped;
  std::string error;
  double wall_seconds = 0.0;
  std::vector<std::string> artifacts;

  [[nodiscard]] bool passed() const;
};

/// Runs spec.seeds.front().
RunRecord run_scenario(const ScenarioSpec& spec);
RunRecord run_scenario(const ScenarioSpec& spec, std::uint64_t seed);
/// Every seed of the spec, on up to `jobs` threads; output order follows spec.seeds.
std::vector<RunRecord> run_seeds(const ScenarioSpec& spec, int jobs = 1);

nlohmann::json to_json(const RunRecord& record);

// ---------------------------------------------------------------------------
// Sweeps and scaling fits

enum class SweepAxis { kN, kSigmaXi, kSigma0, kRho2, kP, kK };
const char* to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(const std::string& name);

/// Copy of `spec` with the axis set to `value`.
ScenarioSpec apply_axis(const ScenarioSpec& spec, SweepAxis axis, double value);

struct SweepPoint {
  double value = 0.0;
  std::vector<RunRecord> runs;
  std::optional<double> median_stop_time;  // over runs that reached the margin
  int failures = 0;
};

/// Grid strictly monotone, at least 4 points and 3 seeds.
std::vector<SweepPoint> sweep(const ScenarioSpec& spec, SweepAxis axis, const std::vector<double>& grid,
                              int jobs = 1);

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::vector<double> x;
  std::vector<double> median_stop_time;
};

/// Least squares of log(median stop_time) on log(axis value). Needs 4 finite points.
ScalingFit fit_scaling(const std::vector<RunRecord>& records, SweepAxis axis);
ScalingFit fit_scaling(const std::vector<SweepPoint>& points);

/// Median with the even case averaged; order of `v` does not matter.
double median(std::vector<double> v);

// ---------------------------------------------------------------------------
// Reports

struct ManifestEntry {
  std::string path;  // relative to the report directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct Manifest {
  std::vector<ManifestEntry> files;
  std::vector<std::string> errors;
};

/// summary.json, runs/<i>_<scenario>_s<seed>.csv curves, plot-data/*.csv (series, x, y, y_lo, y_hi)
/// and manifest.json with SHA-256 of every other file.
Manifest emit_report(const std::vector<RunRecord>& records, const std::filesystem::path& out_dir);

}  // namespace mvaug
