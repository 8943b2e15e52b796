#include "mvaug/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mvaug {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + lower);
  }
  return m;
}

Eigen::MatrixXd feature_matrix(const Eigen::MatrixXd& W, const DistParams& params) {
  if (params.feature_basis) return W * params.feature_basis->transpose();
  return W.leftCols(params.K);
}

void record(EnvelopeCheck& check, bool ok, long t, int index, double value, double lo, double hi, int max_listed) {
  ++check.checked;
  if (ok) {
    ++check.compliant;
  } else if (static_cast<int>(check.violations.size()) < max_listed) {
    check.violations.push_back({t, index, value, lo, hi});
  }
}

void finish(EnvelopeCheck& check, double quota, std::vector<double> ratios = {}) {
  check.fraction = check.checked > 0 ? static_cast<double>(check.compliant) / check.checked : 1.0;
  check.pass = check.fraction >= quota;
  check.ratio_median = median(std::move(ratios));
}

}  // namespace

bool GinitReport::all_pass() const {
  return std::all_of(conditions.begin(), conditions.end(), [](const auto& c) { return c.pass; });
}

GinitReport check_ginit(const Model& model0, const Dataset& dataset, double sigma_0, const GinitTolerances& tol) {
  const DistParams& params = dataset.params;
  const int d = params.d;
  const int C = model0.C();
  const double sxi = params.sigma_xi;
  const double log_dc = std::log(static_cast<double>(d) * C);
  const double rate = std::sqrt(std::log(static_cast<double>(d)) / d);
  const int n = static_cast<int>(dataset.size());

  GinitReport rep;
  rep.tolerances = tol;
  rep.sigma_0 = sigma_0;

  const Eigen::MatrixXd WV = feature_matrix(model0.W, params);
  {
    GinitCondition c{"feature_vs_parameter"};
    c.measured_lo = kInf;
    for (int k = 0; k < params.K; ++k) c.measured_lo = std::min(c.measured_lo, WV.col(k).maxCoeff());
    c.measured_hi = WV.cwiseAbs().maxCoeff();
    c.band_lo = tol.c_lo * sigma_0;
    c.band_hi = tol.c_hi * sigma_0 * std::sqrt(log_dc);
    c.pass = c.measured_lo > c.band_lo && c.measured_hi <= c.band_hi;
    rep.conditions.push_back(c);
  }

  Eigen::MatrixXd Xi(d, n);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    Xi.col(i) = dataset.samples[i].xi;
    y[i] = dataset.samples[i].y;
  }
  const Eigen::MatrixXd WX = model0.W * Xi;
  {
    GinitCondition c{"noise_vs_parameter"};
    c.measured_lo = kInf;
    c.measured_hi = 0.0;
    for (int i = 0; i < n; ++i) {
      c.measured_lo = std::min(c.measured_lo, (y[i] * WX.col(i)).maxCoeff());
      c.measured_hi = std::max(c.measured_hi, WX.col(i).cwiseAbs().maxCoeff());
    }
    if (n == 0) c.measured_lo = 0.0;
    c.band_lo = tol.c_lo * sigma_0 * sxi / (tol.relax_noise_lower ? std::sqrt(log_dc) : 1.0);
    c.band_hi = tol.c_hi * sigma_0 * sxi * std::sqrt(log_dc);
    c.pass = n > 0 && c.measured_lo > c.band_lo && c.measured_hi <= c.band_hi;
    rep.conditions.push_back(c);
  }
  {
    GinitCondition c{"noise_vs_noise"};
    const Eigen::MatrixXd G = Xi.transpose() * Xi;
    c.measured_lo = kInf;
    c.measured_hi = 0.0;
    for (int i = 0; i < n; ++i) {
      c.measured_lo = std::min(c.measured_lo, G(i, i));
      c.measured_hi = std::max(c.measured_hi, G(i, i));
      for (int j = 0; j < i; ++j) c.measured_cross = std::max(c.measured_cross, std::abs(G(i, j)));
    }
    if (n == 0) c.measured_lo = 0.0;
    c.band_lo = sxi * sxi * (1.0 - tol.c_norm * rate);
    c.band_hi = sxi * sxi * (1.0 + tol.c_norm * rate);
    c.band_cross = tol.c_cross * sxi * sxi * rate;
    c.pass = n > 0 && c.measured_lo >= c.band_lo && c.measured_hi <= c.band_hi && c.measured_cross <= c.band_cross;
    rep.conditions.push_back(c);
  }
  {
    GinitCondition c{"feature_vs_noise"};
    c.measured_hi = 0.0;
    for (int i = 0; i < n; ++i)
      c.measured_hi = std::max(c.measured_hi, params.feature_coords(Xi.col(i)).cwiseAbs().maxCoeff());
    c.band_hi = tol.c_cross * sxi * rate;
    c.pass = c.measured_hi <= c.band_hi;
    rep.conditions.push_back(c);
  }
  {
    GinitCondition c{"parameter_norm"};
    const Eigen::VectorXd norms = model0.W.rowwise().norm();
    c.measured_lo = norms.minCoeff();
    c.measured_hi = norms.maxCoeff();
    const double scale = sigma_0 * std::sqrt(static_cast<double>(d));
    c.band_lo = tol.norm_lo * scale;
    c.band_hi = tol.norm_hi * scale;
    c.pass = c.measured_lo > c.band_lo && c.measured_hi <= c.band_hi;
    rep.conditions.push_back(c);
  }
  return rep;
}

ProbeFrame correlation_probe(const Model& model, const Dataset& dataset, const ProbeOptions& options) {
  const PreparedData data = prepare(dataset);
  return make_frame(0, model, data, options, forward_all(model, data));
}

const char* to_string(FitTag tag) {
  switch (tag) {
    case FitTag::kFeatureLearned:
      return "feature_learned";
    case FitTag::kNoiseMemorized:
      return "noise_memorized";
    case FitTag::kBoth:
      return "both";
    case FitTag::kUnfit:
      return "unfit";
  }
  return "unfit";
}

FitThresholds default_thresholds(int C, int q) {
  const double tau = 0.5 * std::pow(static_cast<double>(C), -1.0 / q);
  return {tau, tau};
}

std::vector<FitLabel> classify_fit(const Model& model, const Dataset& dataset, const FitThresholds& th) {
  const DistParams& params = dataset.params;
  const Eigen::MatrixXd WV = feature_matrix(model.W, params);
  std::vector<FitLabel> labels;
  labels.reserve(dataset.size());
  for (const auto& s : dataset.samples) {
    FitLabel l;
    l.feature_corr = WV.col(s.k_star).maxCoeff();
    l.noise_corr = (s.y * (model.W * s.xi)).maxCoeff();
    const bool f = l.feature_corr >= th.tau_f;
    const bool m = l.noise_corr >= th.tau_n;
    l.tag = f && m ? FitTag::kBoth : f ? FitTag::kFeatureLearned : m ? FitTag::kNoiseMemorized : FitTag::kUnfit;
    labels.push_back(l);
  }
  return labels;
}

std::vector<FitLabel> classify_fit(const TrainResult& result, const Dataset& dataset, const FitThresholds& th) {
  if (result.curve.empty()) throw std::invalid_argument("classify_fit: empty trajectory");
  return classify_fit(result.model, dataset, th);
}

std::pair<double, double> wilson_interval(int successes, int trials, double z) {
  if (trials <= 0) return {0.0, 1.0};
  const double n = trials;
  const double p = successes / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
  const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

TestErrorReport estimate_test_error(const Model& model, const DistParams& params, int n_test, std::uint64_t seed) {
  if (n_test < 100) throw std::invalid_argument("estimate_test_error: need at least 100 test samples");
  require_valid(params);
  constexpr int kChunk = 1024;
  const RngStream root(seed);
  TestErrorReport rep;
  rep.n_test = n_test;
  rep.view_counts.assign(params.K, 0);
  rep.view_errors.assign(params.K, 0);
  for (int start = 0; start < n_test; start += kChunk) {
    const int stop = std::min(n_test, start + kChunk);
    Dataset chunk;
    chunk.params = params;
    for (int j = start; j < stop; ++j) {
      RngStream rng = root.split(static_cast<std::uint64_t>(j));
      chunk.samples.push_back(sample_point(params, rng));
    }
    const PreparedData data = prepare(chunk);
    const Eigen::VectorXd F = forward_all(model, data);
    for (int j = 0; j < data.n; ++j) {
      const int k = chunk.samples[j].k_star;
      const bool wrong = data.y[j] * F[j] <= 0.0;
      ++rep.view_counts[k];
      rep.view_errors[k] += wrong;
      rep.errors += wrong;
    }
  }
  rep.error = static_cast<double>(rep.errors) / n_test;
  std::tie(rep.ci_lo, rep.ci_hi) = wilson_interval(rep.errors, n_test);
  for (int k = 0; k < params.K; ++k)
    rep.view_error.push_back(rep.view_counts[k] > 0 ? static_cast<double>(rep.view_errors[k]) / rep.view_counts[k]
                                                    : std::numeric_limits<double>::quiet_NaN());
  return rep;
}

EnvelopeReport envelope_monitor(const TrainResult& result, const Dataset& dataset, const EnvelopeContext& ctx,
                                const EnvelopeBands& bands) {
  const DistParams& params = dataset.params;
  const int n = static_cast<int>(dataset.size());
  const int K = params.K;
  const double d = params.d;
  const double sxi = params.sigma_xi;
  const double cap = bands.cap_factor * std::pow(static_cast<double>(ctx.C), -1.0 / ctx.q);
  const double log_d = std::log(d);
  const double noise_premise = bands.premise_noise * ctx.sigma_0 * sxi * std::sqrt(log_d);
  const std::vector<double> rho_hat = dataset_stats(dataset).rho_hat;
  const auto& frames = result.frames;

  EnvelopeReport rep;
  rep.feature_growth.name = "feature_growth";
  rep.noise_growth.name = "noise_growth";
  rep.feature_drift.name = "feature_drift";
  rep.noise_drift.name = "noise_drift";
  rep.heldout_drift.name = "heldout_drift";

  // Samples whose main feature stays below the cap over the whole window.
  std::vector<char> unlearned(n, 1);
  for (const auto& f : frames)
    for (int i = 0; i < n; ++i)
      if (f.feat_corr.row(dataset.samples[i].k_star).maxCoeff() > cap) unlearned[i] = 0;

  const double feat_drift_bound = bands.drift_c * ctx.eta * sxi * std::sqrt(log_d / d);
  const double noise_drift_bound = bands.drift_c * ctx.eta * (sxi * sxi + sxi) * std::sqrt(log_d / d);
  std::vector<double> feat_ratios;
  std::vector<double> noise_ratios;

  for (std::size_t j = 0; j + 1 < frames.size(); ++j) {
    const ProbeFrame& a = frames[j];
    const ProbeFrame& b = frames[j + 1];
    if (b.t != a.t + 1) continue;
    const double max_noise = a.noise_corr.size() > 0 ? a.noise_corr.maxCoeff() : 0.0;
    for (int k = 0; k < K; ++k) {
      const double g = a.feat_corr.row(k).maxCoeff();
      const double g1 = b.feat_corr.row(k).maxCoeff();
      if (g <= cap && max_noise <= noise_premise) {
        const double den = ctx.eta * rho_hat[k] * psi_prime(g, ctx.q);
        if (den > 0.0) {
          const double ratio = (g1 - g) / den;
          feat_ratios.push_back(ratio);
          record(rep.feature_growth, ratio >= bands.c1 && ratio <= bands.c2, a.t, k, ratio, bands.c1, bands.c2,
                 bands.max_listed);
        }
      }
      const double m = a.feat_corr.row(k).minCoeff();
      const double m1 = b.feat_corr.row(k).minCoeff();
      if (ctx.eta > 0.0)
        record(rep.feature_drift, m - m1 <= feat_drift_bound, a.t, k, m - m1, -kInf, feat_drift_bound,
               bands.max_listed);
    }
    for (int i = 0; i < n; ++i) {
      const double h = a.noise_corr[i];
      const double h1 = b.noise_corr[i];
      if (unlearned[i] && h <= cap) {
        const double den = ctx.eta / n * sxi * sxi * psi_prime(h, ctx.q);
        if (den > 0.0) {
          const double ratio = (h1 - h) / den;
          noise_ratios.push_back(ratio);
          record(rep.noise_growth, ratio >= bands.c1 && ratio <= bands.c2, a.t, i, ratio, bands.c1, bands.c2,
                 bands.max_listed);
        }
      }
      if (a.noise_corr_full && b.noise_corr_full && ctx.eta > 0.0) {
        const double m = a.noise_corr_full->row(i).minCoeff();
        const double m1 = b.noise_corr_full->row(i).minCoeff();
        record(rep.noise_drift, m - m1 <= noise_drift_bound, a.t, i, m - m1, -kInf, noise_drift_bound,
               bands.max_listed);
      }
    }
  }

  if (!frames.empty() && frames.front().heldout_corr) {
    const Eigen::MatrixXd& H0 = *frames.front().heldout_corr;
    const double band = bands.heldout_band * ctx.sigma_0 * sxi;
    for (std::size_t j = 1; j < frames.size(); ++j) {
      if (!frames[j].heldout_corr) continue;
      const Eigen::MatrixXd diff = (*frames[j].heldout_corr - H0).cwiseAbs();
      for (Eigen::Index m = 0; m < diff.cols(); ++m) {
        const double v = diff.col(m).maxCoeff();
        record(rep.heldout_drift, v <= band, frames[j].t, static_cast<int>(m), v, 0.0, band, bands.max_listed);
      }
    }
  }

  finish(rep.feature_growth, bands.quota, std::move(feat_ratios));
  finish(rep.noise_growth, bands.quota, std::move(noise_ratios));
  finish(rep.feature_drift, bands.quota);
  finish(rep.noise_drift, bands.quota);
  finish(rep.heldout_drift, bands.quota);
  return rep;
}

}  // namespace mvaug
