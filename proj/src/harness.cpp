#include "mvaug/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mvaug/augmentation.hpp"
#include "mvaug/baselines.hpp"
#include "mvaug/io.hpp"

namespace mvaug {
namespace {

namespace fs = std::filesystem;

AssumptionStatus grade(double ratio, const AssumptionThresholds& th) {
  if (!(ratio < th.violated)) return AssumptionStatus::kViolated;
  if (ratio <= th.ok) return AssumptionStatus::kOk;
  return AssumptionStatus::kBorderline;
}

/// Runs f(0..count-1) on up to `jobs` threads.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& f) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) f(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

TrainSummary summarize(const TrainResult& r) {
  TrainSummary s;
  s.stop_time = r.stop_time;
  s.stop_reason = r.stop_reason;
  s.steps = r.curve.empty() ? 0 : r.curve.back().t;
  if (!r.curve.empty()) {
    const CurvePoint& last = r.stop_time ? *std::find_if(r.curve.begin(), r.curve.end(),
                                                         [&](const CurvePoint& c) { return c.t == *r.stop_time; })
                                         : r.curve.back();
    s.final_loss = last.loss;
    s.final_min_margin = last.min_margin;
  }
  s.margin_histogram = r.margin_histogram;
  s.hist_lo = r.hist_lo;
  s.hist_hi = r.hist_hi;
  return s;
}

std::vector<double> feature_max(const Model& m, const DistParams& params) {
  std::vector<double> out(static_cast<std::size_t>(params.K));
  for (int k = 0; k < params.K; ++k) {
    const Eigen::VectorXd v = params.feature(k);
    out[static_cast<std::size_t>(k)] = (m.W * v).maxCoeff();
  }
  return out;
}

FitSummary fit_summary(std::vector<FitLabel> labels, const Dataset& ds) {
  FitSummary f;
  f.counts.assign(static_cast<std::size_t>(ds.params.K), {0, 0, 0, 0});
  for (std::size_t i = 0; i < labels.size(); ++i)
    ++f.counts[static_cast<std::size_t>(ds.samples[i].k_star)][static_cast<std::size_t>(labels[i].tag)];
  f.labels = std::move(labels);
  return f;
}

Eigen::MatrixXd heldout_noise(const DistParams& params, int m, std::uint64_t seed) {
  Eigen::MatrixXd H(params.d, m);
  RngStream root(seed);
  const double scale = params.sigma_xi / std::sqrt(static_cast<double>(params.d));
  for (int j = 0; j < m; ++j) {
    RngStream r = root.split(static_cast<std::uint64_t>(j));
    for (int i = 0; i < params.d; ++i) H(i, j) = scale * r.normal();
  }
  return H;
}

ProbeOptions no_probes() {
  ProbeOptions p;
  p.enabled = false;
  return p;
}

ArmSummary run_arm(const std::string& name, const Dataset& ds, const Model& init, const ScenarioSpec& spec,
                   const SeedPlan& plan, TrainResult* keep = nullptr, const ProbeOptions& probes = no_probes()) {
  ArmSummary a;
  a.name = name;
  a.n_train = static_cast<int>(ds.size());
  TrainResult r = train(ds, init, spec.train, probes);
  a.train = summarize(r);
  if (spec.n_test > 0) a.test = estimate_test_error(r.model, spec.params, spec.n_test, plan.test);
  a.feature_max = feature_max(r.model, spec.params);
  if (keep) *keep = std::move(r);
  return a;
}

void check(RunRecord& rec, const std::string& name, bool pass, const std::string& detail) {
  rec.assertions.push_back({name, pass, detail});
}

std::string num(double x) {
  std::ostringstream os;
  os.precision(4);
  os << x;
  return os.str();
}

/// Max-channel feature correlation per view at every recorded frame up to `until`.
void feature_series(RunRecord& rec, const TrainResult& r, std::optional<long> until) {
  if (r.frames.empty()) return;
  const Eigen::Index K = r.frames.front().feat_corr.rows();
  std::vector<double>& ts = rec.series["frame_t"];
  std::vector<std::vector<double>*> cols;
  for (Eigen::Index k = 0; k < K; ++k) cols.push_back(&rec.series["feat_max_k" + std::to_string(k)]);
  for (const ProbeFrame& f : r.frames) {
    if (until && f.t > *until) break;
    ts.push_back(static_cast<double>(f.t));
    for (Eigen::Index k = 0; k < K; ++k) cols[static_cast<std::size_t>(k)]->push_back(f.feat_corr.row(k).maxCoeff());
  }
}

void curve_series(RunRecord& rec, const TrainResult& r) {
  for (const CurvePoint& c : r.curve) {
    rec.series["curve_t"].push_back(static_cast<double>(c.t));
    rec.series["curve_loss"].push_back(c.loss);
    rec.series["curve_min_margin"].push_back(c.min_margin);
  }
}

double pooled_minor_error(const TestErrorReport& t) {
  int cnt = 0, err = 0;
  for (std::size_t k = 1; k < t.view_counts.size(); ++k) {
    cnt += t.view_counts[k];
    err += t.view_errors[k];
  }
  return cnt > 0 ? static_cast<double>(err) / cnt : std::nan("");
}

ProbeOptions probe_options(const ScenarioSpec& spec, const SeedPlan& plan) {
  ProbeOptions po;
  po.enabled = spec.probes;
  po.full_noise = spec.probes && spec.envelopes;
  if (spec.probes && spec.heldout > 0) po.heldout = heldout_noise(spec.params, spec.heldout, plan.heldout);
  return po;
}

void trained_run(RunRecord& rec, const Dataset& ds, const ScenarioSpec& spec, const SeedPlan& plan,
                 TrainResult& result) {
  const Model init = init_weights(spec.C, spec.params.d, spec.train.sigma_0, plan.init, spec.q);
  rec.ginit = check_ginit(init, ds, spec.train.sigma_0, spec.ginit);
  result = train(ds, init, spec.train, probe_options(spec, plan));
  rec.train = summarize(result);
  rec.fit = fit_summary(classify_fit(result, ds, default_thresholds(spec.C, spec.q)), ds);
  if (spec.n_test > 0) {
    rec.test = estimate_test_error(result.model, spec.params, spec.n_test, plan.test);
  } else {
    rec.skipped.emplace_back("test");
  }
  if (spec.probes && spec.envelopes) {
    rec.envelopes = envelope_monitor(result, ds, {spec.train.eta, spec.train.sigma_0, spec.C, spec.q}, spec.bands);
  } else {
    rec.skipped.emplace_back("envelopes");
  }
  feature_series(rec, result, result.stop_time);
  curve_series(rec, result);
  const std::vector<double> fm = feature_max(result.model, spec.params);
  for (std::size_t k = 0; k < fm.size(); ++k) rec.metrics["feature_max_k" + std::to_string(k)] = fm[k];
  if (result.continued_model) {
    const std::vector<double> fc = feature_max(*result.continued_model, spec.params);
    for (std::size_t k = 0; k < fc.size(); ++k) rec.metrics["continued_feature_max_k" + std::to_string(k)] = fc[k];
    rec.metrics["continued_until"] = static_cast<double>(*result.continued_until);
  }
}

void run_thm1(RunRecord& rec, const ScenarioSpec& spec, const SeedPlan& plan) {
  const Dataset ds = generate_dataset(spec.params, spec.n, spec.mode, plan.data);
  TrainResult r;
  trained_run(rec, ds, spec, plan, r);
  const double d = spec.params.d;
  const double cap = 3.0 * spec.train.sigma_0 * std::sqrt(std::log(d));
  double minor_max = -std::numeric_limits<double>::infinity();
  for (int k = 1; k < spec.params.K; ++k) {
    for (double v : rec.series["feat_max_k" + std::to_string(k)]) minor_max = std::max(minor_max, v);
  }
  rec.metrics["minor_feature_max"] = minor_max;
  rec.metrics["minor_feature_cap"] = cap;
  check(rec, "margin_reached", r.stop_time.has_value(), "stop_reason=" + r.stop_reason);
  check(rec, "minor_features_capped", minor_max <= cap,
        "max over t <= stop, k >= 1 of max_c <w_c, v_k> = " + num(minor_max) + " vs cap " + num(cap));
  int minor = 0, memorized = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.samples[i].k_star == 0) continue;
    ++minor;
    memorized += rec.fit->labels[i].noise_memorized();
  }
  rec.metrics["minor_samples"] = minor;
  rec.metrics["minor_memorized"] = memorized;
  check(rec, "minor_samples_memorized", memorized == minor,
        std::to_string(memorized) + "/" + std::to_string(minor) + " minor-view samples noise_memorized");
  if (rec.test) {
    const double pooled = pooled_minor_error(*rec.test);
    rec.metrics["minor_view_error"] = pooled;
    for (std::size_t k = 0; k < rec.test->view_error.size(); ++k)
      rec.metrics["view_error_k" + std::to_string(k)] = rec.test->view_error[k];
    check(rec, "minor_view_error_near_half", pooled >= 0.3 && pooled <= 0.7,
          "pooled minor-view conditional error " + num(pooled) + " in [0.3, 0.7]");
    double minor_mass = 0.0;
    for (int k = 1; k < spec.params.K; ++k) minor_mass += spec.params.rho[static_cast<std::size_t>(k)];
    rec.metrics["predicted_error"] = 0.5 * minor_mass;
    check(rec, "total_error_matches", std::abs(rec.test->error - 0.5 * minor_mass) <= 0.1,
          "test error " + num(rec.test->error) + " vs 0.5*sum_{k>=1} rho_k = " + num(0.5 * minor_mass));
  }
  if (rec.envelopes) {
    const EnvelopeCheck& e = rec.envelopes->noise_growth;
    check(rec, "noise_envelope", e.pass,
          "compliance " + num(e.fraction) + " over " + std::to_string(e.checked) + " steps");
  }
}

void run_thm2(RunRecord& rec, const ScenarioSpec& spec, const SeedPlan& plan) {
  const Dataset base = generate_dataset(spec.params, spec.n, spec.mode, plan.data);
  const Dataset ds = augment_dataset(base);
  TrainResult r;
  trained_run(rec, ds, spec, plan, r);
  const double tau = 0.5 * std::pow(static_cast<double>(spec.C), -1.0 / spec.q);
  check(rec, "margin_reached", r.stop_time.has_value(), "stop_reason=" + r.stop_reason);
  double fmin = std::numeric_limits<double>::infinity();
  for (int k = 0; k < spec.params.K; ++k) fmin = std::min(fmin, rec.metrics["feature_max_k" + std::to_string(k)]);
  rec.metrics["feature_min_over_views"] = fmin;
  rec.metrics["feature_threshold"] = tau;
  check(rec, "all_features_learned", fmin >= tau,
        "min_k max_c <w_c, v_k> = " + num(fmin) + " vs 0.5*C^(-1/q) = " + num(tau));
  int learned = 0, both = 0;
  for (const FitLabel& l : rec.fit->labels) {
    learned += l.feature_learned();
    both += l.tag == FitTag::kBoth;
  }
  rec.metrics["samples_feature_learned"] = learned;
  rec.metrics["samples_both"] = both;
  check(rec, "all_samples_feature_learned", learned == static_cast<int>(ds.size()),
        std::to_string(learned) + "/" + std::to_string(ds.size()) + " (of which " + std::to_string(both) +
            " also above the noise threshold)");
  if (rec.test) {
    check(rec, "test_error_small", rec.test->error <= 0.01, "test error " + num(rec.test->error) + " <= 0.01");
  }
  if (rec.envelopes) {
    const EnvelopeCheck& e = rec.envelopes->feature_growth;
    check(rec, "feature_envelope", e.pass,
          "compliance " + num(e.fraction) + " over " + std::to_string(e.checked) + " steps");
  }
  // Same data, initialization and stopping rule without augmentation.
  const Model init = init_weights(spec.C, spec.params.d, spec.train.sigma_0, plan.init, spec.q);
  rec.arms.push_back(run_arm("original", base, init, spec, plan));
  const auto& t0 = rec.arms.back().train.stop_time;
  if (t0) rec.metrics["original_stop_time"] = static_cast<double>(*t0);
  check(rec, "faster_than_original", r.stop_time && t0 && *r.stop_time < *t0,
        "T_aug=" + (r.stop_time ? std::to_string(*r.stop_time) : std::string("none")) +
            " vs T=" + (t0 ? std::to_string(*t0) : std::string("none")));
}

void run_scaling(RunRecord& rec, const ScenarioSpec& spec, const SeedPlan& plan) {
  Dataset ds = generate_dataset(spec.params, spec.n, spec.mode, plan.data);
  if (spec.augment) ds = augment_dataset(ds);
  TrainResult r;
  trained_run(rec, ds, spec, plan, r);
  if (r.stop_time) rec.metrics["stop_time"] = static_cast<double>(*r.stop_time);
  check(rec, "margin_reached", r.stop_time.has_value(), "stop_reason=" + r.stop_reason);
}

void run_cutoff(RunRecord& rec, const ScenarioSpec& spec, const SeedPlan& plan) {
  const Dataset ds = generate_dataset(spec.params, spec.n, spec.mode, plan.data);
  const Cutoffs c = cutoffs(spec.params, spec.n, spec.tensor_q > 0 ? spec.tensor_q : spec.q);
  rec.metrics["rho_cut_linear"] = c.rho_cut_linear;
  rec.metrics["rho_cut_tensor"] = c.rho_cut_tensor;
  if (spec.params.K >= 2) rec.metrics["rho_2"] = spec.params.rho[1];
  const ViewAccuracy lin = evaluate_linear(mean_linear(ds), spec.params, spec.n_test, plan.test);
  for (std::size_t k = 0; k < lin.view_accuracy.size(); ++k)
    rec.metrics["linear_view_accuracy_k" + std::to_string(k)] = lin.view_accuracy[k];
  rec.metrics["linear_accuracy"] = lin.accuracy;
  if (spec.tensor_q > 0) {
    const ViewAccuracy ten = evaluate_tensor(ds, spec.tensor_q, spec.n_test, plan.test);
    for (std::size_t k = 0; k < ten.view_accuracy.size(); ++k)
      rec.metrics["tensor_view_accuracy_k" + std::to_string(k)] = ten.view_accuracy[k];
    rec.metrics["tensor_accuracy"] = ten.accuracy;
  }
  rec.skipped.insert(rec.skipped.end(), {"train", "ginit", "fit", "test", "envelopes"});
}

/// Feature-permuted copies of samples from the class under-represented among the carriers of u,
/// each copy carrying u, until both classes hold the same number of carriers. Existing carriers
/// are copied first; when that class has none, its other samples receive u.
Dataset balance_spurious(const Dataset& ds, int& added) {
  Dataset out = ds;
  added = 0;
  const SpuriousConfig& sp = *ds.params.spurious;
  int su = 0;
  for (const Sample& s : ds.samples) su += s.has_spurious ? s.y : 0;
  if (su == 0) return out;
  const int deficit = su > 0 ? -1 : 1;
  std::vector<int> pool;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.samples[i].y == deficit && ds.samples[i].has_spurious) pool.push_back(static_cast<int>(i));
  if (pool.empty())
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.samples[i].y == deficit) pool.push_back(static_cast<int>(i));
  if (pool.empty()) return out;
  const int K = ds.params.K;
  const int need = std::abs(su);
  for (int j = 0; j < need; ++j) {
    const Sample& src = ds.samples[static_cast<std::size_t>(pool[static_cast<std::size_t>(j) % pool.size()])];
    const int round = j / static_cast<int>(pool.size());
    Sample copy = K >= 2 ? apply(build_permutation(1 + (round % (K - 1)), ds.params.d, K), src,
                                 /*preserve_spurious=*/true)
                         : src;
    if (!copy.has_spurious) {
      copy.has_spurious = true;
      copy.spurious = sp.u;
      copy.spurious_slot = sp.slot;
    }
    out.samples.push_back(std::move(copy));
    ++added;
  }
  return out;
}

struct SpuriousGrowth {
  long checked = 0;
  long compliant = 0;
  double median = std::nan("");
};

/// Per-step growth of the leading <w_c, u> against eta * (sum_{i in I_u} y_i / n) * psi'(h) / 2,
/// over steps where no feature, noise or spurious correlation has left the initial regime.
SpuriousGrowth spurious_growth(const TrainResult& r, const Dataset& ds, const ScenarioSpec& spec) {
  SpuriousGrowth g;
  double su = 0.0;
  for (const Sample& s : ds.samples) su += s.has_spurious ? s.y : 0;
  const double rate = spec.train.eta * su / static_cast<double>(ds.size()) * 0.5;
  const double cap = spec.bands.cap_factor * std::pow(static_cast<double>(spec.C), -1.0 / spec.q);
  std::vector<double> ratios;
  for (std::size_t j = 0; j + 1 < r.frames.size(); ++j) {
    const ProbeFrame& a = r.frames[j];
    const ProbeFrame& b = r.frames[j + 1];
    if (b.t != a.t + 1 || !a.spurious_corr || !b.spurious_corr) continue;
    if (r.stop_time && b.t > *r.stop_time) break;
    Eigen::Index c = 0;
    const double h = a.spurious_corr->maxCoeff(&c);
    if (!(h > 0.0) || h > cap || rate <= 0.0) continue;
    if (a.feat_corr.maxCoeff() > cap || (a.noise_corr.size() > 0 && a.noise_corr.maxCoeff() > cap)) continue;
    const double ratio = ((*b.spurious_corr)[c] - h) / (rate * psi_prime(h, spec.q));
    ratios.push_back(ratio);
    ++g.checked;
    g.compliant += ratio >= spec.bands.c1 && ratio <= spec.bands.c2;
  }
  if (!ratios.empty()) g.median = median(ratios);
  return g;
}

void run_spurious(RunRecord& rec, const ScenarioSpec& spec, const SeedPlan& plan) {
  const Dataset ds = generate_dataset(spec.params, spec.n, spec.mode, plan.data);
  TrainResult r;
  trained_run(rec, ds, spec, plan, r);
  const Eigen::VectorXd& u = spec.params.spurious->u;
  const double base_u = (r.model.W * u).maxCoeff();
  rec.metrics["u_corr_max"] = base_u;
  int su = 0;
  for (const Sample& s : ds.samples) su += s.has_spurious ? s.y : 0;
  rec.metrics["u_label_sum"] = su;
  const SpuriousGrowth g = spurious_growth(r, ds, spec);
  rec.metrics["u_growth_checked"] = static_cast<double>(g.checked);
  rec.metrics["u_growth_compliant"] = static_cast<double>(g.compliant);
  rec.metrics["u_growth_ratio_median"] = g.median;
  for (const ProbeFrame& f : r.frames) {
    if (r.stop_time && f.t > *r.stop_time) break;
    if (f.spurious_corr) rec.series["u_corr_max"].push_back(f.spurious_corr->maxCoeff());
  }
  check(rec, "margin_reached", r.stop_time.has_value(), "stop_reason=" + r.stop_reason);
  const double frac = g.checked > 0 ? static_cast<double>(g.compliant) / g.checked : 0.0;
  check(rec, "u_growth_rate", g.checked > 0 && frac >= spec.bands.quota,
        "growth ratio median " + num(g.median) + ", compliance " + num(frac) + " over " + std::to_string(g.checked) +
            " steps");
  if (!spec.countermeasure) return;
  int added = 0;
  const Dataset bal = balance_spurious(ds, added);
  int su_bal = 0;
  for (const Sample& s : bal.samples) su_bal += s.has_spurious ? s.y : 0;
  rec.metrics["countermeasure_copies"] = added;
  rec.metrics["countermeasure_u_label_sum"] = su_bal;
  const Model init = init_weights(spec.C, spec.params.d, spec.train.sigma_0, plan.init, spec.q);
  TrainResult rb;
  rec.arms.push_back(run_arm("balanced_u", bal, init, spec, plan, &rb));
  const double bal_u = (rb.model.W * u).maxCoeff();
  rec.metrics["countermeasure_u_corr_max"] = bal_u;
  check(rec, "countermeasure_balances_u", su_bal == 0, "sum of labels over u carriers " + std::to_string(su_bal));
  check(rec, "countermeasure_suppresses_u", bal_u < base_u,
        "max_c <w_c, u>: " + num(bal_u) + " with balancing vs " + num(base_u) + " without");
}

void run_unbalanced(RunRecord& rec, const ScenarioSpec& spec, const SeedPlan& plan) {
  const Dataset bal = generate_dataset(spec.params, spec.n, spec.mode, plan.data);
  Dataset full = bal;
  RngStream root(plan.aux);
  for (int j = 0; j < spec.extra_view0; ++j) {
    RngStream r = root.split(static_cast<std::uint64_t>(j));
    full.samples.push_back(sample_point(spec.params, r, std::nullopt, 0));
  }
  const Model init = init_weights(spec.C, spec.params.d, spec.train.sigma_0, plan.init, spec.q);
  rec.ginit = check_ginit(init, bal, spec.train.sigma_0, spec.ginit);
  rec.arms.push_back(run_arm("balanced", bal, init, spec, plan));
  rec.arms.push_back(run_arm("full", full, init, spec, plan));
  const double acc_bal = 1.0 - rec.arms[0].test.error;
  const double acc_full = 1.0 - rec.arms[1].test.error;
  rec.metrics["balanced_accuracy"] = acc_bal;
  rec.metrics["full_accuracy"] = acc_full;
  check(rec, "balanced_on_par", acc_bal >= acc_full - 0.01,
        "balanced-subset accuracy " + num(acc_bal) + " vs full " + num(acc_full) + " - 0.01");
  rec.skipped.insert(rec.skipped.end(), {"train", "fit", "test", "envelopes"});
}

void run_aug_vs_iid(RunRecord& rec, const ScenarioSpec& spec, const SeedPlan& plan) {
  const int m = static_cast<int>(std::lround(spec.p * spec.n));
  const Dataset iid = generate_dataset(spec.params, m, spec.mode, plan.data);
  const Dataset full = generate_dataset(spec.params, spec.n, spec.mode, plan.data);
  Dataset mixed = iid;
  const int K = spec.params.K;
  for (int j = 0; j < spec.n - m; ++j) {
    const int src = j % m;
    const int round = j / m;
    const int shift = 1 + ((src + round) % (K - 1));
    mixed.samples.push_back(apply(build_permutation(shift, spec.params.d, K), iid.samples[static_cast<std::size_t>(src)]));
  }
  const Model init = init_weights(spec.C, spec.params.d, spec.train.sigma_0, plan.init, spec.q);
  rec.ginit = check_ginit(init, iid, spec.train.sigma_0, spec.ginit);
  rec.arms.push_back(run_arm("iid_only", iid, init, spec, plan));
  rec.arms.push_back(run_arm("mixed", mixed, init, spec, plan));
  rec.arms.push_back(run_arm("full_iid", full, init, spec, plan));
  const double e_iid = rec.arms[0].test.error;
  const double e_mix = rec.arms[1].test.error;
  const double e_full = rec.arms[2].test.error;
  rec.metrics["iid_only_error"] = e_iid;
  rec.metrics["mixed_error"] = e_mix;
  rec.metrics["full_iid_error"] = e_full;
  check(rec, "mixed_beats_iid_only", e_mix < e_iid, "mixed " + num(e_mix) + " < iid-only " + num(e_iid));
  check(rec, "mixed_near_full", std::abs(e_mix - e_full) <= 0.02,
        "|mixed - full| = " + num(std::abs(e_mix - e_full)) + " <= 0.02");
  rec.skipped.insert(rec.skipped.end(), {"train", "fit", "test", "envelopes"});
}

json train_json(const TrainSummary& t) {
  return {{"stop_time", t.stop_time ? json(*t.stop_time) : json(nullptr)},
          {"stop_reason", t.stop_reason},
          {"steps", t.steps},
          {"final_loss", t.final_loss},
          {"final_min_margin", t.final_min_margin},
          {"margin_histogram", t.margin_histogram},
          {"hist_lo", t.hist_lo},
          {"hist_hi", t.hist_hi}};
}

json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json train_config_json(const TrainConfig& c) {
  return {{"eta", c.eta},
          {"sigma_0", c.sigma_0},
          {"margin_target", c.margin_target},
          {"max_steps", c.max_steps},
          {"record_every", c.record_every},
          {"seed", c.seed},
          {"continue_factor", c.continue_factor}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  c.eta = j.value("eta", c.eta);
  c.sigma_0 = j.value("sigma_0", c.sigma_0);
  c.margin_target = j.value("margin_target", c.margin_target);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.record_every = j.value("record_every", c.record_every);
  c.seed = j.value("seed", c.seed);
  c.continue_factor = j.value("continue_factor", c.continue_factor);
  return c;
}

std::string csv_num(double x) {
  if (!std::isfinite(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

const char* to_string(AssumptionStatus s) {
  switch (s) {
    case AssumptionStatus::kOk: return "ok";
    case AssumptionStatus::kBorderline: return "borderline";
    case AssumptionStatus::kViolated: return "violated";
    case AssumptionStatus::kInactive: return "inactive";
  }
  return "ok";
}

bool AssumptionReport::sign_consistent() const {
  return std::all_of(conditions.begin(), conditions.end(), [](const AssumptionCheck& c) { return c.sign_consistent(); });
}

AssumptionReport validate_assumptions(const DistParams& params, int n, double sigma_0, int q, double eta, int C,
                                      const AssumptionThresholds& th) {
  AssumptionReport rep;
  const double sq = std::pow(params.sigma_xi, q);
  const double d = params.d;
  const double K = params.K;

  AssumptionCheck c1;
  c1.index = 1;
  c1.name = "dominant_view";
  double rho_minor = 0.0;
  for (std::size_t k = 1; k < params.rho.size(); ++k) rho_minor = std::max(rho_minor, params.rho[k]);
  const double rho_1 = params.rho.empty() ? 0.0 : params.rho.front();
  c1.ratio = n * rho_minor / sq;
  c1.terms = {{"rho_1", rho_1}, {"n_rho_minor", n * rho_minor}, {"sigma_xi^q", sq}};
  c1.status = grade(c1.ratio, th);
  if (rho_1 < rho_minor) {
    c1.status = AssumptionStatus::kViolated;
    c1.note = "the first view is not the most frequent";
  }
  rep.conditions.push_back(c1);

  AssumptionCheck c2;
  c2.index = 2;
  c2.name = "noise_scale";
  const double upper = sq / n;
  const double lower = 1.0 / sq;
  c2.ratio = std::max(upper, lower);
  c2.terms = {{"sigma_xi^q/n", upper}, {"1/sigma_xi^q", lower}};
  c2.status = grade(c2.ratio, th);
  rep.conditions.push_back(c2);

  AssumptionCheck c3;
  c3.index = 3;
  c3.name = "init_scale";
  c3.ratio = sigma_0 * params.sigma_xi;
  c3.terms = {{"sigma_0*sigma_xi", c3.ratio}};
  c3.status = grade(c3.ratio, th);
  rep.conditions.push_back(c3);

  AssumptionCheck c4;
  c4.index = 4;
  c4.name = "sample_budget";
  const double budget = std::pow(sigma_0, q - 1) * std::pow(params.sigma_xi, q - 1) * std::sqrt(d);
  c4.ratio = n * K / budget;
  c4.terms = {{"nK", n * K}, {"sigma_0^(q-1) sigma_xi^(q-1) sqrt(d)", budget}};
  c4.status = grade(c4.ratio, th);
  rep.conditions.push_back(c4);

  AssumptionCheck c5;
  c5.index = 5;
  c5.name = "feature_noise_window";
  const double s0q = std::pow(sigma_0, q - 2);
  const double T = std::max(n / (eta * sq * s0q), K / (eta * s0q));
  const double P = params.P;
  const double hi = 1.0 / (eta * T) * std::pow(P, -1.0 / q) * params.sigma_xi * std::min(1.0 / std::sqrt(d), sigma_0);
  c5.terms = {{"T", T}, {"alpha", params.alpha}, {"alpha_upper", hi}, {"C", C}};
  if (params.alpha <= 0.0 || params.P <= 2) {
    c5.status = AssumptionStatus::kInactive;
    c5.ratio = 0.0;
    c5.note = "no feature noise";
  } else {
    const double lo_ratio = 1.0 / (P * params.alpha);
    const double hi_ratio = params.alpha / hi;
    c5.terms["1/(P alpha)"] = lo_ratio;
    c5.terms["alpha/alpha_upper"] = hi_ratio;
    c5.ratio = std::max(lo_ratio, hi_ratio);
    c5.status = grade(c5.ratio, th);
  }
  rep.conditions.push_back(c5);
  return rep;
}

const char* to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kThm1: return "thm1";
    case ScenarioKind::kThm2: return "thm2";
    case ScenarioKind::kScaling: return "scaling";
    case ScenarioKind::kCutoff: return "cutoff";
    case ScenarioKind::kSpurious: return "spurious";
    case ScenarioKind::kUnbalanced: return "unbalanced";
    case ScenarioKind::kAugVsIid: return "aug_vs_iid";
  }
  return "thm1";
}

ScenarioKind scenario_kind_from_string(const std::string& name) {
  for (ScenarioKind k : {ScenarioKind::kThm1, ScenarioKind::kThm2, ScenarioKind::kScaling, ScenarioKind::kCutoff,
                         ScenarioKind::kSpurious, ScenarioKind::kUnbalanced, ScenarioKind::kAugVsIid}) {
    if (name == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown scenario: " + name);
}

std::vector<std::string> validate_spec(const ScenarioSpec& spec) {
  std::vector<std::string> out;
  for (const std::string& e : validate_params(spec.params)) out.push_back("params: " + e);
  for (const std::string& e : validate_config(spec.train)) out.push_back("train: " + e);
  if (spec.n < 1) out.emplace_back("n must be positive");
  if (spec.C < 1) out.emplace_back("C must be positive");
  if (spec.q < 2) out.emplace_back("q must be at least 2");
  if (spec.seeds.empty()) out.emplace_back("seeds list is empty");
  if (spec.n_test < 0) out.emplace_back("n_test must be non-negative");
  if (spec.probes && spec.envelopes && spec.train.record_every != 1)
    out.emplace_back("envelope monitors need record_every = 1");
  const bool needs_aug = spec.kind == ScenarioKind::kThm2 || (spec.kind == ScenarioKind::kScaling && spec.augment) ||
                         spec.kind == ScenarioKind::kAugVsIid;
  if (needs_aug) {
    if (!spec.params.standard_basis()) out.emplace_back("augmentation requires the standard feature basis");
    if (spec.params.K < 2) out.emplace_back("augmentation requires K >= 2");
    if (spec.params.d - spec.params.K < 2) out.emplace_back("augmentation requires d - K >= 2");
  }
  switch (spec.kind) {
    case ScenarioKind::kThm1:
    case ScenarioKind::kThm2:
      if (spec.n_test < 1) out.emplace_back("thm1 and thm2 need a test set");
      break;
    case ScenarioKind::kCutoff:
      if (spec.params.K < 2) out.emplace_back("cutoff needs K >= 2");
      if (spec.n_test < 1) out.emplace_back("cutoff needs a test set");
      if (spec.tensor_q > 0 && spec.tensor_q % 2 == 0) out.emplace_back("tensor_q must be odd");
      break;
    case ScenarioKind::kSpurious:
      if (!spec.params.spurious) out.emplace_back("spurious scenario needs params.spurious");
      if (!spec.probes) out.emplace_back("spurious scenario needs probes");
      if (spec.train.record_every != 1) out.emplace_back("spurious growth check needs record_every = 1");
      if (spec.countermeasure && !spec.params.standard_basis())
        out.emplace_back("countermeasure requires the standard feature basis");
      break;
    case ScenarioKind::kUnbalanced:
      if (spec.extra_view0 < 1) out.emplace_back("unbalanced needs extra_view0 >= 1");
      if (spec.n_test < 1) out.emplace_back("unbalanced needs a test set");
      break;
    case ScenarioKind::kAugVsIid:
      if (!(spec.p > 0.0 && spec.p < 1.0)) out.emplace_back("p must lie in (0, 1)");
      if (std::lround(spec.p * spec.n) < 1) out.emplace_back("p * n rounds to zero samples");
      if (spec.n_test < 1) out.emplace_back("aug_vs_iid needs a test set");
      break;
    case ScenarioKind::kScaling: break;
  }
  return out;
}

json to_json(const ScenarioSpec& s) {
  const EnvelopeBands& b = s.bands;
  const GinitTolerances& g = s.ginit;
  return {{"scenario", to_string(s.kind)},
          {"params", to_json(s.params)},
          {"n", s.n},
          {"mode", to_string(s.mode)},
          {"train", train_config_json(s.train)},
          {"C", s.C},
          {"q", s.q},
          {"probes", s.probes},
          {"envelopes", s.envelopes},
          {"heldout", s.heldout},
          {"bands",
           {{"c1", b.c1},
            {"c2", b.c2},
            {"quota", b.quota},
            {"cap_factor", b.cap_factor},
            {"premise_noise", b.premise_noise},
            {"drift_c", b.drift_c},
            {"heldout_band", b.heldout_band},
            {"max_listed", b.max_listed}}},
          {"ginit",
           {{"c_lo", g.c_lo},
            {"c_hi", g.c_hi},
            {"c_norm", g.c_norm},
            {"c_cross", g.c_cross},
            {"norm_lo", g.norm_lo},
            {"norm_hi", g.norm_hi},
            {"relax_noise_lower", g.relax_noise_lower}}},
          {"n_test", s.n_test},
          {"seeds", s.seeds},
          {"minor_count", s.minor_count},
          {"augment", s.augment},
          {"p", s.p},
          {"extra_view0", s.extra_view0},
          {"countermeasure", s.countermeasure},
          {"tensor_q", s.tensor_q}};
}

ScenarioSpec spec_from_json(const json& j, const ScenarioSpec& base) {
  ScenarioSpec s = base;
  if (j.contains("scenario")) s.kind = scenario_kind_from_string(j["scenario"].get<std::string>());
  if (j.contains("params")) {
    // Merge so a config may override single distribution fields.
    json p = to_json(base.params);
    if (base.params.d == 0) p["rho"] = json::array();
    for (const auto& [key, val] : j["params"].items()) p[key] = val;
    s.params = params_from_json(p);
  }
  s.n = j.value("n", s.n);
  if (j.contains("mode")) s.mode = sampling_mode_from_string(j["mode"].get<std::string>());
  if (j.contains("train")) s.train = train_config_from_json(j["train"], s.train);
  s.C = j.value("C", s.C);
  s.q = j.value("q", s.q);
  s.probes = j.value("probes", s.probes);
  s.envelopes = j.value("envelopes", s.envelopes);
  s.heldout = j.value("heldout", s.heldout);
  if (j.contains("bands")) {
    const json& b = j["bands"];
    s.bands.c1 = b.value("c1", s.bands.c1);
    s.bands.c2 = b.value("c2", s.bands.c2);
    s.bands.quota = b.value("quota", s.bands.quota);
    s.bands.cap_factor = b.value("cap_factor", s.bands.cap_factor);
    s.bands.premise_noise = b.value("premise_noise", s.bands.premise_noise);
    s.bands.drift_c = b.value("drift_c", s.bands.drift_c);
    s.bands.heldout_band = b.value("heldout_band", s.bands.heldout_band);
    s.bands.max_listed = b.value("max_listed", s.bands.max_listed);
  }
  if (j.contains("ginit")) {
    const json& g = j["ginit"];
    s.ginit.c_lo = g.value("c_lo", s.ginit.c_lo);
    s.ginit.c_hi = g.value("c_hi", s.ginit.c_hi);
    s.ginit.c_norm = g.value("c_norm", s.ginit.c_norm);
    s.ginit.c_cross = g.value("c_cross", s.ginit.c_cross);
    s.ginit.norm_lo = g.value("norm_lo", s.ginit.norm_lo);
    s.ginit.norm_hi = g.value("norm_hi", s.ginit.norm_hi);
    s.ginit.relax_noise_lower = g.value("relax_noise_lower", s.ginit.relax_noise_lower);
  }
  s.n_test = j.value("n_test", s.n_test);
  if (j.contains("seeds")) s.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  s.minor_count = j.value("minor_count", s.minor_count);
  s.augment = j.value("augment", s.augment);
  s.p = j.value("p", s.p);
  s.extra_view0 = j.value("extra_view0", s.extra_view0);
  s.countermeasure = j.value("countermeasure", s.countermeasure);
  s.tensor_q = j.value("tensor_q", s.tensor_q);
  return s;
}

SeedPlan seed_plan(std::uint64_t s) { return {s, s + 1000, s + 2000, s + 3000, s + 4000}; }

bool RunRecord::passed() const {
  return error.empty() && std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.pass; });
}

RunRecord run_scenario(const ScenarioSpec& spec) {
  if (spec.seeds.empty()) throw std::invalid_argument("spec has no seeds");
  return run_scenario(spec, spec.seeds.front());
}

RunRecord run_scenario(const ScenarioSpec& spec, std::uint64_t seed) {
  const auto problems = validate_spec(spec);
  if (!problems.empty()) throw std::invalid_argument("invalid scenario spec: " + problems.front());
  RunRecord rec;
  rec.spec = spec;
  rec.spec.seeds = {seed};
  rec.seed = seed;
  rec.assumptions = validate_assumptions(spec.params, spec.n, spec.train.sigma_0, spec.q, spec.train.eta, spec.C);
  const SeedPlan plan = seed_plan(seed);
  const auto start = std::chrono::steady_clock::now();
  try {
    switch (spec.kind) {
      case ScenarioKind::kThm1: run_thm1(rec, spec, plan); break;
      case ScenarioKind::kThm2: run_thm2(rec, spec, plan); break;
      case ScenarioKind::kScaling: run_scaling(rec, spec, plan); break;
      case ScenarioKind::kCutoff: run_cutoff(rec, spec, plan); break;
      case ScenarioKind::kSpurious: run_spurious(rec, spec, plan); break;
      case ScenarioKind::kUnbalanced: run_unbalanced(rec, spec, plan); break;
      case ScenarioKind::kAugVsIid: run_aug_vs_iid(rec, spec, plan); break;
    }
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::vector<RunRecord> run_seeds(const ScenarioSpec& spec, int jobs) {
  std::vector<RunRecord> out(spec.seeds.size());
  parallel_for(spec.seeds.size(), jobs, [&](std::size_t i) { out[i] = run_scenario(spec, spec.seeds[i]); });
  return out;
}

json to_json(const RunRecord& r) {
  json j;
  j["scenario"] = to_string(r.spec.kind);
  j["seed"] = r.seed;
  j["spec"] = to_json(r.spec);
  j["axis"] = r.axis ? json{{"name", r.axis->first}, {"value", r.axis->second}} : json(nullptr);
  if (r.assumptions) {
    json conds = json::array();
    for (const AssumptionCheck& c : r.assumptions->conditions) {
      json terms;
      for (const auto& [k, v] : c.terms) terms[k] = number(v);
      conds.push_back({{"index", c.index},
                       {"name", c.name},
                       {"ratio", number(c.ratio)},
                       {"status", to_string(c.status)},
                       {"sign_consistent", c.sign_consistent()},
                       {"terms", terms},
                       {"note", c.note}});
    }
    j["assumptions"] = conds;
  } else {
    j["assumptions"] = "skipped";
  }
  j["train"] = r.train ? train_json(*r.train) : json("skipped");
  j["ginit"] = r.ginit ? to_json(*r.ginit) : json("skipped");
  if (r.fit) {
    json counts = json::array();
    for (const auto& c : r.fit->counts)
      counts.push_back({{"feature_learned", c[0]}, {"noise_memorized", c[1]}, {"both", c[2]}, {"unfit", c[3]}});
    j["fit"] = {{"per_view", counts}};
  } else {
    j["fit"] = "skipped";
  }
  j["test"] = r.test ? to_json(*r.test) : json("skipped");
  j["envelopes"] = r.envelopes ? to_json(*r.envelopes) : json("skipped");
  json arms = json::array();
  for (const ArmSummary& a : r.arms) {
    arms.push_back({{"name", a.name},
                    {"n_train", a.n_train},
                    {"train", train_json(a.train)},
                    {"test", to_json(a.test)},
                    {"feature_max", a.feature_max}});
  }
  j["arms"] = arms;
  json metrics = json::object();
  for (const auto& [k, v] : r.metrics) metrics[k] = number(v);
  j["metrics"] = metrics;
  json asserts = json::array();
  for (const Assertion& a : r.assertions) asserts.push_back({{"name", a.name}, {"pass", a.pass}, {"detail", a.detail}});
  j["assertions"] = asserts;
  j["passed"] = r.passed();
  j["skipped"] = r.skipped;
  j["error"] = r.error;
  j["wall_seconds"] = r.wall_seconds;
  j["artifacts"] = r.artifacts;
  return j;
}

// ---------------------------------------------------------------------------

const char* to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::kN: return "n";
    case SweepAxis::kSigmaXi: return "sigma_xi";
    case SweepAxis::kSigma0: return "sigma_0";
    case SweepAxis::kRho2: return "rho_2";
    case SweepAxis::kP: return "p";
    case SweepAxis::kK: return "K";
  }
  return "n";
}

SweepAxis sweep_axis_from_string(const std::string& name) {
  for (SweepAxis a : {SweepAxis::kN, SweepAxis::kSigmaXi, SweepAxis::kSigma0, SweepAxis::kRho2, SweepAxis::kP,
                      SweepAxis::kK}) {
    if (name == to_string(a)) return a;
  }
  throw std::invalid_argument("unknown sweep axis: " + name);
}

ScenarioSpec apply_axis(const ScenarioSpec& spec, SweepAxis axis, double value) {
  ScenarioSpec s = spec;
  auto minor_rho = [&](int K, int n) {
    s.params.rho.assign(static_cast<std::size_t>(K), s.minor_count / n);
    s.params.rho[0] = 1.0 - (K - 1) * s.minor_count / n;
  };
  switch (axis) {
    case SweepAxis::kN:
      s.n = static_cast<int>(std::lround(value));
      if (s.minor_count > 0) minor_rho(s.params.K, s.n);
      break;
    case SweepAxis::kSigmaXi: s.params.sigma_xi = value; break;
    case SweepAxis::kSigma0: s.train.sigma_0 = value; break;
    case SweepAxis::kRho2: {
      if (s.params.K < 2) throw std::invalid_argument("rho_2 axis needs K >= 2");
      s.params.rho[1] = value;
      double rest = 0.0;
      for (std::size_t k = 1; k < s.params.rho.size(); ++k) rest += s.params.rho[k];
      s.params.rho[0] = 1.0 - rest;
      break;
    }
    case SweepAxis::kP: s.p = value; break;
    case SweepAxis::kK:
      s.params.K = static_cast<int>(std::lround(value));
      if (s.minor_count > 0) {
        minor_rho(s.params.K, s.n);
      } else {
        s.params.rho.assign(static_cast<std::size_t>(s.params.K), 1.0 / s.params.K);
      }
      break;
  }
  return s;
}

std::vector<SweepPoint> sweep(const ScenarioSpec& spec, SweepAxis axis, const std::vector<double>& grid, int jobs) {
  if (grid.size() < 4) throw std::invalid_argument("sweep grid needs at least 4 points");
  const bool inc = grid[1] > grid[0];
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (inc ? !(grid[i] > grid[i - 1]) : !(grid[i] < grid[i - 1]))
      throw std::invalid_argument("sweep grid is not strictly monotone");
  }
  if (spec.seeds.size() < 3) throw std::invalid_argument("sweep needs at least 3 seeds per point");
  std::vector<ScenarioSpec> specs;
  for (double v : grid) {
    specs.push_back(apply_axis(spec, axis, v));
    const auto problems = validate_spec(specs.back());
    if (!problems.empty())
      throw std::invalid_argument("sweep point " + csv_num(v) + " invalid: " + problems.front());
  }
  const std::size_t S = spec.seeds.size();
  std::vector<RunRecord> flat(grid.size() * S);
  parallel_for(flat.size(), jobs, [&](std::size_t idx) {
    const std::size_t g = idx / S;
    RunRecord r = run_scenario(specs[g], spec.seeds[idx % S]);
    r.axis = std::make_pair(std::string(to_string(axis)), grid[g]);
    flat[idx] = std::move(r);
  });
  std::vector<SweepPoint> out(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    SweepPoint& p = out[g];
    p.value = grid[g];
    std::vector<double> times;
    for (std::size_t s = 0; s < S; ++s) {
      RunRecord& r = flat[g * S + s];
      if (r.train && r.train->stop_time) {
        times.push_back(static_cast<double>(*r.train->stop_time));
      } else {
        ++p.failures;
      }
      p.runs.push_back(std::move(r));
    }
    if (!times.empty()) p.median_stop_time = median(times);
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

ScalingFit fit_scaling(const std::vector<SweepPoint>& points) {
  ScalingFit f;
  for (const SweepPoint& p : points) {
    if (p.median_stop_time && *p.median_stop_time > 0 && p.value > 0) {
      f.x.push_back(p.value);
      f.median_stop_time.push_back(*p.median_stop_time);
    }
  }
  if (f.x.size() < 4) throw std::invalid_argument("scaling fit needs at least 4 points with finite stop times");
  const std::size_t m = f.x.size();
  Eigen::MatrixXd A(static_cast<Eigen::Index>(m), 2);
  Eigen::VectorXd b(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    A(static_cast<Eigen::Index>(i), 0) = std::log(f.x[i]);
    A(static_cast<Eigen::Index>(i), 1) = 1.0;
    b[static_cast<Eigen::Index>(i)] = std::log(f.median_stop_time[i]);
  }
  const Eigen::Vector2d coef = A.colPivHouseholderQr().solve(b);
  f.slope = coef[0];
  f.intercept = coef[1];
  const double ss_res = (A * coef - b).squaredNorm();
  const double ss_tot = (b.array() - b.mean()).square().sum();
  f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

ScalingFit fit_scaling(const std::vector<RunRecord>& records, SweepAxis axis) {
  std::map<double, SweepPoint> by_value;
  const std::string name = to_string(axis);
  for (const RunRecord& r : records) {
    if (!r.axis || r.axis->first != name) continue;
    SweepPoint& p = by_value[r.axis->second];
    p.value = r.axis->second;
    p.runs.push_back(r);
  }
  std::vector<SweepPoint> points;
  for (auto& [v, p] : by_value) {
    std::vector<double> times;
    for (const RunRecord& r : p.runs) {
      if (r.train && r.train->stop_time) times.push_back(static_cast<double>(*r.train->stop_time));
    }
    if (!times.empty()) p.median_stop_time = median(times);
    points.push_back(std::move(p));
  }
  return fit_scaling(points);
}

// ---------------------------------------------------------------------------

Manifest emit_report(const std::vector<RunRecord>& records, const fs::path& out_dir) {
  Manifest man;
  std::vector<std::string> written;
  auto guarded = [&](const std::string& rel, const std::function<void(std::ostream&)>& body) {
    try {
      const fs::path path = out_dir / rel;
      fs::create_directories(path.parent_path());
      std::ofstream out(path);
      if (!out) throw std::runtime_error("cannot write " + path.string());
      body(out);
      if (!out) throw std::runtime_error("failed writing " + path.string());
      written.push_back(rel);
    } catch (const std::exception& e) {
      man.errors.emplace_back(e.what());
    }
  };

  guarded("summary.json", [&](std::ostream& out) {
    json runs = json::array();
    int passed = 0;
    for (const RunRecord& r : records) {
      runs.push_back(to_json(r));
      passed += r.passed();
    }
    const json j = {{"runs", runs}, {"run_count", records.size()}, {"passed", passed}};
    out << j.dump(2) << '\n';
  });

  auto stem = [&](std::size_t i) {
    return std::to_string(i) + "_" + to_string(records[i].spec.kind) + "_s" + std::to_string(records[i].seed);
  };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& s = records[i].series;
    if (s.count("curve_t")) {
      guarded("runs/" + stem(i) + "_curve.csv", [&](std::ostream& out) {
        out << "t,loss,min_margin\n";
        const auto& t = s.at("curve_t");
        for (std::size_t j = 0; j < t.size(); ++j)
          out << csv_num(t[j]) << ',' << csv_num(s.at("curve_loss")[j]) << ',' << csv_num(s.at("curve_min_margin")[j])
              << '\n';
      });
    }
    if (s.count("frame_t")) {
      guarded("runs/" + stem(i) + "_features.csv", [&](std::ostream& out) {
        std::vector<std::string> cols;
        for (const auto& [name, v] : s)
          if (name.rfind("feat_max_k", 0) == 0) cols.push_back(name);
        out << "t";
        for (const auto& c : cols) out << ',' << c;
        out << '\n';
        const auto& t = s.at("frame_t");
        for (std::size_t j = 0; j < t.size(); ++j) {
          out << csv_num(t[j]);
          for (const auto& c : cols) out << ',' << csv_num(s.at(c)[j]);
          out << '\n';
        }
      });
    }
  }

  auto plot = [&](const std::string& name, const std::function<bool(std::ostream&)>& rows) {
    std::ostringstream buf;
    buf << "series,x,y,y_lo,y_hi\n";
    if (rows(buf)) guarded("plot-data/" + name, [&](std::ostream& out) { out << buf.str(); });
  };
  auto row = [](std::ostream& out, const std::string& series, double x, double y, double lo, double hi) {
    out << series << ',' << csv_num(x) << ',' << csv_num(y) << ',' << csv_num(lo) << ',' << csv_num(hi) << '\n';
  };
  auto view_rows = [&](std::ostream& out, const std::string& series, const TestErrorReport& t) {
    for (std::size_t k = 0; k < t.view_counts.size(); ++k) {
      if (t.view_counts[k] == 0) continue;
      const auto [lo, hi] = wilson_interval(t.view_errors[k], t.view_counts[k]);
      row(out, series, static_cast<double>(k), t.view_error[k], lo, hi);
    }
  };

  // Per-view conditional test error; thm1 and thm2 runs land side by side.
  plot("view_error.csv", [&](std::ostream& out) {
    bool any = false;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const RunRecord& r = records[i];
      const std::string base = std::string(to_string(r.spec.kind)) + "_s" + std::to_string(r.seed);
      if (r.test) {
        view_rows(out, base, *r.test);
        any = true;
      }
      for (const ArmSummary& a : r.arms) {
        if (a.test.n_test == 0) continue;
        view_rows(out, base + "_" + a.name, a.test);
        any = true;
      }
    }
    return any;
  });

  // Test error per arm against seed.
  plot("arm_error.csv", [&](std::ostream& out) {
    bool any = false;
    for (const RunRecord& r : records) {
      for (const ArmSummary& a : r.arms) {
        if (a.test.n_test == 0) continue;
        row(out, std::string(to_string(r.spec.kind)) + "_" + a.name, static_cast<double>(r.seed), a.test.error,
            a.test.ci_lo, a.test.ci_hi);
        any = true;
      }
    }
    return any;
  });

  // Sweeps: median stop time with the seed range, and cutoff accuracies.
  std::set<std::string> axes;
  for (const RunRecord& r : records)
    if (r.axis) axes.insert(r.axis->first);
  for (const std::string& ax : axes) {
    plot("stop_time_" + ax + ".csv", [&](std::ostream& out) {
      std::map<std::pair<std::string, double>, std::vector<double>> groups;
      for (const RunRecord& r : records) {
        if (!r.axis || r.axis->first != ax || !r.train || !r.train->stop_time) continue;
        groups[{to_string(r.spec.kind), r.axis->second}].push_back(static_cast<double>(*r.train->stop_time));
      }
      for (const auto& [key, v] : groups)
        row(out, key.first, key.second, median(v), *std::min_element(v.begin(), v.end()),
            *std::max_element(v.begin(), v.end()));
      return !groups.empty();
    });
    plot("accuracy_" + ax + ".csv", [&](std::ostream& out) {
      std::map<std::pair<std::string, double>, std::vector<double>> groups;
      for (const RunRecord& r : records) {
        if (!r.axis || r.axis->first != ax || r.spec.kind != ScenarioKind::kCutoff) continue;
        for (const auto& [name, v] : r.metrics) {
          if (name.find("view_accuracy_k") == std::string::npos) continue;
          groups[{name, r.axis->second}].push_back(v);
        }
      }
      for (const auto& [key, v] : groups)
        row(out, key.first, key.second, median(v), *std::min_element(v.begin(), v.end()),
            *std::max_element(v.begin(), v.end()));
      return !groups.empty();
    });
  }

  // Max-channel feature correlation trajectories.
  plot("feature_trajectories.csv", [&](std::ostream& out) {
    bool any = false;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& s = records[i].series;
      if (!s.count("frame_t")) continue;
      const auto& t = s.at("frame_t");
      for (const auto& [name, v] : s) {
        if (name.rfind("feat_max_k", 0) != 0) continue;
        const std::string series = stem(i) + "_" + name.substr(9);
        for (std::size_t j = 0; j < t.size(); ++j) row(out, series, t[j], v[j], v[j], v[j]);
        any = true;
      }
    }
    return any;
  });

  for (const std::string& rel : written) {
    try {
      man.files.push_back({rel, sha256_file(out_dir / rel), fs::file_size(out_dir / rel)});
    } catch (const std::exception& e) {
      man.errors.emplace_back(e.what());
    }
  }
  json files = json::array();
  for (const ManifestEntry& e : man.files) files.push_back({{"path", e.path}, {"sha256", e.sha256}, {"bytes", e.bytes}});
  try {
    write_json({{"files", files}, {"errors", man.errors}}, out_dir / "manifest.json");
  } catch (const std::exception& e) {
    man.errors.emplace_back(e.what());
  }
  return man;
}

}  // namespace mvaug

namespace mvaug {

ScenarioSpec preset(ScenarioKind kind) {
  ScenarioSpec s;
  s.kind = kind;
  s.params.d = 4096;
  s.params.P = 2;
  s.params.K = 4;
  s.params.rho = {0.875, 1.0 / 24, 1.0 / 24, 1.0 / 24};
  s.params.sigma_xi = 1.5;
  s.n = 24;
  s.C = 12;
  s.q = 3;
  s.train.eta = 0.5;
  s.train.sigma_0 = 0.02;
  s.train.max_steps = 200000;
  s.seeds = {1, 2, 3};
  switch (kind) {
    case ScenarioKind::kThm1:
    case ScenarioKind::kThm2: break;
    case ScenarioKind::kScaling:
      s.train.sigma_0 = 0.005;
      s.probes = false;
      s.envelopes = false;
      s.n_test = 0;
      s.minor_count = 1.0;
      break;
    case ScenarioKind::kCutoff:
      s.params.d = 8192;
      s.params.K = 2;
      s.params.rho = {0.75, 0.25};
      s.params.sigma_xi = std::sqrt(72.4);
      s.n = 64;
      s.probes = false;
      s.envelopes = false;
      s.n_test = 4000;
      break;
    case ScenarioKind::kSpurious:
      s.params.P = 3;
      s.params.rho = {0.25, 0.25, 0.25, 0.25};
      s.params.spurious = SpuriousConfig{Eigen::VectorXd::Unit(s.params.d, s.params.d - 1), 0.95, 0.15, 2};
      s.n_test = 2000;
      s.envelopes = false;
      break;
    case ScenarioKind::kUnbalanced:
      s.params.rho = {0.25, 0.25, 0.25, 0.25};
      s.params.sigma_xi = 1.3;
      s.extra_view0 = 48;
      s.probes = false;
      s.envelopes = false;
      s.n_test = 4000;
      break;
    case ScenarioKind::kAugVsIid:
      s.params.K = 2;
      s.params.rho = {0.75, 0.25};
      s.params.sigma_xi = 1.8;
      s.n = 24;
      s.p = 0.5;
      s.probes = false;
      s.envelopes = false;
      s.n_test = 4000;
      break;
  }
  return s;
}

}  // namespace mvaug
