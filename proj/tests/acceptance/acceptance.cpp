// Acceptance suite: one PASS/FAIL line per criterion. Exits 0 once every criterion has been
// evaluated (pass --strict to exit 2 when any criterion fails); exits 1 on an internal error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mvaug/augmentation.hpp"
#include "mvaug/baselines.hpp"
#include "mvaug/diagnostics.hpp"
#include "mvaug/distribution.hpp"
#include "mvaug/harness.hpp"
#include "mvaug/network.hpp"

using namespace mvaug;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string g4(double v) { return fmt("%.4g", v); }

DistParams family(int d, int K, double sigma_xi, std::vector<double> rho) {
  DistParams p;
  p.d = d;
  p.P = 2;
  p.K = K;
  p.rho = std::move(rho);
  p.sigma_xi = sigma_xi;
  return p;
}

// 1 ------------------------------------------------------------------------------------------

double gradient_deviation(const Model& model, const Dataset& ds, double h) {
  const Eigen::MatrixXd G = gradient(model, ds);
  std::vector<Eigen::MatrixXd> patches;
  for (const Sample& s : ds.samples) patches.push_back(materialize(s, ds.params));
  const double scale = std::max(G.cwiseAbs().maxCoeff(), 1e-12);
  double worst = 0.0;
  for (int c = 0; c < model.C(); ++c)
    for (int j = 0; j < model.d(); ++j) {
      bool crosses = false;
      for (const auto& X : patches)
        for (int p = 0; p < X.rows(); ++p)
          if (std::abs(std::abs(model.W.row(c).dot(X.row(p))) - 1.0) <= h * std::abs(X(p, j))) crosses = true;
      if (crosses) continue;
      Model plus = model, minus = model;
      plus.W(c, j) += h;
      minus.W(c, j) -= h;
      const double fd = (dataset_loss(plus, ds) - dataset_loss(minus, ds)) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - G(c, j)) / std::max(std::abs(G(c, j)), scale));
    }
  return worst;
}

Outcome gradient_oracle() {
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const int q = inst % 2 == 0 ? 3 : 5;
    DistParams p = family(32, 2, 1.0, {0.5, 0.5});
    p.P = 3;
    p.alpha = 0.3;
    const Dataset ds = generate_dataset(p, 4, SamplingMode::kIid, 500 + inst);
    const Model m = init_weights(3, 32, 0.4, 900 + inst, q);
    worst = std::max(worst, gradient_deviation(m, ds, 1e-5));
  }
  return {worst <= 1e-6, "max relative error " + g4(worst) + " over 50 instances (q in {3, 5}), bound 1e-6"};
}

// 2 ------------------------------------------------------------------------------------------

Outcome ginit_suite() {
  const DistParams p = family(4096, 4, 2.0, {0.25, 0.25, 0.25, 0.25});
  const double sigma_0 = 0.02;
  int pass = 0, pass_aug = 0;
  const int seeds = 200;
  for (int s = 0; s < seeds; ++s) {
    const Dataset ds = generate_dataset(p, 16, SamplingMode::kIid, 10000 + s);
    const Model m = init_weights(12, 4096, sigma_0, 20000 + s);
    pass += check_ginit(m, ds, sigma_0).all_pass();
    pass_aug += check_ginit(m, augment_dataset(ds), sigma_0).all_pass();
  }
  const double r = static_cast<double>(pass) / seeds, ra = static_cast<double>(pass_aug) / seeds;
  return {r >= 0.95 && ra >= 0.95,
          "all five conditions pass in " + g4(r) + " of 200 seeds (iid) and " + g4(ra) + " (augmented), bound 0.95"};
}

// 3, 4, 11 -----------------------------------------------------------------------------------

const Assertion* find(const RunRecord& r, const std::string& name) {
  for (const Assertion& a : r.assertions)
    if (a.name == name) return &a;
  return nullptr;
}

bool holds(const RunRecord& r, const std::string& name) {
  const Assertion* a = find(r, name);
  return a && a->pass;
}

Outcome assertions_hold(const std::vector<RunRecord>& recs, const std::vector<std::string>& names) {
  Outcome o{true, ""};
  std::ostringstream out;
  for (const RunRecord& r : recs) {
    std::vector<std::string> failed;
    for (const std::string& n : names)
      if (!holds(r, n)) failed.push_back(n);
    if (!r.error.empty()) failed.push_back("error: " + r.error);
    o.pass = o.pass && failed.empty();
    out << "seed " << r.seed << ": ";
    if (failed.empty()) {
      out << "ok";
    } else {
      for (std::size_t i = 0; i < failed.size(); ++i) {
        const Assertion* a = find(r, failed[i]);
        out << (i ? "; " : "") << failed[i] << (a ? " (" + a->detail + ")" : "");
      }
    }
    out << (&r == &recs.back() ? "" : " | ");
  }
  o.detail = out.str();
  return o;
}

Outcome thm2_outcome(const std::vector<RunRecord>& thm2, const std::vector<RunRecord>& thm1) {
  Outcome o = assertions_hold(thm2, {"margin_reached", "all_features_learned", "all_samples_feature_learned",
                                     "test_error_small"});
  std::ostringstream out;
  for (std::size_t i = 0; i < thm2.size(); ++i) {
    const auto& ta = thm2[i].train ? thm2[i].train->stop_time : std::nullopt;
    const auto& t = thm1[i].train ? thm1[i].train->stop_time : std::nullopt;
    const bool faster = ta && t && *ta < *t;
    o.pass = o.pass && faster;
    out << " | seed " << thm2[i].seed << " T_aug=" << (ta ? std::to_string(*ta) : "none")
        << " vs T=" << (t ? std::to_string(*t) : "none");
  }
  o.detail += out.str();
  return o;
}

Outcome envelope_outcome(const std::vector<RunRecord>& thm1, const std::vector<RunRecord>& thm2) {
  Outcome o{true, ""};
  std::ostringstream out;
  for (const RunRecord& r : thm1) {
    const bool ok = r.envelopes && r.envelopes->noise_growth.pass && r.envelopes->noise_growth.checked > 0;
    o.pass = o.pass && ok;
    out << "thm1 s" << r.seed << " noise " << (r.envelopes ? g4(r.envelopes->noise_growth.fraction) : "n/a") << "; ";
  }
  for (const RunRecord& r : thm2) {
    const bool ok = r.envelopes && r.envelopes->feature_growth.pass && r.envelopes->feature_growth.checked > 0;
    o.pass = o.pass && ok;
    out << "thm2 s" << r.seed << " feature " << (r.envelopes ? g4(r.envelopes->feature_growth.fraction) : "n/a")
        << "; ";
  }
  o.detail = "compliance in [0.1, 10] bands, quota 0.95: " + out.str();
  return o;
}

// 5 ------------------------------------------------------------------------------------------

Outcome scaling_laws() {
  struct Axis {
    SweepAxis axis;
    bool augment;
    std::vector<double> grid;
    double expected;
  };
  const int q = 3;
  const std::vector<Axis> axes = {
      {SweepAxis::kN, false, {8, 16, 32, 64}, 1.0},
      {SweepAxis::kSigmaXi, false, {2, 2.8, 4, 5.7}, -static_cast<double>(q)},
      {SweepAxis::kSigma0, true, {0.01, 0.014, 0.02, 0.028}, -static_cast<double>(q - 2)},
      {SweepAxis::kK, true, {2, 4, 8, 16}, 1.0},
  };
  Outcome o{true, ""};
  std::ostringstream out;
  for (const Axis& a : axes) {
    ScenarioSpec spec = preset(ScenarioKind::kScaling);
    spec.augment = a.augment;
    spec.q = q;
    const auto points = sweep(spec, a.axis, a.grid);
    int failures = 0;
    for (const SweepPoint& p : points) failures += p.failures;
    const ScalingFit f = fit_scaling(points);
    const double tol = 0.25 * std::abs(a.expected);
    const bool ok = std::abs(f.slope - a.expected) <= tol && f.r2 >= 0.9 && failures == 0;
    o.pass = o.pass && ok;
    out << to_string(a.axis) << " slope " << g4(f.slope) << " (want " << g4(a.expected) << " +- " << g4(tol)
        << ", R2 " << g4(f.r2) << (ok ? ")" : ") FAIL") << "; ";
  }
  o.detail = out.str();
  return o;
}

// 6 ------------------------------------------------------------------------------------------

Outcome linear_cutoff() {
  ScenarioSpec spec = preset(ScenarioKind::kCutoff);
  const std::vector<double> grid = {1.0 / 64, 2.0 / 64, 4.0 / 64, 8.0 / 64, 16.0 / 64, 32.0 / 64};
  const auto points = sweep(spec, SweepAxis::kRho2, grid);
  const double cut = cutoffs(spec.params, spec.n, 1).rho_cut_linear;
  std::vector<double> acc;
  for (const SweepPoint& p : points) {
    double s = 0.0;
    for (const RunRecord& r : p.runs) s += r.metrics.at("linear_view_accuracy_k1");
    acc.push_back(s / static_cast<double>(p.runs.size()));
  }
  double mid = std::nan("");
  for (std::size_t i = 0; i + 1 < acc.size(); ++i)
    if (acc[i] < 0.75 && acc[i + 1] >= 0.75) {
      const double t = (0.75 - acc[i]) / (acc[i + 1] - acc[i]);
      mid = std::exp(std::log(grid[i]) + t * (std::log(grid[i + 1]) - std::log(grid[i])));
      break;
    }
  const bool ok = acc.front() <= 0.6 && acc.back() >= 0.9 && std::isfinite(mid) && mid / cut <= 10.0 &&
                  cut / mid <= 10.0;
  std::ostringstream out;
  out << "view-2 accuracy";
  for (std::size_t i = 0; i < grid.size(); ++i) out << ' ' << g4(grid[i]) << ':' << fmt("%.3f", acc[i]);
  out << "; midpoint " << g4(mid) << " vs rho_cut " << g4(cut) << " (ratio " << g4(mid / cut) << ", within 10x)";
  return {ok, out.str()};
}

// 7 ------------------------------------------------------------------------------------------

Outcome maxmargin() {
  int good = 0;
  double worst_cos = 1.0, worst_kkt = 0.0;
  for (int seed = 1; seed <= 20; ++seed) {
    const DistParams p = family(2048, 2, 2.0, {0.5, 0.5});
    const Dataset ds = generate_dataset(p, 8, SamplingMode::kStratified, seed);
    const MaxMarginSolution orc = maxmargin_oracle(ds);
    const double cs = cosine(maxmargin_closed_form(ds).theta, orc.theta);
    good += cs >= 0.95 && orc.kkt_residual <= 1e-6;
    worst_cos = std::min(worst_cos, cs);
    worst_kkt = std::max(worst_kkt, orc.kkt_residual);
  }
  return {good >= 11, std::to_string(good) + "/20 seeds with cosine >= 0.95 and KKT residual <= 1e-6 (worst cosine " +
                          g4(worst_cos) + ", worst residual " + g4(worst_kkt) + ")"};
}

// 8 ------------------------------------------------------------------------------------------

Outcome tensor_separation() {
  const DistParams p = family(4096, 2, std::sqrt(320.0), {0.5, 0.5});
  const int n = 640;
  const Cutoffs c1 = cutoffs(p, n, 1);
  const Cutoffs c3 = cutoffs(p, n, 3);
  const Dataset ds = generate_dataset(p, n, SamplingMode::kStratified, 5);
  const ViewAccuracy lin = evaluate_linear(mean_linear(ds), p, 2000, 55);
  const ViewAccuracy ten = evaluate_tensor(ds, 3, 2000, 55);
  const double rho2 = p.rho[1];
  const bool ok = c1.rho_cut_linear < rho2 && rho2 < c3.rho_cut_tensor && lin.view_accuracy[1] >= 0.9 &&
                  ten.view_accuracy[1] <= 0.6;
  return {ok, "d=4096 n=640 sigma_xi^2=320: rho_cut " + g4(c1.rho_cut_linear) + " < rho_2 " + g4(rho2) +
                  " < rho_cut^(3) " + g4(c3.rho_cut_tensor) + "; view-2 accuracy linear " +
                  fmt("%.3f", lin.view_accuracy[1]) + " (>= 0.9), tensor " + fmt("%.3f", ten.view_accuracy[1]) +
                  " (<= 0.6)"};
}

// 9 ------------------------------------------------------------------------------------------

Outcome linear_impossibility() {
  DistParams p = family(8, 2, 0.0, {0.5, 0.5});
  p.P = 4;
  p.alpha = 0.6;
  p.alpha_policy.kind = AlphaPolicyKind::kTwoLevel;
  p.alpha_policy.low_value = 0.2;
  p.uniform_feature_patch = true;
  const int q = 3;
  const Dataset ds = generate_dataset(p, 200, SamplingMode::kIid, 9);
  const ImpossibilityReport r = linear_impossibility_probe(ds, q);
  const double bound = 1.0 / q - std::pow(p.alpha, q) * p.P / q;
  const bool ok = bound > 0.0 && r.witness_error == 0.0 && r.witness_min_margin >= bound - 1e-12 &&
                  !r.mixed_cells.empty() && (!r.lp_separable || r.best_linear_error > 0.0);
  return {ok, "witness error " + g4(r.witness_error) + ", min margin " + g4(r.witness_min_margin) +
                  " >= 1/q - alpha^q P/q = " + g4(bound) + "; linear oracle " + to_string(r.verdict) +
                  " (best linear error " + g4(r.best_linear_error) + ", " + std::to_string(r.mixed_cells.size()) +
                  " mixed cells, mu_Lambda " + g4(r.mu_lambda) + ")"};
}

// 10 -----------------------------------------------------------------------------------------

Outcome permuted_noise() {
  const DistParams p = family(4096, 4, 1.0, {0.25, 0.25, 0.25, 0.25});
  bool ok = true;
  std::ostringstream out;
  for (int k = 1; k < 4; ++k) {
    const NoiseCorrelationStats st = permuted_noise_correlation(p, k, 1000, 70 + k);
    const double bound = 3.0 * p.sigma_xi * p.sigma_xi * std::sqrt(std::log(200.0) / p.d);
    ok = ok && st.q99 <= bound;
    out << "shift " << k << " q99 " << g4(st.q99) << "; ";
  }
  out << "bound " << g4(3.0 * std::sqrt(std::log(200.0) / 4096));
  return {ok, out.str()};
}

// 12, 13 -------------------------------------------------------------------------------------

Outcome unbalanced() {
  const std::vector<RunRecord> recs = run_seeds(preset(ScenarioKind::kUnbalanced));
  Outcome o{true, ""};
  std::ostringstream out;
  for (const RunRecord& r : recs) {
    const double b = r.metrics.count("balanced_accuracy") ? r.metrics.at("balanced_accuracy") : std::nan("");
    const double f = r.metrics.count("full_accuracy") ? r.metrics.at("full_accuracy") : std::nan("");
    o.pass = o.pass && b >= f - 0.01;
    out << "seed " << r.seed << " balanced " << fmt("%.4f", b) << " vs full " << fmt("%.4f", f) << "; ";
  }
  o.detail = out.str() + "sigma_xi " + g4(preset(ScenarioKind::kUnbalanced).params.sigma_xi);
  return o;
}

Outcome aug_vs_iid() {
  const std::vector<RunRecord> recs = run_seeds(preset(ScenarioKind::kAugVsIid));
  double e_iid = 0.0, e_mix = 0.0, e_full = 0.0;
  for (const RunRecord& r : recs) {
    e_iid += r.metrics.at("iid_only_error");
    e_mix += r.metrics.at("mixed_error");
    e_full += r.metrics.at("full_iid_error");
  }
  const double m = static_cast<double>(recs.size());
  e_iid /= m;
  e_mix /= m;
  e_full /= m;
  return {e_mix < e_iid && std::abs(e_mix - e_full) <= 0.02,
          "mean test error over " + std::to_string(recs.size()) + " matched seeds: mixed " + fmt("%.4f", e_mix) +
              " < iid-only " + fmt("%.4f", e_iid) + "; full-iid " + fmt("%.4f", e_full) + " (|diff| <= 0.02)"};
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  for (int i = 1; i < argc; ++i) strict = strict || std::string(argv[i]) == "--strict";
  int passed = 0, total = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ++total;
    passed += o.pass;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << id << ' ' << name << ": " << o.detail << " ("
              << fmt("%.1f", secs) << " s)" << std::endl;
  };

  try {
    std::vector<RunRecord> thm1, thm2;
    report(1, "gradient_oracle", gradient_oracle);
    report(2, "ginit_suite", ginit_suite);
    report(3, "memorization_scenario", [&] {
      thm1 = run_seeds(preset(ScenarioKind::kThm1));
      return assertions_hold(thm1, {"margin_reached", "minor_features_capped", "minor_samples_memorized",
                                    "minor_view_error_near_half", "total_error_matches"});
    });
    report(4, "augmented_scenario", [&] {
      thm2 = run_seeds(preset(ScenarioKind::kThm2));
      return thm2_outcome(thm2, thm1);
    });
    report(5, "scaling_laws", scaling_laws);
    report(6, "linear_cutoff", linear_cutoff);
    report(7, "maxmargin_closed_form", maxmargin);
    report(8, "tensor_separation", tensor_separation);
    report(9, "linear_impossibility", linear_impossibility);
    report(10, "permuted_noise_correlation", permuted_noise);
    report(11, "envelope_monitors", [&] { return envelope_outcome(thm1, thm2); });
    report(12, "unbalanced_views", unbalanced);
    report(13, "augmented_vs_iid", aug_vs_iid);
  } catch (const std::exception& e) {
    std::cerr << "acceptance: " << e.what() << '\n';
    return 1;
  }
  std::cout << "criteria evaluated: " << total << ", passed: " << passed << std::endl;
  return strict && passed != total ? 2 : 0;
}
