// mvaug: command-line front end for data generation, training, scenarios,
// sweeps, baselines and report verification.
//
// Exit codes: 0 success, 2 assertion failure, 1 error.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mvaug/augmentation.hpp"
#include "mvaug/baselines.hpp"
#include "mvaug/diagnostics.hpp"
#include "mvaug/harness.hpp"
#include "mvaug/io.hpp"

namespace fs = std::filesystem;
using namespace mvaug;

namespace {

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kAssertion = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "runs";
  int jobs = 1;
  std::optional<int> record_every;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON file with ScenarioSpec fields");
  app->add_option("--seed", c.seed, "Seed (replaces the seed list)");
  app->add_option("--out", c.out, "Base output directory");
  app->add_option("--jobs", c.jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  app->add_option("--record-every", c.record_every, "Probe frame stride")->check(CLI::PositiveNumber);
}

ScenarioSpec load_spec(const Common& c, ScenarioKind fallback) {
  ScenarioSpec base = preset(fallback);
  if (!c.config.empty()) {
    const json j = read_json(c.config);
    if (j.contains("scenario")) base = preset(scenario_kind_from_string(j["scenario"].get<std::string>()));
    base = spec_from_json(j, base);
  }
  if (c.seed) base.seeds = {*c.seed};
  if (c.record_every) {
    base.train.record_every = *c.record_every;
    if (*c.record_every != 1) base.envelopes = false;
  }
  return base;
}

fs::path run_dir(const Common& c, const std::string& what) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  fs::path dir = fs::path(c.out) / (std::string(stamp) + "_" + what);
  for (int i = 1; fs::exists(dir); ++i) dir = fs::path(c.out) / (std::string(stamp) + "_" + what + "_" + std::to_string(i));
  fs::create_directories(dir);
  return dir;
}

/// Hashes every regular file below `dir` except the manifest itself.
void write_manifest(const fs::path& dir) {
  json files = json::array();
  std::vector<fs::path> paths;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  for (const fs::path& p : paths)
    files.push_back({{"path", fs::relative(p, dir).generic_string()}, {"sha256", sha256_file(p)}, {"bytes", fs::file_size(p)}});
  write_json({{"files", files}, {"errors", json::array()}}, dir / "manifest.json");
}

void print_record(const RunRecord& r) {
  std::cout << to_string(r.spec.kind) << " seed " << r.seed << ": " << (r.passed() ? "PASS" : "FAIL") << " ("
            << r.wall_seconds << " s)\n";
  if (!r.error.empty()) std::cout << "  error: " << r.error << '\n';
  for (const Assertion& a : r.assertions)
    std::cout << "  [" << (a.pass ? "ok" : "FAIL") << "] " << a.name << ": " << a.detail << '\n';
}

int cmd_gen(const Common& c, bool augment) {
  const ScenarioSpec spec = load_spec(c, ScenarioKind::kThm1);
  const auto problems = validate_params(spec.params);
  if (!problems.empty()) throw std::invalid_argument(problems.front());
  const fs::path dir = run_dir(c, "gen");
  Dataset ds = generate_dataset(spec.params, spec.n, spec.mode, spec.seeds.front());
  save_dataset(ds, dir / "dataset");
  if (augment) save_dataset(augment_dataset(ds), dir / "dataset_aug");
  write_json(to_json(spec), dir / "spec.json");
  write_manifest(dir);
  std::cout << dir.string() << '\n';
  return kOk;
}

int cmd_check_init(const Common& c, bool augment) {
  const ScenarioSpec spec = load_spec(c, ScenarioKind::kThm1);
  const fs::path dir = run_dir(c, "check-init");
  const SeedPlan plan = seed_plan(spec.seeds.front());
  Dataset ds = generate_dataset(spec.params, spec.n, spec.mode, plan.data);
  if (augment) ds = augment_dataset(ds);
  const Model m0 = init_weights(spec.C, spec.params.d, spec.train.sigma_0, plan.init, spec.q);
  const GinitReport rep = check_ginit(m0, ds, spec.train.sigma_0, spec.ginit);
  write_json(to_json(rep), dir / "ginit_report.json");
  write_manifest(dir);
  for (const GinitCondition& g : rep.conditions) std::cout << (g.pass ? "[ok]   " : "[FAIL] ") << g.name << '\n';
  std::cout << dir.string() << '\n';
  return rep.all_pass() ? kOk : kAssertion;
}

int cmd_train(const Common& c, bool augment) {
  ScenarioSpec spec = load_spec(c, ScenarioKind::kThm1);
  const fs::path dir = run_dir(c, "train");
  const SeedPlan plan = seed_plan(spec.seeds.front());
  Dataset ds = generate_dataset(spec.params, spec.n, spec.mode, plan.data);
  if (augment) ds = augment_dataset(ds);
  const Model m0 = init_weights(spec.C, spec.params.d, spec.train.sigma_0, plan.init, spec.q);
  ProbeOptions po;
  po.enabled = spec.probes;
  po.full_noise = spec.probes && spec.envelopes;
  const TrainResult r = train(ds, m0, spec.train, po);
  save_model(r.model, dir / "model.bin");
  write_trajectory(r, dir / "trajectory.csv");
  write_json(to_json(check_ginit(m0, ds, spec.train.sigma_0, spec.ginit)), dir / "ginit_report.json");
  write_fit_labels(classify_fit(r, ds, default_thresholds(spec.C, spec.q)), ds, dir / "fit_labels.csv");
  if (spec.n_test > 0)
    write_json(to_json(estimate_test_error(r.model, spec.params, spec.n_test, plan.test)), dir / "test_error.json");
  if (spec.probes && spec.envelopes)
    write_json(to_json(envelope_monitor(r, ds, {spec.train.eta, spec.train.sigma_0, spec.C, spec.q}, spec.bands)),
               dir / "envelope_report.json");
  write_json(to_json(spec), dir / "spec.json");
  write_manifest(dir);
  std::cout << "stop_reason " << r.stop_reason << " stop_time "
            << (r.stop_time ? std::to_string(*r.stop_time) : std::string("none")) << '\n'
            << dir.string() << '\n';
  return r.stop_time ? kOk : kAssertion;
}

int cmd_scenario(const Common& c, const std::string& name) {
  const ScenarioSpec spec = load_spec(c, scenario_kind_from_string(name));
  const auto problems = validate_spec(spec);
  if (!problems.empty()) throw std::invalid_argument(problems.front());
  const fs::path dir = run_dir(c, name);
  write_json(to_json(spec), dir / "spec.json");
  const std::vector<RunRecord> recs = run_seeds(spec, c.jobs);
  const Manifest man = emit_report(recs, dir);
  write_manifest(dir);
  bool ok = true;
  for (const RunRecord& r : recs) {
    print_record(r);
    ok = ok && r.passed();
  }
  for (const std::string& e : man.errors) std::cerr << "report: " << e << '\n';
  std::cout << dir.string() << '\n';
  if (!man.errors.empty()) return kError;
  for (const RunRecord& r : recs)
    if (!r.error.empty()) return kError;
  return ok ? kOk : kAssertion;
}

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  return out;
}

int cmd_sweep(const Common& c, const std::string& scenario, const std::string& axis_name, const std::string& grid_s,
              std::optional<double> slope, double tol) {
  const ScenarioSpec spec = load_spec(c, scenario_kind_from_string(scenario));
  const SweepAxis axis = sweep_axis_from_string(axis_name);
  const std::vector<double> grid = parse_grid(grid_s);
  const fs::path dir = run_dir(c, "sweep_" + axis_name);
  write_json(to_json(spec), dir / "spec.json");
  const std::vector<SweepPoint> points = sweep(spec, axis, grid, c.jobs);
  std::vector<RunRecord> all;
  for (const SweepPoint& p : points) {
    std::cout << axis_name << "=" << p.value << " median stop_time "
              << (p.median_stop_time ? std::to_string(*p.median_stop_time) : std::string("none")) << " failures "
              << p.failures << '\n';
    all.insert(all.end(), p.runs.begin(), p.runs.end());
  }
  int code = kOk;
  json fit_j = nullptr;
  if (spec.kind != ScenarioKind::kCutoff) {
    try {
      const ScalingFit f = fit_scaling(points);
      fit_j = {{"axis", axis_name}, {"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2},
               {"x", f.x}, {"median_stop_time", f.median_stop_time}};
      std::cout << "slope " << f.slope << " r2 " << f.r2 << '\n';
      if (slope) {
        const bool pass = std::abs(f.slope - *slope) <= tol * std::abs(*slope) && f.r2 >= 0.9;
        fit_j["expected_slope"] = *slope;
        fit_j["relative_tolerance"] = tol;
        fit_j["pass"] = pass;
        if (!pass) code = kAssertion;
      }
    } catch (const std::invalid_argument& e) {
      fit_j = {{"error", e.what()}};
      code = kAssertion;
    }
  }
  write_json(fit_j, dir / "scaling_fit.json");
  const Manifest man = emit_report(all, dir);
  write_manifest(dir);
  std::cout << dir.string() << '\n';
  return man.errors.empty() ? code : kError;
}

int cmd_baseline(const Common& c, const std::string& kind) {
  ScenarioSpec spec = load_spec(c, ScenarioKind::kCutoff);
  const fs::path dir = run_dir(c, "baseline_" + kind);
  const SeedPlan plan = seed_plan(spec.seeds.front());
  json rep;
  rep["kind"] = kind;
  rep["params"] = to_json(spec.params);
  rep["n"] = spec.n;
  int code = kOk;
  if (kind == "impossibility") {
    const Dataset ds = generate_dataset(spec.params, spec.n, SamplingMode::kIid, plan.data);
    const ImpossibilityReport r = linear_impossibility_probe(ds, spec.q);
    rep["impossibility"] = to_json(r);
    save_dataset(ds, dir / "witness_dataset");
    if (r.verdict == Separability::kSeparable || r.witness_error > 0) code = kAssertion;
  } else {
    const Dataset ds = generate_dataset(spec.params, spec.n, spec.mode, plan.data);
    const Cutoffs cut = cutoffs(spec.params, spec.n, spec.tensor_q > 0 ? spec.tensor_q : spec.q);
    rep["cutoffs"] = {{"rho_cut_linear", cut.rho_cut_linear}, {"rho_cut_tensor", cut.rho_cut_tensor}};
    if (kind == "mean") {
      rep["accuracy"] = to_json(evaluate_linear(mean_linear(ds), spec.params, spec.n_test, plan.test));
    } else if (kind == "tensor") {
      rep["accuracy"] = to_json(evaluate_tensor(ds, spec.tensor_q > 0 ? spec.tensor_q : spec.q, spec.n_test, plan.test));
    } else if (kind == "maxmargin") {
      const LinearPredictor cf = maxmargin_closed_form(ds);
      const MaxMarginSolution orc = maxmargin_oracle(ds);
      rep["accuracy"] = to_json(evaluate_linear(cf, spec.params, spec.n_test, plan.test));
      rep["oracle"] = {{"kkt_residual", orc.kkt_residual}, {"iterations", orc.iterations},
                       {"converged", orc.converged},     {"min_margin", orc.min_margin},
                       {"cosine_to_closed_form", cosine(cf.theta, orc.theta)}};
      if (!orc.converged) code = kAssertion;
    } else {
      throw std::invalid_argument("unknown baseline kind: " + kind);
    }
  }
  write_json(rep, dir / "baseline_report.json");
  write_manifest(dir);
  std::cout << rep.dump(2) << '\n' << dir.string() << '\n';
  return code;
}

int cmd_report(const std::string& in) {
  const fs::path dir(in);
  const json man = read_json(dir / "manifest.json");
  int bad = 0;
  for (const auto& f : man.at("files")) {
    const fs::path p = dir / f.at("path").get<std::string>();
    const bool ok = fs::exists(p) && sha256_file(p) == f.at("sha256").get<std::string>();
    if (!ok) {
      ++bad;
      std::cout << "MISMATCH " << f.at("path").get<std::string>() << '\n';
    }
  }
  std::cout << man.at("files").size() << " files, " << bad << " mismatched\n";
  if (fs::exists(dir / "summary.json")) {
    const json s = read_json(dir / "summary.json");
    for (const auto& r : s.at("runs")) {
      std::cout << r.at("scenario").get<std::string>() << " seed " << r.at("seed") << ": "
                << (r.at("passed").get<bool>() ? "PASS" : "FAIL") << '\n';
    }
  }
  return bad == 0 ? kOk : kAssertion;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view data augmentation laboratory"};
  app.require_subcommand(1);
  Common common;
  bool augment = false;

  CLI::App* gen = app.add_subcommand("gen", "Generate a dataset");
  add_common(gen, common);
  gen->add_flag("--augment", augment, "Also write the augmented dataset");

  CLI::App* init = app.add_subcommand("check-init", "Check the initialization conditions");
  add_common(init, common);
  init->add_flag("--augment", augment, "Check against the augmented dataset");

  CLI::App* tr = app.add_subcommand("train", "Train one model");
  add_common(tr, common);
  tr->add_flag("--augment", augment, "Train on the augmented dataset");

  std::string scenario_name;
  CLI::App* sc = app.add_subcommand("scenario", "Run a named scenario over its seeds");
  add_common(sc, common);
  sc->add_option("name", scenario_name, "thm1|thm2|scaling|cutoff|spurious|unbalanced|aug_vs_iid")->required();

  std::string sweep_scenario = "scaling";
  std::string axis;
  std::string grid;
  std::optional<double> slope;
  double tol = 0.25;
  CLI::App* sw = app.add_subcommand("sweep", "Sweep one axis and fit the stop-time scaling");
  add_common(sw, common);
  sw->add_option("--scenario", sweep_scenario, "Scenario swept");
  sw->add_option("--axis", axis, "n|sigma_xi|sigma_0|rho_2|p|K")->required();
  sw->add_option("--grid", grid, "Comma-separated values")->required();
  sw->add_option("--expect-slope", slope, "Expected log-log slope");
  sw->add_option("--slope-tol", tol, "Relative slope tolerance");

  std::string baseline_kind = "mean";
  CLI::App* bl = app.add_subcommand("baseline", "Evaluate a baseline predictor");
  add_common(bl, common);
  bl->add_option("--kind", baseline_kind, "mean|tensor|maxmargin|impossibility");

  std::string report_in;
  CLI::App* rp = app.add_subcommand("report", "Verify a run directory against its manifest");
  rp->add_option("dir", report_in, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen(common, augment);
    if (*init) return cmd_check_init(common, augment);
    if (*tr) return cmd_train(common, augment);
    if (*sc) return cmd_scenario(common, scenario_name);
    if (*sw) return cmd_sweep(common, sweep_scenario, axis, grid, slope, tol);
    if (*bl) return cmd_baseline(common, baseline_kind);
    if (*rp) return cmd_report(report_in);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kError;
  }
  return kError;
}
