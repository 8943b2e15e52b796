#include "mvaug/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mvaug {

namespace {

inline double ipow(double x, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= x;
  return r;
}

/// Patches of a sample as (feature coefficients, optional dense part).
struct PatchSet {
  Eigen::MatrixXd coef;   // K x m
  std::vector<int> owner;  // sample per patch
  std::vector<int> dense;  // column in Dense or -1
  Eigen::MatrixXd Dense;   // d x m_dense
};

PatchSet collect_patches(const Dataset& ds) {
  const DistParams& params = ds.params;
  std::vector<Eigen::VectorXd> coefs;
  std::vector<Eigen::VectorXd> denses;
  PatchSet ps;
  auto push = [&](int i, Eigen::VectorXd c, const Eigen::VectorXd* dense) {
    coefs.push_back(std::move(c));
    ps.owner.push_back(i);
    if (dense) {
      ps.dense.push_back(static_cast<int>(denses.size()));
      denses.push_back(*dense);
    } else {
      ps.dense.push_back(-1);
    }
  };
  for (int i = 0; i < static_cast<int>(ds.size()); ++i) {
    const Sample& s = ds.samples[i];
    Eigen::VectorXd c = Eigen::VectorXd::Zero(params.K);
    c[s.k_star] = s.y;
    push(i, c, nullptr);
    push(i, Eigen::VectorXd::Zero(params.K), &s.xi);
    for (const auto& b : s.background) {
      Eigen::VectorXd cb = Eigen::VectorXd::Zero(params.K);
      cb[b.k] = -b.alpha * s.y;
      Eigen::VectorXd extra;
      if (b.zeta.size() > 0) extra = b.zeta;
      if (s.spurious.size() > 0 && b.p == s.spurious_slot)
        extra = extra.size() > 0 ? Eigen::VectorXd(extra + s.spurious) : s.spurious;
      if (extra.size() == 0 && b.alpha == 0.0) continue;
      push(i, cb, extra.size() > 0 ? &extra : nullptr);
    }
  }
  ps.coef.resize(params.K, static_cast<Eigen::Index>(coefs.size()));
  for (std::size_t j = 0; j < coefs.size(); ++j) ps.coef.col(static_cast<Eigen::Index>(j)) = coefs[j];
  ps.Dense.resize(params.d, static_cast<Eigen::Index>(denses.size()));
  for (std::size_t j = 0; j < denses.size(); ++j) ps.Dense.col(static_cast<Eigen::Index>(j)) = denses[j];
  return ps;
}

Eigen::MatrixXd feature_coords_of(const Eigen::MatrixXd& dense, const DistParams& params) {
  if (params.feature_basis) return (*params.feature_basis) * dense;
  return dense.topRows(params.K);
}

/// Inner products between every patch of a and every patch of b.
Eigen::MatrixXd patch_gram(const PatchSet& a, const PatchSet& b, const DistParams& params) {
  Eigen::MatrixXd G = a.coef.transpose() * b.coef;
  const Eigen::MatrixXd VA = feature_coords_of(a.Dense, params);
  const Eigen::MatrixXd VB = feature_coords_of(b.Dense, params);
  const Eigen::MatrixXd AB = a.Dense.transpose() * b.Dense;
  const Eigen::MatrixXd VAcB = VA.transpose() * b.coef;
  const Eigen::MatrixXd cAVB = a.coef.transpose() * VB;
  for (Eigen::Index r = 0; r < G.rows(); ++r) {
    const int da = a.dense[r];
    for (Eigen::Index c = 0; c < G.cols(); ++c) {
      const int db = b.dense[c];
      if (da >= 0) G(r, c) += VAcB(da, c);
      if (db >= 0) G(r, c) += cAVB(r, db);
      if (da >= 0 && db >= 0) G(r, c) += AB(da, db);
    }
  }
  return G;
}

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0;
  double theta = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    css += u[j];
    const double t = (css - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  return (v.array() - theta).max(0.0);
}

double training_error(const Eigen::MatrixXd& Z, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd m = Z * theta;
  return static_cast<double>((m.array() <= 0.0).count()) / static_cast<double>(Z.rows());
}

}  // namespace

const char* to_string(LinearKind kind) {
  switch (kind) {
    case LinearKind::kMean:
      return "mean";
    case LinearKind::kMaxMarginClosed:
      return "maxmargin_closed";
    case LinearKind::kMaxMarginOracle:
      return "maxmargin_oracle";
  }
  return "mean";
}

double LinearPredictor::score(const Sample& sample, const DistParams& params) const {
  return theta.dot(patch_sum(sample, params));
}

LinearPredictor mean_linear(const Dataset& dataset) {
  const DistParams& params = dataset.params;
  LinearPredictor pred;
  pred.kind = LinearKind::kMean;
  pred.theta = Eigen::VectorXd::Zero(params.d);
  for (const auto& s : dataset.samples) pred.theta += s.y * patch_sum(s, params);
  if (dataset.size() > 0) pred.theta /= static_cast<double>(dataset.size());
  Eigen::VectorXd signal = Eigen::VectorXd::Zero(params.d);
  const Eigen::VectorXd coords = params.feature_coords(pred.theta);
  for (int k = 0; k < params.K; ++k) signal += coords[k] * params.feature(k);
  pred.noise_part = pred.theta - signal;
  pred.signal_part = std::move(signal);
  return pred;
}

Cutoffs cutoffs(const DistParams& params, int n, int q) {
  const double s2 = params.sigma_xi * params.sigma_xi;
  const double d = params.d;
  Cutoffs c;
  c.rho_cut_linear = s2 / std::sqrt(n * d);
  c.rho_cut_tensor = std::pow(s2, q) / std::sqrt(n * std::pow(d, q));
  return c;
}

Eigen::VectorXd tensor_scores(const Dataset& train, const Dataset& test, int q) {
  if (q < 1 || q % 2 == 0) throw std::invalid_argument("tensor_scores: q must be a positive odd integer");
  if (train.size() == 0) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(test.size()));
  const DistParams& params = train.params;
  const PatchSet a = collect_patches(train);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(test.size()));
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < test.size(); start += kChunk) {
    Dataset chunk;
    chunk.params = params;
    const std::size_t stop = std::min(test.size(), start + kChunk);
    chunk.samples.assign(test.samples.begin() + static_cast<std::ptrdiff_t>(start),
                         test.samples.begin() + static_cast<std::ptrdiff_t>(stop));
    const PatchSet b = collect_patches(chunk);
    const Eigen::MatrixXd G = patch_gram(a, b, params);
    for (Eigen::Index c = 0; c < G.cols(); ++c) {
      double s = 0.0;
      for (Eigen::Index r = 0; r < G.rows(); ++r) s += train.samples[a.owner[r]].y * ipow(G(r, c), q);
      out[static_cast<Eigen::Index>(start) + b.owner[c]] += s;
    }
  }
  return out / static_cast<double>(train.size());
}

double tensor_score(const Dataset& train, const Sample& x, int q) {
  Dataset test;
  test.params = train.params;
  test.samples.push_back(x);
  return tensor_scores(train, test, q)[0];
}

Dataset balanced_test_set(const DistParams& params, int n_test, std::uint64_t seed) {
  require_valid(params);
  Dataset test;
  test.params = params;
  test.seed = seed;
  test.mode = SamplingMode::kStratified;
  const RngStream root(seed);
  for (int j = 0; j < n_test; ++j) {
    RngStream rng = root.split(static_cast<std::uint64_t>(j));
    test.samples.push_back(sample_point(params, rng, std::nullopt, j % params.K));
  }
  return test;
}

ViewAccuracy view_accuracy(const Dataset& test, const Eigen::VectorXd& scores) {
  const int K = test.params.K;
  ViewAccuracy acc;
  acc.n_test = static_cast<int>(test.size());
  acc.view_counts.assign(K, 0);
  acc.view_correct.assign(K, 0);
  int correct = 0;
  for (int j = 0; j < acc.n_test; ++j) {
    const Sample& s = test.samples[j];
    const bool ok = s.y * scores[j] > 0.0;
    ++acc.view_counts[s.k_star];
    acc.view_correct[s.k_star] += ok;
    correct += ok;
  }
  for (int k = 0; k < K; ++k)
    acc.view_accuracy.push_back(acc.view_counts[k] > 0 ? static_cast<double>(acc.view_correct[k]) / acc.view_counts[k]
                                                       : std::numeric_limits<double>::quiet_NaN());
  acc.accuracy = acc.n_test > 0 ? static_cast<double>(correct) / acc.n_test : 0.0;
  return acc;
}

ViewAccuracy evaluate_linear(const LinearPredictor& pred, const DistParams& params, int n_test, std::uint64_t seed) {
  const Dataset test = balanced_test_set(params, n_test, seed);
  Eigen::VectorXd scores(n_test);
  for (int j = 0; j < n_test; ++j) scores[j] = pred.score(test.samples[j], params);
  return view_accuracy(test, scores);
}

ViewAccuracy evaluate_tensor(const Dataset& train, int q, int n_test, std::uint64_t seed) {
  const Dataset test = balanced_test_set(train.params, n_test, seed);
  return view_accuracy(test, tensor_scores(train, test, q));
}

LinearPredictor maxmargin_closed_form(const Dataset& dataset) {
  const DistParams& params = dataset.params;
  if (params.alpha > 0.0 && params.P > 2) throw std::invalid_argument("maxmargin_closed_form: requires alpha = 0");
  const double s2 = params.sigma_xi * params.sigma_xi;
  const DatasetStats st = dataset_stats(dataset);
  std::vector<Eigen::VectorXd> noise_sum(params.K, Eigen::VectorXd::Zero(params.d));
  for (const auto& s : dataset.samples) noise_sum[s.k_star] += s.y * s.xi;
  LinearPredictor pred;
  pred.kind = LinearKind::kMaxMarginClosed;
  pred.theta = Eigen::VectorXd::Zero(params.d);
  Eigen::VectorXd signal = Eigen::VectorXd::Zero(params.d);
  for (int k = 0; k < params.K; ++k) {
    const double nk = st.n_k[k];
    if (nk == 0) continue;
    const double w = 1.0 / (1.0 + s2 / nk);
    signal += w * params.feature(k);
    pred.theta += w * (params.feature(k) + noise_sum[k] / nk);
  }
  pred.noise_part = pred.theta - signal;
  pred.signal_part = std::move(signal);
  return pred;
}

Eigen::VectorXd maxmargin_closed_form_dual(const Dataset& dataset) {
  const double s2 = dataset.params.sigma_xi * dataset.params.sigma_xi;
  const DatasetStats st = dataset_stats(dataset);
  Eigen::VectorXd nu(static_cast<Eigen::Index>(dataset.size()));
  for (std::size_t i = 0; i < dataset.size(); ++i)
    nu[static_cast<Eigen::Index>(i)] = 1.0 / (st.n_k[dataset.samples[i].k_star] + s2);
  return nu;
}

MaxMarginSolution maxmargin_oracle(const Eigen::MatrixXd& Z, double tol, long max_sweeps) {
  const Eigen::Index n = Z.rows();
  MaxMarginSolution sol;
  sol.kernel = Z * Z.transpose();
  const Eigen::MatrixXd& G = sol.kernel;
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(n);  // G nu
  auto residual = [&]() {
    double r = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      r = std::max(r, std::max(0.0, 1.0 - m[i]));
      r = std::max(r, std::abs(nu[i] * (m[i] - 1.0)));
    }
    return r;
  };
  for (long sweep = 0; sweep < max_sweeps; ++sweep) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (G(i, i) <= 0.0) continue;
      const double next = std::max(0.0, nu[i] + (1.0 - m[i]) / G(i, i));
      const double delta = next - nu[i];
      if (delta != 0.0) {
        nu[i] = next;
        m += delta * G.col(i);
      }
    }
    sol.iterations = sweep + 1;
    if (sweep % 16 == 0 || sweep + 1 == max_sweeps) {
      m = G * nu;  // refresh against drift
      if (residual() <= tol) {
        sol.converged = true;
        break;
      }
    }
  }
  m = G * nu;
  sol.dual = nu;
  sol.theta = Z.transpose() * nu;
  sol.margins = Z * sol.theta;
  sol.min_margin = n > 0 ? sol.margins.minCoeff() : 0.0;
  sol.kkt_residual = residual();
  sol.converged = sol.kkt_residual <= tol;
  return sol;
}

MaxMarginSolution maxmargin_oracle(const Dataset& dataset, double tol, long max_sweeps) {
  const DistParams& params = dataset.params;
  Eigen::MatrixXd Z(static_cast<Eigen::Index>(dataset.size()), params.d);
  for (std::size_t i = 0; i < dataset.size(); ++i)
    Z.row(static_cast<Eigen::Index>(i)) = dataset.samples[i].y * patch_sum(dataset.samples[i], params).transpose();
  return maxmargin_oracle(Z, tol, max_sweeps);
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

Model construct_handbuilt(HandbuiltKind kind, double gamma, const DistParams& params, int q, const Dataset* dataset) {
  Model m;
  m.q = q;
  m.W = Eigen::MatrixXd::Zero(1, params.d);
  if (kind == HandbuiltKind::kGen) {
    for (int k = 0; k < params.K; ++k) m.W.row(0) += gamma * params.feature(k).transpose();
    return m;
  }
  if (!dataset) throw std::invalid_argument("construct_handbuilt: overfit network needs a dataset");
  for (const auto& s : dataset->samples) m.W.row(0) += gamma * s.y * s.xi.transpose();
  return m;
}

FeatureNoiseStats feature_noise_stats(const Dataset& dataset) {
  FeatureNoiseStats st;
  int above = 0;
  for (const auto& s : dataset.samples) {
    double lam = 0.0;
    for (const auto& b : s.background) lam += b.alpha;
    st.lambda.push_back(lam);
    above += lam > 1.0;
  }
  st.mu_lambda = dataset.size() > 0 ? static_cast<double>(above) / static_cast<double>(dataset.size()) : 0.0;
  return st;
}

const char* to_string(Separability s) {
  switch (s) {
    case Separability::kSeparable:
      return "separable";
    case Separability::kInfeasible:
      return "infeasible";
    case Separability::kBudgetExhausted:
      return "budget_exhausted";
  }
  return "budget_exhausted";
}

ImpossibilityReport linear_impossibility_probe(const Dataset& dataset, int q, long max_iter, double tol) {
  const DistParams& params = dataset.params;
  const int n = static_cast<int>(dataset.size());
  if (n == 0) throw std::invalid_argument("linear_impossibility_probe: empty dataset");
  const int dim = params.d * params.P;
  ImpossibilityReport rep;

  // Rows are y_i vec(x_i), patch-major.
  Eigen::MatrixXd Z(n, dim);
  for (int i = 0; i < n; ++i) {
    const Eigen::MatrixXd x = materialize(dataset.samples[i], params);
    for (int p = 0; p < params.P; ++p) Z.row(i).segment(p * params.d, params.d) = dataset.samples[i].y * x.row(p);
  }
  const Eigen::MatrixXd G = Z * Z.transpose();
  const double zmax = std::sqrt(G.diagonal().maxCoeff());
  const double L = 2.0 * std::max(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(G).eigenvalues().maxCoeff(), 1e-300);

  // Minimum-norm point of conv{z_i}: zero iff no strictly separating theta exists.
  Eigen::VectorXd lam = Eigen::VectorXd::Constant(n, 1.0 / n);
  Eigen::VectorXd mom = lam;
  double t = 1.0;
  for (long it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd next = project_simplex(mom - (2.0 / L) * (G * mom));
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    mom = next + ((t - 1.0) / t_next) * (next - lam);
    lam = next;
    t = t_next;
    rep.iterations = it + 1;
    const Eigen::VectorXd margins = G * lam;
    rep.min_norm = std::sqrt(std::max(0.0, lam.dot(margins)));
    if (margins.minCoeff() > 0.0) {
      rep.verdict = Separability::kSeparable;
      break;
    }
    if (rep.min_norm <= tol * zmax) {
      rep.verdict = Separability::kInfeasible;
      break;
    }
  }
  rep.lp_separable = rep.verdict == Separability::kSeparable;

  // Best linear classifier found: min-norm direction, replicated features, hinge subgradient.
  const Eigen::VectorXd theta_mn = Z.transpose() * lam;
  rep.best_linear_error = training_error(Z, theta_mn);
  Eigen::VectorXd replicated = Eigen::VectorXd::Zero(dim);
  for (int p = 0; p < params.P; ++p)
    for (int k = 0; k < params.K; ++k) replicated.segment(p * params.d, params.d) += params.feature(k);
  rep.best_linear_error = std::min(rep.best_linear_error, training_error(Z, replicated));
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
  for (int it = 1; it <= 5000; ++it) {
    const Eigen::VectorXd m = Z * theta;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    for (int i = 0; i < n; ++i)
      if (m[i] < 1.0) g += Z.row(i).transpose();
    theta += g / (n * std::sqrt(static_cast<double>(it)));
    if (it % 10 == 0) rep.best_linear_error = std::min(rep.best_linear_error, training_error(Z, theta));
  }

  const FeatureNoiseStats fns = feature_noise_stats(dataset);
  rep.mu_lambda = fns.mu_lambda;
  const double rho_min = *std::min_element(params.rho.begin(), params.rho.end());
  rep.linear_error_lower_bound = std::min(rep.mu_lambda, 1.0 - rep.mu_lambda) * rho_min / params.P;

  rep.cells_total = params.P * params.K;
  std::vector<int> low(rep.cells_total, -1);
  std::vector<int> high(rep.cells_total, -1);
  for (int i = 0; i < n; ++i) {
    const int cell = dataset.samples[i].p_star * params.K + dataset.samples[i].k_star;
    (fns.lambda[i] > 1.0 ? high : low)[cell] = i;
  }
  for (int cell = 0; cell < rep.cells_total; ++cell)
    if (low[cell] >= 0 && high[cell] >= 0) {
      rep.mixed_cells.emplace_back(cell / params.K, cell % params.K);
      rep.witness_samples.emplace_back(low[cell], high[cell]);
    }

  const Model witness = construct_handbuilt(HandbuiltKind::kGen, 1.0, params, q);
  const PreparedData data = prepare(dataset);
  const Eigen::VectorXd F = forward_all(witness, data);
  const Eigen::VectorXd margins = data.y.cwiseProduct(F);
  rep.witness_min_margin = margins.minCoeff();
  rep.witness_error = static_cast<double>((margins.array() <= 0.0).count()) / n;
  rep.witness_margin_bound = 1.0 / q - std::pow(params.alpha, q) * params.P / q;
  return rep;
}

}  // namespace mvaug
