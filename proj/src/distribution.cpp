#include "mvaug/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mvaug {

namespace {

constexpr double kOrthoTol = 1e-10;

std::string join(const std::vector<std::string>& items) {
  std::ostringstream os;
  for (std::size_t i = 0; i < items.size(); ++i) os << (i ? "; " : "") << items[i];
  return os.str();
}

double draw_alpha(const DistParams& params, RngStream& rng, bool high) {
  switch (params.alpha_policy.kind) {
    case AlphaPolicyKind::kConstant:
      return params.alpha;
    case AlphaPolicyKind::kUniform:
      return params.alpha * rng.uniform();
    case AlphaPolicyKind::kTwoLevel:
      return high ? params.alpha : params.alpha_policy.low_value;
  }
  return params.alpha;
}

}  // namespace

Eigen::VectorXd DistParams::feature(int k) const {
  if (feature_basis) return feature_basis->row(k).transpose();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
  v[k] = 1.0;
  return v;
}

double DistParams::feature_dot(int k, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (feature_basis) return feature_basis->row(k).dot(x);
  return x[k];
}

Eigen::VectorXd DistParams::feature_coords(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (feature_basis) return (*feature_basis) * x;
  return x.head(K);
}

std::vector<std::string> validate_params(const DistParams& p) {
  std::vector<std::string> out;
  if (p.d < 1) out.emplace_back("d must be positive");
  if (p.P < 2) out.emplace_back("P must be at least 2");
  if (p.K < 1) out.emplace_back("K must be positive");
  if (p.K > p.d) out.emplace_back("K exceeds d");
  if (static_cast<int>(p.rho.size()) != p.K) {
    out.emplace_back("rho length differs from K");
  } else {
    double total = 0.0;
    bool negative = false;
    for (double r : p.rho) {
      total += r;
      negative |= !(r >= 0.0);
    }
    if (negative) out.emplace_back("rho has a negative entry");
    if (std::abs(total - 1.0) > 1e-9) out.emplace_back("rho does not sum to 1");
    if (!std::is_sorted(p.rho.rbegin(), p.rho.rend())) out.emplace_back("rho not sorted non-increasing");
  }
  if (!(p.sigma_xi >= 0.0)) out.emplace_back("sigma_xi must be non-negative");
  if (!(p.sigma_zeta >= 0.0)) out.emplace_back("sigma_zeta must be non-negative");
  if (!(p.alpha >= 0.0)) out.emplace_back("alpha must be non-negative");
  if (p.alpha_policy.kind == AlphaPolicyKind::kTwoLevel) {
    if (!(p.alpha_policy.low_value >= 0.0 && p.alpha_policy.low_value <= p.alpha))
      out.emplace_back("alpha_policy low_value outside [0, alpha]");
    if (!(p.alpha_policy.high_prob >= 0.0 && p.alpha_policy.high_prob <= 1.0))
      out.emplace_back("alpha_policy high_prob outside [0, 1]");
  }
  if (!p.uniform_feature_patch) {
    if (p.p_star < 0 || p.p_star >= p.P || p.p_xi < 0 || p.p_xi >= p.P)
      out.emplace_back("patch slot out of range");
    if (p.p_star == p.p_xi) out.emplace_back("p_star equals p_xi");
  }
  if (p.feature_basis) {
    const Eigen::MatrixXd& V = *p.feature_basis;
    if (V.rows() != p.K || V.cols() != p.d) {
      out.emplace_back("feature_basis shape is not K x d");
    } else {
      const Eigen::MatrixXd gram = V * V.transpose();
      if ((gram - Eigen::MatrixXd::Identity(p.K, p.K)).cwiseAbs().maxCoeff() > kOrthoTol)
        out.emplace_back("feature_basis is not orthonormal");
    }
  }
  if (p.spurious) {
    const SpuriousConfig& s = *p.spurious;
    if (s.u.size() != p.d) {
      out.emplace_back("spurious u has wrong dimension");
    } else {
      if (std::abs(s.u.norm() - 1.0) > kOrthoTol) out.emplace_back("spurious u is not unit norm");
      if (p.K <= p.d && p.K >= 1 &&
          (p.feature_basis ? (p.feature_basis->rows() == p.K && p.feature_basis->cols() == p.d) : true)) {
        for (int k = 0; k < p.K; ++k)
          if (std::abs(p.feature_dot(k, s.u)) > kOrthoTol) {
            out.emplace_back("spurious u is not orthogonal to the features");
            break;
          }
      }
    }
    if (!(s.rho_u_neg >= 0.0 && s.rho_u_neg < s.rho_u_pos && s.rho_u_pos <= 1.0))
      out.emplace_back("spurious frequencies violate 0 <= rho_u_neg < rho_u_pos <= 1");
    if (p.uniform_feature_patch) out.emplace_back("spurious slot requires fixed patch placement");
    if (s.slot < 0 || s.slot >= p.P || s.slot == p.p_star || s.slot == p.p_xi)
      out.emplace_back("spurious slot is not a background patch");
  }
  return out;
}

void require_valid(const DistParams& params) {
  const auto violations = validate_params(params);
  if (!violations.empty()) throw std::invalid_argument("invalid DistParams: " + join(violations));
}

Sample sample_point(const DistParams& params, RngStream& rng, std::optional<int> label,
                    std::optional<int> k_star) {
  if (params.P < 2) throw std::invalid_argument("sample_point: P must be at least 2");
  Sample s;
  s.y = label ? *label : (rng.uniform() < 0.5 ? 1 : -1);
  if (s.y != 1 && s.y != -1) throw std::invalid_argument("sample_point: label must be +1 or -1");
  s.k_star = k_star ? *k_star : static_cast<int>(rng.categorical(params.rho));
  if (s.k_star < 0 || s.k_star >= params.K) throw std::invalid_argument("sample_point: k_star out of range");

  if (params.uniform_feature_patch) {
    s.p_star = static_cast<int>(rng.below(params.P));
    const int other = static_cast<int>(rng.below(params.P - 1));
    s.p_xi = other >= s.p_star ? other + 1 : other;
  } else {
    s.p_star = params.p_star;
    s.p_xi = params.p_xi;
  }

  const double xi_scale = params.sigma_xi / std::sqrt(static_cast<double>(params.d));
  s.xi.resize(params.d);
  for (int j = 0; j < params.d; ++j) s.xi[j] = xi_scale * rng.normal();

  const bool high = params.alpha_policy.kind == AlphaPolicyKind::kTwoLevel &&
                    rng.uniform() < params.alpha_policy.high_prob;
  s.background.reserve(params.P - 2);
  for (int p = 0; p < params.P; ++p) {
    if (p == s.p_star || p == s.p_xi) continue;
    BackgroundPatch b;
    b.p = p;
    b.alpha = draw_alpha(params, rng, high);
    b.k = static_cast<int>(rng.categorical(params.rho));
    if (params.sigma_zeta > 0.0) {
      b.zeta.resize(params.d);
      for (int j = 0; j < params.d; ++j) b.zeta[j] = params.sigma_zeta * rng.normal();
    }
    s.background.push_back(std::move(b));
  }

  if (params.spurious) {
    const SpuriousConfig& sp = *params.spurious;
    const double prob = s.y == 1 ? sp.rho_u_pos : sp.rho_u_neg;
    if (rng.uniform() < prob) {
      s.has_spurious = true;
      s.spurious = sp.u;
      s.spurious_slot = sp.slot;
    }
  }
  return s;
}

std::vector<int> stratified_counts(const std::vector<double>& rho, int n) {
  const int K = static_cast<int>(rho.size());
  std::vector<int> counts(K);
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int k = 0; k < K; ++k) {
    const double exact = rho[k] * n;
    counts[k] = static_cast<int>(std::floor(exact + 1e-9));
    assigned += counts[k];
    remainders.emplace_back(exact - counts[k], k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first + 1e-12; });
  for (int i = 0; assigned < n && i < K; ++i, ++assigned) ++counts[remainders[i].second];
  return counts;
}

Dataset generate_dataset(const DistParams& params, int n, SamplingMode mode, std::uint64_t seed) {
  require_valid(params);
  if (n < 1) throw std::invalid_argument("generate_dataset: n must be at least 1");
  Dataset ds;
  ds.params = params;
  ds.seed = seed;
  ds.mode = mode;
  ds.samples.reserve(n);
  const RngStream root(seed);
  std::vector<int> forced;
  if (mode == SamplingMode::kStratified) {
    const auto counts = stratified_counts(params.rho, n);
    for (int k = 0; k < params.K; ++k) forced.insert(forced.end(), counts[k], k);
  }
  for (int i = 0; i < n; ++i) {
    RngStream rng = root.split(static_cast<std::uint64_t>(i));
    std::optional<int> k;
    if (mode == SamplingMode::kStratified) k = forced[i];
    ds.samples.push_back(sample_point(params, rng, std::nullopt, k));
  }
  return ds;
}

Eigen::MatrixXd materialize(const Sample& s, const DistParams& params) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(params.P, params.d);
  x.row(s.p_star) = (s.y * params.feature(s.k_star)).transpose();
  x.row(s.p_xi) = s.xi.transpose();
  for (const auto& b : s.background) {
    Eigen::VectorXd row = -b.alpha * s.y * params.feature(b.k);
    if (b.zeta.size() > 0) row += b.zeta;
    x.row(b.p) = row.transpose();
  }
  if (s.spurious.size() > 0) x.row(s.spurious_slot) += s.spurious.transpose();
  return x;
}

Sample encode(const Eigen::MatrixXd& patches, int y, int p_star, int p_xi, const DistParams& params) {
  if (patches.rows() != params.P || patches.cols() != params.d)
    throw std::invalid_argument("encode: patch matrix shape mismatch");
  Sample s;
  s.y = y;
  s.p_star = p_star;
  s.p_xi = p_xi;
  const Eigen::VectorXd feat = params.feature_coords(patches.row(p_star).transpose());
  Eigen::Index k_star = 0;
  (y * feat).maxCoeff(&k_star);
  s.k_star = static_cast<int>(k_star);
  s.xi = patches.row(p_xi).transpose();
  for (int p = 0; p < params.P; ++p) {
    if (p == p_star || p == p_xi) continue;
    const Eigen::VectorXd row = patches.row(p).transpose();
    const Eigen::VectorXd coords = params.feature_coords(row);
    BackgroundPatch b;
    b.p = p;
    Eigen::Index k = 0;
    coords.cwiseAbs().maxCoeff(&k);
    b.k = static_cast<int>(k);
    b.alpha = -y * coords[k];
    const Eigen::VectorXd rest = row + b.alpha * y * params.feature(b.k);
    if (params.sigma_zeta > 0.0 || rest.cwiseAbs().maxCoeff() > 0.0) b.zeta = rest;
    s.background.push_back(std::move(b));
  }
  return s;
}

Eigen::VectorXd patch_sum(const Sample& s, const DistParams& params) {
  Eigen::VectorXd sum = s.xi;
  sum += s.y * params.feature(s.k_star);
  for (const auto& b : s.background) {
    sum -= b.alpha * s.y * params.feature(b.k);
    if (b.zeta.size() > 0) sum += b.zeta;
  }
  if (s.spurious.size() > 0) sum += s.spurious;
  return sum;
}

DatasetStats dataset_stats(const Dataset& ds) {
  const int K = ds.params.K;
  DatasetStats st;
  st.n_k.assign(K, 0);
  std::vector<long> noise_counts(K, 0);
  long background_total = 0;
  for (const auto& s : ds.samples) {
    ++st.n_k[s.k_star];
    for (const auto& b : s.background) {
      ++noise_counts[b.k];
      ++background_total;
    }
    if (s.y == 1) {
      ++st.n_pos;
      st.spurious_pos += s.has_spurious;
    } else {
      ++st.n_neg;
      st.spurious_neg += s.has_spurious;
    }
  }
  const double n = static_cast<double>(std::max<std::size_t>(ds.size(), 1));
  for (int k = 0; k < K; ++k) st.rho_hat.push_back(st.n_k[k] / n);
  if (background_total > 0) {
    std::vector<double> r(K);
    for (int k = 0; k < K; ++k) r[k] = static_cast<double>(noise_counts[k]) / background_total;
    st.rho_noise_hat = std::move(r);
  }
  return st;
}

}  // namespace mvaug
