#include "mvaug/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mvaug {

namespace {

inline double ipow(double x, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= x;
  return r;
}

/// C x K matrix of <w_c, v_k>.
Eigen::MatrixXd feature_products(const Eigen::MatrixXd& W, const DistParams& params) {
  if (params.feature_basis) return W * params.feature_basis->transpose();
  return W.leftCols(params.K);
}

void add_feature_gradient(Eigen::MatrixXd& grad, const Eigen::MatrixXd& coef, const DistParams& params) {
  if (params.feature_basis)
    grad.noalias() += coef * (*params.feature_basis);
  else
    grad.leftCols(params.K) += coef;
}

struct Products {
  Eigen::MatrixXd WV;  // C x K
  Eigen::MatrixXd WX;  // C x n
  Eigen::MatrixXd WE;  // C x m
};

Products products(const Model& model, const PreparedData& data) {
  if (model.d() != data.params.d) throw std::invalid_argument("model dimension differs from data dimension");
  Products pr;
  pr.WV = feature_products(model.W, data.params);
  pr.WX.noalias() = model.W * data.Xi;
  if (data.Extra.cols() > 0) pr.WE.noalias() = model.W * data.Extra;
  return pr;
}

inline double bg_arg(const Products& pr, const PreparedData& data, std::size_t b, int c) {
  const int i = data.bg_sample[b];
  double z = -data.bg_alpha[b] * data.y[i] * pr.WV(c, data.bg_k[b]);
  if (data.bg_extra[b] >= 0) z += pr.WE(c, data.bg_extra[b]);
  return z;
}

Eigen::VectorXd scores_from(const Model& model, const PreparedData& data, const Products& pr) {
  const int C = model.C();
  const int q = model.q;
  Eigen::VectorXd F = Eigen::VectorXd::Zero(data.n);
  for (int i = 0; i < data.n; ++i) {
    double f = 0.0;
    for (int c = 0; c < C; ++c) {
      f += psi(data.y[i] * pr.WV(c, data.k_star[i]), q);
      f += psi(pr.WX(c, i), q);
    }
    F[i] = f;
  }
  for (std::size_t b = 0; b < data.bg_sample.size(); ++b) {
    double f = 0.0;
    for (int c = 0; c < C; ++c) f += psi(bg_arg(pr, data, b, c), q);
    F[data.bg_sample[b]] += f;
  }
  return F;
}

Eigen::MatrixXd gradient_from(const Model& model, const PreparedData& data, const Products& pr,
                              const Eigen::VectorXd& F) {
  const int C = model.C();
  const int q = model.q;
  const double inv_n = 1.0 / data.n;
  Eigen::VectorXd g(data.n);
  for (int i = 0; i < data.n; ++i) g[i] = logistic_loss_prime(data.y[i] * F[i]) * inv_n;

  Eigen::MatrixXd feat = Eigen::MatrixXd::Zero(C, data.params.K);
  Eigen::MatrixXd noise(C, data.n);
  for (int i = 0; i < data.n; ++i) {
    for (int c = 0; c < C; ++c) {
      feat(c, data.k_star[i]) += g[i] * psi_prime(data.y[i] * pr.WV(c, data.k_star[i]), q);
      noise(c, i) = g[i] * data.y[i] * psi_prime(pr.WX(c, i), q);
    }
  }
  Eigen::MatrixXd extra = Eigen::MatrixXd::Zero(C, data.Extra.cols());
  for (std::size_t b = 0; b < data.bg_sample.size(); ++b) {
    const int i = data.bg_sample[b];
    for (int c = 0; c < C; ++c) {
      const double s = g[i] * psi_prime(bg_arg(pr, data, b, c), q);
      feat(c, data.bg_k[b]) -= data.bg_alpha[b] * s;
      if (data.bg_extra[b] >= 0) extra(c, data.bg_extra[b]) += s * data.y[i];
    }
  }
  Eigen::MatrixXd grad(C, data.params.d);
  grad.noalias() = noise * data.Xi.transpose();
  if (data.Extra.cols() > 0) grad.noalias() += extra * data.Extra.transpose();
  add_feature_gradient(grad, feat, data.params);
  return grad;
}

}  // namespace

double psi(double z, int q) {
  const double a = std::abs(z);
  if (a <= 1.0) return std::copysign(ipow(a, q) / q, z);
  return z > 0.0 ? z - (q - 1.0) / q : z + (q - 1.0) / q;
}

double psi_prime(double z, int q) {
  const double a = std::abs(z);
  return a <= 1.0 ? ipow(a, q - 1) : 1.0;
}

double logistic_loss(double z) {
  if (z > 0.0) return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}

double logistic_loss_prime(double z) {
  if (z > 0.0) {
    const double e = std::exp(-z);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(z));
}

Model init_weights(int C, int d, double sigma_0, std::uint64_t seed, int q) {
  if (C < 1 || d < 1) throw std::invalid_argument("init_weights: C and d must be positive");
  Model m;
  m.q = q;
  m.W.resize(C, d);
  const RngStream root(seed);
  for (int c = 0; c < C; ++c) {
    RngStream rng = root.split(static_cast<std::uint64_t>(c));
    for (int j = 0; j < d; ++j) m.W(c, j) = sigma_0 * rng.normal();
  }
  return m;
}

PreparedData prepare(const Dataset& dataset) {
  PreparedData data;
  data.params = dataset.params;
  const int d = dataset.params.d;
  data.n = static_cast<int>(dataset.size());
  if (data.n == 0) throw std::invalid_argument("prepare: empty dataset");
  data.y.resize(data.n);
  data.k_star.resize(data.n);
  data.Xi.resize(d, data.n);
  std::vector<Eigen::VectorXd> extras;
  for (int i = 0; i < data.n; ++i) {
    const Sample& s = dataset.samples[i];
    if (s.xi.size() != d) throw std::invalid_argument("prepare: sample dimension mismatch");
    data.y[i] = s.y;
    data.k_star[i] = s.k_star;
    data.Xi.col(i) = s.xi;
    bool placed = s.spurious.size() == 0;
    for (const auto& b : s.background) {
      data.bg_sample.push_back(i);
      data.bg_alpha.push_back(b.alpha);
      data.bg_k.push_back(b.k);
      Eigen::VectorXd extra;
      if (b.zeta.size() > 0) extra = b.zeta;
      if (s.spurious.size() > 0 && b.p == s.spurious_slot) {
        extra = extra.size() > 0 ? Eigen::VectorXd(extra + s.spurious) : s.spurious;
        placed = true;
      }
      if (extra.size() > 0) {
        data.bg_extra.push_back(static_cast<int>(extras.size()));
        extras.push_back(std::move(extra));
      } else {
        data.bg_extra.push_back(-1);
      }
    }
    if (!placed) throw std::invalid_argument("prepare: spurious slot is not a background patch");
  }
  data.Extra.resize(d, static_cast<Eigen::Index>(extras.size()));
  for (std::size_t j = 0; j < extras.size(); ++j) data.Extra.col(static_cast<Eigen::Index>(j)) = extras[j];
  return data;
}

Eigen::VectorXd forward_all(const Model& model, const PreparedData& data) {
  return scores_from(model, data, products(model, data));
}

double forward(const Model& model, const Sample& sample, const DistParams& params) {
  if (model.d() != params.d || sample.xi.size() != params.d)
    throw std::invalid_argument("forward: dimension mismatch");
  const int C = model.C();
  const int q = model.q;
  const Eigen::MatrixXd WV = feature_products(model.W, params);
  const Eigen::VectorXd wx = model.W * sample.xi;
  double f = 0.0;
  for (int c = 0; c < C; ++c) {
    f += psi(sample.y * WV(c, sample.k_star), q);
    f += psi(wx[c], q);
  }
  for (const auto& b : sample.background) {
    Eigen::VectorXd extra;
    if (b.zeta.size() > 0) extra = b.zeta;
    if (sample.spurious.size() > 0 && b.p == sample.spurious_slot)
      extra = extra.size() > 0 ? Eigen::VectorXd(extra + sample.spurious) : sample.spurious;
    Eigen::VectorXd we;
    if (extra.size() > 0) we = model.W * extra;
    double fb = 0.0;
    for (int c = 0; c < C; ++c) {
      double z = -b.alpha * sample.y * WV(c, b.k);
      if (extra.size() > 0) z += we[c];
      fb += psi(z, q);
    }
    f += fb;
  }
  return f;
}

double dataset_loss(const Model& model, const PreparedData& data) {
  const Eigen::VectorXd F = forward_all(model, data);
  double total = 0.0;
  for (int i = 0; i < data.n; ++i) total += logistic_loss(data.y[i] * F[i]);
  return total / data.n;
}

double dataset_loss(const Model& model, const Dataset& dataset) { return dataset_loss(model, prepare(dataset)); }

Eigen::MatrixXd gradient(const Model& model, const PreparedData& data) {
  const Products pr = products(model, data);
  return gradient_from(model, data, pr, scores_from(model, data, pr));
}

Eigen::MatrixXd gradient(const Model& model, const Dataset& dataset) { return gradient(model, prepare(dataset)); }

Model gd_step(const Model& model, const PreparedData& data, double eta) {
  Model next = model;
  if (eta != 0.0) next.W -= eta * gradient(model, data);
  return next;
}

Model gd_step(const Model& model, const Dataset& dataset, double eta) {
  return gd_step(model, prepare(dataset), eta);
}

std::vector<std::string> validate_config(const TrainConfig& config) {
  std::vector<std::string> out;
  if (!(config.eta > 0.0)) out.emplace_back("eta must be positive");
  if (!(config.margin_target > 0.0)) out.emplace_back("margin_target must be positive");
  if (config.max_steps < 1) out.emplace_back("max_steps must be at least 1");
  if (config.record_every < 1) out.emplace_back("record_every must be at least 1");
  if (!(config.sigma_0 >= 0.0)) out.emplace_back("sigma_0 must be non-negative");
  return out;
}

namespace {

ProbeFrame frame_from(long t, const Model& model, const PreparedData& data, const ProbeOptions& options,
                      const Products& pr, const Eigen::VectorXd& F) {
  ProbeFrame fr;
  fr.t = t;
  fr.feat_corr = pr.WV.transpose();
  fr.noise_corr.resize(data.n);
  if (options.full_noise) fr.noise_corr_full = Eigen::MatrixXd(data.n, model.C());
  double min_margin = std::numeric_limits<double>::infinity();
  double loss = 0.0;
  for (int i = 0; i < data.n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < model.C(); ++c) {
      const double v = data.y[i] * pr.WX(c, i);
      best = std::max(best, v);
      if (fr.noise_corr_full) (*fr.noise_corr_full)(i, c) = v;
    }
    fr.noise_corr[i] = best;
    const double m = data.y[i] * F[i];
    min_margin = std::min(min_margin, m);
    loss += logistic_loss(m);
  }
  fr.min_margin = min_margin;
  fr.loss = loss / data.n;
  if (data.params.spurious) fr.spurious_corr = Eigen::VectorXd(model.W * data.params.spurious->u);
  if (options.heldout) fr.heldout_corr = Eigen::MatrixXd(model.W * (*options.heldout));
  return fr;
}

void fill_histogram(TrainResult& r) {
  r.margin_histogram.assign(10, 0);
  if (r.final_margins.size() == 0) return;
  r.hist_lo = r.final_margins.minCoeff();
  r.hist_hi = r.final_margins.maxCoeff();
  const double width = (r.hist_hi - r.hist_lo) / 10.0;
  for (Eigen::Index i = 0; i < r.final_margins.size(); ++i) {
    int bin = width > 0.0 ? static_cast<int>((r.final_margins[i] - r.hist_lo) / width) : 0;
    r.margin_histogram[std::clamp(bin, 0, 9)]++;
  }
}

}  // namespace

ProbeFrame make_frame(long t, const Model& model, const PreparedData& data, const ProbeOptions& options,
                      const Eigen::VectorXd& scores) {
  return frame_from(t, model, data, options, products(model, data), scores);
}

TrainResult train(const Dataset& dataset, const Model& init, const TrainConfig& config,
                  const ProbeOptions& probes) {
  const auto problems = validate_config(config);
  if (!problems.empty()) throw std::invalid_argument("invalid TrainConfig: " + problems.front());
  const PreparedData data = prepare(dataset);
  TrainResult result;
  Model model = init;
  long horizon = config.max_steps;
  bool stopped = false;
  for (long t = 0;; ++t) {
    const Products pr = products(model, data);
    const Eigen::VectorXd F = scores_from(model, data, pr);
    double min_margin = std::numeric_limits<double>::infinity();
    double loss = 0.0;
    for (int i = 0; i < data.n; ++i) {
      const double m = data.y[i] * F[i];
      min_margin = std::min(min_margin, m);
      loss += logistic_loss(m);
    }
    loss /= data.n;
    const bool on_stride = t % config.record_every == 0;
    if (on_stride) {
      result.curve.push_back({t, loss, min_margin});
      if (probes.enabled) result.frames.push_back(frame_from(t, model, data, probes, pr, F));
    }
    if (!stopped && min_margin >= config.margin_target) {
      stopped = true;
      result.stop_time = t;
      result.model = model;
      result.stop_reason = "margin_reached";
      result.final_margins = data.y.cwiseProduct(F);
      if (!on_stride) result.curve.push_back({t, loss, min_margin});
      if (config.continue_factor > 1.0) {
        horizon = static_cast<long>(std::ceil(config.continue_factor * std::max<long>(t, 1)));
      } else {
        break;
      }
    }
    if (t >= horizon) {
      if (stopped) {
        result.continued_model = model;
        result.continued_until = t;
      } else {
        result.model = model;
        result.stop_reason = "max_steps";
        result.final_margins = data.y.cwiseProduct(F);
        if (!on_stride) result.curve.push_back({t, loss, min_margin});
      }
      break;
    }
    model.W -= config.eta * gradient_from(model, data, pr, F);
  }
  fill_histogram(result);
  return result;
}

}  // namespace mvaug
