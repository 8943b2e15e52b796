#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "common.hpp"
#include "mvaug/distribution.hpp"

using namespace mvaug;
using mvaug::test::noisy_params;
using mvaug::test::small_params;

namespace {

bool mentions(const std::vector<std::string>& msgs, const std::string& needle) {
  return std::any_of(msgs.begin(), msgs.end(), [&](const std::string& m) { return m.find(needle) != std::string::npos; });
}

}  // namespace

TEST_CASE("valid parameters produce no messages") {
  CHECK(validate_params(small_params(64, 4, 1.0)).empty());
  CHECK(validate_params(noisy_params(64, 2, 1.0, 0.3)).empty());
}

TEST_CASE("each violation is reported") {
  DistParams p = small_params(64, 2, 1.0, {0.6, 0.6});
  CHECK(mentions(validate_params(p), "sum to 1"));
  p.rho = {0.3, 0.7};
  CHECK(mentions(validate_params(p), "non-increasing"));
  p.rho = {1.2, -0.2};
  CHECK(mentions(validate_params(p), "negative"));
  p = small_params(64, 2, 1.0);
  p.P = 1;
  CHECK(mentions(validate_params(p), "P must be"));
  p = small_params(64, 2, 1.0);
  p.rho = {1.0};
  CHECK(mentions(validate_params(p), "length"));
  p = small_params(64, 2, -1.0);
  CHECK(mentions(validate_params(p), "sigma_xi"));
  p = small_params(64, 2, 1.0);
  p.p_xi = 0;
  CHECK(mentions(validate_params(p), "p_star equals p_xi"));
  p = small_params(64, 2, 1.0);
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(2, 64);
  V(0, 0) = 1.0;
  V(1, 0) = 1.0;
  p.feature_basis = V;
  CHECK(mentions(validate_params(p), "orthonormal"));
  p = small_params(64, 2, 1.0);
  SpuriousConfig s;
  s.u = Eigen::VectorXd::Unit(64, 0);
  s.rho_u_pos = 0.5;
  s.rho_u_neg = 0.1;
  p.P = 3;
  p.spurious = s;
  CHECK(mentions(validate_params(p), "orthogonal"));
  p.spurious->u = Eigen::VectorXd::Unit(64, 63);
  CHECK(validate_params(p).empty());
  p.spurious->rho_u_neg = 0.7;
  CHECK(mentions(validate_params(p), "spurious frequencies"));
  CHECK_THROWS_AS(require_valid(p), std::invalid_argument);
}

TEST_CASE("stratified counts use largest remainders") {
  CHECK(stratified_counts({0.875, 1.0 / 24, 1.0 / 24, 1.0 / 24}, 24) == std::vector<int>{21, 1, 1, 1});
  CHECK(stratified_counts({0.5, 0.5}, 3) == std::vector<int>{2, 1});
  CHECK(stratified_counts({0.25, 0.25, 0.25, 0.25}, 6) == std::vector<int>{2, 2, 1, 1});
  for (int n = 1; n < 50; ++n) {
    const auto c = stratified_counts({0.6, 0.3, 0.1}, n);
    int total = 0;
    for (int v : c) total += v;
    CHECK(total == n);
    CHECK(std::abs(c[0] - 0.6 * n) < 1.0);
  }
}

TEST_CASE("stratified datasets realize the counts exactly") {
  const DistParams p = small_params(128, 4, 1.0, {0.875, 1.0 / 24, 1.0 / 24, 1.0 / 24});
  const Dataset ds = generate_dataset(p, 24, SamplingMode::kStratified, 5);
  const DatasetStats st = dataset_stats(ds);
  CHECK(st.n_k == std::vector<int>{21, 1, 1, 1});
  CHECK(st.n_pos + st.n_neg == 24);
}

TEST_CASE("generation is deterministic and prefix stable") {
  const DistParams p = noisy_params(64, 3, 1.5, 0.2);
  const Dataset a = generate_dataset(p, 10, SamplingMode::kIid, 11);
  const Dataset b = generate_dataset(p, 10, SamplingMode::kIid, 11);
  const Dataset c = generate_dataset(p, 4, SamplingMode::kIid, 11);
  const Dataset e = generate_dataset(p, 10, SamplingMode::kIid, 12);
  for (int i = 0; i < 10; ++i) {
    CHECK(materialize(a.samples[i], p) == materialize(b.samples[i], p));
    if (i < 4) CHECK(materialize(a.samples[i], p) == materialize(c.samples[i], p));
  }
  CHECK(materialize(a.samples[0], p) != materialize(e.samples[0], p));
}

TEST_CASE("materialized patches follow the layout") {
  DistParams p = noisy_params(32, 2, 1.0, 0.4);
  p.sigma_zeta = 0.0;
  RngStream rng(2);
  const Sample s = sample_point(p, rng, -1, 1);
  const Eigen::MatrixXd X = materialize(s, p);
  CHECK(X.rows() == 4);
  CHECK(X.row(p.p_star).transpose().isApprox(-1.0 * p.feature(1)));
  CHECK(X.row(p.p_xi).transpose() == s.xi);
  for (const auto& b : s.background) {
    CHECK(b.alpha == doctest::Approx(0.4));
    CHECK(X.row(b.p).transpose().isApprox(-b.alpha * s.y * p.feature(b.k)));
  }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(32);
  for (int r = 0; r < 4; ++r) sum += X.row(r).transpose();
  CHECK(patch_sum(s, p).isApprox(sum));
}

TEST_CASE("materialize and encode round trip") {
  DistParams p = noisy_params(48, 3, 2.0, 0.3);
  p.sigma_zeta = 0.1;
  const Dataset ds = generate_dataset(p, 8, SamplingMode::kIid, 4);
  for (const Sample& s : ds.samples) {
    const Eigen::MatrixXd X = materialize(s, p);
    const Sample back = encode(X, s.y, s.p_star, s.p_xi, p);
    CHECK(back.k_star == s.k_star);
    CHECK((materialize(back, p) - X).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("dominant noise norm concentrates") {
  const int d = 4096;
  const DistParams p = small_params(d, 2, 2.0);
  const Dataset ds = generate_dataset(p, 200, SamplingMode::kIid, 9);
  const double band = 5.0 * std::sqrt(std::log(d) / d);
  for (const Sample& s : ds.samples) CHECK(std::abs(s.xi.squaredNorm() / 4.0 - 1.0) <= band);
}

TEST_CASE("iid frequencies and labels concentrate") {
  const DistParams p = small_params(16, 3, 1.0, {0.6, 0.3, 0.1});
  const Dataset ds = generate_dataset(p, 20000, SamplingMode::kIid, 3);
  const DatasetStats st = dataset_stats(ds);
  CHECK(st.rho_hat[0] == doctest::Approx(0.6).epsilon(0.03));
  CHECK(st.rho_hat[1] == doctest::Approx(0.3).epsilon(0.05));
  CHECK(st.rho_hat[2] == doctest::Approx(0.1).epsilon(0.08));
  CHECK(std::abs(st.n_pos - 10000) < 400);
  CHECK_FALSE(st.rho_noise_hat.has_value());
}

TEST_CASE("feature-noise statistics appear with background patches") {
  const DistParams p = noisy_params(16, 2, 1.0, 0.2);
  const DatasetStats st = dataset_stats(generate_dataset(p, 4000, SamplingMode::kIid, 1));
  REQUIRE(st.rho_noise_hat.has_value());
  double total = 0.0;
  for (double r : *st.rho_noise_hat) total += r;
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("spurious vector appears at the configured class frequencies") {
  DistParams p = small_params(64, 2, 1.0);
  p.P = 3;
  SpuriousConfig s;
  s.u = Eigen::VectorXd::Unit(64, 63);
  s.rho_u_pos = 0.8;
  s.rho_u_neg = 0.2;
  p.spurious = s;
  const DatasetStats st = dataset_stats(generate_dataset(p, 10000, SamplingMode::kIid, 8));
  CHECK(static_cast<double>(st.spurious_pos) / st.n_pos == doctest::Approx(0.8).epsilon(0.03));
  CHECK(static_cast<double>(st.spurious_neg) / st.n_neg == doctest::Approx(0.2).epsilon(0.1));
}

TEST_CASE("zero noise gives exact feature samples") {
  const DistParams p = small_params(16, 2, 0.0);
  RngStream rng(1);
  const Sample s = sample_point(p, rng, 1, 0);
  CHECK(s.xi.norm() == 0.0);
  CHECK(patch_sum(s, p).isApprox(p.feature(0)));
}
