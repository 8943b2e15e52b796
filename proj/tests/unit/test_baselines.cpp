#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "common.hpp"
#include "mvaug/baselines.hpp"
#include "mvaug/diagnostics.hpp"

using namespace mvaug;
using mvaug::test::small_params;

TEST_CASE("mean predictor of a single sample") {
  const DistParams p = small_params(64, 2, 1.0);
  const Dataset ds = generate_dataset(p, 1, SamplingMode::kIid, 3);
  const Sample& s = ds.samples[0];
  const LinearPredictor pred = mean_linear(ds);
  CHECK((pred.theta - (p.feature(s.k_star) + s.y * s.xi)).norm() < 1e-12);
  REQUIRE(pred.signal_part.has_value());
  REQUIRE(pred.noise_part.has_value());
  CHECK((*pred.signal_part + *pred.noise_part - pred.theta).norm() < 1e-12);
}

TEST_CASE("mean predictor signal part recovers the frequencies") {
  const int d = 8192, n = 16;
  const DistParams p = small_params(d, 2, 1.0, {0.75, 0.25});
  const Dataset ds = generate_dataset(p, n, SamplingMode::kStratified, 1);
  const LinearPredictor pred = mean_linear(ds);
  const Eigen::VectorXd expected = 0.75 * p.feature(0) + 0.25 * p.feature(1);
  CHECK((*pred.signal_part - expected).norm() <= 3.0 * std::sqrt(2.0 * std::log(d) / d));
}

TEST_CASE("mean predictor noise part on fresh samples") {
  const int d = 8192, n = 16;
  const DistParams p = small_params(d, 2, 2.0);
  const Dataset ds = generate_dataset(p, n, SamplingMode::kIid, 2);
  const LinearPredictor pred = mean_linear(ds);
  const Dataset fresh = generate_dataset(p, 400, SamplingMode::kIid, 99);
  std::vector<double> mags;
  for (const Sample& s : fresh.samples) mags.push_back(std::abs(pred.noise_part->dot(patch_sum(s, p))));
  std::nth_element(mags.begin(), mags.begin() + 200, mags.end());
  const double scale = 4.0 / std::sqrt(static_cast<double>(n) * d);
  CHECK(mags[200] >= scale / 3.0);
  CHECK(mags[200] <= scale * 3.0);
}

TEST_CASE("cutoff arithmetic") {
  DistParams p = small_params(10000, 2, std::pow(10000.0, 0.1));
  const int n = 21;
  const Cutoffs one = cutoffs(p, n, 1);
  CHECK(one.rho_cut_tensor == doctest::Approx(one.rho_cut_linear));
  const Cutoffs three = cutoffs(p, n, 3);
  const double s2 = p.sigma_xi * p.sigma_xi;
  CHECK(three.rho_cut_tensor / three.rho_cut_linear == doctest::Approx(std::pow(s2 / 100.0, 2)));
  CHECK(one.rho_cut_linear == doctest::Approx(std::pow(10.0, 0.8) / std::sqrt(21.0 * 1e4)));
  const Cutoffs real_n = cutoffs(p, 1, 1);
  const double n_real = std::pow(1e4, 0.33);
  CHECK(real_n.rho_cut_linear / std::sqrt(n_real) == doctest::Approx(0.0138).epsilon(0.01));
}

TEST_CASE("tensor of order one equals the mean predictor") {
  const DistParams p = small_params(128, 2, 1.0);
  const Dataset train = generate_dataset(p, 10, SamplingMode::kIid, 1);
  const Dataset test = generate_dataset(p, 20, SamplingMode::kIid, 2);
  const LinearPredictor lin = mean_linear(train);
  const Eigen::VectorXd t = tensor_scores(train, test, 1);
  for (int j = 0; j < 20; ++j) CHECK(t[j] == doctest::Approx(lin.score(test.samples[j], p)).epsilon(1e-10));
  CHECK_THROWS_AS(tensor_scores(train, test, 2), std::invalid_argument);
}

TEST_CASE("tensor signal part tracks the view frequency") {
  const int d = 8192;
  const DistParams p = small_params(d, 2, 0.0, {0.75, 0.25});
  const Dataset train = generate_dataset(p, 16, SamplingMode::kStratified, 1);
  for (int k = 0; k < 2; ++k) {
    RngStream rng(5);
    const Sample x = sample_point(p, rng, 1, k);
    CHECK(tensor_score(train, x, 3) == doctest::Approx(p.rho[k]));
  }
}

TEST_CASE("tensor noise part magnitude") {
  const int d = 8192, n = 16;
  const DistParams p = small_params(d, 2, 2.0, {1.0, 0.0});
  const Dataset train = generate_dataset(p, n, SamplingMode::kIid, 3);
  Dataset test;
  test.params = p;
  RngStream rng(4);
  for (int j = 0; j < 300; ++j) test.samples.push_back(sample_point(p, rng, std::nullopt, 1));
  const Eigen::VectorXd t = tensor_scores(train, test, 3);
  std::vector<double> mags(t.data(), t.data() + t.size());
  for (double& m : mags) m = std::abs(m);
  std::nth_element(mags.begin(), mags.begin() + 150, mags.end());
  const double scale = std::pow(4.0, 3) / std::sqrt(n * std::pow(static_cast<double>(d), 3));
  CHECK(mags[150] >= scale / 3.0);
  CHECK(mags[150] <= scale * 3.0);
}

TEST_CASE("closed form max margin without noise") {
  const DistParams p = small_params(32, 1, 0.0, {1.0});
  const Dataset ds = generate_dataset(p, 4, SamplingMode::kIid, 1);
  const LinearPredictor cf = maxmargin_closed_form(ds);
  CHECK(cosine(cf.theta, p.feature(0)) == doctest::Approx(1.0));
}

TEST_CASE("closed form duals give unit margins up to the noise slack") {
  const int d = 8192, n = 8;
  const DistParams p = small_params(d, 2, 2.0);
  const Dataset ds = generate_dataset(p, n, SamplingMode::kStratified, 3);
  const LinearPredictor cf = maxmargin_closed_form(ds);
  const Eigen::VectorXd nu = maxmargin_closed_form_dual(ds);
  CHECK(nu.minCoeff() > 0.0);
  const double slack = 4.0 * std::sqrt(std::log(d) / d) * nu.sum() * 4.0;
  for (const Sample& s : ds.samples) CHECK(std::abs(s.y * cf.score(s, p) - 1.0) <= slack);
}

TEST_CASE("oracle on two opposite points") {
  Eigen::MatrixXd Z(2, 4);
  Z << 1, 0, 0, 0, 1, 0, 0, 0;
  const MaxMarginSolution sol = maxmargin_oracle(Z);
  CHECK(sol.converged);
  CHECK(sol.theta[0] == doctest::Approx(1.0));
  CHECK(sol.theta.tail(3).norm() < 1e-12);
  CHECK(sol.margins[0] == doctest::Approx(sol.margins[1]));
}

TEST_CASE("duplicated constraints do not move the oracle") {
  RngStream rng(4);
  Eigen::MatrixXd Z(5, 40);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 40; ++j) Z(i, j) = rng.normal() + (j == 0 ? 2.0 : 0.0);
  Eigen::MatrixXd Zd(6, 40);
  Zd.topRows(5) = Z;
  Zd.row(5) = Z.row(2);
  const MaxMarginSolution a = maxmargin_oracle(Z);
  const MaxMarginSolution b = maxmargin_oracle(Zd);
  CHECK((a.theta - b.theta).norm() < 1e-6);
  for (int i = 0; i < 5; ++i)
    CHECK(a.dual[i] * (a.margins[i] - a.min_margin) <= 1e-6);
  CHECK(a.dual.minCoeff() >= 0.0);
  CHECK(a.kkt_residual <= 1e-6);
  CHECK(a.min_margin == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("closed form agrees with the oracle") {
  int good = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const DistParams p = small_params(2048, 2, 2.0);
    const Dataset ds = generate_dataset(p, 8, SamplingMode::kStratified, seed);
    const MaxMarginSolution orc = maxmargin_oracle(ds);
    good += cosine(maxmargin_closed_form(ds).theta, orc.theta) >= 0.95 && orc.kkt_residual <= 1e-6;
  }
  CHECK(good >= 3);
}

TEST_CASE("hand-built networks") {
  const int d = 8192;
  const DistParams p = small_params(d, 4, 1.0);
  const Dataset ds = generate_dataset(p, 16, SamplingMode::kIid, 1);
  const Model gen = construct_handbuilt(HandbuiltKind::kGen, 3.0, p, 3);
  for (const Sample& s : ds.samples) CHECK(s.y * forward(gen, s, p) > 0.0);
  CHECK(estimate_test_error(gen, p, 2000, 3).error == 0.0);

  const Model over = construct_handbuilt(HandbuiltKind::kOverfit, 2.0, p, 3, &ds);
  for (const Sample& s : ds.samples) CHECK(s.y * forward(over, s, p) > 0.0);
  const double test_err = estimate_test_error(over, p, 2000, 3).error;
  CHECK(test_err == doctest::Approx(0.5).epsilon(0.1));

  Dataset empty;
  empty.params = p;
  CHECK(construct_handbuilt(HandbuiltKind::kOverfit, 2.0, p, 3, &empty).W.norm() == 0.0);
  CHECK_THROWS_AS(construct_handbuilt(HandbuiltKind::kOverfit, 2.0, p, 3), std::invalid_argument);
}

TEST_CASE("feature noise statistics") {
  DistParams p = small_params(16, 2, 0.0);
  p.P = 4;
  p.alpha = 0.6;
  const FeatureNoiseStats st = feature_noise_stats(generate_dataset(p, 10, SamplingMode::kIid, 1));
  for (double l : st.lambda) CHECK(l == doctest::Approx(1.2));
  CHECK(st.mu_lambda == 1.0);
}

TEST_CASE("clean data is linearly separable") {
  DistParams p = small_params(8, 2, 0.0);
  p.P = 4;
  p.uniform_feature_patch = true;
  const ImpossibilityReport r = linear_impossibility_probe(generate_dataset(p, 40, SamplingMode::kIid, 2), 3);
  CHECK(r.verdict == Separability::kSeparable);
  CHECK(r.lp_separable);
  CHECK(r.witness_error == 0.0);
}

TEST_CASE("mixed feature-noise cells defeat linear classifiers") {
  DistParams p = small_params(8, 2, 0.0);
  p.P = 4;
  p.alpha = 0.6;
  p.alpha_policy.kind = AlphaPolicyKind::kTwoLevel;
  p.alpha_policy.low_value = 0.2;
  p.uniform_feature_patch = true;
  const ImpossibilityReport r = linear_impossibility_probe(generate_dataset(p, 200, SamplingMode::kIid, 9), 3);
  CHECK_FALSE(r.mixed_cells.empty());
  CHECK(r.mu_lambda > 0.0);
  CHECK(r.mu_lambda < 1.0);
  CHECK_FALSE(r.lp_separable);
  CHECK(r.witness_error == 0.0);
  CHECK(r.witness_margin_bound == doctest::Approx(1.0 / 3.0 - std::pow(0.6, 3) * 4 / 3.0));
  CHECK(r.witness_min_margin >= r.witness_margin_bound - 1e-12);
}

TEST_CASE("scaling the inputs rescales predictors without changing decisions") {
  const DistParams p = small_params(256, 2, 1.5);
  const Dataset train = generate_dataset(p, 8, SamplingMode::kIid, 1);
  const Dataset test = generate_dataset(p, 30, SamplingMode::kIid, 2);
  Eigen::MatrixXd Z(8, 256);
  for (int i = 0; i < 8; ++i) Z.row(i) = train.samples[i].y * patch_sum(train.samples[i], p).transpose();
  const MaxMarginSolution a = maxmargin_oracle(Z);
  const MaxMarginSolution b = maxmargin_oracle(2.0 * Z);
  CHECK((b.theta - a.theta / 2.0).norm() <= 1e-6 * a.theta.norm());
  const LinearPredictor lin = mean_linear(train);
  for (const Sample& s : test.samples) {
    const Eigen::VectorXd x = patch_sum(s, p);
    CHECK(lin.theta.dot(3.0 * x) == doctest::Approx(3.0 * lin.score(s, p)));
    CHECK((a.theta.dot(x) > 0) == (b.theta.dot(2.0 * x) > 0));
  }
}
