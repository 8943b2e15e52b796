#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "common.hpp"
#include "mvaug/augmentation.hpp"

using namespace mvaug;
using mvaug::test::noisy_params;
using mvaug::test::small_params;

TEST_CASE("permutations are fixed-point-free bijections cycling the features") {
  for (int d = 3; d <= 64; ++d)
    for (int K = 2; K <= d - 2; ++K)
      for (int s = 1; s < K; ++s) {
        const FeaturePermutation perm = build_permutation(s, d, K);
        const auto problems = check_permutation(perm);
        CHECK_MESSAGE(problems.empty(), "d=" << d << " K=" << K << " shift=" << s);
      }
}

TEST_CASE("invalid permutation requests are rejected") {
  CHECK_THROWS_AS(build_permutation(0, 16, 4), std::invalid_argument);
  CHECK_THROWS_AS(build_permutation(4, 16, 4), std::invalid_argument);
  CHECK_THROWS_AS(build_permutation(1, 5, 4), std::invalid_argument);
  FeaturePermutation bad = build_permutation(1, 8, 2);
  bad.pi[5] = 5;
  CHECK_FALSE(check_permutation(bad).empty());
}

TEST_CASE("features map to the shifted features") {
  const DistParams p = small_params(32, 3, 1.0);
  for (int s = 1; s < 3; ++s) {
    const FeaturePermutation perm = build_permutation(s, 32, 3);
    for (int k = 0; k < 3; ++k) CHECK(perm.apply(p.feature(k)) == p.feature((k + s) % 3));
  }
  const FeaturePermutation one = build_permutation(1, 32, 3);
  CHECK(one.feature_image(0) == 1);
  CHECK(one.feature_image(1) == 2);
  CHECK(one.feature_image(2) == 0);
}

TEST_CASE("permutations are isometries") {
  RngStream rng(4);
  const FeaturePermutation perm = build_permutation(2, 50, 5);
  for (int t = 0; t < 10; ++t) {
    Eigen::VectorXd x(50), y(50);
    for (int i = 0; i < 50; ++i) {
      x[i] = rng.normal();
      y[i] = rng.normal();
    }
    CHECK(perm.apply(x).norm() == doctest::Approx(x.norm()));
    CHECK(perm.apply(x).dot(perm.apply(y)) == doctest::Approx(x.dot(y)));
  }
}

TEST_CASE("apply commutes with materialize") {
  DistParams p = noisy_params(40, 4, 1.5, 0.3);
  p.sigma_zeta = 0.2;
  const Dataset ds = generate_dataset(p, 6, SamplingMode::kIid, 2);
  for (int s = 1; s < 4; ++s) {
    const FeaturePermutation perm = build_permutation(s, 40, 4);
    for (const Sample& x : ds.samples) {
      const Eigen::MatrixXd A = materialize(apply(perm, x), p);
      const Eigen::MatrixXd X = materialize(x, p);
      for (int r = 0; r < p.P; ++r) CHECK((A.row(r).transpose() - perm.apply(X.row(r).transpose())).norm() < 1e-12);
    }
  }
}

TEST_CASE("augmented dataset holds every shift of every source") {
  const DistParams p = small_params(64, 4, 1.0, {0.875, 1.0 / 24, 1.0 / 24, 1.0 / 24});
  const Dataset ds = generate_dataset(p, 24, SamplingMode::kStratified, 1);
  const Dataset aug = augment_dataset(ds);
  REQUIRE(aug.size() == 96);
  REQUIRE(aug.augmented_from.has_value());
  CHECK(aug.augmented_from->shifts_applied == std::vector<int>{1, 2, 3});
  const DatasetStats st = dataset_stats(aug);
  CHECK(st.n_k == std::vector<int>{24, 24, 24, 24});
  for (std::size_t j = 0; j < aug.size(); ++j) {
    const auto [src, shift] = aug.augmented_from->pairing[j];
    CHECK(aug.samples[j].y == ds.samples[src].y);
    CHECK(aug.samples[j].k_star == (ds.samples[src].k_star + shift) % 4);
  }
}

TEST_CASE("a single view leaves the dataset unchanged") {
  const DistParams p = small_params(16, 1, 1.0);
  const Dataset ds = generate_dataset(p, 5, SamplingMode::kIid, 3);
  const Dataset aug = augment_dataset(ds);
  REQUIRE(aug.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) CHECK(materialize(aug.samples[i], p) == materialize(ds.samples[i], p));
}

TEST_CASE("one-shot augmentation cycles the shifts") {
  const DistParams p = small_params(32, 3, 1.0);
  const Dataset ds = generate_dataset(p, 6, SamplingMode::kIid, 3);
  const Dataset once = augment_once(ds, false);
  REQUIRE(once.size() == 6);
  for (int i = 0; i < 6; ++i) {
    CHECK(once.augmented_from->pairing[i].second == 1 + i % 2);
    CHECK(once.samples[i].k_star == (ds.samples[i].k_star + 1 + i % 2) % 3);
  }
  CHECK(augment_once(ds, true).size() == 12);
}

TEST_CASE("spurious vector is transformed unless preserved") {
  DistParams p = small_params(32, 2, 1.0);
  p.P = 3;
  SpuriousConfig s;
  s.u = Eigen::VectorXd::Unit(32, 31);
  s.rho_u_pos = 1.0;
  s.rho_u_neg = 0.0;
  p.spurious = s;
  RngStream rng(1);
  const Sample x = sample_point(p, rng, 1, 0);
  REQUIRE(x.has_spurious);
  const FeaturePermutation perm = build_permutation(1, 32, 2);
  const Sample moved = apply(perm, x);
  CHECK_FALSE(moved.has_spurious);
  CHECK(moved.spurious.dot(s.u) == 0.0);
  const Sample kept = apply(perm, x, true);
  CHECK(kept.has_spurious);
  CHECK(kept.spurious == s.u);
}

TEST_CASE("permuted noise correlation stays within the bound") {
  const DistParams p = small_params(4096, 4, 1.0);
  for (int s = 1; s < 4; ++s) {
    const NoiseCorrelationStats st = permuted_noise_correlation(p, s, 1000, 100 + s);
    CHECK(st.trials == 1000);
    CHECK(st.bound == doctest::Approx(3.0 * std::sqrt(std::log(200.0) / 4096)));
    CHECK(st.q99 <= st.bound);
    CHECK(st.pass);
  }
}

TEST_CASE("permuted noise correlation scales with the noise variance") {
  DistParams p = small_params(1024, 3, 1.0);
  const NoiseCorrelationStats a = permuted_noise_correlation(p, 1, 200, 5);
  p.sigma_xi = 2.0;
  const NoiseCorrelationStats b = permuted_noise_correlation(p, 1, 200, 5);
  CHECK(b.mean == doctest::Approx(4.0 * a.mean));
  CHECK(b.bound == doctest::Approx(4.0 * a.bound));
}
