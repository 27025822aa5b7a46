#include "ddbc/experiment.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>

namespace {

using ddbc::BilinearSystem;
using ddbc::Dataset;
using ddbc::InputKind;
using ddbc::MatrixXd;
using ddbc::NoiseRealization;
using ddbc::Rng;
using ddbc::TimeDomain;
using ddbc::VectorXd;

BilinearSystem ZeroSystem(int n, int m,
                          TimeDomain domain = TimeDomain::kContinuous) {
  return BilinearSystem::validated(MatrixXd::Zero(n, n), MatrixXd::Zero(n, m),
                                   MatrixXd::Zero(n, m * n),
                                   VectorXd::Zero(n), domain);
}

NoiseRealization ZeroNoise(int n, int T) {
  NoiseRealization noise;
  noise.E0 = MatrixXd::Zero(n, T);
  noise.bound = MatrixXd::Zero(n, n);
  return noise;
}

ddbc::CollectResult CollectCuk(uint64_t seed, double noise_level = 1e-4,
                               int T = 50, double dt = 0.1) {
  const auto sys = ddbc::cuk_system();
  Rng rng(seed);
  const MatrixXd input =
      ddbc::generate_input(InputKind::kUniformIid, 1, T, 0.0, 1.0, rng);
  const auto noise =
      ddbc::generate_noise(noise_level * MatrixXd::Identity(5, 5), T, rng);
  const VectorXd x0 = 1.1 * ddbc::cuk_setpoint().xbar;
  return ddbc::collect(sys, input, noise, x0, dt);
}

TEST(GenerateInput, DegenerateRangeGivesConstant) {
  Rng rng(1);
  const MatrixXd U = ddbc::generate_input(InputKind::kUniformIid, 2, 3, 0.0,
                                          0.0, rng);
  EXPECT_TRUE(U.isZero(0.0));
}

TEST(GenerateInput, DeterministicForFixedSeed) {
  Rng a(42), b(42);
  const MatrixXd Ua =
      ddbc::generate_input(InputKind::kUniformIid, 1, 20, -1.0, 1.0, a);
  const MatrixXd Ub =
      ddbc::generate_input(InputKind::kUniformIid, 1, 20, -1.0, 1.0, b);
  EXPECT_TRUE(Ua.isApprox(Ub, 0.0));
}

TEST(GenerateInput, SampleMeanNearMidpoint) {
  Rng rng(7);
  const MatrixXd U =
      ddbc::generate_input(InputKind::kUniformIid, 1, 10000, 0.0, 1.0, rng);
  EXPECT_NEAR(U.mean(), 0.5, 0.02);
}

TEST(GenerateInput, RejectsInvertedRange) {
  Rng rng(1);
  EXPECT_THROW(
      ddbc::generate_input(InputKind::kUniformIid, 1, 3, 1.0, 0.0, rng),
      ddbc::BadRangeError);
}

TEST(GenerateNoise, ZeroBoundGivesZeroNoise) {
  Rng rng(3);
  const auto noise = ddbc::generate_noise(MatrixXd::Zero(4, 4), 10, rng);
  EXPECT_TRUE(noise.E0.isZero(0.0));
}

TEST(GenerateNoise, ColumnRadiusMatchesConstruction) {
  Rng rng(5);
  const auto noise =
      ddbc::generate_noise(1e-4 * MatrixXd::Identity(5, 5), 50, rng);
  const double radius = 0.99 * std::sqrt(1e-4 / 50.0);  // ~1.4e-3
  for (int j = 0; j < 50; ++j)
    EXPECT_LE(noise.E0.col(j).norm(), radius * (1.0 + 1e-12));
}

TEST(GenerateNoise, EnergyBoundHoldsByConstruction) {
  for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    Rng rng(seed);
    MatrixXd bound(3, 3);
    bound << 2e-4, 1e-5, 0, 1e-5, 3e-4, 0, 0, 0, 5e-5;
    const auto noise = ddbc::generate_noise(bound, 30, rng);
    const MatrixXd gap = bound - noise.E0 * noise.E0.transpose();
    EXPECT_TRUE(ddbc::is_psd(ddbc::symmetrize(gap))) << "seed " << seed;
  }
}

TEST(Collect, ZeroNoiseZeroSystemGivesZeroX1) {
  const auto sys = ZeroSystem(2, 1);
  Rng rng(1);
  const MatrixXd input =
      ddbc::generate_input(InputKind::kUniformIid, 1, 5, 0.0, 1.0, rng);
  const auto res =
      ddbc::collect(sys, input, ZeroNoise(2, 5), VectorXd::Zero(2), 0.1);
  EXPECT_TRUE(res.dataset.X1.isZero(0.0));
}

TEST(Collect, ResidualIdentityHoldsExactly) {
  const auto sys = ddbc::cuk_system();
  const auto res = CollectCuk(11);
  const auto& ds = res.dataset;
  const MatrixXd residual = ds.X1 - sys.A * ds.X0 - sys.B * ds.U0 -
                            sys.C * ds.S0 -
                            sys.d * MatrixXd::Ones(1, ds.T);
  // The residual must be exactly the injected noise; compare against the
  // energy bound it was drawn from.
  const MatrixXd gap =
      ds.noise_bound - residual * residual.transpose();
  EXPECT_TRUE(ddbc::is_psd(ddbc::symmetrize(gap)));
  // Per-column radius of the generator.
  const double radius = 0.99 * std::sqrt(1e-4 / 50.0);
  for (int j = 0; j < ds.T; ++j)
    EXPECT_LE(residual.col(j).norm(), radius * (1.0 + 1e-9));
}

TEST(Collect, ResidualEqualsInjectedNoiseBitwise) {
  const auto sys = ddbc::cuk_system();
  Rng rng(23);
  const MatrixXd input =
      ddbc::generate_input(InputKind::kUniformIid, 1, 20, 0.0, 1.0, rng);
  const auto noise =
      ddbc::generate_noise(1e-4 * MatrixXd::Identity(5, 5), 20, rng);
  const VectorXd x0 = 1.1 * ddbc::cuk_setpoint().xbar;
  const auto res = ddbc::collect(sys, input, noise, x0, 0.1);
  const auto& ds = res.dataset;
  const MatrixXd residual = ds.X1 - sys.A * ds.X0 - sys.B * ds.U0 -
                            sys.C * ds.S0 -
                            sys.d * MatrixXd::Ones(1, ds.T);
  EXPECT_LE((residual - noise.E0).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Collect, DiscreteTimeResidualIdentity) {
  MatrixXd A(2, 2), B(2, 1), C(2, 2);
  A << 0.5, 0.1, -0.2, 0.7;
  B << 1.0, 0.3;
  C << 0.05, 0, 0, 0.05;
  VectorXd d(2);
  d << 0.1, -0.1;
  const auto sys =
      BilinearSystem::validated(A, B, C, d, TimeDomain::kDiscrete);
  Rng rng(9);
  const MatrixXd input =
      ddbc::generate_input(InputKind::kUniformIid, 1, 30, -0.5, 0.5, rng);
  const auto noise =
      ddbc::generate_noise(1e-5 * MatrixXd::Identity(2, 2), 30, rng);
  const auto res =
      ddbc::collect(sys, input, noise, VectorXd::Zero(2), 1.0);
  const auto& ds = res.dataset;
  const MatrixXd residual = ds.X1 - sys.A * ds.X0 - sys.B * ds.U0 -
                            sys.C * ds.S0 -
                            sys.d * MatrixXd::Ones(1, ds.T);
  EXPECT_LE((residual - noise.E0).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Collect, DeterministicForFixedSeed) {
  const auto a = CollectCuk(31);
  const auto b = CollectCuk(31);
  EXPECT_TRUE(a.dataset.X1.isApprox(b.dataset.X1, 0.0));
  EXPECT_TRUE(a.dataset.X0.isApprox(b.dataset.X0, 0.0));
}

TEST(Collect, ThrowsOnDivergence) {
  // Unstable scalar plant with long horizon blows past the guard.
  MatrixXd A(1, 1), B(1, 1), C(1, 1);
  A << 5.0;
  B << 0.0;
  C << 0.0;
  VectorXd d(1);
  d << 0.0;
  const auto sys =
      BilinearSystem::validated(A, B, C, d, TimeDomain::kContinuous);
  const MatrixXd input = MatrixXd::Zero(1, 80);
  VectorXd x0(1);
  x0 << 1.0;
  EXPECT_THROW(ddbc::collect(sys, input, ZeroNoise(1, 80), x0, 0.1),
               ddbc::NonFiniteError);
}

TEST(Dataset, W0StackOrderAndOnesRow) {
  const auto res = CollectCuk(13, 1e-4, 8);
  const MatrixXd W0 = res.dataset.W0();
  ASSERT_EQ(W0.rows(), 12);
  ASSERT_EQ(W0.cols(), 8);
  EXPECT_TRUE(W0.topRows(5).isApprox(res.dataset.X0, 0.0));
  EXPECT_TRUE(W0.middleRows(5, 1).isApprox(res.dataset.U0, 0.0));
  EXPECT_TRUE(W0.middleRows(6, 5).isApprox(res.dataset.S0, 0.0));
  EXPECT_TRUE(W0.bottomRows(1).isApprox(MatrixXd::Ones(1, 8), 0.0));
}

TEST(Dataset, ValidatedRejectsCorruptS0) {
  auto res = CollectCuk(17, 1e-4, 8);
  MatrixXd S0 = res.dataset.S0;
  S0(0, 0) += 1.0;
  EXPECT_THROW(
      Dataset::validated(res.dataset.X1, res.dataset.X0, res.dataset.U0, S0,
                         res.dataset.noise_bound),
      ddbc::ValidationError);
}

TEST(CheckRank, CukDatasetHasFullRowRank) {
  const auto res = CollectCuk(7);
  const auto rc = ddbc::check_rank(res.dataset);
  EXPECT_TRUE(rc.full_row_rank)
      << "sigma_min=" << rc.sigma_min << " sigma_max=" << rc.sigma_max;
  EXPECT_GT(rc.sigma_min, 0.0);
}

TEST(CheckRank, TooFewSamplesAlwaysFails) {
  const auto res = CollectCuk(19, 1e-4, 5);  // 5 < 12 rows
  const auto rc = ddbc::check_rank(res.dataset);
  EXPECT_FALSE(rc.full_row_rank);
}

TEST(CheckRank, ConstantInputBreaksExcitation) {
  // With u held constant the U0 row and O0 row are linearly dependent.
  const auto sys = ddbc::cuk_system();
  const MatrixXd input = MatrixXd::Constant(1, 30, 0.5);
  const VectorXd x0 = 1.1 * ddbc::cuk_setpoint().xbar;
  const auto res = ddbc::collect(sys, input, ZeroNoise(5, 30), x0, 0.1);
  const auto rc = ddbc::check_rank(res.dataset);
  EXPECT_FALSE(rc.full_row_rank);
}

TEST(DatasetJson, RoundTripIsExact) {
  const auto res = CollectCuk(29, 1e-4, 15);
  const std::string path = testing::TempDir() + "/dataset_roundtrip.json";
  ddbc::save_dataset(res.dataset, path);
  const auto back = ddbc::load_dataset(path);
  EXPECT_EQ(back.T, res.dataset.T);
  EXPECT_TRUE(back.X1.isApprox(res.dataset.X1, 0.0));
  EXPECT_TRUE(back.X0.isApprox(res.dataset.X0, 0.0));
  EXPECT_TRUE(back.U0.isApprox(res.dataset.U0, 0.0));
  EXPECT_TRUE(back.S0.isApprox(res.dataset.S0, 0.0));
  EXPECT_TRUE(back.noise_bound.isApprox(res.dataset.noise_bound, 0.0));
  std::remove(path.c_str());
}

}  // namespace
