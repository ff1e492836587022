//
// Copyright 2026 The DP-SGD Inference Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "dpsgd/optimizer.h"

#include <cmath>
#include <string>
#include <vector>

#include "Eigen/Core"
#include "Eigen/Eigenvalues"
#include "dpsgd/models.h"
#include "dpsgd/sampling.h"
#include "gtest/gtest.h"

namespace dpsgd {
namespace {

Dataset LinearData(int64_t n, int p, uint64_t seed) {
  SynthSpec spec;
  spec.model = ModelKind::kLinear;
  spec.n = n;
  spec.p = p;
  RngState rng(seed);
  absl::StatusOr<SyntheticData> d = GenerateSynthetic(spec, rng);
  EXPECT_TRUE(d.ok()) << d.status();
  return d->data;
}

LossModel Model(ModelKind kind, int p) {
  absl::StatusOr<LossModel> m = LossModel::Create(kind, p);
  EXPECT_TRUE(m.ok());
  return *m;
}

// V-hat computed directly from stored iterates.
Eigen::MatrixXd TwoPassScaling(const std::vector<Eigen::VectorXd>& iterates,
                               const Eigen::VectorXd& theta_bar, int64_t n) {
  const int64_t T = static_cast<int64_t>(iterates.size());
  const int p = static_cast<int>(theta_bar.size());
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd partial = Eigen::VectorXd::Zero(p);
  for (int64_t s = 1; s <= T; ++s) {
    partial += iterates[s - 1];
    const Eigen::VectorXd d = partial - static_cast<double>(s) * theta_bar;
    v += d * d.transpose();
  }
  const double td = static_cast<double>(T);
  return v * (static_cast<double>(n) / (td * td * td));
}

TEST(ClipGradientTest, Examples) {
  Eigen::VectorXd g(2);
  g << 3.0, 4.0;
  EXPECT_EQ(ClipGradient(g, 10.0), g);
  EXPECT_EQ(ClipGradient(g, 5.0), g);
  const Eigen::VectorXd c = ClipGradient(g, 2.5);
  EXPECT_DOUBLE_EQ(c(0), 1.5);
  EXPECT_DOUBLE_EQ(c(1), 2.0);
  EXPECT_EQ(ClipGradient(Eigen::VectorXd::Zero(2), 1.0),
            Eigen::VectorXd::Zero(2));
}

TEST(ClipGradientTest, NormNeverExceedsThreshold) {
  RngState rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd g(4);
    for (int j = 0; j < 4; ++j) g(j) = 10.0 * rng.StandardNormal();
    const double tau = 0.1 + 5.0 * rng.Uniform01();
    EXPECT_LE(ClipGradient(g, tau).norm(), tau * (1 + 1e-12));
  }
}

TEST(DpsgdRunTest, CyclicMeanModelTracksRunningMean) {
  const int64_t n = 50;
  RowMatrix x(n, 2);
  RngState data_rng(11);
  for (int64_t i = 0; i < n; ++i) {
    x(i, 0) = data_rng.StandardNormal();
    x(i, 1) = 3.0 + data_rng.StandardNormal();
  }
  absl::StatusOr<Dataset> data = Dataset::Create(x, Eigen::VectorXd());
  ASSERT_TRUE(data.ok());
  OptimConfig cfg;
  cfg.eta = 0.5;
  cfg.alpha = 1.0;
  cfg.T = n;
  cfg.scheme = {SchemeKind::kCyclic, 1};
  cfg.store_iterates = true;
  RngState rng(1);
  absl::StatusOr<RunResult> run =
      DpsgdRun(*data, Model(ModelKind::kMean, 2), cfg, rng);
  ASSERT_TRUE(run.ok()) << run.status();
  const Eigen::VectorXd mean = x.colwise().mean().transpose();
  EXPECT_LT((run->theta_last - mean).norm(), 1e-12);
  for (int64_t t = 1; t <= n; ++t) {
    const Eigen::VectorXd partial =
        x.topRows(t).colwise().mean().transpose();
    EXPECT_LT((run->iterates[t - 1] - partial).norm(), 1e-12) << t;
  }
}

TEST(DpsgdRunTest, HugeClipThresholdMatchesUnclipped) {
  const Dataset data = LinearData(200, 3, 5);
  const LossModel model = Model(ModelKind::kLinear, 3);
  OptimConfig cfg;
  cfg.T = 2000;
  cfg.sigma1 = 0.3;
  cfg.scheme = {SchemeKind::kSrswor, 4};
  RngState r1(9);
  absl::StatusOr<RunResult> plain = DpsgdRun(data, model, cfg, r1);
  cfg.clip = 1e12;
  RngState r2(9);
  absl::StatusOr<RunResult> clipped = DpsgdRun(data, model, cfg, r2);
  ASSERT_TRUE(plain.ok() && clipped.ok());
  EXPECT_EQ(plain->theta_bar, clipped->theta_bar);
  EXPECT_EQ(plain->theta_last, clipped->theta_last);
  EXPECT_EQ(clipped->clipped_gradients, 0);
}

TEST(DpsgdRunTest, SmallClipThresholdCountsClippedGradients) {
  const Dataset data = LinearData(100, 3, 5);
  OptimConfig cfg;
  cfg.T = 100;
  cfg.clip = 1e-6;
  RngState rng(2);
  absl::StatusOr<RunResult> run =
      DpsgdRun(data, Model(ModelKind::kLinear, 3), cfg, rng);
  ASSERT_TRUE(run.ok());
  EXPECT_GT(run->clipped_gradients, 90);
}

TEST(DpsgdRunTest, FullBatchSingleStepByHand) {
  RowMatrix x(3, 2);
  x << 1, 0, 0, 1, 1, 1;
  Eigen::VectorXd y(3);
  y << 1, 2, 3;
  absl::StatusOr<Dataset> data = Dataset::Create(x, y);
  ASSERT_TRUE(data.ok());
  OptimConfig cfg;
  cfg.eta = 0.3;
  cfg.T = 1;
  cfg.scheme = {SchemeKind::kSrswor, 3};
  cfg.theta0 = Eigen::Vector2d(0.5, -0.5);
  RngState rng(4);
  absl::StatusOr<RunResult> run =
      DpsgdRun(*data, Model(ModelKind::kLinear, 2), cfg, rng);
  ASSERT_TRUE(run.ok());
  // Residuals y - x'theta: 0.5, 2.5, 3; gradient -mean(r x) = (-7/6, -11/6).
  const Eigen::Vector2d expected(0.5 + 0.3 * 3.5 / 3, -0.5 + 0.3 * 5.5 / 3);
  EXPECT_LT((run->theta_last - expected).norm(), 1e-15);
  EXPECT_LT((run->theta_bar - expected).norm(), 1e-15);
}

TEST(DpsgdRunTest, PoissonFullInclusionIsFullGradient) {
  const Dataset data = LinearData(30, 2, 8);
  const LossModel model = Model(ModelKind::kLinear, 2);
  OptimConfig cfg;
  cfg.eta = 0.2;
  cfg.T = 1;
  cfg.scheme = {SchemeKind::kPoisson, 30};
  RngState rng(1);
  absl::StatusOr<RunResult> run = DpsgdRun(data, model, cfg, rng);
  ASSERT_TRUE(run.ok());
  const Eigen::VectorXd expected =
      -0.2 * EmpiricalGradient(model, data, Eigen::VectorXd::Zero(2));
  EXPECT_LT((run->theta_last - expected).norm(), 1e-14);
}

TEST(DpsgdRunTest, NoiseHasConfiguredScale) {
  // Data at the origin makes the mean-model gradient vanish at theta0 = 0,
  // so one step leaves theta_1 = -eta * sigma1 * Z.
  absl::StatusOr<Dataset> data =
      Dataset::Create(RowMatrix::Zero(5, 2), Eigen::VectorXd());
  ASSERT_TRUE(data.ok());
  const LossModel model = Model(ModelKind::kMean, 2);
  OptimConfig cfg;
  cfg.eta = 0.5;
  cfg.T = 1;
  cfg.sigma1 = 2.0;
  const int reps = 20000;
  double sum_sq = 0.0;
  RngState master(17);
  for (int r = 0; r < reps; ++r) {
    RngState rng = master.Child(r);
    absl::StatusOr<RunResult> run = DpsgdRun(*data, model, cfg, rng);
    ASSERT_TRUE(run.ok());
    sum_sq += run->theta_last.squaredNorm();
  }
  // E||theta_1||^2 = p * (eta sigma1)^2 = 2; relative SE is 1/sqrt(reps).
  EXPECT_NEAR(sum_sq / reps, 2.0, 2.0 * 5.0 / std::sqrt(reps));
}

TEST(DpsgdRunTest, DeterministicForSameStream) {
  const Dataset data = LinearData(100, 3, 1);
  OptimConfig cfg;
  cfg.T = 500;
  cfg.sigma1 = 1.0;
  cfg.scheme = {SchemeKind::kWithReplacement, 3};
  RngState a(42), b(42);
  absl::StatusOr<RunResult> ra =
      DpsgdRun(data, Model(ModelKind::kLinear, 3), cfg, a);
  absl::StatusOr<RunResult> rb =
      DpsgdRun(data, Model(ModelKind::kLinear, 3), cfg, b);
  ASSERT_TRUE(ra.ok() && rb.ok());
  EXPECT_EQ(ra->theta_bar, rb->theta_bar);
  EXPECT_EQ(ra->accumulators.g1(), rb->accumulators.g1());
}

TEST(DpsgdRunTest, DivergenceReportsStep) {
  const Dataset data = LinearData(100, 3, 1);
  OptimConfig cfg;
  cfg.eta = 1e3;
  cfg.alpha = 0.0;
  cfg.T = 1000;
  RngState rng(1);
  absl::StatusOr<RunResult> run =
      DpsgdRun(data, Model(ModelKind::kLinear, 3), cfg, rng);
  ASSERT_FALSE(run.ok());
  EXPECT_EQ(run.status().code(), absl::StatusCode::kOutOfRange);
  EXPECT_NE(std::string(run.status().message()).find("step"),
            std::string::npos);
}

TEST(DpsgdRunTest, RejectsBadConfigs) {
  const Dataset data = LinearData(20, 3, 1);
  const LossModel model = Model(ModelKind::kLinear, 3);
  RngState rng(1);
  OptimConfig base;
  base.T = 10;
  OptimConfig c = base;
  c.T = 0;
  EXPECT_FALSE(DpsgdRun(data, model, c, rng).ok());
  c = base;
  c.eta = 0.0;
  EXPECT_FALSE(DpsgdRun(data, model, c, rng).ok());
  c = base;
  c.sigma1 = -1.0;
  EXPECT_FALSE(DpsgdRun(data, model, c, rng).ok());
  c = base;
  c.clip = 0.0;
  EXPECT_FALSE(DpsgdRun(data, model, c, rng).ok());
  c = base;
  c.scheme = {SchemeKind::kSrswor, 21};
  EXPECT_FALSE(DpsgdRun(data, model, c, rng).ok());
  c = base;
  c.theta0 = Eigen::VectorXd::Zero(2);
  EXPECT_FALSE(DpsgdRun(data, model, c, rng).ok());
  EXPECT_FALSE(DpsgdRun(data, Model(ModelKind::kLinear, 2), base, rng).ok());
}

TEST(ValidateOptimConfigTest, WarnsOutsideAveragingRange) {
  OptimConfig cfg;
  cfg.T = 10;
  for (double alpha : {0.0, 0.5, 1.0, 1.5}) {
    cfg.alpha = alpha;
    std::vector<std::string> warnings;
    EXPECT_TRUE(ValidateOptimConfig(cfg, 3, 100, &warnings).ok());
    EXPECT_EQ(warnings.size(), 1u) << alpha;
  }
  cfg.alpha = 0.6;
  std::vector<std::string> warnings;
  EXPECT_TRUE(ValidateOptimConfig(cfg, 3, 100, &warnings).ok());
  EXPECT_TRUE(warnings.empty());
}

TEST(ScalingAccumulatorsTest, WeightSumIsExact) {
  ScalingAccumulators acc(2);
  const Eigen::VectorXd v = Eigen::Vector2d(1.0, -2.0);
  const int64_t T = 3000;
  for (int64_t t = 0; t < T; ++t) acc.Add(v);
  const unsigned __int128 expected =
      static_cast<unsigned __int128>(T) * (T + 1) * (2 * T + 1) / 6;
  EXPECT_TRUE(acc.g3_exact() == expected);
  EXPECT_EQ(acc.steps(), T);
}

TEST(ScalingAccumulatorsTest, RunningSumMatchesAverage) {
  const Dataset data = LinearData(100, 3, 2);
  OptimConfig cfg;
  cfg.T = 777;
  cfg.sigma1 = 0.5;
  RngState rng(3);
  absl::StatusOr<RunResult> run =
      DpsgdRun(data, Model(ModelKind::kLinear, 3), cfg, rng);
  ASSERT_TRUE(run.ok());
  EXPECT_LT((run->theta_bar * 777.0 - run->accumulators.s_running()).norm(),
            1e-9);
}

TEST(FinalizeScalingTest, ConstantIteratesGiveZero) {
  ScalingAccumulators acc(2);
  const Eigen::VectorXd v = Eigen::Vector2d(0.7, -1.3);
  for (int t = 0; t < 50; ++t) acc.Add(v);
  absl::StatusOr<Eigen::MatrixXd> s = FinalizeScaling(acc, v, 100, 50);
  ASSERT_TRUE(s.ok());
  EXPECT_LT(s->cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FinalizeScalingTest, TwoStepHandValue) {
  ScalingAccumulators acc(1);
  acc.Add(Eigen::VectorXd::Constant(1, 1.0));
  acc.Add(Eigen::VectorXd::Constant(1, -1.0));
  absl::StatusOr<Eigen::MatrixXd> s =
      FinalizeScaling(acc, Eigen::VectorXd::Zero(1), 40, 2);
  ASSERT_TRUE(s.ok());
  EXPECT_DOUBLE_EQ((*s)(0, 0), 40.0 / 8.0);
}

TEST(FinalizeScalingTest, StreamingMatchesTwoPass) {
  const Dataset data = LinearData(300, 3, 4);
  for (SchemeKind kind : {SchemeKind::kSrswor, SchemeKind::kCyclic}) {
    OptimConfig cfg;
    cfg.T = 1000;
    cfg.sigma1 = 0.7;
    cfg.scheme = {kind, 2};
    cfg.store_iterates = true;
    RngState rng(6);
    absl::StatusOr<RunResult> run =
        DpsgdRun(data, Model(ModelKind::kLinear, 3), cfg, rng);
    ASSERT_TRUE(run.ok());
    absl::StatusOr<Eigen::MatrixXd> streaming =
        FinalizeScaling(run->accumulators, run->theta_bar, 300, 1000);
    ASSERT_TRUE(streaming.ok());
    const Eigen::MatrixXd direct =
        TwoPassScaling(run->iterates, run->theta_bar, 300);
    EXPECT_LE((*streaming - direct).norm(), 1e-8 * direct.norm());
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(direct)
                  .eigenvalues()
                  .minCoeff(),
              0.0);
  }
}

TEST(FinalizeScalingTest, RejectsStepMismatch) {
  ScalingAccumulators acc(1);
  acc.Add(Eigen::VectorXd::Zero(1));
  absl::StatusOr<Eigen::MatrixXd> s =
      FinalizeScaling(acc, Eigen::VectorXd::Zero(1), 10, 2);
  EXPECT_EQ(s.status().code(), absl::StatusCode::kFailedPrecondition);
  EXPECT_FALSE(FinalizeScaling(acc, Eigen::VectorXd::Zero(2), 10, 1).ok());
}

TEST(ScalingInflationTest, Values) {
  EXPECT_EQ(ScalingInflation({SchemeKind::kCyclic, 5}, 3.0), 1.0);
  EXPECT_DOUBLE_EQ(ScalingInflation({SchemeKind::kSrswor, 5}, 2.0), 11.0);
  EXPECT_DOUBLE_EQ(ScalingInflation({SchemeKind::kPoisson, 1}, 1.0), 2.0);
}

TEST(RandomScalingMatrixTest, AppliesInflation) {
  const Dataset data = LinearData(100, 2, 4);
  OptimConfig cfg;
  cfg.T = 200;
  cfg.scheme = {SchemeKind::kSrswor, 2};
  RngState rng(6);
  absl::StatusOr<RunResult> run =
      DpsgdRun(data, Model(ModelKind::kLinear, 2), cfg, rng);
  ASSERT_TRUE(run.ok());
  absl::StatusOr<Eigen::MatrixXd> v = RandomScalingMatrix(*run, cfg.scheme, 100);
  absl::StatusOr<Eigen::MatrixXd> raw =
      FinalizeScaling(run->accumulators, run->theta_bar, 100, 200);
  ASSERT_TRUE(v.ok() && raw.ok());
  EXPECT_LT((*v - 5.0 * *raw).norm(), 1e-12 * raw->norm());
}

TEST(DpgdRunTest, NoiselessQuadraticDecreasesMonotonically) {
  const Dataset data = LinearData(200, 3, 9);
  const LossModel model = Model(ModelKind::kLinear, 3);
  const Eigen::MatrixXd h = data.x().transpose() * data.x() / 200.0;
  const double lmax =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h).eigenvalues().maxCoeff();
  GdConfig cfg;
  cfg.eta = 1.0 / lmax;
  cfg.T = 30;
  cfg.store_iterates = true;
  RngState rng(1);
  absl::StatusOr<RunResult> run = DpgdRun(data, model, cfg, rng);
  ASSERT_TRUE(run.ok());
  double prev = EmpiricalLoss(model, data, Eigen::VectorXd::Zero(3));
  for (const Eigen::VectorXd& theta : run->iterates) {
    const double loss = EmpiricalLoss(model, data, theta);
    EXPECT_LE(loss, prev + 1e-14);
    prev = loss;
  }
  const Eigen::VectorXd ols =
      h.ldlt().solve(data.x().transpose() * data.y() / 200.0);
  EXPECT_LT((run->theta_last - ols).norm(), 1e-3);
}

TEST(DpgdRunTest, SingleStepByHand) {
  const Dataset data = LinearData(50, 2, 9);
  const LossModel model = Model(ModelKind::kLinear, 2);
  GdConfig cfg;
  cfg.eta = 0.4;
  cfg.T = 1;
  cfg.theta0 = Eigen::Vector2d(0.1, 0.2);
  RngState rng(1);
  absl::StatusOr<RunResult> run = DpgdRun(data, model, cfg, rng);
  ASSERT_TRUE(run.ok());
  const Eigen::VectorXd expected =
      cfg.theta0 - 0.4 * EmpiricalGradient(model, data, cfg.theta0);
  EXPECT_LT((run->theta_last - expected).norm(), 1e-15);
}

TEST(DpgdRunTest, RejectsBadConfigs) {
  const Dataset data = LinearData(20, 2, 1);
  const LossModel model = Model(ModelKind::kLinear, 2);
  RngState rng(1);
  GdConfig c;
  c.T = 0;
  EXPECT_FALSE(DpgdRun(data, model, c, rng).ok());
  c = GdConfig();
  c.sigma_gd = -1;
  EXPECT_FALSE(DpgdRun(data, model, c, rng).ok());
}

}  // namespace
}  // namespace dpsgd
