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

#ifndef DPSGD_HARNESS_H_
#define DPSGD_HARNESS_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "Eigen/Core"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "dpsgd/inference.h"
#include "dpsgd/models.h"
#include "dpsgd/pivot_table.h"
#include "dpsgd/privacy.h"
#include "dpsgd/report.h"
#include "dpsgd/sampling.h"

namespace dpsgd {

enum class ExperimentKind { kCoverage, kMseVsIters, kCompareGd, kExample1 };

absl::StatusOr<ExperimentKind> ParseExperimentKind(const std::string& name);
std::string ExperimentKindName(ExperimentKind kind);

enum class SensitivityMode { kBounds, kClip };
enum class FloorPolicy { kOff, kOn, kAuto };

// Iteration count as a function of n: exactly one of round(n^exponent),
// round(k n) or a fixed count.
struct TRule {
  std::optional<double> exponent = 2.0;
  std::optional<double> k;
  std::optional<int64_t> fixed;
};

absl::StatusOr<int64_t> ResolveT(const TRule& rule, int64_t n);

struct ExperimentConfig {
  int schema_version = 1;
  ExperimentKind kind = ExperimentKind::kCoverage;

  // Data. Settings are the product models x covariances x n.
  std::vector<ModelKind> models = {ModelKind::kLinear};
  std::vector<CovarianceStructure> covariances = {
      CovarianceStructure::kIdentity};
  std::vector<int64_t> n = {400};
  int p = 3;
  double toeplitz_rho = 0.5;
  double noise_sd = 1.0;
  std::optional<double> theta_low;
  std::optional<double> theta_high;

  int64_t replications = 500;
  uint64_t seed = 1;
  double level = 0.95;

  PrivacySpec privacy;
  SensitivityMode sensitivity = SensitivityMode::kBounds;
  DomainBounds bounds;
  double tau = 1.0;  // kClip threshold

  // Optimizer.
  double eta = 0.5;
  double alpha = 0.501;
  SchemeKind scheme = SchemeKind::kSrswor;
  int64_t m = 1;
  TRule t_rule;
  std::optional<double> sigma1;  // fixed sigma1 instead of calibration

  // Inference.
  CovarianceForm form = CovarianceForm::kStructured;
  FloorPolicy floor = FloorPolicy::kAuto;
  double kappa = 1e-3;
  std::string pivot_table;  // empty: the built-in default path

  // mse-vs-iters: T = round(n^e) for each exponent.
  std::vector<double> t_exponents = {1.0, 1.1, 1.2, 1.3, 1.5, 2.0};
  bool include_dpsgd = true;

  // compare-gd.
  std::vector<double> sgd_kappas = {1.5, 1.625, 1.75, 1.875, 2.0};
  std::vector<int64_t> gd_iterations = {1, 2, 3, 5, 10, 15, 20, 25, 30};
  std::optional<double> gd_eta;  // absent: 1 / lambda_max(X'X / n)

  // example1: observations N(mean_mu, mean_sigma^2), one-dimensional.
  std::vector<std::pair<double, int64_t>> km_grid = {{1, 1}, {2, 5}, {5, 2}};
  double mean_mu = 0.0;
  double mean_sigma = 1.0;
  SchemeKind example_scheme = SchemeKind::kWithReplacement;
};

absl::Status ValidateExperimentConfig(const ExperimentConfig& cfg);
absl::StatusOr<ExperimentConfig> ParseExperimentConfig(const std::string& json);
absl::StatusOr<ExperimentConfig> LoadExperimentConfig(const std::string& path);
// Canonical JSON with every field resolved; the digest is taken over this.
std::string ConfigToJson(const ExperimentConfig& cfg);
std::string ConfigDigest(const ExperimentConfig& cfg);

// Runs fn(0) ... fn(count - 1) on `workers` threads. Each index is processed
// exactly once; callers store results by index.
void ParallelFor(int64_t count, int workers,
                 const std::function<void(int64_t)>& fn);

// The pivot table named by the config, or the default generated table.
absl::StatusOr<PivotTable> LoadConfiguredPivotTable(
    const ExperimentConfig& cfg);
std::string DefaultPivotTablePath();

absl::StatusOr<ExperimentReport> RunCoverage(const ExperimentConfig& cfg,
                                             int workers = 1);
absl::StatusOr<ExperimentReport> RunMseVsIters(const ExperimentConfig& cfg,
                                               int workers = 1);
absl::StatusOr<ExperimentReport> RunCompareGd(const ExperimentConfig& cfg,
                                              int workers = 1);
absl::StatusOr<ExperimentReport> RunExample1(const ExperimentConfig& cfg,
                                             int workers = 1);
absl::StatusOr<ExperimentReport> RunExperiment(const ExperimentConfig& cfg,
                                               int workers = 1);

// One private fit on a given dataset: DP-SGD plus both interval families.
struct FitResult {
  Eigen::VectorXd theta_bar;
  double sigma1 = 0.0;
  int64_t T = 0;
  NoiseScales noise;
  CovarianceEstimates covariance;
  std::vector<std::pair<std::string, Intervals>> intervals;
  BudgetSummary budget;
  std::vector<std::string> warnings;
};

absl::StatusOr<FitResult> FitDataset(const ExperimentConfig& cfg,
                                     ModelKind kind, const Dataset& data,
                                     const DomainBounds& bounds,
                                     const PivotTable& table, RngState& rng);

}  // namespace dpsgd

#endif  // DPSGD_HARNESS_H_
