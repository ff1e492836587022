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

#ifndef DPSGD_OPTIMIZER_H_
#define DPSGD_OPTIMIZER_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "Eigen/Core"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "dpsgd/models.h"
#include "dpsgd/sampling.h"

namespace dpsgd {

struct OptimConfig {
  double eta = 0.5;
  double alpha = 0.501;  // eta_t = eta * t^-alpha
  int64_t T = 1;
  SamplingScheme scheme;
  std::optional<double> clip;  // per-record threshold tau
  double sigma1 = 0.0;
  Eigen::VectorXd theta0;  // empty means the zero vector
  // Keep every iterate in RunResult::iterates; for tests and diagnostics.
  bool store_iterates = false;
};

// Hard errors for unusable configurations; soft issues such as alpha outside
// (1/2, 1) are appended to `warnings` when it is non-null.
absl::Status ValidateOptimConfig(const OptimConfig& cfg, int p, int64_t n,
                                 std::vector<std::string>* warnings = nullptr);

// Streaming sums for the random scaling matrix:
//   S_t = sum_{s <= t} theta_s,  G1 = sum_t S_t S_t',  g2 = sum_t t S_t,
//   g3 = sum_t t^2.
// The floating sums use compensated addition; g3 is an exact integer.
class ScalingAccumulators {
 public:
  ScalingAccumulators() = default;
  explicit ScalingAccumulators(int p);

  void Add(const Eigen::VectorXd& theta);

  int64_t steps() const { return t_; }
  const Eigen::VectorXd& s_running() const { return s_; }
  const Eigen::MatrixXd& g1() const { return g1_; }
  const Eigen::VectorXd& g2() const { return g2_; }
  unsigned __int128 g3_exact() const { return g3_; }
  double g3() const { return static_cast<double>(g3_); }

 private:
  int64_t t_ = 0;
  Eigen::VectorXd s_, s_c_;
  Eigen::MatrixXd g1_, g1_c_;
  Eigen::VectorXd g2_, g2_c_;
  unsigned __int128 g3_ = 0;
};

struct RunResult {
  Eigen::VectorXd theta_bar;   // S_T / T
  Eigen::VectorXd theta_last;  // theta_T
  ScalingAccumulators accumulators;
  double realized_sigma1 = 0.0;
  double k = 0.0;  // T / n
  int64_t empty_batches = 0;
  int64_t clipped_gradients = 0;
  std::vector<Eigen::VectorXd> iterates;  // only with store_iterates
};

// Scales g to norm min(||g||, tau). Gradients already inside the ball are
// returned untouched.
Eigen::VectorXd ClipGradient(const Eigen::VectorXd& g, double tau);

// theta_t = theta_{t-1} - eta_t (gbar_t + xi_t), xi_t ~ N(0, sigma1^2 I),
// gbar_t the (clipped) batch-mean gradient. Poisson batches are averaged over
// the expected size m, so an empty batch contributes only noise. Fails with
// kOutOfRange naming the step once ||theta_t|| > 1e8 (1 + ||theta_0||).
absl::StatusOr<RunResult> DpsgdRun(const Dataset& data, const LossModel& model,
                                   const OptimConfig& cfg, RngState& rng);

struct GdConfig {
  double eta = 1.0;  // constant step
  int64_t T = 1;
  double sigma_gd = 0.0;
  Eigen::VectorXd theta0;
  bool store_iterates = false;
};

// Full-batch noisy gradient descent:
// theta_t = theta_{t-1} - eta (grad L_n(theta_{t-1}) + w_t). The estimator is
// theta_last; theta_bar and the accumulators are filled for completeness.
absl::StatusOr<RunResult> DpgdRun(const Dataset& data, const LossModel& model,
                                  const GdConfig& cfg, RngState& rng);

// V-hat = (n / T^3) sum_t (S_t - t theta_bar)(S_t - t theta_bar)'
//       = (n / T^3) (G1 - g2 theta_bar' - theta_bar g2' + g3 theta_bar
//         theta_bar').
absl::StatusOr<Eigen::MatrixXd> FinalizeScaling(
    const ScalingAccumulators& acc, const Eigen::VectorXd& theta_bar,
    int64_t n, int64_t T);

// The centered partial sums of randomized SGD only see the within-run
// sampling and privacy noise, whose long-run variance is V / (k m) +
// sigma1^2 A^-2 / k. The full-sample term V of sqrt(n)(theta_bar - theta*)
// is constant along the path and cancels. Multiplying V-hat by 1 + k m
// restores V (1 + 1 / (k m)) when sigma1 = 0. Cyclic runs get factor 1.
double ScalingInflation(const SamplingScheme& scheme, double k);

// FinalizeScaling(...) * ScalingInflation(...).
absl::StatusOr<Eigen::MatrixXd> RandomScalingMatrix(const RunResult& run,
                                                    const SamplingScheme& scheme,
                                                    int64_t n);

}  // namespace dpsgd

#endif  // DPSGD_OPTIMIZER_H_
