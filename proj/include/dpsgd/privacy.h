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

#ifndef DPSGD_PRIVACY_H_
#define DPSGD_PRIVACY_H_

#include <cstdint>
#include <string>
#include <vector>

#include "Eigen/Core"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "dpsgd/sampling.h"

namespace dpsgd {

enum class Framework { kNone, kEpsDelta, kRdp, kGdp };

absl::StatusOr<Framework> ParseFramework(const std::string& name);
std::string FrameworkName(Framework f);

struct PrivacySpec {
  Framework framework = Framework::kNone;
  double epsilon = 0.0;  // kEpsDelta, kRdp
  double delta = 0.0;    // kEpsDelta
  double gamma = 1.0;    // kRdp order; reported only
  double mu = 0.0;       // kGdp
  double c1 = 1.0;
  double c2 = 2.0;
};

absl::Status ValidatePrivacySpec(const PrivacySpec& spec);

// Per-coordinate noise standard deviations.
struct NoiseScales {
  double sigma1 = 0.0;  // added to the averaged gradient at every step
  double sigma2 = 0.0;  // entries of the private Hessian
  double sigma3 = 0.0;  // entries of the private score covariance
};

struct Sigma1Calibration {
  double sigma1 = 0.0;
  // GDP only: the solved sigma and c = m sqrt(T) / n.
  double gdp_sigma = 0.0;
  double gdp_c = 0.0;
  std::vector<std::string> warnings;
};

// Gradient noise for T steps with batch size m on n records:
//   (eps, delta): c2 dg m sqrt(T log(1/delta)) / (n eps)   (Poisson)
//   RDP:          c2 dg (m / n) sqrt(T / eps)              (SRSWOR)
//   GDP:          2 sigma dg / m, sigma solving GdpMuFromSigma(sigma, c) = mu
// The (eps, delta) and RDP closed forms hold for eps < c1 m^2 T / n^2; a
// violation is reported in `warnings`, not as an error.
absl::StatusOr<Sigma1Calibration> CalibrateSigma1(const PrivacySpec& spec,
                                                  double delta_g, int64_t m,
                                                  int64_t n, int64_t T);

// mu = sqrt(2) c sqrt(exp(sigma^-2) Phi(1.5 / sigma) + 3 Phi(-0.5 / sigma) - 2).
absl::StatusOr<double> GdpMuFromSigma(double sigma, double c);
// log(mu); finite for sigma down to 1e-150, where mu itself overflows.
absl::StatusOr<double> GdpLogMuFromSigma(double sigma, double c);
// Inverse of GdpMuFromSigma in sigma, accurate to 1e-10 max(1, mu).
absl::StatusOr<double> GdpSigmaFromMu(double mu, double c);

// Minimal Gaussian-mechanism sd for releasing an n-average whose per-record
// sensitivity is `delta`:
//   (eps, delta'): 2 (delta / n) sqrt(2 log(2.5 / delta')) / eps
//   RDP:           (delta / n) sqrt(gamma / eps)
//   GDP:           (delta / n) sqrt(2) / mu
absl::StatusOr<double> CalibrateMatrixNoise(const PrivacySpec& spec,
                                            double delta, int64_t n);

// Full-batch noisy gradient descent with per-step budget mu / sqrt(T) under
// Gaussian composition: sqrt(2 T) delta_g / (n mu).
absl::StatusOr<double> CalibrateDpgdSigma(double mu, double delta_g,
                                          int64_t n, int64_t T);

// M + E with E symmetric and its upper triangle (diagonal included) i.i.d.
// N(0, sd^2). Draws are taken row by row over the upper triangle.
absl::StatusOr<Eigen::MatrixXd> PerturbSymmetric(const Eigen::MatrixXd& m,
                                                 double sd, RngState& rng);

struct ReleaseUsage {
  std::string name;
  double mu = 0.0;
  double epsilon = 0.0;
  double delta = 0.0;
};

struct BudgetSummary {
  Framework framework = Framework::kNone;
  double mu = 0.0;       // GDP: sqrt(sum mu_i^2)
  double epsilon = 0.0;  // (eps, delta) and RDP: sum
  double delta = 0.0;    // (eps, delta): sum
  double gamma = 1.0;
  std::vector<ReleaseUsage> releases;
};

BudgetSummary BudgetReport(const PrivacySpec& spec,
                           const std::vector<ReleaseUsage>& usage);

// The usage record of one release made under `spec`.
ReleaseUsage UsageFor(const std::string& name, const PrivacySpec& spec);

}  // namespace dpsgd

#endif  // DPSGD_PRIVACY_H_
