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

#ifndef DPSGD_INFERENCE_H_
#define DPSGD_INFERENCE_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "Eigen/Core"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "dpsgd/models.h"
#include "dpsgd/pivot_table.h"
#include "dpsgd/privacy.h"
#include "dpsgd/sampling.h"

namespace dpsgd {

// How S-hat is formed before privatization.
//   kStructured: linear S = sigma_e^2 A (only the residual variance is
//     released); logistic S = A (nothing extra released); mean S released
//     entrywise.
//   kSandwich: S-hat = (1/n) sum grad grad' released entrywise.
enum class CovarianceForm { kStructured, kSandwich };

absl::StatusOr<CovarianceForm> ParseCovarianceForm(const std::string& name);
std::string CovarianceFormName(CovarianceForm form);

struct PluginOptions {
  CovarianceForm form = CovarianceForm::kStructured;
  // Raise eigenvalues of A-tilde (and of S-tilde in the sandwich form, and
  // the released residual variance) below kappa to kappa.
  bool floor_eigenvalues = false;
  double kappa = 1e-3;
  // Derivatives of the clipped per-record gradient; forces kSandwich.
  std::optional<double> clip;
};

struct CovarianceEstimates {
  Eigen::MatrixXd A_hat;    // non-private, for diagnostics only
  Eigen::MatrixXd S_hat;    // non-private, for diagnostics only
  Eigen::MatrixXd A_tilde;
  Eigen::MatrixXd S_tilde;
  Eigen::MatrixXd V_tilde;  // A_tilde^-1 S_tilde A_tilde^-1
  Eigen::MatrixXd V_hat;    // filled by the caller from the run
  double sigma2 = 0.0;
  double sigma3 = 0.0;
  bool floored = false;
  CovarianceForm form = CovarianceForm::kStructured;
};

// sigma2 for A-tilde and sigma3 for the score release of `form`.
absl::StatusOr<NoiseScales> MatrixNoiseScales(const PrivacySpec& spec,
                                              ModelKind kind,
                                              const SensitivityBounds& sens,
                                              int64_t n, CovarianceForm form);

// Private plug-in estimates at theta_bar. Matrix noise is drawn from `rng`
// (A first, then the score release). Without flooring, a non-positive-definite
// A-tilde is a kFailedPrecondition error suggesting it.
absl::StatusOr<CovarianceEstimates> PluginCovariance(
    const Dataset& data, const LossModel& model,
    const Eigen::VectorXd& theta_bar, const NoiseScales& noise,
    const PluginOptions& options, RngState& rng);

enum class CiMethod {
  kPlugIn,
  kPlugInCorrected,
  kRandomScaling,
  kRandomScalingCorrected,
  kRandomScalingHarmonized,
  kOracle,
  kGdPlugIn,
};

std::string CiMethodName(CiMethod method);

struct ConfidenceInterval {
  int j = 0;
  double lower = 0.0;
  double upper = 0.0;
  CiMethod method = CiMethod::kPlugIn;
  double level = 0.95;

  double center() const { return 0.5 * (lower + upper); }
  double length() const { return upper - lower; }
  bool Covers(double v) const { return lower <= v && v <= upper; }
};

using Intervals = std::vector<ConfidenceInterval>;

// Two-sided standard-normal critical value for coverage `level`.
absl::StatusOr<double> NormalCriticalValue(double level);

// theta_j +- z sqrt(V_jj / n).
absl::StatusOr<Intervals> PluginCi(const Eigen::VectorXd& theta_bar,
                                   const Eigen::MatrixXd& v_tilde, int64_t n,
                                   double level);

// theta_j +- z sqrt((V_jj + sigma1^2 (A^-2)_jj / k) / n).
absl::StatusOr<Intervals> PluginCiCorrected(const Eigen::VectorXd& theta_bar,
                                            const Eigen::MatrixXd& v_tilde,
                                            const Eigen::MatrixXd& a_tilde,
                                            double sigma1, double k, int64_t n,
                                            double level);

// theta_j +- c sqrt(V-hat_jj / n), c from the pivot table.
absl::StatusOr<Intervals> RandomScalingCi(const Eigen::VectorXd& theta_bar,
                                          const Eigen::MatrixXd& v_hat,
                                          int64_t n, double level,
                                          const PivotTable& table);

// sqrt(V_jj / (V_jj + sigma1^2 ((A^-1)_jj)^2)).
double RsCorrectionFactor(double v_jj, double a_inv_jj, double sigma1);

// Random scaling interval shrunk by RsCorrectionFactor.
absl::StatusOr<Intervals> RandomScalingCiCorrected(
    const Eigen::VectorXd& theta_bar, const Eigen::MatrixXd& v_hat,
    const Eigen::MatrixXd& v_tilde, const Eigen::MatrixXd& a_tilde,
    double sigma1, int64_t n, double level, const PivotTable& table);

// Variant whose factor matches the long-run variance seen by the inflated
// V-hat: with w = V_jj (1 + 1/(k m)) and b = sigma1^2 (A^-2)_jj,
// sqrt((w + b / k) / (w + b (m + 1 / k))).
double HarmonizedCorrectionFactor(double v_jj, double a_inv_sq_jj,
                                  double sigma1, double k, int64_t m);

absl::StatusOr<Intervals> RandomScalingCiHarmonized(
    const Eigen::VectorXd& theta_bar, const Eigen::MatrixXd& v_hat,
    const Eigen::MatrixXd& v_tilde, const Eigen::MatrixXd& a_tilde,
    double sigma1, double k, int64_t m, int64_t n, double level,
    const PivotTable& table);

// Final-iterate interval for noisy gradient descent: plug-in variance plus
// the last step's noise, theta_j +- z sqrt(V_jj / n + eta^2 sigma_gd^2).
absl::StatusOr<Intervals> GdPluginCi(const Eigen::VectorXd& theta,
                                     const Eigen::MatrixXd& v_tilde,
                                     double eta, double sigma_gd, int64_t n,
                                     double level);

// Non-private full-sample estimator and the covariance of
// sqrt(n)(theta_hat - theta*): OLS with s^2 (X'X/n)^-1, logistic MLE with the
// inverse observed information, sample mean with the sample covariance.
struct OracleFit {
  Eigen::VectorXd theta_hat;
  Eigen::MatrixXd covariance;
};

absl::StatusOr<OracleFit> FitOracle(const Dataset& data,
                                    const LossModel& model);

absl::StatusOr<Intervals> OracleCi(const OracleFit& fit, int64_t n,
                                   double level);

// Eigenvalues below kappa raised to kappa; returns whether any were raised.
bool FloorEigenvalues(Eigen::MatrixXd& m, double kappa);

}  // namespace dpsgd

#endif  // DPSGD_INFERENCE_H_
