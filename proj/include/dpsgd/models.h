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

#ifndef DPSGD_MODELS_H_
#define DPSGD_MODELS_H_

#include <cstdint>
#include <optional>
#include <string>

#include "Eigen/Core"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "dpsgd/sampling.h"

namespace dpsgd {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ModelKind { kMean, kLinear, kLogistic };

absl::StatusOr<ModelKind> ParseModelKind(const std::string& name);
std::string ModelKindName(ModelKind kind);

// Support bounds used to derive sensitivities: ||x||_inf <= c_x, |y| <= c_y,
// ||theta*||_2 <= c_0.
struct DomainBounds {
  double c_x = 1.0;
  double c_y = 1.0;
  double c_0 = 1.0;
};

// One observation. For the mean model `x` is the observation and `y` is
// ignored; otherwise `x` holds the covariates and `y` the response.
struct Record {
  Eigen::VectorXd x;
  double y = 0.0;
};

// Per-record sensitivity constants, not yet divided by n.
struct SensitivityBounds {
  double delta_g = 0.0;  // l2 sensitivity of a per-record gradient
  double delta_A = 0.0;  // per-record Hessian contribution
  // Score-covariance release of the model's structured covariance form: the
  // residual variance for linear regression, the full score outer product for
  // the mean model, unused (0) for logistic regression.
  double delta_S = 0.0;
  // Full p x p score outer product, 2 * sup ||grad l||^2; used when the
  // sandwich form privatizes S-hat entrywise.
  double delta_score_outer = 0.0;
};

class Dataset {
 public:
  // `y` may be empty for mean-model data.
  static absl::StatusOr<Dataset> Create(RowMatrix x, Eigen::VectorXd y);

  int64_t n() const { return x_.rows(); }
  int dim() const { return static_cast<int>(x_.cols()); }
  const RowMatrix& x() const { return x_; }
  const Eigen::VectorXd& y() const { return y_; }
  Record record(int64_t i) const;

  // Bounds actually satisfied by the stored values (max |x_ij|, max |y_i|).
  DomainBounds ObservedBounds() const;

 private:
  Dataset(RowMatrix x, Eigen::VectorXd y) : x_(std::move(x)), y_(std::move(y)) {}

  RowMatrix x_;
  Eigen::VectorXd y_;
};

class LossModel {
 public:
  static absl::StatusOr<LossModel> Create(ModelKind kind, int p,
                                          DomainBounds bounds = {});

  ModelKind kind() const { return kind_; }
  int p() const { return p_; }
  const DomainBounds& bounds() const { return bounds_; }

  absl::Status CheckDataset(const Dataset& data) const;

  // Unchecked kernels for the optimizer hot loop. `x` has length p.
  double Loss(const Eigen::Ref<const Eigen::VectorXd>& theta,
              const Eigen::Ref<const Eigen::VectorXd>& x, double y) const;
  void GradientInto(const Eigen::Ref<const Eigen::VectorXd>& theta,
                    const Eigen::Ref<const Eigen::VectorXd>& x, double y,
                    Eigen::Ref<Eigen::VectorXd> out) const;
  void AddHessianInto(const Eigen::Ref<const Eigen::VectorXd>& theta,
                      const Eigen::Ref<const Eigen::VectorXd>& x, double y,
                      double weight, Eigen::Ref<Eigen::MatrixXd> out) const;

 private:
  LossModel(ModelKind kind, int p, DomainBounds bounds)
      : kind_(kind), p_(p), bounds_(bounds) {}

  ModelKind kind_;
  int p_;
  DomainBounds bounds_;
};

// Mean:     l = ||x - theta||^2
// Linear:   l = (y - x'theta)^2 / 2
// Logistic: l = -[y x'theta - log(1 + exp(x'theta))]
absl::StatusOr<Eigen::VectorXd> Gradient(const LossModel& model,
                                         const Eigen::VectorXd& theta,
                                         const Record& z);
absl::StatusOr<Eigen::MatrixXd> HessianContrib(const LossModel& model,
                                               const Eigen::VectorXd& theta,
                                               const Record& z);
absl::StatusOr<Eigen::MatrixXd> ScoreOuter(const LossModel& model,
                                           const Eigen::VectorXd& theta,
                                           const Record& z);

Eigen::MatrixXd OuterProduct(const Eigen::VectorXd& g);

// Empirical risk (1/n) sum l(z_i; theta) and its gradient.
double EmpiricalLoss(const LossModel& model, const Dataset& data,
                     const Eigen::VectorXd& theta);
Eigen::VectorXd EmpiricalGradient(const LossModel& model, const Dataset& data,
                                  const Eigen::VectorXd& theta);

double Logistic(double u);

absl::StatusOr<SensitivityBounds> ComputeSensitivityBounds(
    const LossModel& model, const DomainBounds& bounds);

// Bounds for gradients clipped at tau: every clipped gradient has norm at
// most tau, so delta_g = 2 tau and delta_score_outer = 2 tau^2. The Hessian
// bound still comes from the domain.
absl::StatusOr<SensitivityBounds> ClippedSensitivityBounds(
    const LossModel& model, const DomainBounds& bounds, double tau);

enum class CovarianceStructure { kIdentity, kToeplitz };

absl::StatusOr<CovarianceStructure> ParseCovarianceStructure(
    const std::string& name);
std::string CovarianceStructureName(CovarianceStructure c);

// Covariate covariance: I, or Sigma_ij = rho^|i - j|.
Eigen::MatrixXd CovarianceMatrix(CovarianceStructure structure, int p,
                                 double rho = 0.5);

struct SynthSpec {
  ModelKind model = ModelKind::kLinear;
  int64_t n = 0;
  int p = 3;
  CovarianceStructure covariance = CovarianceStructure::kIdentity;
  double toeplitz_rho = 0.5;
  // Linear: error sd. Mean: observation sd (scales the covariance).
  double noise_sd = 1.0;
  // Fixed truth; when absent theta* is drawn i.i.d. Uniform[theta_low,
  // theta_high] per coordinate, defaulting to [0, 1] for mean and linear and
  // [0, 1/2] for logistic.
  std::optional<Eigen::VectorXd> theta;
  std::optional<double> theta_low;
  std::optional<double> theta_high;
};

struct SyntheticData {
  Dataset data;
  Eigen::VectorXd theta_star;
};

absl::Status ValidateSynthSpec(const SynthSpec& spec);

absl::StatusOr<SyntheticData> GenerateSynthetic(const SynthSpec& spec,
                                                RngState& rng);
absl::StatusOr<SyntheticData> GenerateSynthetic(const SynthSpec& spec,
                                                uint64_t seed);

}  // namespace dpsgd

#endif  // DPSGD_MODELS_H_
