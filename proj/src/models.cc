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

#include "dpsgd/models.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "Eigen/Cholesky"
#include "absl/strings/str_cat.h"

namespace dpsgd {

absl::StatusOr<ModelKind> ParseModelKind(const std::string& name) {
  if (name == "mean") return ModelKind::kMean;
  if (name == "linear") return ModelKind::kLinear;
  if (name == "logistic") return ModelKind::kLogistic;
  return absl::InvalidArgumentError(absl::StrCat("unknown model: ", name));
}

std::string ModelKindName(ModelKind kind) {
  switch (kind) {
    case ModelKind::kMean:
      return "mean";
    case ModelKind::kLinear:
      return "linear";
    case ModelKind::kLogistic:
      return "logistic";
  }
  return "unknown";
}

double Logistic(double u) {
  if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

absl::StatusOr<Dataset> Dataset::Create(RowMatrix x, Eigen::VectorXd y) {
  if (x.rows() < 1) return absl::InvalidArgumentError("dataset is empty");
  if (x.cols() < 1) {
    return absl::InvalidArgumentError("dataset has no columns");
  }
  if (y.size() != 0 && y.size() != x.rows()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "response length ", y.size(), " does not match ", x.rows(), " rows"));
  }
  if (!x.allFinite() || !y.allFinite()) {
    return absl::InvalidArgumentError("dataset contains non-finite values");
  }
  return Dataset(std::move(x), std::move(y));
}

Record Dataset::record(int64_t i) const {
  Record r;
  r.x = x_.row(i).transpose();
  r.y = y_.size() == 0 ? 0.0 : y_(i);
  return r;
}

DomainBounds Dataset::ObservedBounds() const {
  DomainBounds b;
  b.c_x = x_.cwiseAbs().maxCoeff();
  b.c_y = y_.size() == 0 ? 0.0 : y_.cwiseAbs().maxCoeff();
  b.c_0 = 0.0;
  return b;
}

absl::StatusOr<LossModel> LossModel::Create(ModelKind kind, int p,
                                            DomainBounds bounds) {
  if (p < 1) {
    return absl::InvalidArgumentError(absl::StrCat("p must be >= 1, got ", p));
  }
  return LossModel(kind, p, bounds);
}

absl::Status LossModel::CheckDataset(const Dataset& data) const {
  if (data.dim() != p_) {
    return absl::InvalidArgumentError(absl::StrCat(
        "dataset dimension ", data.dim(), " does not match model p=", p_));
  }
  if (kind_ != ModelKind::kMean && data.y().size() != data.n()) {
    return absl::InvalidArgumentError(
        absl::StrCat(ModelKindName(kind_), " model requires a response"));
  }
  if (kind_ == ModelKind::kLogistic) {
    for (int64_t i = 0; i < data.n(); ++i) {
      const double y = data.y()(i);
      if (y != 0.0 && y != 1.0) {
        return absl::InvalidArgumentError(
            absl::StrCat("logistic response must be 0 or 1, row ", i));
      }
    }
  }
  return absl::OkStatus();
}

double LossModel::Loss(const Eigen::Ref<const Eigen::VectorXd>& theta,
                       const Eigen::Ref<const Eigen::VectorXd>& x,
                       double y) const {
  switch (kind_) {
    case ModelKind::kMean:
      return (x - theta).squaredNorm();
    case ModelKind::kLinear: {
      const double r = y - x.dot(theta);
      return 0.5 * r * r;
    }
    case ModelKind::kLogistic: {
      const double u = x.dot(theta);
      // log(1 + e^u) without overflow.
      const double softplus =
          u > 0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
      return softplus - y * u;
    }
  }
  return 0.0;
}

void LossModel::GradientInto(const Eigen::Ref<const Eigen::VectorXd>& theta,
                             const Eigen::Ref<const Eigen::VectorXd>& x,
                             double y, Eigen::Ref<Eigen::VectorXd> out) const {
  switch (kind_) {
    case ModelKind::kMean:
      out = 2.0 * (theta - x);
      return;
    case ModelKind::kLinear:
      out = (x.dot(theta) - y) * x;
      return;
    case ModelKind::kLogistic:
      out = (Logistic(x.dot(theta)) - y) * x;
      return;
  }
}

void LossModel::AddHessianInto(const Eigen::Ref<const Eigen::VectorXd>& theta,
                               const Eigen::Ref<const Eigen::VectorXd>& x,
                               double /*y*/, double weight,
                               Eigen::Ref<Eigen::MatrixXd> out) const {
  switch (kind_) {
    case ModelKind::kMean:
      out.diagonal().array() += 2.0 * weight;
      return;
    case ModelKind::kLinear:
      out.noalias() += weight * x * x.transpose();
      return;
    case ModelKind::kLogistic: {
      const double s = Logistic(x.dot(theta));
      out.noalias() += (weight * s * (1.0 - s)) * x * x.transpose();
      return;
    }
  }
}

namespace {

absl::Status CheckInputs(const LossModel& model, const Eigen::VectorXd& theta,
                         const Record& z) {
  if (theta.size() != model.p()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "theta has dimension ", theta.size(), ", model p=", model.p()));
  }
  if (z.x.size() != model.p()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "record has dimension ", z.x.size(), ", model p=", model.p()));
  }
  if (!theta.allFinite() || !z.x.allFinite() || !std::isfinite(z.y)) {
    return absl::InvalidArgumentError("non-finite theta or record");
  }
  return absl::OkStatus();
}

}  // namespace

absl::StatusOr<Eigen::VectorXd> Gradient(const LossModel& model,
                                         const Eigen::VectorXd& theta,
                                         const Record& z) {
  if (absl::Status s = CheckInputs(model, theta, z); !s.ok()) return s;
  Eigen::VectorXd g(model.p());
  model.GradientInto(theta, z.x, z.y, g);
  return g;
}

absl::StatusOr<Eigen::MatrixXd> HessianContrib(const LossModel& model,
                                               const Eigen::VectorXd& theta,
                                               const Record& z) {
  if (absl::Status s = CheckInputs(model, theta, z); !s.ok()) return s;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(model.p(), model.p());
  model.AddHessianInto(theta, z.x, z.y, 1.0, h);
  return h;
}

absl::StatusOr<Eigen::MatrixXd> ScoreOuter(const LossModel& model,
                                           const Eigen::VectorXd& theta,
                                           const Record& z) {
  absl::StatusOr<Eigen::VectorXd> g = Gradient(model, theta, z);
  if (!g.ok()) return g.status();
  return OuterProduct(*g);
}

Eigen::MatrixXd OuterProduct(const Eigen::VectorXd& g) {
  return g * g.transpose();
}

double EmpiricalLoss(const LossModel& model, const Dataset& data,
                     const Eigen::VectorXd& theta) {
  double total = 0.0;
  const Eigen::VectorXd& y = data.y();
  for (int64_t i = 0; i < data.n(); ++i) {
    total += model.Loss(theta, data.x().row(i).transpose(),
                        y.size() == 0 ? 0.0 : y(i));
  }
  return total / static_cast<double>(data.n());
}

Eigen::VectorXd EmpiricalGradient(const LossModel& model, const Dataset& data,
                                  const Eigen::VectorXd& theta) {
  Eigen::VectorXd total = Eigen::VectorXd::Zero(model.p());
  Eigen::VectorXd g(model.p());
  const Eigen::VectorXd& y = data.y();
  for (int64_t i = 0; i < data.n(); ++i) {
    model.GradientInto(theta, data.x().row(i).transpose(),
                       y.size() == 0 ? 0.0 : y(i), g);
    total += g;
  }
  return total / static_cast<double>(data.n());
}

absl::StatusOr<SensitivityBounds> ComputeSensitivityBounds(
    const LossModel& model, const DomainBounds& bounds) {
  if (!(bounds.c_x > 0) || !std::isfinite(bounds.c_x)) {
    return absl::InvalidArgumentError("C_x must be positive and finite");
  }
  if (!(bounds.c_0 > 0) || !std::isfinite(bounds.c_0)) {
    return absl::InvalidArgumentError("C_0 must be positive and finite");
  }
  const double root_p = std::sqrt(static_cast<double>(model.p()));
  const double p = model.p();
  SensitivityBounds s;
  switch (model.kind()) {
    case ModelKind::kMean: {
      // grad l = 2(theta - x); two records differ by 2(x' - x).
      s.delta_g = 4.0 * root_p * bounds.c_x;
      s.delta_A = 0.0;
      const double g_max = 2.0 * (root_p * bounds.c_x + bounds.c_0);
      s.delta_score_outer = 2.0 * g_max * g_max;
      s.delta_S = s.delta_score_outer;
      break;
    }
    case ModelKind::kLinear: {
      if (!(bounds.c_y > 0) || !std::isfinite(bounds.c_y)) {
        return absl::InvalidArgumentError("C_y must be positive and finite");
      }
      const double r_max = bounds.c_y + root_p * bounds.c_x * bounds.c_0;
      s.delta_g = 2.0 * r_max * root_p * bounds.c_x;
      s.delta_A = 2.0 * p * bounds.c_x * bounds.c_x;
      s.delta_S = 2.0 * r_max * r_max;
      const double g_max = r_max * root_p * bounds.c_x;
      s.delta_score_outer = 2.0 * g_max * g_max;
      break;
    }
    case ModelKind::kLogistic: {
      s.delta_g = 2.0 * root_p * bounds.c_x;
      s.delta_A = p * bounds.c_x * bounds.c_x / 2.0;
      s.delta_S = 0.0;
      s.delta_score_outer = 2.0 * p * bounds.c_x * bounds.c_x;
      break;
    }
  }
  return s;
}

absl::StatusOr<SensitivityBounds> ClippedSensitivityBounds(
    const LossModel& model, const DomainBounds& bounds, double tau) {
  if (!(tau > 0) || !std::isfinite(tau)) {
    return absl::InvalidArgumentError("clipping threshold must be positive");
  }
  absl::StatusOr<SensitivityBounds> s =
      ComputeSensitivityBounds(model, bounds);
  if (!s.ok()) return s.status();
  s->delta_g = std::min(s->delta_g, 2.0 * tau);
  s->delta_score_outer = std::min(s->delta_score_outer, 2.0 * tau * tau);
  if (model.kind() == ModelKind::kMean) s->delta_S = s->delta_score_outer;
  return s;
}

absl::StatusOr<CovarianceStructure> ParseCovarianceStructure(
    const std::string& name) {
  if (name == "identity") return CovarianceStructure::kIdentity;
  if (name == "toeplitz") return CovarianceStructure::kToeplitz;
  return absl::InvalidArgumentError(
      absl::StrCat("unknown covariance structure: ", name));
}

std::string CovarianceStructureName(CovarianceStructure c) {
  return c == CovarianceStructure::kIdentity ? "identity" : "toeplitz";
}

Eigen::MatrixXd CovarianceMatrix(CovarianceStructure structure, int p,
                                 double rho) {
  if (structure == CovarianceStructure::kIdentity) {
    return Eigen::MatrixXd::Identity(p, p);
  }
  Eigen::MatrixXd s(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) s(i, j) = std::pow(rho, std::abs(i - j));
  }
  return s;
}

absl::Status ValidateSynthSpec(const SynthSpec& spec) {
  if (spec.n < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("n must be >= 1, got ", spec.n));
  }
  if (spec.p < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("p must be >= 1, got ", spec.p));
  }
  if (!(spec.noise_sd >= 0) || !std::isfinite(spec.noise_sd)) {
    return absl::InvalidArgumentError("noise_sd must be finite and >= 0");
  }
  if (spec.covariance == CovarianceStructure::kToeplitz &&
      !(std::abs(spec.toeplitz_rho) < 1)) {
    return absl::InvalidArgumentError("toeplitz rho must lie in (-1, 1)");
  }
  if (spec.theta.has_value() &&
      (spec.theta->size() != spec.p || !spec.theta->allFinite())) {
    return absl::InvalidArgumentError("theta must be finite with length p");
  }
  if (spec.theta_low.has_value() != spec.theta_high.has_value()) {
    return absl::InvalidArgumentError(
        "theta_low and theta_high must be given together");
  }
  if (spec.theta_low.has_value() && !(*spec.theta_low <= *spec.theta_high)) {
    return absl::InvalidArgumentError("theta_low must not exceed theta_high");
  }
  return absl::OkStatus();
}

absl::StatusOr<SyntheticData> GenerateSynthetic(const SynthSpec& spec,
                                                RngState& rng) {
  if (absl::Status s = ValidateSynthSpec(spec); !s.ok()) return s;
  const int p = spec.p;
  Eigen::VectorXd theta(p);
  if (spec.theta.has_value()) {
    theta = *spec.theta;
  } else {
    double lo = 0.0;
    double hi = spec.model == ModelKind::kLogistic ? 0.5 : 1.0;
    if (spec.theta_low.has_value()) {
      lo = *spec.theta_low;
      hi = *spec.theta_high;
    }
    for (int j = 0; j < p; ++j) theta(j) = lo + (hi - lo) * rng.Uniform01();
  }

  const Eigen::MatrixXd sigma =
      CovarianceMatrix(spec.covariance, p, spec.toeplitz_rho);
  const Eigen::MatrixXd chol = sigma.llt().matrixL();
  const bool identity = spec.covariance == CovarianceStructure::kIdentity;

  RowMatrix x(spec.n, p);
  Eigen::VectorXd y(spec.model == ModelKind::kMean ? 0 : spec.n);
  Eigen::VectorXd z(p);
  for (int64_t i = 0; i < spec.n; ++i) {
    for (int j = 0; j < p; ++j) z(j) = rng.StandardNormal();
    Eigen::VectorXd xi = identity ? z : Eigen::VectorXd(chol * z);
    switch (spec.model) {
      case ModelKind::kMean:
        x.row(i) = (theta + spec.noise_sd * xi).transpose();
        break;
      case ModelKind::kLinear:
        x.row(i) = xi.transpose();
        y(i) = xi.dot(theta) + spec.noise_sd * rng.StandardNormal();
        break;
      case ModelKind::kLogistic:
        x.row(i) = xi.transpose();
        y(i) = rng.Uniform01() < Logistic(xi.dot(theta)) ? 1.0 : 0.0;
        break;
    }
  }
  absl::StatusOr<Dataset> data = Dataset::Create(std::move(x), std::move(y));
  if (!data.ok()) return data.status();
  return SyntheticData{*std::move(data), std::move(theta)};
}

absl::StatusOr<SyntheticData> GenerateSynthetic(const SynthSpec& spec,
                                                uint64_t seed) {
  RngState rng(seed);
  return GenerateSynthetic(spec, rng);
}

}  // namespace dpsgd
