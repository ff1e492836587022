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

#include "dpsgd/inference.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "Eigen/Cholesky"
#include "Eigen/Eigenvalues"
#include "Eigen/LU"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "boost/math/distributions/normal.hpp"

namespace dpsgd {
namespace {

absl::Status CheckSquare(const Eigen::MatrixXd& m, int p, const char* name) {
  if (m.rows() != p || m.cols() != p) {
    return absl::InvalidArgumentError(
        absl::StrCat(name, " must be ", p, "x", p));
  }
  if (!m.allFinite()) {
    return absl::InvalidArgumentError(absl::StrCat(name, " is not finite"));
  }
  return absl::OkStatus();
}

double MinEigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m,
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

absl::StatusOr<Intervals> Symmetric(const Eigen::VectorXd& center,
                                    const Eigen::VectorXd& half, CiMethod method,
                                    double level) {
  Intervals out;
  out.reserve(center.size());
  for (int j = 0; j < center.size(); ++j) {
    if (!(half(j) >= 0) || !std::isfinite(half(j))) {
      return absl::InvalidArgumentError(absl::StrFormat(
          "%s half-width for coordinate %d is %g", CiMethodName(method), j,
          half(j)));
    }
    out.push_back({j, center(j) - half(j), center(j) + half(j), method, level});
  }
  return out;
}

absl::Status CheckDiagonal(const Eigen::MatrixXd& v, const char* name) {
  for (int j = 0; j < v.rows(); ++j) {
    if (!(v(j, j) >= 0)) {
      return absl::InvalidArgumentError(absl::StrFormat(
          "%s has negative diagonal entry %g at %d; enable eigenvalue "
          "flooring",
          name, v(j, j), j));
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<Eigen::MatrixXd> Inverse(const Eigen::MatrixXd& a) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) {
    return absl::FailedPreconditionError("matrix is singular");
  }
  return lu.inverse();
}

}  // namespace

absl::StatusOr<CovarianceForm> ParseCovarianceForm(const std::string& name) {
  if (name == "structured") return CovarianceForm::kStructured;
  if (name == "sandwich") return CovarianceForm::kSandwich;
  return absl::InvalidArgumentError(
      absl::StrCat("unknown covariance form: ", name));
}

std::string CovarianceFormName(CovarianceForm form) {
  return form == CovarianceForm::kStructured ? "structured" : "sandwich";
}

std::string CiMethodName(CiMethod method) {
  switch (method) {
    case CiMethod::kPlugIn:
      return "plugin";
    case CiMethod::kPlugInCorrected:
      return "plugin_corrected";
    case CiMethod::kRandomScaling:
      return "rs";
    case CiMethod::kRandomScalingCorrected:
      return "rs_corrected";
    case CiMethod::kRandomScalingHarmonized:
      return "rs_harmonized";
    case CiMethod::kOracle:
      return "oracle";
    case CiMethod::kGdPlugIn:
      return "gd_plugin";
  }
  return "unknown";
}

bool FloorEigenvalues(Eigen::MatrixXd& m, double kappa) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues();
  bool raised = false;
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) < kappa) {
      ev(i) = kappa;
      raised = true;
    }
  }
  if (raised) {
    m = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    m = 0.5 * (m + m.transpose()).eval();
  }
  return raised;
}

absl::StatusOr<NoiseScales> MatrixNoiseScales(const PrivacySpec& spec,
                                              ModelKind kind,
                                              const SensitivityBounds& sens,
                                              int64_t n, CovarianceForm form) {
  NoiseScales out;
  absl::StatusOr<double> s2 = CalibrateMatrixNoise(spec, sens.delta_A, n);
  if (!s2.ok()) return s2.status();
  out.sigma2 = *s2;
  double score_delta = sens.delta_score_outer;
  if (form == CovarianceForm::kStructured) {
    score_delta = kind == ModelKind::kLogistic ? 0.0 : sens.delta_S;
  }
  absl::StatusOr<double> s3 = CalibrateMatrixNoise(spec, score_delta, n);
  if (!s3.ok()) return s3.status();
  out.sigma3 = *s3;
  return out;
}

absl::StatusOr<CovarianceEstimates> PluginCovariance(
    const Dataset& data, const LossModel& model,
    const Eigen::VectorXd& theta_bar, const NoiseScales& noise,
    const PluginOptions& options, RngState& rng) {
  if (absl::Status s = model.CheckDataset(data); !s.ok()) return s;
  const int p = model.p();
  if (theta_bar.size() != p || !theta_bar.allFinite()) {
    return absl::InvalidArgumentError("theta_bar must be finite with length p");
  }
  if (!(noise.sigma2 >= 0) || !(noise.sigma3 >= 0)) {
    return absl::InvalidArgumentError("matrix noise scales must be >= 0");
  }
  CovarianceEstimates est;
  est.sigma2 = noise.sigma2;
  est.sigma3 = noise.sigma3;
  est.form = options.clip.has_value() ? CovarianceForm::kSandwich
                                      : options.form;
  const double nd = static_cast<double>(data.n());
  const RowMatrix& x = data.x();
  const Eigen::VectorXd& y = data.y();
  const bool has_y = y.size() != 0;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
  double resid_sq = 0.0;
  Eigen::VectorXd g(p);
  Eigen::MatrixXd h(p, p);
  for (int64_t i = 0; i < data.n(); ++i) {
    const double yi = has_y ? y(i) : 0.0;
    const auto xi = x.row(i).transpose();
    model.GradientInto(theta_bar, xi, yi, g);
    const double norm = g.norm();
    if (options.clip.has_value() && norm > *options.clip) {
      // d/dtheta [tau g / ||g||] = (tau / ||g||) (I - u u') H, u = g / ||g||.
      const double tau = *options.clip;
      h.setZero();
      model.AddHessianInto(theta_bar, xi, yi, 1.0, h);
      const Eigen::VectorXd u = g / norm;
      a.noalias() += (tau / norm) * (h - u * (u.transpose() * h));
      g *= tau / norm;
    } else {
      model.AddHessianInto(theta_bar, xi, yi, 1.0, a);
    }
    s.noalias() += g * g.transpose();
    if (model.kind() == ModelKind::kLinear) {
      const double r = yi - xi.dot(theta_bar);
      resid_sq += r * r;
    }
  }
  a /= nd;
  s /= nd;
  // The clipped Jacobian need not be symmetric; use its symmetric part.
  a = 0.5 * (a + a.transpose()).eval();
  est.A_hat = a;
  est.S_hat = s;

  // Logistic and mean Hessians carry no privacy cost when delta_A is 0; the
  // calibrated sigma2 is 0 in that case.
  absl::StatusOr<Eigen::MatrixXd> a_tilde = PerturbSymmetric(a, noise.sigma2,
                                                             rng);
  if (!a_tilde.ok()) return a_tilde.status();
  est.A_tilde = *a_tilde;
  if (options.floor_eigenvalues) {
    est.floored |= FloorEigenvalues(est.A_tilde, options.kappa);
  } else if (!(MinEigenvalue(est.A_tilde) > 0)) {
    return absl::FailedPreconditionError(
        "private Hessian is not positive definite; enable eigenvalue "
        "flooring");
  }
  absl::StatusOr<Eigen::MatrixXd> a_inv = Inverse(est.A_tilde);
  if (!a_inv.ok()) return a_inv.status();

  const bool structured = est.form == CovarianceForm::kStructured;
  if (structured && model.kind() == ModelKind::kLinear) {
    double var = resid_sq / nd + noise.sigma3 * rng.StandardNormal();
    if (!(var > 0)) {
      if (!options.floor_eigenvalues) {
        return absl::FailedPreconditionError(
            "private residual variance is not positive; enable flooring");
      }
      var = options.kappa;
      est.floored = true;
    }
    est.S_tilde = var * est.A_tilde;
    est.V_tilde = var * *a_inv;
  } else if (structured && model.kind() == ModelKind::kLogistic) {
    est.S_tilde = est.A_tilde;
    est.V_tilde = *a_inv;
  } else {
    absl::StatusOr<Eigen::MatrixXd> s_tilde =
        PerturbSymmetric(s, noise.sigma3, rng);
    if (!s_tilde.ok()) return s_tilde.status();
    est.S_tilde = *s_tilde;
    if (options.floor_eigenvalues) {
      est.floored |= FloorEigenvalues(est.S_tilde, options.kappa);
    }
    est.V_tilde = *a_inv * est.S_tilde * *a_inv;
  }
  est.V_tilde = 0.5 * (est.V_tilde + est.V_tilde.transpose()).eval();
  return est;
}

absl::StatusOr<double> NormalCriticalValue(double level) {
  if (!(level > 0 && level < 1)) {
    return absl::InvalidArgumentError(
        absl::StrCat("level must lie in (0, 1), got ", level));
  }
  return boost::math::quantile(boost::math::normal(), 0.5 + 0.5 * level);
}

absl::StatusOr<Intervals> PluginCi(const Eigen::VectorXd& theta_bar,
                                   const Eigen::MatrixXd& v_tilde, int64_t n,
                                   double level) {
  const int p = static_cast<int>(theta_bar.size());
  if (absl::Status s = CheckSquare(v_tilde, p, "V_tilde"); !s.ok()) return s;
  if (absl::Status s = CheckDiagonal(v_tilde, "V_tilde"); !s.ok()) return s;
  if (n < 1) return absl::InvalidArgumentError("n must be >= 1");
  absl::StatusOr<double> z = NormalCriticalValue(level);
  if (!z.ok()) return z.status();
  const Eigen::VectorXd half =
      *z * (v_tilde.diagonal() / static_cast<double>(n)).cwiseSqrt();
  return Symmetric(theta_bar, half, CiMethod::kPlugIn, level);
}

absl::StatusOr<Intervals> PluginCiCorrected(const Eigen::VectorXd& theta_bar,
                                            const Eigen::MatrixXd& v_tilde,
                                            const Eigen::MatrixXd& a_tilde,
                                            double sigma1, double k, int64_t n,
                                            double level) {
  const int p = static_cast<int>(theta_bar.size());
  if (absl::Status s = CheckSquare(v_tilde, p, "V_tilde"); !s.ok()) return s;
  if (absl::Status s = CheckSquare(a_tilde, p, "A_tilde"); !s.ok()) return s;
  if (absl::Status s = CheckDiagonal(v_tilde, "V_tilde"); !s.ok()) return s;
  if (!(k > 0)) return absl::InvalidArgumentError("k must be positive");
  if (!(sigma1 >= 0)) return absl::InvalidArgumentError("sigma1 must be >= 0");
  if (n < 1) return absl::InvalidArgumentError("n must be >= 1");
  absl::StatusOr<double> z = NormalCriticalValue(level);
  if (!z.ok()) return z.status();
  Eigen::VectorXd var = v_tilde.diagonal();
  if (sigma1 > 0) {
    absl::StatusOr<Eigen::MatrixXd> inv = Inverse(a_tilde);
    if (!inv.ok()) return inv.status();
    const Eigen::MatrixXd inv_sq = *inv * *inv;
    var += (sigma1 * sigma1 / k) * inv_sq.diagonal();
  }
  const Eigen::VectorXd half =
      *z * (var / static_cast<double>(n)).cwiseSqrt();
  return Symmetric(theta_bar, half, CiMethod::kPlugInCorrected, level);
}

absl::StatusOr<Intervals> RandomScalingCi(const Eigen::VectorXd& theta_bar,
                                          const Eigen::MatrixXd& v_hat,
                                          int64_t n, double level,
                                          const PivotTable& table) {
  const int p = static_cast<int>(theta_bar.size());
  if (absl::Status s = CheckSquare(v_hat, p, "V_hat"); !s.ok()) return s;
  if (absl::Status s = CheckDiagonal(v_hat, "V_hat"); !s.ok()) return s;
  if (n < 1) return absl::InvalidArgumentError("n must be >= 1");
  absl::StatusOr<double> c = PivotCriticalValue(level, table);
  if (!c.ok()) return c.status();
  const Eigen::VectorXd half =
      *c * (v_hat.diagonal() / static_cast<double>(n)).cwiseSqrt();
  return Symmetric(theta_bar, half, CiMethod::kRandomScaling, level);
}

double RsCorrectionFactor(double v_jj, double a_inv_jj, double sigma1) {
  const double noise = sigma1 * sigma1 * a_inv_jj * a_inv_jj;
  if (noise == 0) return 1.0;
  return std::sqrt(v_jj / (v_jj + noise));
}

double HarmonizedCorrectionFactor(double v_jj, double a_inv_sq_jj,
                                  double sigma1, double k, int64_t m) {
  const double b = sigma1 * sigma1 * a_inv_sq_jj;
  if (b == 0) return 1.0;
  const double md = static_cast<double>(m);
  const double w = v_jj * (1.0 + 1.0 / (k * md));
  return std::sqrt((w + b / k) / (w + b * (md + 1.0 / k)));
}

absl::StatusOr<Intervals> RandomScalingCiCorrected(
    const Eigen::VectorXd& theta_bar, const Eigen::MatrixXd& v_hat,
    const Eigen::MatrixXd& v_tilde, const Eigen::MatrixXd& a_tilde,
    double sigma1, int64_t n, double level, const PivotTable& table) {
  const int p = static_cast<int>(theta_bar.size());
  if (absl::Status s = CheckSquare(v_tilde, p, "V_tilde"); !s.ok()) return s;
  if (absl::Status s = CheckSquare(a_tilde, p, "A_tilde"); !s.ok()) return s;
  if (absl::Status s = CheckDiagonal(v_tilde, "V_tilde"); !s.ok()) return s;
  if (!(sigma1 >= 0)) return absl::InvalidArgumentError("sigma1 must be >= 0");
  absl::StatusOr<Intervals> base =
      RandomScalingCi(theta_bar, v_hat, n, level, table);
  if (!base.ok() || sigma1 == 0) {
    if (base.ok()) {
      for (ConfidenceInterval& ci : *base) {
        ci.method = CiMethod::kRandomScalingCorrected;
      }
    }
    return base;
  }
  absl::StatusOr<Eigen::MatrixXd> inv = Inverse(a_tilde);
  if (!inv.ok()) return inv.status();
  for (ConfidenceInterval& ci : *base) {
    const double f =
        RsCorrectionFactor(v_tilde(ci.j, ci.j), (*inv)(ci.j, ci.j), sigma1);
    const double c = theta_bar(ci.j);
    const double half = f * (ci.upper - c);
    ci = {ci.j, c - half, c + half, CiMethod::kRandomScalingCorrected, level};
  }
  return base;
}

absl::StatusOr<Intervals> RandomScalingCiHarmonized(
    const Eigen::VectorXd& theta_bar, const Eigen::MatrixXd& v_hat,
    const Eigen::MatrixXd& v_tilde, const Eigen::MatrixXd& a_tilde,
    double sigma1, double k, int64_t m, int64_t n, double level,
    const PivotTable& table) {
  const int p = static_cast<int>(theta_bar.size());
  if (absl::Status s = CheckSquare(v_tilde, p, "V_tilde"); !s.ok()) return s;
  if (absl::Status s = CheckSquare(a_tilde, p, "A_tilde"); !s.ok()) return s;
  if (absl::Status s = CheckDiagonal(v_tilde, "V_tilde"); !s.ok()) return s;
  if (!(k > 0) || m < 1) {
    return absl::InvalidArgumentError("k must be positive and m >= 1");
  }
  absl::StatusOr<Intervals> base =
      RandomScalingCi(theta_bar, v_hat, n, level, table);
  if (!base.ok()) return base;
  Eigen::MatrixXd inv_sq = Eigen::MatrixXd::Zero(p, p);
  if (sigma1 > 0) {
    absl::StatusOr<Eigen::MatrixXd> inv = Inverse(a_tilde);
    if (!inv.ok()) return inv.status();
    inv_sq = *inv * *inv;
  }
  for (ConfidenceInterval& ci : *base) {
    const double f = HarmonizedCorrectionFactor(
        v_tilde(ci.j, ci.j), inv_sq(ci.j, ci.j), sigma1, k, m);
    const double c = theta_bar(ci.j);
    const double half = f * (ci.upper - c);
    ci = {ci.j, c - half, c + half, CiMethod::kRandomScalingHarmonized, level};
  }
  return base;
}

absl::StatusOr<Intervals> GdPluginCi(const Eigen::VectorXd& theta,
                                     const Eigen::MatrixXd& v_tilde,
                                     double eta, double sigma_gd, int64_t n,
                                     double level) {
  const int p = static_cast<int>(theta.size());
  if (absl::Status s = CheckSquare(v_tilde, p, "V_tilde"); !s.ok()) return s;
  if (absl::Status s = CheckDiagonal(v_tilde, "V_tilde"); !s.ok()) return s;
  if (n < 1) return absl::InvalidArgumentError("n must be >= 1");
  absl::StatusOr<double> z = NormalCriticalValue(level);
  if (!z.ok()) return z.status();
  const Eigen::VectorXd var =
      v_tilde.diagonal() / static_cast<double>(n) +
      Eigen::VectorXd::Constant(p, eta * eta * sigma_gd * sigma_gd);
  return Symmetric(theta, *z * var.cwiseSqrt(), CiMethod::kGdPlugIn, level);
}

absl::StatusOr<OracleFit> FitOracle(const Dataset& data,
                                    const LossModel& model) {
  if (absl::Status s = model.CheckDataset(data); !s.ok()) return s;
  const int p = model.p();
  const int64_t n = data.n();
  const double nd = static_cast<double>(n);
  const RowMatrix& x = data.x();
  OracleFit fit;
  switch (model.kind()) {
    case ModelKind::kMean: {
      fit.theta_hat = x.colwise().mean().transpose();
      const RowMatrix centered = x.rowwise() - fit.theta_hat.transpose();
      fit.covariance = (centered.transpose() * centered) / nd;
      return fit;
    }
    case ModelKind::kLinear: {
      if (n <= p) {
        return absl::FailedPreconditionError("OLS needs n > p");
      }
      const Eigen::MatrixXd xtx = x.transpose() * x;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
      if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0)) {
        return absl::FailedPreconditionError("X'X is singular");
      }
      fit.theta_hat = ldlt.solve(x.transpose() * data.y());
      const double rss = (data.y() - x * fit.theta_hat).squaredNorm();
      const double s2 = rss / static_cast<double>(n - p);
      fit.covariance = s2 * nd * ldlt.solve(Eigen::MatrixXd::Identity(p, p));
      return fit;
    }
    case ModelKind::kLogistic: {
      Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
      Eigen::MatrixXd info(p, p);
      for (int iter = 0; iter < 100; ++iter) {
        info.setZero();
        for (int64_t i = 0; i < n; ++i) {
          model.AddHessianInto(theta, x.row(i).transpose(), data.y()(i),
                               1.0 / nd, info);
        }
        const Eigen::VectorXd grad = EmpiricalGradient(model, data, theta);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success ||
            !(ldlt.vectorD().minCoeff() > 0)) {
          return absl::FailedPreconditionError(
              "logistic information matrix is singular");
        }
        const Eigen::VectorXd step = ldlt.solve(grad);
        // Halve the Newton step until the loss does not increase.
        double scale = 1.0;
        const double base = EmpiricalLoss(model, data, theta);
        Eigen::VectorXd next = theta - step;
        while (EmpiricalLoss(model, data, next) > base && scale > 1e-10) {
          scale *= 0.5;
          next = theta - scale * step;
        }
        theta = next;
        if (!theta.allFinite() || theta.norm() > 1e6) {
          return absl::FailedPreconditionError(
              "logistic MLE does not exist (separated data)");
        }
        if (step.norm() * scale < 1e-12 * (1.0 + theta.norm())) break;
      }
      info.setZero();
      for (int64_t i = 0; i < n; ++i) {
        model.AddHessianInto(theta, x.row(i).transpose(), data.y()(i),
                             1.0 / nd, info);
      }
      fit.theta_hat = theta;
      fit.covariance = info.inverse();
      return fit;
    }
  }
  return absl::InvalidArgumentError("unsupported model");
}

absl::StatusOr<Intervals> OracleCi(const OracleFit& fit, int64_t n,
                                   double level) {
  absl::StatusOr<Intervals> ci =
      PluginCi(fit.theta_hat, fit.covariance, n, level);
  if (!ci.ok()) return ci;
  for (ConfidenceInterval& c : *ci) c.method = CiMethod::kOracle;
  return ci;
}

}  // namespace dpsgd
