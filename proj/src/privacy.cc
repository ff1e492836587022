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

#include "dpsgd/privacy.h"

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "boost/math/tools/roots.hpp"

namespace dpsgd {
namespace {

bool PositiveFinite(double v) { return v > 0 && std::isfinite(v); }

double NormalCdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

absl::StatusOr<Framework> ParseFramework(const std::string& name) {
  if (name == "none") return Framework::kNone;
  if (name == "eps_delta") return Framework::kEpsDelta;
  if (name == "rdp") return Framework::kRdp;
  if (name == "gdp") return Framework::kGdp;
  return absl::InvalidArgumentError(
      absl::StrCat("unknown privacy framework: ", name));
}

std::string FrameworkName(Framework f) {
  switch (f) {
    case Framework::kNone:
      return "none";
    case Framework::kEpsDelta:
      return "eps_delta";
    case Framework::kRdp:
      return "rdp";
    case Framework::kGdp:
      return "gdp";
  }
  return "unknown";
}

absl::Status ValidatePrivacySpec(const PrivacySpec& spec) {
  if (!PositiveFinite(spec.c1) || !PositiveFinite(spec.c2)) {
    return absl::InvalidArgumentError("c1 and c2 must be positive");
  }
  switch (spec.framework) {
    case Framework::kNone:
      return absl::OkStatus();
    case Framework::kEpsDelta:
      if (!PositiveFinite(spec.epsilon)) {
        return absl::InvalidArgumentError("epsilon must be positive");
      }
      if (!(spec.delta > 0 && spec.delta < 1)) {
        return absl::InvalidArgumentError("delta must lie in (0, 1)");
      }
      return absl::OkStatus();
    case Framework::kRdp:
      if (!PositiveFinite(spec.epsilon)) {
        return absl::InvalidArgumentError("epsilon must be positive");
      }
      if (!(spec.gamma >= 1) || !std::isfinite(spec.gamma)) {
        return absl::InvalidArgumentError("RDP order gamma must be >= 1");
      }
      return absl::OkStatus();
    case Framework::kGdp:
      if (!PositiveFinite(spec.mu)) {
        return absl::InvalidArgumentError("mu must be positive");
      }
      return absl::OkStatus();
  }
  return absl::InvalidArgumentError("unknown framework");
}

absl::StatusOr<double> GdpLogMuFromSigma(double sigma, double c) {
  if (!PositiveFinite(sigma)) {
    return absl::InvalidArgumentError("sigma must be positive and finite");
  }
  if (!PositiveFinite(c)) {
    return absl::InvalidArgumentError("c must be positive and finite");
  }
  if (sigma < 1e-150) {
    return absl::OutOfRangeError("sigma below 1e-150");
  }
  const double a = 1.0 / (sigma * sigma);
  const double d = 0.5 / sigma;
  const double b = 3.0 * d;
  double log_inner;
  if (a > 1.0) {
    // exp(a) Phi(b) dominates; factor it out so nothing overflows.
    const double rest = 3.0 * NormalCdf(-d) - 2.0;
    log_inner = a + std::log(NormalCdf(b) + rest * std::exp(-a));
  } else {
    // Phi(b) + 3 Phi(-d) - 2 rewritten with erf to avoid cancellation.
    const double inner = std::expm1(a) * NormalCdf(b) +
                         0.5 * std::erf(b / std::sqrt(2.0)) -
                         1.5 * std::erf(d / std::sqrt(2.0));
    if (!(inner > 0)) {
      return absl::OutOfRangeError(
          absl::StrCat("GDP radicand underflows at sigma=", sigma));
    }
    log_inner = std::log(inner);
  }
  return 0.5 * std::log(2.0) + std::log(c) + 0.5 * log_inner;
}

absl::StatusOr<double> GdpMuFromSigma(double sigma, double c) {
  absl::StatusOr<double> log_mu = GdpLogMuFromSigma(sigma, c);
  if (!log_mu.ok()) return log_mu.status();
  const double mu = std::exp(*log_mu);
  if (!std::isfinite(mu)) {
    return absl::OutOfRangeError(absl::StrCat("mu overflows at sigma=", sigma));
  }
  return mu;
}

absl::StatusOr<double> GdpSigmaFromMu(double mu, double c) {
  if (!PositiveFinite(mu)) return absl::InvalidArgumentError("mu must be > 0");
  if (!PositiveFinite(c)) return absl::InvalidArgumentError("c must be > 0");
  const double target = std::log(mu);
  auto f = [&](double sigma) {
    absl::StatusOr<double> v = GdpLogMuFromSigma(sigma, c);
    return v.ok() ? *v - target : std::numeric_limits<double>::quiet_NaN();
  };
  constexpr double kMinSigma = 1e-150;
  constexpr double kMaxSigma = 1e150;
  double lo = 1.0;
  double hi = 1.0;
  double f_lo = f(lo);
  double f_hi = f_lo;
  while (!(f_lo > 0)) {
    hi = lo;
    f_hi = f_lo;
    lo *= 0.5;
    if (lo < kMinSigma) {
      return absl::OutOfRangeError(
          absl::StrCat("mu=", mu, " unreachable: sigma bracket underflows"));
    }
    f_lo = f(lo);
  }
  while (!(f_hi < 0)) {
    lo = hi;
    f_lo = f_hi;
    hi *= 2.0;
    if (hi > kMaxSigma) {
      return absl::OutOfRangeError(
          absl::StrCat("mu=", mu, " unreachable: sigma bracket overflows"));
    }
    f_hi = f(hi);
  }
  if (f_lo == 0) return lo;
  if (f_hi == 0) return hi;
  std::uintmax_t max_iter = 300;
  const auto [x0, x1] = boost::math::tools::toms748_solve(
      f, lo, hi, f_lo, f_hi, boost::math::tools::eps_tolerance<double>(53),
      max_iter);
  const double sigma = std::abs(f(x0)) <= std::abs(f(x1)) ? x0 : x1;
  absl::StatusOr<double> back = GdpMuFromSigma(sigma, c);
  if (!back.ok()) return back.status();
  if (std::abs(*back - mu) > 1e-10 * std::max(1.0, mu)) {
    return absl::InternalError(absl::StrFormat(
        "GDP inversion did not converge: mu=%.17g, got %.17g", mu, *back));
  }
  return sigma;
}

absl::StatusOr<Sigma1Calibration> CalibrateSigma1(const PrivacySpec& spec,
                                                  double delta_g, int64_t m,
                                                  int64_t n, int64_t T) {
  if (absl::Status s = ValidatePrivacySpec(spec); !s.ok()) return s;
  if (!(delta_g >= 0) || !std::isfinite(delta_g)) {
    return absl::InvalidArgumentError("delta_g must be finite and >= 0");
  }
  if (m < 1 || n < 1 || T < 1) {
    return absl::InvalidArgumentError("m, n and T must be >= 1");
  }
  Sigma1Calibration out;
  const double md = static_cast<double>(m);
  const double nd = static_cast<double>(n);
  const double td = static_cast<double>(T);
  auto regime_check = [&](const char* label) {
    const double bound = spec.c1 * md * md * td / (nd * nd);
    if (!(spec.epsilon < bound)) {
      out.warnings.push_back(absl::StrFormat(
          "%s calibration assumes epsilon < c1 m^2 T / n^2 = %.6g; "
          "epsilon = %.6g",
          label, bound, spec.epsilon));
    }
  };
  switch (spec.framework) {
    case Framework::kNone:
      break;
    case Framework::kEpsDelta:
      regime_check("(epsilon, delta)");
      out.sigma1 = spec.c2 * delta_g * md *
                   std::sqrt(td * std::log(1.0 / spec.delta)) /
                   (nd * spec.epsilon);
      break;
    case Framework::kRdp:
      regime_check("RDP");
      out.sigma1 = spec.c2 * delta_g * (md / nd) * std::sqrt(td / spec.epsilon);
      break;
    case Framework::kGdp: {
      out.gdp_c = md * std::sqrt(td) / nd;
      absl::StatusOr<double> sigma = GdpSigmaFromMu(spec.mu, out.gdp_c);
      if (!sigma.ok()) return sigma.status();
      out.gdp_sigma = *sigma;
      out.sigma1 = 2.0 * out.gdp_sigma * delta_g / md;
      break;
    }
  }
  return out;
}

absl::StatusOr<double> CalibrateMatrixNoise(const PrivacySpec& spec,
                                            double delta, int64_t n) {
  if (absl::Status s = ValidatePrivacySpec(spec); !s.ok()) return s;
  if (!(delta >= 0) || !std::isfinite(delta)) {
    return absl::InvalidArgumentError("sensitivity must be finite and >= 0");
  }
  if (n < 1) return absl::InvalidArgumentError("n must be >= 1");
  const double scaled = delta / static_cast<double>(n);
  switch (spec.framework) {
    case Framework::kNone:
      return 0.0;
    case Framework::kEpsDelta:
      return 2.0 * scaled * std::sqrt(2.0 * std::log(2.5 / spec.delta)) /
             spec.epsilon;
    case Framework::kRdp:
      return scaled * std::sqrt(spec.gamma / spec.epsilon);
    case Framework::kGdp:
      return scaled * std::sqrt(2.0) / spec.mu;
  }
  return absl::InvalidArgumentError("unknown framework");
}

absl::StatusOr<double> CalibrateDpgdSigma(double mu, double delta_g,
                                          int64_t n, int64_t T) {
  if (!(mu > 0)) return absl::InvalidArgumentError("mu must be > 0");
  if (!(delta_g >= 0) || !std::isfinite(delta_g)) {
    return absl::InvalidArgumentError("delta_g must be finite and >= 0");
  }
  if (n < 1 || T < 1) return absl::InvalidArgumentError("n, T must be >= 1");
  if (std::isinf(mu)) return 0.0;
  return std::sqrt(2.0 * static_cast<double>(T)) * delta_g /
         (static_cast<double>(n) * mu);
}

absl::StatusOr<Eigen::MatrixXd> PerturbSymmetric(const Eigen::MatrixXd& m,
                                                 double sd, RngState& rng) {
  if (m.rows() != m.cols()) {
    return absl::InvalidArgumentError("matrix must be square");
  }
  if (!(sd >= 0) || !std::isfinite(sd)) {
    return absl::InvalidArgumentError("sd must be finite and >= 0");
  }
  const double scale = m.cwiseAbs().maxCoeff();
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + scale)) {
    return absl::InvalidArgumentError("matrix is not symmetric");
  }
  Eigen::MatrixXd out = m;
  if (sd == 0) return out;
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = i; j < m.cols(); ++j) {
      const double e = sd * rng.StandardNormal();
      out(i, j) += e;
      if (j != i) out(j, i) += e;
    }
  }
  return out;
}

ReleaseUsage UsageFor(const std::string& name, const PrivacySpec& spec) {
  ReleaseUsage u;
  u.name = name;
  switch (spec.framework) {
    case Framework::kNone:
      break;
    case Framework::kEpsDelta:
      u.epsilon = spec.epsilon;
      u.delta = spec.delta;
      break;
    case Framework::kRdp:
      u.epsilon = spec.epsilon;
      break;
    case Framework::kGdp:
      u.mu = spec.mu;
      break;
  }
  return u;
}

BudgetSummary BudgetReport(const PrivacySpec& spec,
                           const std::vector<ReleaseUsage>& usage) {
  BudgetSummary out;
  out.framework = spec.framework;
  out.gamma = spec.gamma;
  if (spec.framework == Framework::kNone) return out;
  out.releases = usage;
  double mu_sq = 0.0;
  for (const ReleaseUsage& u : usage) {
    mu_sq += u.mu * u.mu;
    out.epsilon += u.epsilon;
    out.delta += u.delta;
  }
  out.mu = std::sqrt(mu_sq);
  return out;
}

}  // namespace dpsgd
