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
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"

namespace dpsgd {
namespace {

// Compensated sum += v, elementwise.
template <typename Sum, typename Comp, typename Value>
void KahanAdd(Sum& sum, Comp& comp, const Value& v) {
  const auto n = sum.size();
  double* s = sum.data();
  double* c = comp.data();
  const double* x = v.data();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = x[i] - c[i];
    const double t = s[i] + y;
    c[i] = (t - s[i]) - y;
    s[i] = t;
  }
}

absl::Status CheckTheta0(const Eigen::VectorXd& theta0, int p) {
  if (theta0.size() != 0 && theta0.size() != p) {
    return absl::InvalidArgumentError(absl::StrCat(
        "theta0 has dimension ", theta0.size(), ", model p=", p));
  }
  if (!theta0.allFinite()) {
    return absl::InvalidArgumentError("theta0 must be finite");
  }
  return absl::OkStatus();
}

absl::Status DivergenceError(int64_t t, double norm) {
  return absl::OutOfRangeError(
      absl::StrFormat("iterate diverged at step %d (norm %g)", t, norm));
}

}  // namespace

absl::Status ValidateOptimConfig(const OptimConfig& cfg, int p, int64_t n,
                                 std::vector<std::string>* warnings) {
  if (cfg.T < 1) return absl::InvalidArgumentError("T must be >= 1");
  if (!(cfg.eta > 0) || !std::isfinite(cfg.eta)) {
    return absl::InvalidArgumentError("eta must be positive and finite");
  }
  if (!(cfg.alpha >= 0) || !std::isfinite(cfg.alpha)) {
    return absl::InvalidArgumentError("alpha must be finite and >= 0");
  }
  if (!(cfg.sigma1 >= 0) || !std::isfinite(cfg.sigma1)) {
    return absl::InvalidArgumentError("sigma1 must be finite and >= 0");
  }
  if (cfg.clip.has_value() && !(*cfg.clip > 0)) {
    return absl::InvalidArgumentError("clipping threshold must be positive");
  }
  if (absl::Status s = ValidateScheme(cfg.scheme, n); !s.ok()) return s;
  if (absl::Status s = CheckTheta0(cfg.theta0, p); !s.ok()) return s;
  if (warnings != nullptr && !(cfg.alpha > 0.5 && cfg.alpha < 1.0)) {
    warnings->push_back(absl::StrFormat(
        "step exponent alpha=%g is outside (1/2, 1); averaging theory does "
        "not apply",
        cfg.alpha));
  }
  return absl::OkStatus();
}

ScalingAccumulators::ScalingAccumulators(int p)
    : s_(Eigen::VectorXd::Zero(p)),
      s_c_(Eigen::VectorXd::Zero(p)),
      g1_(Eigen::MatrixXd::Zero(p, p)),
      g1_c_(Eigen::MatrixXd::Zero(p, p)),
      g2_(Eigen::VectorXd::Zero(p)),
      g2_c_(Eigen::VectorXd::Zero(p)) {}

void ScalingAccumulators::Add(const Eigen::VectorXd& theta) {
  ++t_;
  KahanAdd(s_, s_c_, theta);
  const int p = static_cast<int>(s_.size());
  const double td = static_cast<double>(t_);
  double* g1 = g1_.data();
  double* g1c = g1_c_.data();
  double* g2 = g2_.data();
  double* g2c = g2_c_.data();
  const double* s = s_.data();
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < p; ++i) {
      const int idx = j * p + i;
      const double y = s[i] * s[j] - g1c[idx];
      const double tot = g1[idx] + y;
      g1c[idx] = (tot - g1[idx]) - y;
      g1[idx] = tot;
    }
    const double y = td * s[j] - g2c[j];
    const double tot = g2[j] + y;
    g2c[j] = (tot - g2[j]) - y;
    g2[j] = tot;
  }
  const unsigned __int128 tt = static_cast<unsigned __int128>(t_);
  g3_ += tt * tt;
}

Eigen::VectorXd ClipGradient(const Eigen::VectorXd& g, double tau) {
  const double norm = g.norm();
  if (norm <= tau) return g;
  return g * (tau / norm);
}

absl::StatusOr<RunResult> DpsgdRun(const Dataset& data, const LossModel& model,
                                   const OptimConfig& cfg, RngState& rng) {
  if (absl::Status s = model.CheckDataset(data); !s.ok()) return s;
  if (absl::Status s = ValidateOptimConfig(cfg, model.p(), data.n());
      !s.ok()) {
    return s;
  }
  absl::StatusOr<BatchSampler> sampler = BatchSampler::Create(cfg.scheme,
                                                              data.n());
  if (!sampler.ok()) return sampler.status();

  const int p = model.p();
  Eigen::VectorXd theta = cfg.theta0.size() == p
                              ? cfg.theta0
                              : Eigen::VectorXd::Zero(p).eval();
  const double limit = 1e8 * (1.0 + theta.norm());
  const double limit_sq = limit * limit;
  const bool poisson = cfg.scheme.kind == SchemeKind::kPoisson;
  const bool clip = cfg.clip.has_value();
  const double tau = clip ? *cfg.clip : 0.0;
  const RowMatrix& x = data.x();
  const Eigen::VectorXd& y = data.y();
  const bool has_y = y.size() != 0;

  RunResult result;
  result.accumulators = ScalingAccumulators(p);
  result.realized_sigma1 = cfg.sigma1;
  result.k = static_cast<double>(cfg.T) / static_cast<double>(data.n());
  if (cfg.store_iterates) result.iterates.reserve(cfg.T);

  std::vector<int64_t> batch;
  Eigen::VectorXd grad(p);
  Eigen::VectorXd g(p);
  for (int64_t t = 1; t <= cfg.T; ++t) {
    sampler->Draw(t, rng, batch);
    grad.setZero();
    for (int64_t i : batch) {
      model.GradientInto(theta, x.row(i).transpose(), has_y ? y(i) : 0.0, g);
      if (clip) {
        const double norm = g.norm();
        if (norm > tau) {
          g *= tau / norm;
          ++result.clipped_gradients;
        }
      }
      grad += g;
    }
    if (batch.empty()) ++result.empty_batches;
    const double denom = poisson ? static_cast<double>(cfg.scheme.m)
                                 : static_cast<double>(batch.size());
    if (!batch.empty()) grad /= denom;
    if (cfg.sigma1 > 0) {
      for (int j = 0; j < p; ++j) grad(j) += cfg.sigma1 * rng.StandardNormal();
    }
    const double eta_t =
        cfg.eta * std::pow(static_cast<double>(t), -cfg.alpha);
    theta -= eta_t * grad;
    const double norm_sq = theta.squaredNorm();
    if (!(norm_sq <= limit_sq)) return DivergenceError(t, std::sqrt(norm_sq));
    result.accumulators.Add(theta);
    if (cfg.store_iterates) result.iterates.push_back(theta);
  }
  result.theta_last = theta;
  result.theta_bar =
      result.accumulators.s_running() / static_cast<double>(cfg.T);
  return result;
}

absl::StatusOr<RunResult> DpgdRun(const Dataset& data, const LossModel& model,
                                  const GdConfig& cfg, RngState& rng) {
  if (absl::Status s = model.CheckDataset(data); !s.ok()) return s;
  if (cfg.T < 1) return absl::InvalidArgumentError("T must be >= 1");
  if (!(cfg.eta > 0) || !std::isfinite(cfg.eta)) {
    return absl::InvalidArgumentError("eta must be positive and finite");
  }
  if (!(cfg.sigma_gd >= 0) || !std::isfinite(cfg.sigma_gd)) {
    return absl::InvalidArgumentError("sigma_gd must be finite and >= 0");
  }
  if (absl::Status s = CheckTheta0(cfg.theta0, model.p()); !s.ok()) return s;
  const int p = model.p();
  Eigen::VectorXd theta = cfg.theta0.size() == p
                              ? cfg.theta0
                              : Eigen::VectorXd::Zero(p).eval();
  const double limit = 1e8 * (1.0 + theta.norm());
  RunResult result;
  result.accumulators = ScalingAccumulators(p);
  result.realized_sigma1 = cfg.sigma_gd;
  result.k = static_cast<double>(cfg.T) / static_cast<double>(data.n());
  for (int64_t t = 1; t <= cfg.T; ++t) {
    Eigen::VectorXd grad = EmpiricalGradient(model, data, theta);
    if (cfg.sigma_gd > 0) {
      for (int j = 0; j < p; ++j) {
        grad(j) += cfg.sigma_gd * rng.StandardNormal();
      }
    }
    theta -= cfg.eta * grad;
    const double norm = theta.norm();
    if (!(norm <= limit)) return DivergenceError(t, norm);
    result.accumulators.Add(theta);
    if (cfg.store_iterates) result.iterates.push_back(theta);
  }
  result.theta_last = theta;
  result.theta_bar =
      result.accumulators.s_running() / static_cast<double>(cfg.T);
  return result;
}

absl::StatusOr<Eigen::MatrixXd> FinalizeScaling(
    const ScalingAccumulators& acc, const Eigen::VectorXd& theta_bar,
    int64_t n, int64_t T) {
  if (acc.steps() != T) {
    return absl::FailedPreconditionError(absl::StrCat(
        "accumulators hold ", acc.steps(), " steps, expected T=", T));
  }
  if (T < 1 || n < 1) return absl::InvalidArgumentError("n, T must be >= 1");
  const int p = static_cast<int>(acc.s_running().size());
  if (theta_bar.size() != p) {
    return absl::InvalidArgumentError("theta_bar dimension mismatch");
  }
  using LD = long double;
  const LD g3 = static_cast<LD>(acc.g3_exact());
  const LD td = static_cast<LD>(T);
  const LD scale = static_cast<LD>(n) / (td * td * td);
  Eigen::MatrixXd v(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = i; j < p; ++j) {
      const LD bi = theta_bar(i);
      const LD bj = theta_bar(j);
      const LD value = static_cast<LD>(acc.g1()(i, j)) -
                       static_cast<LD>(acc.g2()(i)) * bj -
                       bi * static_cast<LD>(acc.g2()(j)) + g3 * bi * bj;
      v(i, j) = static_cast<double>(scale * value);
      v(j, i) = v(i, j);
    }
  }
  return v;
}

double ScalingInflation(const SamplingScheme& scheme, double k) {
  if (!scheme.randomized()) return 1.0;
  return 1.0 + k * static_cast<double>(scheme.m);
}

absl::StatusOr<Eigen::MatrixXd> RandomScalingMatrix(
    const RunResult& run, const SamplingScheme& scheme, int64_t n) {
  absl::StatusOr<Eigen::MatrixXd> v = FinalizeScaling(
      run.accumulators, run.theta_bar, n, run.accumulators.steps());
  if (!v.ok()) return v.status();
  return *v * ScalingInflation(scheme, run.k);
}

}  // namespace dpsgd
