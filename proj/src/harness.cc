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

#include "dpsgd/harness.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "Eigen/Eigenvalues"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "dpsgd/optimizer.h"
#include "dpsgd/status_macros.h"
#include "json.hpp"

#ifndef DPSGD_DEFAULT_PIVOT_TABLE
#define DPSGD_DEFAULT_PIVOT_TABLE "data/pivot_table.json"
#endif

namespace dpsgd {
namespace {

using Json = nlohmann::ordered_json;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Config parsing.

absl::Status CheckKeys(const Json& obj, const std::string& where,
                       const std::vector<std::string>& allowed) {
  if (!obj.is_object()) {
    return absl::InvalidArgumentError(absl::StrCat(where, " must be an object"));
  }
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      return absl::InvalidArgumentError(
          absl::StrCat("unknown key '", key, "' in ", where));
    }
  }
  return absl::OkStatus();
}

template <typename T>
absl::Status Read(const Json& obj, const char* key, T& out) {
  if (!obj.contains(key) || obj.at(key).is_null()) return absl::OkStatus();
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    return absl::InvalidArgumentError(
        absl::StrCat("bad value for '", key, "': ", e.what()));
  }
  return absl::OkStatus();
}

template <typename T>
absl::Status ReadOptional(const Json& obj, const char* key,
                          std::optional<T>& out) {
  if (!obj.contains(key)) return absl::OkStatus();
  if (obj.at(key).is_null()) {
    out.reset();
    return absl::OkStatus();
  }
  T v;
  RETURN_IF_ERROR(Read(obj, key, v));
  out = v;
  return absl::OkStatus();
}

template <typename E>
absl::Status ReadEnum(const Json& obj, const char* key,
                      absl::StatusOr<E> (*parse)(const std::string&), E& out) {
  if (!obj.contains(key) || obj.at(key).is_null()) return absl::OkStatus();
  std::string name;
  RETURN_IF_ERROR(Read(obj, key, name));
  ASSIGN_OR_RETURN(out, parse(name));
  return absl::OkStatus();
}

absl::StatusOr<SensitivityMode> ParseSensitivityMode(const std::string& s) {
  if (s == "bounds") return SensitivityMode::kBounds;
  if (s == "clip") return SensitivityMode::kClip;
  return absl::InvalidArgumentError(absl::StrCat("unknown sensitivity mode: ", s));
}

std::string SensitivityModeName(SensitivityMode m) {
  return m == SensitivityMode::kBounds ? "bounds" : "clip";
}

absl::StatusOr<FloorPolicy> ParseFloorPolicy(const std::string& s) {
  if (s == "off") return FloorPolicy::kOff;
  if (s == "on") return FloorPolicy::kOn;
  if (s == "auto") return FloorPolicy::kAuto;
  return absl::InvalidArgumentError(absl::StrCat("unknown floor policy: ", s));
}

std::string FloorPolicyName(FloorPolicy f) {
  switch (f) {
    case FloorPolicy::kOff:
      return "off";
    case FloorPolicy::kOn:
      return "on";
    case FloorPolicy::kAuto:
      return "auto";
  }
  return "auto";
}

std::string TimestampUtc() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared pieces of the experiments.

struct ModelSetup {
  LossModel model;
  SensitivityBounds sens;
};

absl::StatusOr<ModelSetup> SetupModel(const ExperimentConfig& cfg,
                                      ModelKind kind, int p,
                                      const DomainBounds& bounds) {
  ASSIGN_OR_RETURN(LossModel model, LossModel::Create(kind, p, bounds));
  SensitivityBounds sens;
  if (cfg.sensitivity == SensitivityMode::kClip) {
    ASSIGN_OR_RETURN(sens, ClippedSensitivityBounds(model, bounds, cfg.tau));
  } else {
    ASSIGN_OR_RETURN(sens, ComputeSensitivityBounds(model, bounds));
  }
  return ModelSetup{model, sens};
}

OptimConfig MakeOptimConfig(const ExperimentConfig& cfg, int64_t T,
                            double sigma1) {
  OptimConfig o;
  o.eta = cfg.eta;
  o.alpha = cfg.alpha;
  o.T = T;
  o.scheme = {cfg.scheme, cfg.m};
  if (cfg.sensitivity == SensitivityMode::kClip) o.clip = cfg.tau;
  o.sigma1 = sigma1;
  return o;
}

PluginOptions MakePluginOptions(const ExperimentConfig& cfg) {
  PluginOptions o;
  o.form = cfg.form;
  o.kappa = cfg.kappa;
  if (cfg.sensitivity == SensitivityMode::kClip) o.clip = cfg.tau;
  return o;
}

// Plug-in estimates under the floor policy. The auto policy retries with
// flooring on the same noise draws when the unfloored estimate is unusable.
absl::StatusOr<CovarianceEstimates> PluginWithPolicy(
    const ExperimentConfig& cfg, const Dataset& data, const LossModel& model,
    const Eigen::VectorXd& theta, const NoiseScales& noise,
    const RngState& rng) {
  PluginOptions opts = MakePluginOptions(cfg);
  opts.floor_eigenvalues = cfg.floor == FloorPolicy::kOn;
  RngState first = rng;
  absl::StatusOr<CovarianceEstimates> est =
      PluginCovariance(data, model, theta, noise, opts, first);
  if (cfg.floor != FloorPolicy::kAuto) return est;
  bool retry = false;
  if (!est.ok()) {
    retry = est.status().code() == absl::StatusCode::kFailedPrecondition;
  } else {
    retry = !(est->V_tilde.diagonal().minCoeff() >= 0);
  }
  if (!retry) return est;
  opts.floor_eigenvalues = true;
  RngState second = rng;
  return PluginCovariance(data, model, theta, noise, opts, second);
}

absl::StatusOr<int64_t> PowerT(int64_t n, double exponent) {
  const double t = std::round(std::pow(static_cast<double>(n), exponent));
  if (!(t >= 1) || t > 9e15) {
    return absl::InvalidArgumentError(
        absl::StrCat("T = n^", exponent, " is out of range"));
  }
  return static_cast<int64_t>(t);
}

double Mean(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  double s = 0.0;
  for (double d : v) s += d;
  return s / static_cast<double>(v.size());
}

const Eigen::VectorXd* FindVector(const ReplicationRecord& r,
                                  const std::string& name) {
  for (const auto& [k, v] : r.vectors) {
    if (k == name) return &v;
  }
  return nullptr;
}

const Intervals* FindIntervals(const ReplicationRecord& r,
                               const std::string& name) {
  for (const auto& [k, v] : r.intervals) {
    if (k == name) return &v;
  }
  return nullptr;
}

// Coverage, length and error of one interval method over the records of one
// setting.
SummaryRow SummarizeIntervals(const std::vector<const ReplicationRecord*>& recs,
                              const std::string& setting,
                              const std::string& method,
                              const std::string& truth_key, double level) {
  SummaryRow row;
  row.setting = setting;
  row.method = method;
  std::vector<double> cover_sum;
  std::vector<double> length_sum;
  double sq_err = 0.0;
  int64_t coords = 0;
  for (const ReplicationRecord* r : recs) {
    const Intervals* cis = r->ok ? FindIntervals(*r, method) : nullptr;
    const Eigen::VectorXd* truth = FindVector(*r, truth_key);
    if (cis == nullptr || truth == nullptr) {
      ++row.failures;
      continue;
    }
    if (cover_sum.empty()) {
      cover_sum.assign(cis->size(), 0.0);
      length_sum.assign(cis->size(), 0.0);
    }
    for (const ConfidenceInterval& ci : *cis) {
      const double t = (*truth)(ci.j);
      cover_sum[ci.j] += ci.Covers(t) ? 1.0 : 0.0;
      length_sum[ci.j] += ci.length();
      sq_err += (ci.center() - t) * (ci.center() - t);
      ++coords;
    }
    ++row.count;
  }
  const double c = static_cast<double>(row.count);
  for (size_t j = 0; j < cover_sum.size(); ++j) {
    row.coverage_by_coord.push_back(cover_sum[j] / c);
    row.length_by_coord.push_back(length_sum[j] / c);
  }
  row.coverage = row.count > 0 ? Mean(row.coverage_by_coord) : kNaN;
  row.length = row.count > 0 ? Mean(row.length_by_coord) : kNaN;
  row.coverage_se =
      row.count > 0 ? std::sqrt(level * (1.0 - level) / c) : kNaN;
  row.mse = coords > 0 ? sq_err / static_cast<double>(coords) : kNaN;
  row.rmse = std::sqrt(row.mse);
  row.value = row.coverage;
  row.ratio = kNaN;
  row.reference = level;
  return row;
}

// Mean squared error (per coordinate) of a point estimate over records.
SummaryRow SummarizeEstimate(const std::vector<const ReplicationRecord*>& recs,
                             const std::string& setting,
                             const std::string& method, const std::string& key,
                             const std::string& truth_key) {
  SummaryRow row;
  row.setting = setting;
  row.method = method;
  double sq_err = 0.0;
  int64_t coords = 0;
  for (const ReplicationRecord* r : recs) {
    const Eigen::VectorXd* est = r->ok ? FindVector(*r, key) : nullptr;
    const Eigen::VectorXd* truth = FindVector(*r, truth_key);
    if (est == nullptr || truth == nullptr) {
      ++row.failures;
      continue;
    }
    sq_err += (*est - *truth).squaredNorm();
    coords += est->size();
    ++row.count;
  }
  row.coverage = row.coverage_se = row.length = kNaN;
  row.mse = coords > 0 ? sq_err / static_cast<double>(coords) : kNaN;
  row.rmse = std::sqrt(row.mse);
  row.value = row.mse;
  row.ratio = row.reference = kNaN;
  return row;
}

struct Timer {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

ExperimentReport NewReport(const ExperimentConfig& cfg) {
  ExperimentReport report;
  report.experiment = ExperimentKindName(cfg.kind);
  report.config_json = ConfigToJson(cfg);
  report.digest = Fnv1aHex(report.config_json);
  report.seed = cfg.seed;
  report.timestamp = TimestampUtc();
  return report;
}

std::string Num(double v) { return FormatNumber(v); }

SynthSpec MakeSynthSpec(const ExperimentConfig& cfg, ModelKind kind,
                        CovarianceStructure cov, int64_t n) {
  SynthSpec spec;
  spec.model = kind;
  spec.n = n;
  spec.p = cfg.p;
  spec.covariance = cov;
  spec.toeplitz_rho = cfg.toeplitz_rho;
  spec.noise_sd = cfg.noise_sd;
  spec.theta_low = cfg.theta_low;
  spec.theta_high = cfg.theta_high;
  return spec;
}

}  // namespace

// ---------------------------------------------------------------------------

absl::StatusOr<ExperimentKind> ParseExperimentKind(const std::string& name) {
  if (name == "coverage") return ExperimentKind::kCoverage;
  if (name == "mse-vs-iters" || name == "mse_vs_iters") {
    return ExperimentKind::kMseVsIters;
  }
  if (name == "compare-gd" || name == "compare_gd") {
    return ExperimentKind::kCompareGd;
  }
  if (name == "example1") return ExperimentKind::kExample1;
  return absl::InvalidArgumentError(absl::StrCat("unknown experiment: ", name));
}

std::string ExperimentKindName(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kCoverage:
      return "coverage";
    case ExperimentKind::kMseVsIters:
      return "mse-vs-iters";
    case ExperimentKind::kCompareGd:
      return "compare-gd";
    case ExperimentKind::kExample1:
      return "example1";
  }
  return "unknown";
}

absl::StatusOr<int64_t> ResolveT(const TRule& rule, int64_t n) {
  const int given = rule.exponent.has_value() + rule.k.has_value() +
                    rule.fixed.has_value();
  if (given != 1) {
    return absl::InvalidArgumentError(
        "T rule needs exactly one of exponent, k, fixed");
  }
  if (n < 1) return absl::InvalidArgumentError("n must be >= 1");
  if (rule.fixed.has_value()) {
    if (*rule.fixed < 1) return absl::InvalidArgumentError("T must be >= 1");
    return *rule.fixed;
  }
  if (rule.k.has_value()) {
    const double t = std::round(*rule.k * static_cast<double>(n));
    if (!(t >= 1) || t > 9e15) {
      return absl::InvalidArgumentError("T = k n is out of range");
    }
    return static_cast<int64_t>(t);
  }
  return PowerT(n, *rule.exponent);
}

absl::Status ValidateExperimentConfig(const ExperimentConfig& cfg) {
  if (cfg.schema_version != 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("unsupported schema_version ", cfg.schema_version));
  }
  if (cfg.replications < 1) {
    return absl::InvalidArgumentError("replications must be >= 1");
  }
  if (cfg.models.empty() || cfg.covariances.empty() || cfg.n.empty()) {
    return absl::InvalidArgumentError(
        "models, covariances and n must be non-empty");
  }
  for (int64_t n : cfg.n) {
    if (n < 2) return absl::InvalidArgumentError("every n must be >= 2");
    RETURN_IF_ERROR(ResolveT(cfg.t_rule, n).status());
  }
  if (cfg.p < 1) return absl::InvalidArgumentError("p must be >= 1");
  if (!(cfg.level > 0 && cfg.level < 1)) {
    return absl::InvalidArgumentError("level must lie in (0, 1)");
  }
  RETURN_IF_ERROR(ValidatePrivacySpec(cfg.privacy));
  if (cfg.sensitivity == SensitivityMode::kClip && !(cfg.tau > 0)) {
    return absl::InvalidArgumentError("tau must be positive");
  }
  if (!(cfg.bounds.c_x > 0 && cfg.bounds.c_y > 0 && cfg.bounds.c_0 > 0)) {
    return absl::InvalidArgumentError("sensitivity bounds must be positive");
  }
  if (!(cfg.eta > 0) || !(cfg.alpha >= 0)) {
    return absl::InvalidArgumentError("eta must be > 0 and alpha >= 0");
  }
  if (cfg.m < 1) return absl::InvalidArgumentError("m must be >= 1");
  if (cfg.sigma1.has_value() && !(*cfg.sigma1 >= 0)) {
    return absl::InvalidArgumentError("sigma1 must be >= 0");
  }
  if (!(cfg.kappa > 0)) return absl::InvalidArgumentError("kappa must be > 0");
  if (cfg.kind == ExperimentKind::kMseVsIters && cfg.t_exponents.empty()) {
    return absl::InvalidArgumentError("t_exponents must be non-empty");
  }
  if (cfg.kind == ExperimentKind::kCompareGd) {
    if (cfg.sgd_kappas.empty() || cfg.gd_iterations.empty()) {
      return absl::InvalidArgumentError(
          "sgd_kappas and gd_iterations must be non-empty");
    }
    if (cfg.privacy.framework != Framework::kGdp) {
      return absl::InvalidArgumentError("compare-gd requires the GDP framework");
    }
    for (int64_t t : cfg.gd_iterations) {
      if (t < 1) return absl::InvalidArgumentError("gd_iterations must be >= 1");
    }
    if (cfg.gd_eta.has_value() && !(*cfg.gd_eta > 0)) {
      return absl::InvalidArgumentError("gd_eta must be positive");
    }
  }
  if (cfg.kind == ExperimentKind::kExample1) {
    if (cfg.km_grid.empty()) {
      return absl::InvalidArgumentError("km_grid must be non-empty");
    }
    for (const auto& [k, m] : cfg.km_grid) {
      if (!(k > 0) || m < 1) {
        return absl::InvalidArgumentError("km_grid needs k > 0 and m >= 1");
      }
    }
    if (!(cfg.mean_sigma > 0)) {
      return absl::InvalidArgumentError("example1 sigma must be positive");
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<ExperimentConfig> ParseExperimentConfig(const std::string& text) {
  Json j = Json::parse(text, nullptr, false, /*ignore_comments=*/true);
  if (j.is_discarded()) return absl::InvalidArgumentError("config is not JSON");
  RETURN_IF_ERROR(CheckKeys(
      j, "config",
      {"schema_version", "experiment", "data", "replications", "seed", "level",
       "privacy", "sensitivity", "optimizer", "inference", "mse_vs_iters",
       "compare_gd", "example1", "description"}));
  ExperimentConfig cfg;
  RETURN_IF_ERROR(Read(j, "schema_version", cfg.schema_version));
  if (!j.contains("experiment")) {
    return absl::InvalidArgumentError("config needs 'experiment'");
  }
  RETURN_IF_ERROR(ReadEnum(j, "experiment", &ParseExperimentKind, cfg.kind));
  RETURN_IF_ERROR(Read(j, "replications", cfg.replications));
  RETURN_IF_ERROR(Read(j, "seed", cfg.seed));
  RETURN_IF_ERROR(Read(j, "level", cfg.level));

  if (j.contains("data")) {
    const Json& d = j["data"];
    RETURN_IF_ERROR(CheckKeys(d, "data",
                              {"models", "covariances", "n", "p",
                               "toeplitz_rho", "noise_sd", "theta_low",
                               "theta_high"}));
    if (d.contains("models")) {
      std::vector<std::string> names;
      RETURN_IF_ERROR(Read(d, "models", names));
      cfg.models.clear();
      for (const std::string& s : names) {
        ASSIGN_OR_RETURN(ModelKind k, ParseModelKind(s));
        cfg.models.push_back(k);
      }
    }
    if (d.contains("covariances")) {
      std::vector<std::string> names;
      RETURN_IF_ERROR(Read(d, "covariances", names));
      cfg.covariances.clear();
      for (const std::string& s : names) {
        ASSIGN_OR_RETURN(CovarianceStructure c, ParseCovarianceStructure(s));
        cfg.covariances.push_back(c);
      }
    }
    RETURN_IF_ERROR(Read(d, "n", cfg.n));
    RETURN_IF_ERROR(Read(d, "p", cfg.p));
    RETURN_IF_ERROR(Read(d, "toeplitz_rho", cfg.toeplitz_rho));
    RETURN_IF_ERROR(Read(d, "noise_sd", cfg.noise_sd));
    RETURN_IF_ERROR(ReadOptional(d, "theta_low", cfg.theta_low));
    RETURN_IF_ERROR(ReadOptional(d, "theta_high", cfg.theta_high));
  }
  if (j.contains("privacy")) {
    const Json& pr = j["privacy"];
    RETURN_IF_ERROR(CheckKeys(pr, "privacy",
                              {"framework", "epsilon", "delta", "gamma", "mu",
                               "c1", "c2"}));
    RETURN_IF_ERROR(
        ReadEnum(pr, "framework", &ParseFramework, cfg.privacy.framework));
    RETURN_IF_ERROR(Read(pr, "epsilon", cfg.privacy.epsilon));
    RETURN_IF_ERROR(Read(pr, "delta", cfg.privacy.delta));
    RETURN_IF_ERROR(Read(pr, "gamma", cfg.privacy.gamma));
    RETURN_IF_ERROR(Read(pr, "mu", cfg.privacy.mu));
    RETURN_IF_ERROR(Read(pr, "c1", cfg.privacy.c1));
    RETURN_IF_ERROR(Read(pr, "c2", cfg.privacy.c2));
  }
  if (j.contains("sensitivity")) {
    const Json& s = j["sensitivity"];
    RETURN_IF_ERROR(
        CheckKeys(s, "sensitivity", {"mode", "c_x", "c_y", "c_0", "tau"}));
    RETURN_IF_ERROR(
        ReadEnum(s, "mode", &ParseSensitivityMode, cfg.sensitivity));
    RETURN_IF_ERROR(Read(s, "c_x", cfg.bounds.c_x));
    RETURN_IF_ERROR(Read(s, "c_y", cfg.bounds.c_y));
    RETURN_IF_ERROR(Read(s, "c_0", cfg.bounds.c_0));
    RETURN_IF_ERROR(Read(s, "tau", cfg.tau));
  }
  if (j.contains("optimizer")) {
    const Json& o = j["optimizer"];
    RETURN_IF_ERROR(CheckKeys(
        o, "optimizer", {"eta", "alpha", "scheme", "m", "T", "sigma1"}));
    RETURN_IF_ERROR(Read(o, "eta", cfg.eta));
    RETURN_IF_ERROR(Read(o, "alpha", cfg.alpha));
    RETURN_IF_ERROR(ReadEnum(o, "scheme", &ParseSchemeKind, cfg.scheme));
    RETURN_IF_ERROR(Read(o, "m", cfg.m));
    RETURN_IF_ERROR(ReadOptional(o, "sigma1", cfg.sigma1));
    if (o.contains("T")) {
      const Json& t = o["T"];
      RETURN_IF_ERROR(CheckKeys(t, "optimizer.T", {"exponent", "k", "fixed"}));
      cfg.t_rule = TRule{std::nullopt, std::nullopt, std::nullopt};
      RETURN_IF_ERROR(ReadOptional(t, "exponent", cfg.t_rule.exponent));
      RETURN_IF_ERROR(ReadOptional(t, "k", cfg.t_rule.k));
      RETURN_IF_ERROR(ReadOptional(t, "fixed", cfg.t_rule.fixed));
    }
  }
  if (j.contains("inference")) {
    const Json& in = j["inference"];
    RETURN_IF_ERROR(CheckKeys(in, "inference",
                              {"form", "floor", "kappa", "pivot_table"}));
    RETURN_IF_ERROR(ReadEnum(in, "form", &ParseCovarianceForm, cfg.form));
    RETURN_IF_ERROR(ReadEnum(in, "floor", &ParseFloorPolicy, cfg.floor));
    RETURN_IF_ERROR(Read(in, "kappa", cfg.kappa));
    RETURN_IF_ERROR(Read(in, "pivot_table", cfg.pivot_table));
  }
  if (j.contains("mse_vs_iters")) {
    const Json& m = j["mse_vs_iters"];
    RETURN_IF_ERROR(
        CheckKeys(m, "mse_vs_iters", {"t_exponents", "include_dpsgd"}));
    RETURN_IF_ERROR(Read(m, "t_exponents", cfg.t_exponents));
    RETURN_IF_ERROR(Read(m, "include_dpsgd", cfg.include_dpsgd));
  }
  if (j.contains("compare_gd")) {
    const Json& c = j["compare_gd"];
    RETURN_IF_ERROR(CheckKeys(c, "compare_gd",
                              {"sgd_kappas", "gd_iterations", "gd_eta"}));
    RETURN_IF_ERROR(Read(c, "sgd_kappas", cfg.sgd_kappas));
    RETURN_IF_ERROR(Read(c, "gd_iterations", cfg.gd_iterations));
    RETURN_IF_ERROR(ReadOptional(c, "gd_eta", cfg.gd_eta));
  }
  if (j.contains("example1")) {
    const Json& e = j["example1"];
    RETURN_IF_ERROR(
        CheckKeys(e, "example1", {"km_grid", "mu", "sigma", "scheme"}));
    RETURN_IF_ERROR(Read(e, "km_grid", cfg.km_grid));
    RETURN_IF_ERROR(Read(e, "mu", cfg.mean_mu));
    RETURN_IF_ERROR(Read(e, "sigma", cfg.mean_sigma));
    RETURN_IF_ERROR(
        ReadEnum(e, "scheme", &ParseSchemeKind, cfg.example_scheme));
  }
  RETURN_IF_ERROR(ValidateExperimentConfig(cfg));
  return cfg;
}

absl::StatusOr<ExperimentConfig> LoadExperimentConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseExperimentConfig(ss.str());
}

std::string ConfigToJson(const ExperimentConfig& cfg) {
  Json j;
  j["schema_version"] = cfg.schema_version;
  j["experiment"] = ExperimentKindName(cfg.kind);
  Json d;
  std::vector<std::string> models;
  for (ModelKind k : cfg.models) models.push_back(ModelKindName(k));
  std::vector<std::string> covs;
  for (CovarianceStructure c : cfg.covariances) {
    covs.push_back(CovarianceStructureName(c));
  }
  d["models"] = models;
  d["covariances"] = covs;
  d["n"] = cfg.n;
  d["p"] = cfg.p;
  d["toeplitz_rho"] = cfg.toeplitz_rho;
  d["noise_sd"] = cfg.noise_sd;
  d["theta_low"] = cfg.theta_low ? Json(*cfg.theta_low) : Json(nullptr);
  d["theta_high"] = cfg.theta_high ? Json(*cfg.theta_high) : Json(nullptr);
  j["data"] = d;
  j["replications"] = cfg.replications;
  j["seed"] = cfg.seed;
  j["level"] = cfg.level;
  j["privacy"] = {{"framework", FrameworkName(cfg.privacy.framework)},
                  {"epsilon", cfg.privacy.epsilon},
                  {"delta", cfg.privacy.delta},
                  {"gamma", cfg.privacy.gamma},
                  {"mu", cfg.privacy.mu},
                  {"c1", cfg.privacy.c1},
                  {"c2", cfg.privacy.c2}};
  j["sensitivity"] = {{"mode", SensitivityModeName(cfg.sensitivity)},
                      {"c_x", cfg.bounds.c_x},
                      {"c_y", cfg.bounds.c_y},
                      {"c_0", cfg.bounds.c_0},
                      {"tau", cfg.tau}};
  Json t;
  t["exponent"] =
      cfg.t_rule.exponent ? Json(*cfg.t_rule.exponent) : Json(nullptr);
  t["k"] = cfg.t_rule.k ? Json(*cfg.t_rule.k) : Json(nullptr);
  t["fixed"] = cfg.t_rule.fixed ? Json(*cfg.t_rule.fixed) : Json(nullptr);
  j["optimizer"] = {{"eta", cfg.eta},
                    {"alpha", cfg.alpha},
                    {"scheme", SchemeKindName(cfg.scheme)},
                    {"m", cfg.m},
                    {"T", t},
                    {"sigma1", cfg.sigma1 ? Json(*cfg.sigma1) : Json(nullptr)}};
  j["inference"] = {{"form", CovarianceFormName(cfg.form)},
                    {"floor", FloorPolicyName(cfg.floor)},
                    {"kappa", cfg.kappa},
                    {"pivot_table", cfg.pivot_table}};
  j["mse_vs_iters"] = {{"t_exponents", cfg.t_exponents},
                       {"include_dpsgd", cfg.include_dpsgd}};
  j["compare_gd"] = {{"sgd_kappas", cfg.sgd_kappas},
                     {"gd_iterations", cfg.gd_iterations},
                     {"gd_eta", cfg.gd_eta ? Json(*cfg.gd_eta) : Json(nullptr)}};
  j["example1"] = {{"km_grid", cfg.km_grid},
                   {"mu", cfg.mean_mu},
                   {"sigma", cfg.mean_sigma},
                   {"scheme", SchemeKindName(cfg.example_scheme)}};
  return j.dump();
}

std::string ConfigDigest(const ExperimentConfig& cfg) {
  return Fnv1aHex(ConfigToJson(cfg));
}

void ParallelFor(int64_t count, int workers,
                 const std::function<void(int64_t)>& fn) {
  workers = static_cast<int>(
      std::max<int64_t>(1, std::min<int64_t>(workers, count)));
  if (workers <= 1) {
    for (int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (int64_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        fn(i);
      }
    });
  }
  for (std::thread& t : threads) t.join();
}

std::string DefaultPivotTablePath() { return DPSGD_DEFAULT_PIVOT_TABLE; }

absl::StatusOr<PivotTable> LoadConfiguredPivotTable(
    const ExperimentConfig& cfg) {
  return LoadPivotTable(cfg.pivot_table.empty() ? DefaultPivotTablePath()
                                                : cfg.pivot_table);
}

// ---------------------------------------------------------------------------
// Coverage.

namespace {

struct CoverageSetting {
  std::string id;
  ModelKind model;
  CovarianceStructure cov;
  int64_t n;
  int64_t T;
  ModelSetup setup;
  Sigma1Calibration cal;
  double sigma1;
  NoiseScales noise;
};

const std::vector<std::string>& CoverageMethods() {
  static const std::vector<std::string> kMethods = {
      "plugin", "plugin_corrected", "rs", "rs_corrected", "rs_harmonized",
      "oracle"};
  return kMethods;
}

absl::Status CoverageReplication(const ExperimentConfig& cfg,
                                 const CoverageSetting& s,
                                 const PivotTable& table, RngState rep_rng,
                                 ReplicationRecord& rec) {
  RngState data_rng = rep_rng.Child(0);
  RngState run_rng = rep_rng.Child(1);
  const RngState matrix_rng = rep_rng.Child(2);
  ASSIGN_OR_RETURN(SyntheticData synth,
                   GenerateSynthetic(MakeSynthSpec(cfg, s.model, s.cov, s.n),
                                     data_rng));
  rec.vectors.emplace_back("theta_star", synth.theta_star);
  const LossModel& model = s.setup.model;
  const OptimConfig ocfg = MakeOptimConfig(cfg, s.T, s.sigma1);
  ASSIGN_OR_RETURN(RunResult run,
                   DpsgdRun(synth.data, model, ocfg, run_rng));
  rec.vectors.emplace_back("theta_bar", run.theta_bar);

  ASSIGN_OR_RETURN(CovarianceEstimates est,
                   PluginWithPolicy(cfg, synth.data, model, run.theta_bar,
                                    s.noise, matrix_rng));
  ASSIGN_OR_RETURN(Eigen::MatrixXd v_hat,
                   RandomScalingMatrix(run, ocfg.scheme, s.n));
  rec.scalars.emplace_back("floored", est.floored ? 1.0 : 0.0);

  const double level = cfg.level;
  ASSIGN_OR_RETURN(Intervals plugin,
                   PluginCi(run.theta_bar, est.V_tilde, s.n, level));
  ASSIGN_OR_RETURN(Intervals plugin_c,
                   PluginCiCorrected(run.theta_bar, est.V_tilde, est.A_tilde,
                                     s.sigma1, run.k, s.n, level));
  ASSIGN_OR_RETURN(Intervals rs,
                   RandomScalingCi(run.theta_bar, v_hat, s.n, level, table));
  ASSIGN_OR_RETURN(Intervals rs_c, RandomScalingCiCorrected(
                                       run.theta_bar, v_hat, est.V_tilde,
                                       est.A_tilde, s.sigma1, s.n, level,
                                       table));
  ASSIGN_OR_RETURN(Intervals rs_h,
                   RandomScalingCiHarmonized(run.theta_bar, v_hat, est.V_tilde,
                                             est.A_tilde, s.sigma1, run.k,
                                             cfg.m, s.n, level, table));
  ASSIGN_OR_RETURN(OracleFit oracle, FitOracle(synth.data, model));
  ASSIGN_OR_RETURN(Intervals oracle_ci, OracleCi(oracle, s.n, level));
  rec.intervals = {{"plugin", std::move(plugin)},
                   {"plugin_corrected", std::move(plugin_c)},
                   {"rs", std::move(rs)},
                   {"rs_corrected", std::move(rs_c)},
                   {"rs_harmonized", std::move(rs_h)},
                   {"oracle", std::move(oracle_ci)}};
  return absl::OkStatus();
}

BudgetSummary PluginBudget(const ExperimentConfig& cfg, ModelKind kind,
                           const NoiseScales& noise) {
  std::vector<ReleaseUsage> usage = {UsageFor("theta_bar", cfg.privacy)};
  if (noise.sigma2 > 0) usage.push_back(UsageFor("A_tilde", cfg.privacy));
  const bool score_released =
      cfg.form == CovarianceForm::kSandwich ||
      cfg.sensitivity == SensitivityMode::kClip || kind != ModelKind::kLogistic;
  if (score_released) usage.push_back(UsageFor("score", cfg.privacy));
  return BudgetReport(cfg.privacy, usage);
}

}  // namespace

absl::StatusOr<ExperimentReport> RunCoverage(const ExperimentConfig& cfg,
                                             int workers) {
  RETURN_IF_ERROR(ValidateExperimentConfig(cfg));
  Timer timer;
  ASSIGN_OR_RETURN(PivotTable table, LoadConfiguredPivotTable(cfg));
  ExperimentReport report = NewReport(cfg);

  std::vector<CoverageSetting> settings;
  for (ModelKind kind : cfg.models) {
    for (CovarianceStructure cov : cfg.covariances) {
      for (int64_t n : cfg.n) {
        ASSIGN_OR_RETURN(ModelSetup setup,
                         SetupModel(cfg, kind, cfg.p, cfg.bounds));
        ASSIGN_OR_RETURN(int64_t T, ResolveT(cfg.t_rule, n));
        ASSIGN_OR_RETURN(Sigma1Calibration cal,
                         CalibrateSigma1(cfg.privacy, setup.sens.delta_g, cfg.m,
                                         n, T));
        ASSIGN_OR_RETURN(NoiseScales noise,
                         MatrixNoiseScales(cfg.privacy, kind, setup.sens, n,
                                           cfg.form));
        CoverageSetting s{
            absl::StrCat(ModelKindName(kind), "/",
                         CovarianceStructureName(cov), "/n=", n),
            kind, cov, n, T, setup, cal, cfg.sigma1.value_or(cal.sigma1),
            noise};
        noise.sigma1 = s.sigma1;
        s.noise = noise;
        for (const std::string& w : cal.warnings) {
          report.warnings.push_back(absl::StrCat(s.id, ": ", w));
        }
        const BudgetSummary budget = PluginBudget(cfg, kind, noise);
        report.settings.push_back(
            {s.id,
             {{"model", ModelKindName(kind)},
              {"covariance", CovarianceStructureName(cov)},
              {"n", absl::StrCat(n)},
              {"T", absl::StrCat(T)},
              {"delta_g", Num(setup.sens.delta_g)},
              {"delta_A", Num(setup.sens.delta_A)},
              {"sigma1", Num(s.sigma1)},
              {"sigma2", Num(noise.sigma2)},
              {"sigma3", Num(noise.sigma3)},
              {"gdp_sigma", Num(cal.gdp_sigma)},
              {"budget_total_mu", Num(budget.mu)},
              {"budget_total_epsilon", Num(budget.epsilon)},
              {"budget_total_delta", Num(budget.delta)}}});
        settings.push_back(std::move(s));
      }
    }
  }

  const int64_t reps = cfg.replications;
  const int64_t jobs = static_cast<int64_t>(settings.size()) * reps;
  std::vector<ReplicationRecord> records(jobs);
  const RngState master(cfg.seed);
  ParallelFor(jobs, workers, [&](int64_t job) {
    const int64_t si = job / reps;
    const int64_t r = job % reps;
    ReplicationRecord& rec = records[job];
    rec.setting = settings[si].id;
    rec.rep = r;
    const RngState rep_rng = master.Child(si).Child(r);
    absl::Status st =
        CoverageReplication(cfg, settings[si], table, rep_rng, rec);
    if (!st.ok()) {
      rec.ok = false;
      rec.error = std::string(st.message());
      rec.intervals.clear();
    }
  });

  for (size_t si = 0; si < settings.size(); ++si) {
    const CoverageSetting& s = settings[si];
    std::vector<const ReplicationRecord*> recs;
    for (int64_t r = 0; r < reps; ++r) recs.push_back(&records[si * reps + r]);
    for (const std::string& method : CoverageMethods()) {
      SummaryRow row =
          SummarizeIntervals(recs, s.id, method, "theta_star", cfg.level);
      row.n = s.n;
      row.T = s.T;
      row.x = static_cast<double>(s.n);
      report.plot.push_back(
          {"coverage", row.x, row.coverage, absl::StrCat(s.id, "/", method)});
      report.plot.push_back(
          {"length", row.x, row.length, absl::StrCat(s.id, "/", method)});
      report.summary.push_back(std::move(row));
    }
  }
  report.records = std::move(records);
  report.wall_seconds = timer.Seconds();
  return report;
}

// ---------------------------------------------------------------------------
// MSE versus iterations.

absl::StatusOr<ExperimentReport> RunMseVsIters(const ExperimentConfig& cfg,
                                               int workers) {
  RETURN_IF_ERROR(ValidateExperimentConfig(cfg));
  Timer timer;
  ExperimentReport report = NewReport(cfg);

  struct Group {
    std::string id;
    ModelKind model;
    CovarianceStructure cov;
    int64_t n;
    ModelSetup setup;
    std::vector<int64_t> T;
    std::vector<double> sigma1;
  };
  std::vector<Group> groups;
  for (ModelKind kind : cfg.models) {
    for (CovarianceStructure cov : cfg.covariances) {
      for (int64_t n : cfg.n) {
        ASSIGN_OR_RETURN(ModelSetup setup,
                         SetupModel(cfg, kind, cfg.p, cfg.bounds));
        Group g{absl::StrCat(ModelKindName(kind), "/",
                             CovarianceStructureName(cov), "/n=", n),
                kind, cov, n, setup, {}, {}};
        for (double e : cfg.t_exponents) {
          ASSIGN_OR_RETURN(int64_t T, PowerT(n, e));
          ASSIGN_OR_RETURN(Sigma1Calibration cal,
                           CalibrateSigma1(cfg.privacy, setup.sens.delta_g,
                                           cfg.m, n, T));
          g.T.push_back(T);
          g.sigma1.push_back(cfg.sigma1.value_or(cal.sigma1));
          report.settings.push_back(
              {absl::StrCat(g.id, "/T=n^", Num(e)),
               {{"T", absl::StrCat(T)}, {"sigma1", Num(g.sigma1.back())}}});
        }
        groups.push_back(std::move(g));
      }
    }
  }
  std::vector<std::string> series = {"randomized_sgd", "cyclic_sgd"};
  if (cfg.include_dpsgd) series.push_back("dpsgd");

  const int64_t reps = cfg.replications;
  const int64_t jobs = static_cast<int64_t>(groups.size()) * reps;
  std::vector<ReplicationRecord> records(jobs);
  const RngState master(cfg.seed);
  ParallelFor(jobs, workers, [&](int64_t job) {
    const Group& g = groups[job / reps];
    ReplicationRecord& rec = records[job];
    rec.setting = g.id;
    rec.rep = job % reps;
    const RngState rep_rng = master.Child(job / reps).Child(rec.rep);
    auto body = [&]() -> absl::Status {
      RngState data_rng = rep_rng.Child(0);
      ASSIGN_OR_RETURN(SyntheticData synth,
                       GenerateSynthetic(MakeSynthSpec(cfg, g.model, g.cov,
                                                       g.n),
                                         data_rng));
      rec.vectors.emplace_back("theta_star", synth.theta_star);
      ASSIGN_OR_RETURN(OracleFit oracle, FitOracle(synth.data, g.setup.model));
      rec.vectors.emplace_back("ols", oracle.theta_hat);
      for (size_t e = 0; e < g.T.size(); ++e) {
        for (size_t k = 0; k < series.size(); ++k) {
          OptimConfig o = MakeOptimConfig(cfg, g.T[e], 0.0);
          if (series[k] == "cyclic_sgd") o.scheme.kind = SchemeKind::kCyclic;
          if (series[k] == "dpsgd") {
            o.sigma1 = g.sigma1[e];
          } else {
            o.clip.reset();
          }
          RngState run_rng = rep_rng.Child(1 + e * series.size() + k);
          ASSIGN_OR_RETURN(RunResult run,
                           DpsgdRun(synth.data, g.setup.model, o, run_rng));
          rec.vectors.emplace_back(absl::StrCat("e", e, "/", series[k]),
                                   run.theta_bar);
        }
      }
      return absl::OkStatus();
    };
    absl::Status st = body();
    if (!st.ok()) {
      rec.ok = false;
      rec.error = std::string(st.message());
    }
  });

  for (size_t gi = 0; gi < groups.size(); ++gi) {
    const Group& g = groups[gi];
    std::vector<const ReplicationRecord*> recs;
    for (int64_t r = 0; r < reps; ++r) recs.push_back(&records[gi * reps + r]);
    SummaryRow ols = SummarizeEstimate(recs, g.id, "ols", "ols", "theta_star");
    for (size_t e = 0; e < g.T.size(); ++e) {
      const std::string setting =
          absl::StrCat(g.id, "/T=n^", Num(cfg.t_exponents[e]));
      SummaryRow ols_row = ols;
      ols_row.setting = setting;
      ols_row.n = g.n;
      ols_row.T = g.T[e];
      ols_row.x = cfg.t_exponents[e];
      ols_row.ratio = 1.0;
      report.plot.push_back({"mse_vs_iters", ols_row.x, ols_row.mse,
                             absl::StrCat(g.id, "/ols")});
      for (const std::string& name : series) {
        SummaryRow row = SummarizeEstimate(
            recs, setting, name, absl::StrCat("e", e, "/", name),
            "theta_star");
        row.n = g.n;
        row.T = g.T[e];
        row.x = cfg.t_exponents[e];
        row.ratio = row.mse / ols.mse;
        if (name == "randomized_sgd") {
          row.reference =
              1.0 + static_cast<double>(g.n) /
                        (static_cast<double>(g.T[e]) * static_cast<double>(cfg.m));
        }
        report.plot.push_back(
            {"mse_vs_iters", row.x, row.mse, absl::StrCat(g.id, "/", name)});
        report.plot.push_back({"mse_ratio_vs_iters", row.x, row.ratio,
                               absl::StrCat(g.id, "/", name)});
        report.summary.push_back(std::move(row));
      }
      report.summary.push_back(std::move(ols_row));
    }
  }
  report.records = std::move(records);
  report.wall_seconds = timer.Seconds();
  return report;
}

// ---------------------------------------------------------------------------
// DP-SGD versus DP-GD.

absl::StatusOr<ExperimentReport> RunCompareGd(const ExperimentConfig& cfg,
                                              int workers) {
  RETURN_IF_ERROR(ValidateExperimentConfig(cfg));
  Timer timer;
  ExperimentReport report = NewReport(cfg);
  const ModelKind kind = cfg.models.front();
  const CovarianceStructure cov = cfg.covariances.front();
  const int64_t n = cfg.n.front();
  ASSIGN_OR_RETURN(ModelSetup setup, SetupModel(cfg, kind, cfg.p, cfg.bounds));
  ASSIGN_OR_RETURN(NoiseScales noise,
                   MatrixNoiseScales(cfg.privacy, kind, setup.sens, n,
                                     cfg.form));

  std::vector<int64_t> sgd_T;
  std::vector<double> sgd_sigma1;
  for (double kappa : cfg.sgd_kappas) {
    ASSIGN_OR_RETURN(int64_t T, PowerT(n, kappa));
    ASSIGN_OR_RETURN(Sigma1Calibration cal,
                     CalibrateSigma1(cfg.privacy, setup.sens.delta_g, cfg.m, n,
                                     T));
    sgd_T.push_back(T);
    sgd_sigma1.push_back(cfg.sigma1.value_or(cal.sigma1));
    report.settings.push_back({absl::StrCat("dpsgd/kappa=", Num(kappa)),
                               {{"T", absl::StrCat(T)},
                                {"sigma1", Num(sgd_sigma1.back())}}});
  }
  std::vector<double> gd_sigma;
  for (int64_t T2 : cfg.gd_iterations) {
    ASSIGN_OR_RETURN(double s, CalibrateDpgdSigma(cfg.privacy.mu,
                                                  setup.sens.delta_g, n, T2));
    gd_sigma.push_back(s);
    report.settings.push_back(
        {absl::StrCat("dpgd/T2=", T2),
         {{"T", absl::StrCat(T2)},
          {"sigma_gd", Num(s)},
          {"eta", cfg.gd_eta ? Num(*cfg.gd_eta) : "1/lambda_max"}}});
  }

  const int64_t reps = cfg.replications;
  std::vector<ReplicationRecord> records(reps);
  const RngState master(cfg.seed);
  ParallelFor(reps, workers, [&](int64_t r) {
    ReplicationRecord& rec = records[r];
    rec.setting = "compare-gd";
    rec.rep = r;
    const RngState rep_rng = master.Child(0).Child(r);
    auto body = [&]() -> absl::Status {
      RngState data_rng = rep_rng.Child(0);
      ASSIGN_OR_RETURN(SyntheticData synth,
                       GenerateSynthetic(MakeSynthSpec(cfg, kind, cov, n),
                                         data_rng));
      rec.vectors.emplace_back("theta_star", synth.theta_star);
      for (size_t i = 0; i < sgd_T.size(); ++i) {
        const OptimConfig o = MakeOptimConfig(cfg, sgd_T[i], sgd_sigma1[i]);
        RngState run_rng = rep_rng.Child(1 + 2 * i);
        ASSIGN_OR_RETURN(RunResult run,
                         DpsgdRun(synth.data, setup.model, o, run_rng));
        ASSIGN_OR_RETURN(CovarianceEstimates est,
                         PluginWithPolicy(cfg, synth.data, setup.model,
                                          run.theta_bar, noise,
                                          rep_rng.Child(2 + 2 * i)));
        ASSIGN_OR_RETURN(Intervals ci,
                         PluginCiCorrected(run.theta_bar, est.V_tilde,
                                           est.A_tilde, sgd_sigma1[i], run.k,
                                           n, cfg.level));
        rec.intervals.emplace_back(absl::StrCat("sgd", i), std::move(ci));
      }
      double eta = 0.0;
      if (cfg.gd_eta.has_value()) {
        eta = *cfg.gd_eta;
      } else {
        const Eigen::MatrixXd gram =
            synth.data.x().transpose() * synth.data.x() /
            static_cast<double>(n);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
            gram, Eigen::EigenvaluesOnly);
        eta = 1.0 / es.eigenvalues().maxCoeff();
      }
      rec.scalars.emplace_back("gd_eta", eta);
      const size_t offset = 2 * sgd_T.size() + 1;
      for (size_t i = 0; i < cfg.gd_iterations.size(); ++i) {
        GdConfig g;
        g.eta = eta;
        g.T = cfg.gd_iterations[i];
        g.sigma_gd = gd_sigma[i];
        RngState run_rng = rep_rng.Child(offset + 2 * i);
        ASSIGN_OR_RETURN(RunResult run,
                         DpgdRun(synth.data, setup.model, g, run_rng));
        ASSIGN_OR_RETURN(CovarianceEstimates est,
                         PluginWithPolicy(cfg, synth.data, setup.model,
                                          run.theta_last, noise,
                                          rep_rng.Child(offset + 2 * i + 1)));
        ASSIGN_OR_RETURN(Intervals ci,
                         GdPluginCi(run.theta_last, est.V_tilde, eta,
                                    gd_sigma[i], n, cfg.level));
        rec.intervals.emplace_back(absl::StrCat("gd", i), std::move(ci));
      }
      return absl::OkStatus();
    };
    absl::Status st = body();
    if (!st.ok()) {
      rec.ok = false;
      rec.error = std::string(st.message());
      rec.intervals.clear();
    }
  });

  std::vector<const ReplicationRecord*> recs;
  for (const ReplicationRecord& r : records) recs.push_back(&r);
  for (size_t i = 0; i < sgd_T.size(); ++i) {
    SummaryRow row = SummarizeIntervals(
        recs, report.settings[i].id, absl::StrCat("sgd", i), "theta_star",
        cfg.level);
    row.method = "dpsgd_plugin_corrected";
    row.n = n;
    row.T = sgd_T[i];
    row.x = cfg.sgd_kappas[i];
    report.plot.push_back({"compare_gd_rmse", row.x, row.rmse, "dpsgd"});
    report.plot.push_back({"compare_gd_coverage", row.x, row.coverage, "dpsgd"});
    report.plot.push_back({"compare_gd_length", row.x, row.length, "dpsgd"});
    report.summary.push_back(std::move(row));
  }
  for (size_t i = 0; i < cfg.gd_iterations.size(); ++i) {
    SummaryRow row = SummarizeIntervals(
        recs, report.settings[sgd_T.size() + i].id, absl::StrCat("gd", i),
        "theta_star", cfg.level);
    row.method = "dpgd_plugin";
    row.n = n;
    row.T = cfg.gd_iterations[i];
    row.x = static_cast<double>(cfg.gd_iterations[i]);
    report.plot.push_back({"compare_gd_rmse", row.x, row.rmse, "dpgd"});
    report.plot.push_back({"compare_gd_coverage", row.x, row.coverage, "dpgd"});
    report.plot.push_back({"compare_gd_length", row.x, row.length, "dpgd"});
    report.summary.push_back(std::move(row));
  }
  report.records = std::move(records);
  report.wall_seconds = timer.Seconds();
  return report;
}

// ---------------------------------------------------------------------------
// Variance inflation of randomized SGD for the mean.

absl::StatusOr<ExperimentReport> RunExample1(const ExperimentConfig& cfg,
                                             int workers) {
  RETURN_IF_ERROR(ValidateExperimentConfig(cfg));
  Timer timer;
  ExperimentReport report = NewReport(cfg);
  const int64_t n = cfg.n.front();
  ASSIGN_OR_RETURN(LossModel model, LossModel::Create(ModelKind::kMean, 1));

  struct Arm {
    std::string id;
    SchemeKind scheme;
    int64_t m;
    int64_t T;
    double km;
  };
  std::vector<Arm> arms = {{"cyclic", SchemeKind::kCyclic, 1, n, 1.0}};
  for (const auto& [k, m] : cfg.km_grid) {
    if (cfg.example_scheme == SchemeKind::kSrswor && m > n) {
      return absl::InvalidArgumentError("m exceeds n for SRSWOR");
    }
    const double t = std::round(k * static_cast<double>(n));
    arms.push_back({absl::StrCat("k=", Num(k), ",m=", m), cfg.example_scheme,
                    m, static_cast<int64_t>(t), k * static_cast<double>(m)});
  }
  for (const Arm& a : arms) {
    report.settings.push_back({a.id,
                               {{"scheme", SchemeKindName(a.scheme)},
                                {"m", absl::StrCat(a.m)},
                                {"T", absl::StrCat(a.T)},
                                {"eta_t", "1/(2t)"}}});
  }

  SynthSpec spec;
  spec.model = ModelKind::kMean;
  spec.n = n;
  spec.p = 1;
  spec.noise_sd = cfg.mean_sigma;
  spec.theta = Eigen::VectorXd::Constant(1, cfg.mean_mu);

  const int64_t reps = cfg.replications;
  std::vector<ReplicationRecord> records(reps);
  const RngState master(cfg.seed);
  ParallelFor(reps, workers, [&](int64_t r) {
    ReplicationRecord& rec = records[r];
    rec.setting = "example1";
    rec.rep = r;
    const RngState rep_rng = master.Child(0).Child(r);
    auto body = [&]() -> absl::Status {
      RngState data_rng = rep_rng.Child(0);
      ASSIGN_OR_RETURN(SyntheticData synth, GenerateSynthetic(spec, data_rng));
      rec.vectors.emplace_back("theta_star", synth.theta_star);
      for (size_t i = 0; i < arms.size(); ++i) {
        OptimConfig o;
        o.eta = 0.5;
        o.alpha = 1.0;
        o.T = arms[i].T;
        o.scheme = {arms[i].scheme, arms[i].m};
        RngState run_rng = rep_rng.Child(1 + i);
        ASSIGN_OR_RETURN(RunResult run, DpsgdRun(synth.data, model, o, run_rng));
        rec.vectors.emplace_back(arms[i].id, run.theta_last);
        rec.vectors.emplace_back(absl::StrCat(arms[i].id, "/average"),
                                 run.theta_bar);
      }
      return absl::OkStatus();
    };
    absl::Status st = body();
    if (!st.ok()) {
      rec.ok = false;
      rec.error = std::string(st.message());
    }
  });

  std::vector<const ReplicationRecord*> recs;
  for (const ReplicationRecord& r : records) recs.push_back(&r);
  const double sigma_sq = cfg.mean_sigma * cfg.mean_sigma;
  const double nd = static_cast<double>(n);
  double cyclic_value = kNaN;
  for (const Arm& a : arms) {
    SummaryRow row =
        SummarizeEstimate(recs, a.id, "last_iterate", a.id, "theta_star");
    row.n = n;
    row.T = a.T;
    row.x = a.km;
    row.value = nd * row.mse / sigma_sq;
    if (a.scheme == SchemeKind::kCyclic) {
      cyclic_value = row.value;
      row.reference = 1.0;
    } else {
      row.reference = 1.0 + 1.0 / a.km;
      report.plot.push_back({"example1", a.km, row.value, "randomized"});
      report.plot.push_back({"example1", a.km, row.reference, "theory"});
    }
    row.ratio = row.value / cyclic_value;
    report.summary.push_back(std::move(row));
  }
  for (const Arm& a : arms) {
    SummaryRow row = SummarizeEstimate(recs, a.id, "iterate_average",
                                       absl::StrCat(a.id, "/average"),
                                       "theta_star");
    row.n = n;
    row.T = a.T;
    row.x = a.km;
    row.value = nd * row.mse / sigma_sq;
    row.ratio = row.value / cyclic_value;
    report.summary.push_back(std::move(row));
  }
  report.records = std::move(records);
  report.wall_seconds = timer.Seconds();
  return report;
}

absl::StatusOr<ExperimentReport> RunExperiment(const ExperimentConfig& cfg,
                                               int workers) {
  switch (cfg.kind) {
    case ExperimentKind::kCoverage:
      return RunCoverage(cfg, workers);
    case ExperimentKind::kMseVsIters:
      return RunMseVsIters(cfg, workers);
    case ExperimentKind::kCompareGd:
      return RunCompareGd(cfg, workers);
    case ExperimentKind::kExample1:
      return RunExample1(cfg, workers);
  }
  return absl::InvalidArgumentError("unknown experiment");
}

// ---------------------------------------------------------------------------

absl::StatusOr<FitResult> FitDataset(const ExperimentConfig& cfg,
                                     ModelKind kind, const Dataset& data,
                                     const DomainBounds& bounds,
                                     const PivotTable& table, RngState& rng) {
  ExperimentConfig local = cfg;
  local.bounds = bounds;
  ASSIGN_OR_RETURN(ModelSetup setup,
                   SetupModel(local, kind, data.dim(), bounds));
  RETURN_IF_ERROR(setup.model.CheckDataset(data));
  const int64_t n = data.n();
  FitResult out;
  ASSIGN_OR_RETURN(out.T, ResolveT(cfg.t_rule, n));
  ASSIGN_OR_RETURN(Sigma1Calibration cal,
                   CalibrateSigma1(cfg.privacy, setup.sens.delta_g, cfg.m, n,
                                   out.T));
  out.warnings = cal.warnings;
  out.sigma1 = cfg.sigma1.value_or(cal.sigma1);
  ASSIGN_OR_RETURN(out.noise, MatrixNoiseScales(cfg.privacy, kind, setup.sens,
                                                n, cfg.form));
  out.noise.sigma1 = out.sigma1;
  const OptimConfig o = MakeOptimConfig(local, out.T, out.sigma1);
  RETURN_IF_ERROR(ValidateOptimConfig(o, data.dim(), n, &out.warnings));
  RngState run_rng = rng.Child(0);
  ASSIGN_OR_RETURN(RunResult run, DpsgdRun(data, setup.model, o, run_rng));
  out.theta_bar = run.theta_bar;
  ASSIGN_OR_RETURN(out.covariance,
                   PluginWithPolicy(local, data, setup.model, run.theta_bar,
                                    out.noise, rng.Child(1)));
  ASSIGN_OR_RETURN(out.covariance.V_hat,
                   RandomScalingMatrix(run, o.scheme, n));
  const CovarianceEstimates& est = out.covariance;
  ASSIGN_OR_RETURN(Intervals plugin,
                   PluginCi(run.theta_bar, est.V_tilde, n, cfg.level));
  ASSIGN_OR_RETURN(Intervals plugin_c,
                   PluginCiCorrected(run.theta_bar, est.V_tilde, est.A_tilde,
                                     out.sigma1, run.k, n, cfg.level));
  ASSIGN_OR_RETURN(Intervals rs, RandomScalingCi(run.theta_bar, est.V_hat, n,
                                                 cfg.level, table));
  ASSIGN_OR_RETURN(Intervals rs_c,
                   RandomScalingCiCorrected(run.theta_bar, est.V_hat,
                                            est.V_tilde, est.A_tilde,
                                            out.sigma1, n, cfg.level, table));
  ASSIGN_OR_RETURN(Intervals rs_h,
                   RandomScalingCiHarmonized(run.theta_bar, est.V_hat,
                                             est.V_tilde, est.A_tilde,
                                             out.sigma1, run.k, cfg.m, n,
                                             cfg.level, table));
  out.intervals = {{"plugin", std::move(plugin)},
                   {"plugin_corrected", std::move(plugin_c)},
                   {"rs", std::move(rs)},
                   {"rs_corrected", std::move(rs_c)},
                   {"rs_harmonized", std::move(rs_h)}};
  out.budget = PluginBudget(local, kind, out.noise);
  return out;
}

}  // namespace dpsgd
