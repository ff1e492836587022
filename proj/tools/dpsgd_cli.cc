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

// Command-line driver: simulation studies, private fits on CSV data, noise
// calibration and pivot-table regeneration.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "dpsgd/csv.h"
#include "dpsgd/harness.h"
#include "dpsgd/inference.h"
#include "dpsgd/models.h"
#include "dpsgd/pivot_table.h"
#include "dpsgd/privacy.h"
#include "dpsgd/report.h"
#include "dpsgd/sampling.h"
#include "dpsgd/status_macros.h"
#include "json.hpp"

namespace dpsgd {
namespace {

using Json = nlohmann::ordered_json;

Json BudgetJson(const BudgetSummary& b) {
  Json releases = Json::array();
  for (const ReleaseUsage& r : b.releases) {
    releases.push_back({{"name", r.name},
                        {"mu", r.mu},
                        {"epsilon", r.epsilon},
                        {"delta", r.delta}});
  }
  return {{"framework", FrameworkName(b.framework)},
          {"mu", b.mu},
          {"epsilon", b.epsilon},
          {"delta", b.delta},
          {"gamma", b.gamma},
          {"releases", releases}};
}

absl::Status WriteText(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) return absl::PermissionDeniedError(absl::StrCat("cannot write ", path));
  out << text;
  out.close();
  if (!out) return absl::DataLossError(absl::StrCat("failed writing ", path));
  return absl::OkStatus();
}

struct SimulateArgs {
  std::string experiment;
  std::string config;
  std::optional<uint64_t> seed;
  std::string out = "out";
  int workers = 1;
};

absl::Status Simulate(const SimulateArgs& args) {
  ASSIGN_OR_RETURN(ExperimentConfig cfg, LoadExperimentConfig(args.config));
  ASSIGN_OR_RETURN(ExperimentKind kind, ParseExperimentKind(args.experiment));
  if (kind != cfg.kind) {
    return absl::InvalidArgumentError(
        absl::StrCat("config describes a '", ExperimentKindName(cfg.kind),
                     "' experiment, not '", args.experiment, "'"));
  }
  if (args.seed.has_value()) cfg.seed = *args.seed;
  ASSIGN_OR_RETURN(ExperimentReport report, RunExperiment(cfg, args.workers));
  RETURN_IF_ERROR(EmitReport(report, args.out));
  for (const std::string& w : report.warnings) {
    std::cerr << "warning: " << w << "\n";
  }
  int64_t failures = 0;
  for (const ReplicationRecord& r : report.records) failures += r.ok ? 0 : 1;
  std::cout << "experiment " << report.experiment << " digest " << report.digest
            << " records " << report.records.size() << " failed " << failures
            << " wall " << FormatNumber(report.wall_seconds) << "s -> "
            << args.out << "\n";
  std::cout << SummaryCsv(report);
  return absl::OkStatus();
}

struct FitArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string model;
  std::string response = "y";
  std::vector<std::string> covariates;
  bool intercept = false;
  bool rescale = false;
  std::optional<uint64_t> seed;
};

absl::Status Fit(const FitArgs& args) {
  ASSIGN_OR_RETURN(ExperimentConfig cfg, LoadExperimentConfig(args.config));
  if (args.seed.has_value()) cfg.seed = *args.seed;
  ModelKind kind = cfg.models.front();
  if (!args.model.empty()) {
    ASSIGN_OR_RETURN(kind, ParseModelKind(args.model));
  }
  CsvSchema schema;
  schema.response = kind == ModelKind::kMean ? "" : args.response;
  schema.covariates = args.covariates;
  schema.intercept = args.intercept;
  if (args.rescale) schema.rescale = cfg.bounds;
  if (schema.covariates.empty()) {
    return absl::InvalidArgumentError("--covariates is required");
  }
  ASSIGN_OR_RETURN(LoadedCsv csv, LoadCsv(args.data, schema));
  ASSIGN_OR_RETURN(PivotTable table, LoadConfiguredPivotTable(cfg));
  RngState rng(cfg.seed);
  ASSIGN_OR_RETURN(FitResult fit,
                   FitDataset(cfg, kind, csv.data, cfg.bounds, table, rng));

  Json j;
  j["model"] = ModelKindName(kind);
  j["n"] = csv.data.n();
  j["T"] = fit.T;
  j["seed"] = cfg.seed;
  j["config_digest"] = ConfigDigest(cfg);
  j["columns"] = csv.column_names;
  j["x_scale"] = std::vector<double>(csv.x_scale.data(),
                                     csv.x_scale.data() + csv.x_scale.size());
  j["y_scale"] = csv.y_scale;
  j["theta_bar"] = std::vector<double>(
      fit.theta_bar.data(), fit.theta_bar.data() + fit.theta_bar.size());
  j["sigma1"] = fit.sigma1;
  j["noise"] = {{"sigma1", fit.noise.sigma1},
                {"sigma2", fit.noise.sigma2},
                {"sigma3", fit.noise.sigma3}};
  j["floored"] = fit.covariance.floored;
  Json cis = Json::object();
  for (const auto& [name, intervals] : fit.intervals) {
    Json arr = Json::array();
    for (const ConfidenceInterval& ci : intervals) {
      arr.push_back({{"coordinate", csv.column_names[ci.j]},
                     {"lower", ci.lower},
                     {"upper", ci.upper},
                     {"level", ci.level}});
    }
    cis[name] = arr;
  }
  j["intervals"] = cis;
  j["budget"] = BudgetJson(fit.budget);
  j["warnings"] = fit.warnings;
  const std::string text = j.dump(2) + "\n";
  if (args.out.empty() || args.out == "-") {
    std::cout << text;
    return absl::OkStatus();
  }
  return WriteText(args.out, text);
}

absl::Status Calibrate(const std::string& config) {
  ASSIGN_OR_RETURN(ExperimentConfig cfg, LoadExperimentConfig(config));
  Json settings = Json::array();
  for (ModelKind kind : cfg.models) {
    ASSIGN_OR_RETURN(LossModel model, LossModel::Create(kind, cfg.p, cfg.bounds));
    SensitivityBounds sens;
    if (cfg.sensitivity == SensitivityMode::kClip) {
      ASSIGN_OR_RETURN(sens, ClippedSensitivityBounds(model, cfg.bounds, cfg.tau));
    } else {
      ASSIGN_OR_RETURN(sens, ComputeSensitivityBounds(model, cfg.bounds));
    }
    for (int64_t n : cfg.n) {
      ASSIGN_OR_RETURN(int64_t T, ResolveT(cfg.t_rule, n));
      ASSIGN_OR_RETURN(Sigma1Calibration cal,
                       CalibrateSigma1(cfg.privacy, sens.delta_g, cfg.m, n, T));
      ASSIGN_OR_RETURN(NoiseScales noise, MatrixNoiseScales(cfg.privacy, kind,
                                                            sens, n, cfg.form));
      Json s;
      s["model"] = ModelKindName(kind);
      s["n"] = n;
      s["T"] = T;
      s["m"] = cfg.m;
      s["sensitivity"] = {{"delta_g", sens.delta_g},
                          {"delta_A", sens.delta_A},
                          {"delta_S", sens.delta_S},
                          {"delta_score_outer", sens.delta_score_outer}};
      s["sigma1"] = cal.sigma1;
      s["sigma2"] = noise.sigma2;
      s["sigma3"] = noise.sigma3;
      if (cfg.privacy.framework == Framework::kGdp) {
        s["gdp_sigma"] = cal.gdp_sigma;
        s["gdp_c"] = cal.gdp_c;
      }
      s["warnings"] = cal.warnings;
      settings.push_back(s);
    }
  }
  Json j;
  j["privacy"] = {{"framework", FrameworkName(cfg.privacy.framework)},
                  {"epsilon", cfg.privacy.epsilon},
                  {"delta", cfg.privacy.delta},
                  {"gamma", cfg.privacy.gamma},
                  {"mu", cfg.privacy.mu}};
  j["settings"] = settings;
  std::cout << j.dump(2) << "\n";
  return absl::OkStatus();
}

struct CritvalsArgs {
  std::vector<double> levels;
  int64_t reps = 1000000;
  int64_t steps = 1000;
  uint64_t seed = 20240101;
  int workers = 1;
  std::string out;
};

absl::Status Critvals(const CritvalsArgs& args) {
  const std::vector<double> levels =
      args.levels.empty() ? DefaultPivotLevels() : args.levels;
  ASSIGN_OR_RETURN(PivotTable table,
                   GeneratePivotTable(levels, args.reps, args.steps, args.seed,
                                      args.workers));
  if (args.out.empty() || args.out == "-") {
    std::cout << PivotTableToJson(table) << "\n";
    return absl::OkStatus();
  }
  RETURN_IF_ERROR(SavePivotTable(table, args.out));
  for (size_t i = 0; i < table.levels.size(); ++i) {
    std::cout << FormatNumber(table.levels[i]) << "\t"
              << FormatNumber(table.critvals[i]) << "\n";
  }
  return absl::OkStatus();
}

int Report(const absl::Status& status) {
  if (status.ok()) return 0;
  std::cerr << "error: " << status << "\n";
  return 1;
}

}  // namespace
}  // namespace dpsgd

int main(int argc, char** argv) {
  using namespace dpsgd;  // NOLINT
  CLI::App app{"Differentially private SGD with confidence intervals"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "Run a simulation study");
  simulate->add_option("experiment", sim.experiment,
                       "coverage | mse-vs-iters | compare-gd | example1")
      ->required()
      ->check(CLI::IsMember(
          {"coverage", "mse-vs-iters", "compare-gd", "example1"}));
  simulate->add_option("--config", sim.config, "Experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  simulate->add_option("--seed", sim.seed, "Master seed (overrides config)");
  simulate->add_option("--out", sim.out, "Output directory")
      ->capture_default_str();
  simulate->add_option("--workers", sim.workers, "Worker threads")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  FitArgs fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Private fit on a CSV file");
  fit_cmd->add_option("--config", fit.config, "Config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  fit_cmd->add_option("--data", fit.data, "CSV with a header row")
      ->required()
      ->check(CLI::ExistingFile);
  fit_cmd->add_option("--out", fit.out, "Output JSON ('-' for stdout)");
  fit_cmd->add_option("--model", fit.model, "mean | linear | logistic");
  fit_cmd->add_option("--response", fit.response, "Response column")
      ->capture_default_str();
  fit_cmd->add_option("--covariates", fit.covariates, "Covariate columns")
      ->delimiter(',');
  fit_cmd->add_flag("--intercept", fit.intercept, "Prepend an intercept");
  fit_cmd->add_flag("--rescale", fit.rescale,
                    "Rescale columns to the configured bounds");
  fit_cmd->add_option("--seed", fit.seed, "Seed (overrides config)");

  std::string calibrate_config;
  CLI::App* calibrate =
      app.add_subcommand("calibrate", "Print the noise scales of a config");
  calibrate->add_option("--config", calibrate_config, "Config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);

  CritvalsArgs crit;
  CLI::App* critvals =
      app.add_subcommand("critvals", "Regenerate the pivot critical values");
  critvals->add_option("--levels", crit.levels, "Coverage levels")
      ->delimiter(',');
  critvals->add_option("--reps", crit.reps, "Simulated paths")
      ->capture_default_str();
  critvals->add_option("--steps", crit.steps, "Grid points per path")
      ->capture_default_str();
  critvals->add_option("--seed", crit.seed, "Seed")->capture_default_str();
  critvals->add_option("--workers", crit.workers, "Worker threads")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  critvals->add_option("--out", crit.out, "Output JSON ('-' for stdout)");

  CLI11_PARSE(app, argc, argv);

  if (*simulate) return Report(Simulate(sim));
  if (*fit_cmd) return Report(Fit(fit));
  if (*calibrate) return Report(Calibrate(calibrate_config));
  return Report(Critvals(crit));
}
