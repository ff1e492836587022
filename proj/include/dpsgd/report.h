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

#ifndef DPSGD_REPORT_H_
#define DPSGD_REPORT_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "Eigen/Core"
#include "absl/status/status.h"
#include "dpsgd/inference.h"

namespace dpsgd {

// One row of summary.csv: a method (or estimator series) in one setting.
// Metrics that do not apply are NaN and print as empty cells.
struct SummaryRow {
  std::string setting;
  std::string method;
  int64_t n = 0;
  int64_t T = 0;
  double x = 0.0;  // grid coordinate of the setting (n, kappa, T2, k m, ...)
  int64_t count = 0;
  int64_t failures = 0;
  double coverage = 0.0;     // averaged over coordinates
  double coverage_se = 0.0;  // sqrt(level (1 - level) / count)
  double length = 0.0;       // mean interval length, averaged over coordinates
  double rmse = 0.0;
  double mse = 0.0;
  double value = 0.0;      // experiment-specific headline number
  double ratio = 0.0;      // value relative to the setting's baseline series
  double reference = 0.0;  // theoretical value where one exists
  std::vector<double> coverage_by_coord;
  std::vector<double> length_by_coord;
};

struct ReplicationRecord {
  std::string setting;
  int64_t rep = 0;
  bool ok = true;
  std::string error;
  std::vector<std::pair<std::string, Eigen::VectorXd>> vectors;
  std::vector<std::pair<std::string, double>> scalars;
  std::vector<std::pair<std::string, Intervals>> intervals;
};

struct PlotPoint {
  std::string file;  // plotdata/<file>.csv
  double x = 0.0;
  double y = 0.0;
  std::string series;
};

struct SettingInfo {
  std::string id;
  std::vector<std::pair<std::string, std::string>> params;
};

struct ExperimentReport {
  std::string experiment;
  std::string config_json;  // canonical, fully resolved
  std::string digest;       // FNV-1a 64 of config_json, hex
  uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::string timestamp;
  std::vector<SettingInfo> settings;
  std::vector<SummaryRow> summary;
  std::vector<ReplicationRecord> records;
  std::vector<PlotPoint> plot;
  std::vector<std::string> warnings;
};

std::string ReportToJson(const ExperimentReport& report);
std::string SummaryCsv(const ExperimentReport& report);
// "<file>" -> CSV text with header x,y,series, in first-appearance order.
std::vector<std::pair<std::string, std::string>> PlotCsvs(
    const ExperimentReport& report);

// Writes report.json, summary.csv and plotdata/*.csv under `dir`, creating
// directories as needed.
absl::Status EmitReport(const ExperimentReport& report, const std::string& dir);

// FNV-1a 64-bit hash, rendered as 16 lowercase hex digits.
std::string Fnv1aHex(const std::string& text);

// Deterministic number formatting shared by every text artifact: %.10g,
// empty for NaN.
std::string FormatNumber(double v);

}  // namespace dpsgd

#endif  // DPSGD_REPORT_H_
