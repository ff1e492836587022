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

#include "dpsgd/report.h"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "json.hpp"

namespace dpsgd {
namespace {

using Json = nlohmann::ordered_json;

Json Number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

Json Vector(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(Number(v(i)));
  return out;
}

Json Numbers(const std::vector<double>& v) {
  Json out = Json::array();
  for (double d : v) out.push_back(Number(d));
  return out;
}

absl::Status WriteFile(const std::filesystem::path& path,
                       const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    return absl::PermissionDeniedError(
        absl::StrCat("cannot write ", path.string()));
  }
  out << text;
  out.close();
  if (!out) {
    return absl::DataLossError(absl::StrCat("write failed: ", path.string()));
  }
  return absl::OkStatus();
}

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string FormatNumber(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return absl::StrFormat("%.10g", v);
}

std::string Fnv1aHex(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return absl::StrFormat("%016x", h);
}

std::string ReportToJson(const ExperimentReport& report) {
  Json j;
  j["experiment"] = report.experiment;
  j["digest"] = report.digest;
  j["seed"] = report.seed;
  j["timestamp"] = report.timestamp;
  j["wall_seconds"] = report.wall_seconds;
  Json config = Json::parse(report.config_json.empty() ? "{}"
                                                       : report.config_json,
                            nullptr, false);
  j["config"] = config.is_discarded() ? Json(report.config_json) : config;
  j["warnings"] = report.warnings;

  Json settings = Json::array();
  for (const SettingInfo& s : report.settings) {
    Json e;
    e["id"] = s.id;
    for (const auto& [k, v] : s.params) e[k] = v;
    settings.push_back(e);
  }
  j["settings"] = settings;

  Json summary = Json::array();
  for (const SummaryRow& r : report.summary) {
    Json e;
    e["setting"] = r.setting;
    e["method"] = r.method;
    e["n"] = r.n;
    e["T"] = r.T;
    e["x"] = Number(r.x);
    e["count"] = r.count;
    e["failures"] = r.failures;
    e["coverage"] = Number(r.coverage);
    e["coverage_se"] = Number(r.coverage_se);
    e["length"] = Number(r.length);
    e["rmse"] = Number(r.rmse);
    e["mse"] = Number(r.mse);
    e["value"] = Number(r.value);
    e["ratio"] = Number(r.ratio);
    e["reference"] = Number(r.reference);
    e["coverage_by_coord"] = Numbers(r.coverage_by_coord);
    e["length_by_coord"] = Numbers(r.length_by_coord);
    summary.push_back(e);
  }
  j["summary"] = summary;

  Json records = Json::array();
  for (const ReplicationRecord& r : report.records) {
    Json e;
    e["setting"] = r.setting;
    e["rep"] = r.rep;
    e["ok"] = r.ok;
    if (!r.ok) e["error"] = r.error;
    for (const auto& [name, v] : r.vectors) e[name] = Vector(v);
    for (const auto& [name, v] : r.scalars) e[name] = Number(v);
    if (!r.intervals.empty()) {
      Json cis;
      for (const auto& [name, list] : r.intervals) {
        Json lo = Json::array();
        Json hi = Json::array();
        for (const ConfidenceInterval& ci : list) {
          lo.push_back(Number(ci.lower));
          hi.push_back(Number(ci.upper));
        }
        cis[name] = {{"lower", lo}, {"upper", hi}};
      }
      e["intervals"] = cis;
    }
    records.push_back(e);
  }
  j["record_count"] = report.records.size();
  j["records"] = records;
  return j.dump(1) + "\n";
}

std::string SummaryCsv(const ExperimentReport& report) {
  std::string out =
      "setting,method,n,T,x,count,failures,coverage,coverage_se,length,rmse,"
      "mse,value,ratio,reference\n";
  for (const SummaryRow& r : report.summary) {
    absl::StrAppend(&out, CsvField(r.setting), ",", CsvField(r.method), ",",
                    r.n, ",", r.T, ",", FormatNumber(r.x), ",", r.count, ",",
                    r.failures, ",", FormatNumber(r.coverage), ",",
                    FormatNumber(r.coverage_se), ",", FormatNumber(r.length),
                    ",", FormatNumber(r.rmse), ",", FormatNumber(r.mse), ",",
                    FormatNumber(r.value), ",", FormatNumber(r.ratio), ",",
                    FormatNumber(r.reference), "\n");
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> PlotCsvs(
    const ExperimentReport& report) {
  std::vector<std::pair<std::string, std::string>> files;
  std::map<std::string, size_t> index;
  for (const PlotPoint& pt : report.plot) {
    auto it = index.find(pt.file);
    if (it == index.end()) {
      it = index.emplace(pt.file, files.size()).first;
      files.emplace_back(pt.file, "x,y,series\n");
    }
    absl::StrAppend(&files[it->second].second, FormatNumber(pt.x), ",",
                    FormatNumber(pt.y), ",", CsvField(pt.series), "\n");
  }
  return files;
}

absl::Status EmitReport(const ExperimentReport& report,
                        const std::string& dir) {
  std::error_code ec;
  const std::filesystem::path root(dir);
  std::filesystem::create_directories(root / "plotdata", ec);
  if (ec) {
    return absl::PermissionDeniedError(
        absl::StrCat("cannot create ", dir, ": ", ec.message()));
  }
  if (absl::Status s = WriteFile(root / "report.json", ReportToJson(report));
      !s.ok()) {
    return s;
  }
  if (absl::Status s = WriteFile(root / "summary.csv", SummaryCsv(report));
      !s.ok()) {
    return s;
  }
  for (const auto& [name, text] : PlotCsvs(report)) {
    if (absl::Status s =
            WriteFile(root / "plotdata" / absl::StrCat(name, ".csv"), text);
        !s.ok()) {
      return s;
    }
  }
  return absl::OkStatus();
}

}  // namespace dpsgd
