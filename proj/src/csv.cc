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

#include "dpsgd/csv.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"
#include "absl/strings/ascii.h"

namespace dpsgd {
namespace {

std::vector<std::string> SplitRow(const std::string& line) {
  std::vector<std::string> cells = absl::StrSplit(line, ',');
  for (std::string& c : cells) {
    c = std::string(absl::StripAsciiWhitespace(c));
    if (c.size() >= 2 && c.front() == '"' && c.back() == '"') {
      c = c.substr(1, c.size() - 2);
    }
  }
  return cells;
}

bool ParseDouble(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

absl::StatusOr<LoadedCsv> LoadCsv(const std::string& path,
                                  const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  if (schema.covariates.empty() && !schema.intercept) {
    return absl::InvalidArgumentError("schema selects no covariates");
  }

  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!absl::StripAsciiWhitespace(line).empty()) {
      have_header = true;
      break;
    }
  }
  if (!have_header) {
    return absl::FailedPreconditionError(absl::StrCat(path, " is empty"));
  }
  // Drop a UTF-8 byte order mark.
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line = line.substr(3);
  std::vector<std::string> header = SplitRow(line);
  auto find_column = [&](const std::string& name) -> absl::StatusOr<int> {
    for (size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return absl::NotFoundError(
        absl::StrCat("missing column '", name, "' in ", path));
  };

  std::vector<int> x_cols;
  for (const std::string& name : schema.covariates) {
    absl::StatusOr<int> c = find_column(name);
    if (!c.ok()) return c.status();
    x_cols.push_back(*c);
  }
  int y_col = -1;
  if (!schema.response.empty()) {
    absl::StatusOr<int> c = find_column(schema.response);
    if (!c.ok()) return c.status();
    y_col = *c;
  }

  const int offset = schema.intercept ? 1 : 0;
  const int p = static_cast<int>(x_cols.size()) + offset;
  std::vector<double> xs;
  std::vector<double> ys;
  int64_t rows = 0;
  int64_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (absl::StripAsciiWhitespace(line).empty()) continue;
    const std::vector<std::string> cells = SplitRow(line);
    auto cell = [&](int col, double& out) -> absl::Status {
      if (col >= static_cast<int>(cells.size())) {
        return absl::InvalidArgumentError(absl::StrCat(
            path, ":", line_no, ": row has ", cells.size(), " cells"));
      }
      if (!ParseDouble(cells[col], out)) {
        return absl::InvalidArgumentError(
            absl::StrCat(path, ":", line_no, ": non-numeric cell '",
                         cells[col], "' in column '", header[col], "'"));
      }
      return absl::OkStatus();
    };
    if (schema.intercept) xs.push_back(1.0);
    for (int c : x_cols) {
      double v;
      if (absl::Status s = cell(c, v); !s.ok()) return s;
      xs.push_back(v);
    }
    if (y_col >= 0) {
      double v;
      if (absl::Status s = cell(y_col, v); !s.ok()) return s;
      ys.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) {
    return absl::FailedPreconditionError(
        absl::StrCat(path, " has a header but no data rows"));
  }

  RowMatrix x = Eigen::Map<RowMatrix>(xs.data(), rows, p);
  Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(ys.data(), ys.size());
  Eigen::VectorXd x_scale = Eigen::VectorXd::Ones(p);
  double y_scale = 1.0;
  if (schema.rescale.has_value()) {
    for (int j = 0; j < p; ++j) {
      const double max_abs = x.col(j).cwiseAbs().maxCoeff();
      if (max_abs > 0) x_scale(j) = schema.rescale->c_x / max_abs;
    }
    x = x * x_scale.asDiagonal();
    if (y.size() > 0) {
      const double max_abs = y.cwiseAbs().maxCoeff();
      if (max_abs > 0) y_scale = schema.rescale->c_y / max_abs;
      y *= y_scale;
    }
  }

  absl::StatusOr<Dataset> data = Dataset::Create(std::move(x), std::move(y));
  if (!data.ok()) return data.status();
  std::vector<std::string> names;
  if (schema.intercept) names.push_back("(intercept)");
  for (const std::string& c : schema.covariates) names.push_back(c);
  const DomainBounds effective = data->ObservedBounds();
  LoadedCsv out{*std::move(data), std::move(names), std::move(x_scale),
                y_scale, effective};
  return out;
}

}  // namespace dpsgd
