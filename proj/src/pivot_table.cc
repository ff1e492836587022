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

#include "dpsgd/pivot_table.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "absl/strings/str_cat.h"
#include "dpsgd/sampling.h"
#include "json.hpp"

namespace dpsgd {
namespace {

constexpr int64_t kBlock = 10000;

double DrawPivot(RngState& rng, int64_t steps, std::vector<double>& w) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(steps));
  double level = 0.0;
  for (int64_t i = 0; i < steps; ++i) {
    level += sd * rng.StandardNormal();
    w[i] = level;
  }
  const double w1 = level;
  const double inv = 1.0 / static_cast<double>(steps);
  double integral = 0.0;
  for (int64_t i = 0; i < steps; ++i) {
    const double b = w[i] - static_cast<double>(i + 1) * inv * w1;
    integral += b * b;
  }
  integral *= inv;
  return w1 / std::sqrt(integral);
}

// Exact order-statistic interpolation (type 7) on sorted data.
double Quantile(const std::vector<double>& sorted, double q) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<double> DefaultPivotLevels() {
  return {0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 0.975, 0.99};
}

absl::StatusOr<std::vector<double>> SimulatePivot(int64_t reps, int64_t steps,
                                                  uint64_t seed, int workers) {
  if (reps < 1) return absl::InvalidArgumentError("reps must be >= 1");
  if (steps < 2) return absl::InvalidArgumentError("steps must be >= 2");
  workers = std::max(1, workers);
  std::vector<double> out(reps);
  const int64_t blocks = (reps + kBlock - 1) / kBlock;
  const RngState master(seed);
  auto run = [&](int worker) {
    std::vector<double> w(steps);
    for (int64_t b = worker; b < blocks; b += workers) {
      RngState rng = master.Child(static_cast<uint64_t>(b));
      const int64_t end = std::min(reps, (b + 1) * kBlock);
      for (int64_t r = b * kBlock; r < end; ++r) {
        out[r] = DrawPivot(rng, steps, w);
      }
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> threads;
    for (int i = 0; i < workers; ++i) threads.emplace_back(run, i);
    for (std::thread& t : threads) t.join();
  }
  return out;
}

absl::StatusOr<PivotTable> GeneratePivotTable(const std::vector<double>& levels,
                                              int64_t reps, int64_t steps,
                                              uint64_t seed, int workers) {
  PivotTable table;
  table.levels = levels;
  std::sort(table.levels.begin(), table.levels.end());
  table.levels.erase(std::unique(table.levels.begin(), table.levels.end()),
                     table.levels.end());
  for (double l : table.levels) {
    if (!(l > 0 && l < 1)) {
      return absl::InvalidArgumentError(
          absl::StrCat("level ", l, " is outside (0, 1)"));
    }
  }
  if (table.levels.empty()) return absl::InvalidArgumentError("no levels");
  absl::StatusOr<std::vector<double>> draws =
      SimulatePivot(reps, steps, seed, workers);
  if (!draws.ok()) return draws.status();
  for (double& d : *draws) d = std::abs(d);
  std::sort(draws->begin(), draws->end());
  for (double l : table.levels) table.critvals.push_back(Quantile(*draws, l));
  table.steps = steps;
  table.reps = reps;
  table.seed = seed;
  return table;
}

absl::Status ValidatePivotTable(const PivotTable& table) {
  if (table.levels.empty() || table.levels.size() != table.critvals.size()) {
    return absl::InvalidArgumentError(
        "pivot table needs equal-length, non-empty levels and critvals");
  }
  for (size_t i = 0; i < table.levels.size(); ++i) {
    if (!(table.levels[i] > 0 && table.levels[i] < 1) ||
        !(table.critvals[i] > 0) || !std::isfinite(table.critvals[i])) {
      return absl::InvalidArgumentError("pivot table entry out of range");
    }
    if (i > 0 && !(table.levels[i] > table.levels[i - 1] &&
                   table.critvals[i] > table.critvals[i - 1])) {
      return absl::InvalidArgumentError(
          "pivot table levels and critvals must be increasing");
    }
  }
  return absl::OkStatus();
}

std::string PivotTableToJson(const PivotTable& table) {
  nlohmann::ordered_json j;
  j["version"] = table.version;
  j["statistic"] = "W(1) / sqrt(int_0^1 (W(r) - r W(1))^2 dr), two-sided";
  j["levels"] = table.levels;
  j["critvals"] = table.critvals;
  j["steps"] = table.steps;
  j["reps"] = table.reps;
  j["seed"] = table.seed;
  return j.dump(2) + "\n";
}

absl::StatusOr<PivotTable> PivotTableFromJson(const std::string& json) {
  nlohmann::json j = nlohmann::json::parse(json, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    return absl::InvalidArgumentError("pivot table is not a JSON object");
  }
  PivotTable table;
  try {
    table.version = j.at("version").get<int>();
    table.levels = j.at("levels").get<std::vector<double>>();
    table.critvals = j.at("critvals").get<std::vector<double>>();
    table.steps = j.at("steps").get<int64_t>();
    table.reps = j.at("reps").get<int64_t>();
    table.seed = j.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    return absl::InvalidArgumentError(
        absl::StrCat("malformed pivot table: ", e.what()));
  }
  if (table.version != 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("unsupported pivot table version ", table.version));
  }
  if (absl::Status s = ValidatePivotTable(table); !s.ok()) return s;
  return table;
}

absl::StatusOr<PivotTable> LoadPivotTable(const std::string& path) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return PivotTableFromJson(ss.str());
}

absl::Status SavePivotTable(const PivotTable& table, const std::string& path) {
  if (absl::Status s = ValidatePivotTable(table); !s.ok()) return s;
  std::ofstream out(path);
  if (!out) {
    return absl::PermissionDeniedError(absl::StrCat("cannot write ", path));
  }
  out << PivotTableToJson(table);
  if (!out) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

absl::StatusOr<double> PivotCriticalValue(double level,
                                          const PivotTable& table) {
  if (absl::Status s = ValidatePivotTable(table); !s.ok()) return s;
  const std::vector<double>& lv = table.levels;
  if (!(level >= lv.front() && level <= lv.back())) {
    return absl::OutOfRangeError(absl::StrCat(
        "level ", level, " outside table range [", lv.front(), ", ",
        lv.back(), "]"));
  }
  const auto it = std::lower_bound(lv.begin(), lv.end(), level);
  const size_t hi = static_cast<size_t>(it - lv.begin());
  if (lv[hi] == level) return table.critvals[hi];
  const size_t lo = hi - 1;
  const double w = (level - lv[lo]) / (lv[hi] - lv[lo]);
  return table.critvals[lo] + w * (table.critvals[hi] - table.critvals[lo]);
}

}  // namespace dpsgd
