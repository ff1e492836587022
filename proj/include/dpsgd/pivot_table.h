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

#ifndef DPSGD_PIVOT_TABLE_H_
#define DPSGD_PIVOT_TABLE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace dpsgd {

// Two-sided critical values of W(1) / sqrt(int_0^1 (W(r) - r W(1))^2 dr).
struct PivotTable {
  int version = 1;
  std::vector<double> levels;    // increasing, in (0, 1)
  std::vector<double> critvals;  // level-quantiles of |pivot|
  int64_t steps = 0;
  int64_t reps = 0;
  uint64_t seed = 0;
};

std::vector<double> DefaultPivotLevels();

// Simulates `reps` Wiener paths on a `steps`-point grid and records the
// requested quantiles of |pivot|. The bridge integral is the Riemann sum
// (1 / steps) sum_i B(i / steps)^2. Replications are grouped into fixed
// blocks with their own child streams, so the table does not depend on
// `workers`.
absl::StatusOr<PivotTable> GeneratePivotTable(const std::vector<double>& levels,
                                              int64_t reps, int64_t steps,
                                              uint64_t seed, int workers = 1);

// Draws `reps` pivot values from the same generator; for tests and
// diagnostics.
absl::StatusOr<std::vector<double>> SimulatePivot(int64_t reps, int64_t steps,
                                                  uint64_t seed,
                                                  int workers = 1);

absl::Status ValidatePivotTable(const PivotTable& table);
absl::StatusOr<PivotTable> LoadPivotTable(const std::string& path);
absl::Status SavePivotTable(const PivotTable& table, const std::string& path);
std::string PivotTableToJson(const PivotTable& table);
absl::StatusOr<PivotTable> PivotTableFromJson(const std::string& json);

// Linear interpolation in level; kOutOfRange outside the tabulated range.
absl::StatusOr<double> PivotCriticalValue(double level,
                                          const PivotTable& table);

}  // namespace dpsgd

#endif  // DPSGD_PIVOT_TABLE_H_
