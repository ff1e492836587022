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

#ifndef DPSGD_CSV_H_
#define DPSGD_CSV_H_

#include <optional>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "dpsgd/models.h"

namespace dpsgd {

struct CsvSchema {
  // Response column; leave empty for mean-model data.
  std::string response;
  std::vector<std::string> covariates;
  // Prepends a constant-1 column before any rescaling.
  bool intercept = false;
  // When set, each covariate column is divided by its largest absolute value
  // and multiplied by rescale->c_x, and the response likewise by c_y, so the
  // loaded data satisfies the bounds.
  std::optional<DomainBounds> rescale;
};

struct LoadedCsv {
  Dataset data;
  std::vector<std::string> column_names;  // including "(intercept)"
  // Multiplier applied to each covariate column and to the response.
  Eigen::VectorXd x_scale;
  double y_scale = 1.0;
  DomainBounds effective_bounds;  // c_0 is left at 0
};

// Reads a comma-separated file with a header row. Distinct errors:
// kNotFound for a missing column (message names it), kInvalidArgument for a
// non-numeric cell, kFailedPrecondition for an empty file or one without data
// rows.
absl::StatusOr<LoadedCsv> LoadCsv(const std::string& path,
                                  const CsvSchema& schema);

}  // namespace dpsgd

#endif  // DPSGD_CSV_H_
