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

#ifndef DPSGD_STATUS_MACROS_H_
#define DPSGD_STATUS_MACROS_H_

#include <utility>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

#define DPSGD_CONCAT_INNER_(a, b) a##b
#define DPSGD_CONCAT_(a, b) DPSGD_CONCAT_INNER_(a, b)

#define RETURN_IF_ERROR(expr)                  \
  do {                                         \
    ::absl::Status _dpsgd_status = (expr);     \
    if (!_dpsgd_status.ok()) return _dpsgd_status; \
  } while (0)

#define DPSGD_ASSIGN_OR_RETURN_IMPL_(tmp, lhs, rexpr) \
  auto tmp = (rexpr);                                 \
  if (!tmp.ok()) return std::move(tmp).status();      \
  lhs = std::move(tmp).value()

#define ASSIGN_OR_RETURN(lhs, rexpr) \
  DPSGD_ASSIGN_OR_RETURN_IMPL_(DPSGD_CONCAT_(_dpsgd_statusor_, __LINE__), lhs, rexpr)

#endif  // DPSGD_STATUS_MACROS_H_
