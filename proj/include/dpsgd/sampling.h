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

#ifndef DPSGD_SAMPLING_H_
#define DPSGD_SAMPLING_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "Eigen/Core"
#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace dpsgd {

// Deterministic random stream identified by (seed, stream). The engine is
// std::mt19937_64, whose output sequence is fixed by the C++ standard; the
// uniform and normal transforms below are implemented here rather than taken
// from <random> distributions, whose algorithms are implementation-defined.
// The same (seed, stream) therefore yields the same draws on every platform.
//
// Not a CSPRNG. Deployments that release real private outputs should feed the
// mechanisms from a cryptographically secure source instead.
class RngState {
 public:
  explicit RngState(uint64_t seed, uint64_t stream = 0);

  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }

  uint64_t NextU64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double Uniform01() { return (engine_() >> 11) * 0x1.0p-53; }
  // Uniform on {0, ..., bound - 1}; bound must be positive.
  uint64_t UniformInt(uint64_t bound);
  double StandardNormal();

  // Child stream `index` of this stream. Children are keyed by a mixing
  // function of (seed, stream, index), so child r can be built without
  // touching children 0..r-1 and never shares state with the parent.
  RngState Child(uint64_t index) const;

  // k independent child streams, Child(0) ... Child(k - 1).
  std::vector<RngState> Split(int k) const;

 private:
  uint64_t seed_;
  uint64_t stream_;
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

// SplitMix64 finalizer; the fixed-output mixer behind seed derivation.
uint64_t MixBits(uint64_t x);

enum class SchemeKind { kSrswor, kPoisson, kWithReplacement, kCyclic };

absl::StatusOr<SchemeKind> ParseSchemeKind(const std::string& name);
std::string SchemeKindName(SchemeKind kind);

struct SamplingScheme {
  SchemeKind kind = SchemeKind::kSrswor;
  // Batch size; expected batch size for Poisson.
  int64_t m = 1;

  bool randomized() const { return kind != SchemeKind::kCyclic; }
};

absl::Status ValidateScheme(const SamplingScheme& scheme, int64_t n);

// Draws index sets I_t over a dataset of size n. Indices are 0-based. Keeps a
// scratch permutation so SRSWOR draws cost O(m) rather than O(n).
class BatchSampler {
 public:
  static absl::StatusOr<BatchSampler> Create(const SamplingScheme& scheme,
                                             int64_t n);

  // Fills `out` with the batch for iteration t (1-based). Poisson batches may
  // be empty.
  void Draw(int64_t t, RngState& rng, std::vector<int64_t>& out);

  const SamplingScheme& scheme() const { return scheme_; }
  int64_t n() const { return n_; }

 private:
  BatchSampler(const SamplingScheme& scheme, int64_t n);

  SamplingScheme scheme_;
  int64_t n_;
  std::vector<int64_t> permutation_;
  double log_skip_ = 0.0;  // log(1 - m/n) for Poisson gap sampling.
};

// One-shot convenience wrapper around BatchSampler.
absl::StatusOr<std::vector<int64_t>> DrawBatch(const SamplingScheme& scheme,
                                               int64_t n, int64_t t,
                                               RngState& rng);

// dim i.i.d. N(0, sd^2) draws.
absl::StatusOr<Eigen::VectorXd> Gaussian(RngState& rng, int dim, double sd);

}  // namespace dpsgd

#endif  // DPSGD_SAMPLING_H_
