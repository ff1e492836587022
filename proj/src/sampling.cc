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

#include "dpsgd/sampling.h"

#include <cmath>
#include <numeric>
#include <utility>

#include "absl/strings/str_cat.h"

namespace dpsgd {

uint64_t MixBits(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

uint64_t EngineSeed(uint64_t seed, uint64_t stream) {
  return MixBits(MixBits(seed) ^ (stream * 0xd1b54a32d192ed03ULL + 1));
}

}  // namespace

RngState::RngState(uint64_t seed, uint64_t stream)
    : seed_(seed), stream_(stream), engine_(EngineSeed(seed, stream)) {}

uint64_t RngState::UniformInt(uint64_t bound) {
  // Lemire's nearly-divisionless bounded draw.
  unsigned __int128 product =
      static_cast<unsigned __int128>(engine_()) * bound;
  uint64_t low = static_cast<uint64_t>(product);
  if (low < bound) {
    const uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      product = static_cast<unsigned __int128>(engine_()) * bound;
      low = static_cast<uint64_t>(product);
    }
  }
  return static_cast<uint64_t>(product >> 64);
}

double RngState::StandardNormal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  // Marsaglia polar method.
  double u, v, s;
  do {
    u = 2.0 * Uniform01() - 1.0;
    v = 2.0 * Uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * factor;
  has_spare_normal_ = true;
  return u * factor;
}

RngState RngState::Child(uint64_t index) const {
  const uint64_t child_stream =
      MixBits(stream_ ^ MixBits(index + 0x632be59bd9b4e019ULL));
  return RngState(seed_, child_stream);
}

std::vector<RngState> RngState::Split(int k) const {
  std::vector<RngState> children;
  children.reserve(k > 0 ? k : 0);
  for (int i = 0; i < k; ++i) children.push_back(Child(i));
  return children;
}

absl::StatusOr<SchemeKind> ParseSchemeKind(const std::string& name) {
  if (name == "srswor") return SchemeKind::kSrswor;
  if (name == "poisson") return SchemeKind::kPoisson;
  if (name == "with_replacement") return SchemeKind::kWithReplacement;
  if (name == "cyclic") return SchemeKind::kCyclic;
  return absl::InvalidArgumentError(
      absl::StrCat("unknown sampling scheme '", name,
                   "' (expected srswor, poisson, with_replacement, cyclic)"));
}

std::string SchemeKindName(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::kSrswor:
      return "srswor";
    case SchemeKind::kPoisson:
      return "poisson";
    case SchemeKind::kWithReplacement:
      return "with_replacement";
    case SchemeKind::kCyclic:
      return "cyclic";
  }
  return "unknown";
}

absl::Status ValidateScheme(const SamplingScheme& scheme, int64_t n) {
  if (n < 1) {
    return absl::InvalidArgumentError("dataset size n must be at least 1");
  }
  if (scheme.m < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("batch size m must be at least 1, got ", scheme.m));
  }
  if (scheme.m > n && scheme.kind != SchemeKind::kWithReplacement) {
    return absl::InvalidArgumentError(absl::StrCat(
        "batch size m=", scheme.m, " exceeds dataset size n=", n, " under ",
        SchemeKindName(scheme.kind)));
  }
  return absl::OkStatus();
}

BatchSampler::BatchSampler(const SamplingScheme& scheme, int64_t n)
    : scheme_(scheme), n_(n) {
  if (scheme_.kind == SchemeKind::kSrswor) {
    permutation_.resize(n_);
    std::iota(permutation_.begin(), permutation_.end(), int64_t{0});
  }
  if (scheme_.kind == SchemeKind::kPoisson && scheme_.m < n_) {
    log_skip_ = std::log1p(-static_cast<double>(scheme_.m) / n_);
  }
}

absl::StatusOr<BatchSampler> BatchSampler::Create(const SamplingScheme& scheme,
                                                  int64_t n) {
  if (absl::Status s = ValidateScheme(scheme, n); !s.ok()) return s;
  return BatchSampler(scheme, n);
}

void BatchSampler::Draw(int64_t t, RngState& rng, std::vector<int64_t>& out) {
  out.clear();
  const int64_t m = scheme_.m;
  switch (scheme_.kind) {
    case SchemeKind::kSrswor: {
      // Partial Fisher-Yates on a persistent permutation: any permutation is a
      // valid starting point, so the first m slots are a uniform m-subset.
      for (int64_t i = 0; i < m; ++i) {
        const int64_t j = i + static_cast<int64_t>(rng.UniformInt(n_ - i));
        std::swap(permutation_[i], permutation_[j]);
        out.push_back(permutation_[i]);
      }
      break;
    }
    case SchemeKind::kPoisson: {
      if (m >= n_) {
        for (int64_t i = 0; i < n_; ++i) out.push_back(i);
        break;
      }
      // Geometric gaps between included indices.
      int64_t i = -1;
      while (true) {
        const double u = 1.0 - rng.Uniform01();  // (0, 1]
        const double gap = std::floor(std::log(u) / log_skip_);
        if (gap >= static_cast<double>(n_)) break;
        i += 1 + static_cast<int64_t>(gap);
        if (i >= n_) break;
        out.push_back(i);
      }
      break;
    }
    case SchemeKind::kWithReplacement: {
      for (int64_t i = 0; i < m; ++i) {
        out.push_back(static_cast<int64_t>(rng.UniformInt(n_)));
      }
      break;
    }
    case SchemeKind::kCyclic: {
      const int64_t start = ((t - 1) * m) % n_;
      for (int64_t i = 0; i < m; ++i) out.push_back((start + i) % n_);
      break;
    }
  }
}

absl::StatusOr<std::vector<int64_t>> DrawBatch(const SamplingScheme& scheme,
                                               int64_t n, int64_t t,
                                               RngState& rng) {
  if (t < 1) {
    return absl::InvalidArgumentError("iteration index t is 1-based");
  }
  absl::StatusOr<BatchSampler> sampler = BatchSampler::Create(scheme, n);
  if (!sampler.ok()) return sampler.status();
  std::vector<int64_t> out;
  sampler->Draw(t, rng, out);
  return out;
}

absl::StatusOr<Eigen::VectorXd> Gaussian(RngState& rng, int dim, double sd) {
  if (!(sd >= 0.0) || !std::isfinite(sd)) {
    return absl::InvalidArgumentError(
        absl::StrCat("noise standard deviation must be finite and >= 0, got ",
                     sd));
  }
  if (dim < 0) return absl::InvalidArgumentError("negative dimension");
  Eigen::VectorXd out(dim);
  if (sd == 0.0) {
    out.setZero();
    return out;
  }
  for (int i = 0; i < dim; ++i) out[i] = sd * rng.StandardNormal();
  return out;
}

}  // namespace dpsgd
