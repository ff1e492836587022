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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "boost/math/distributions/chi_squared.hpp"
#include "gtest/gtest.h"

namespace dpsgd {
namespace {

// Upper 0.999 quantile of chi-square with `df` degrees of freedom.
double ChiSquareCutoff(double df) {
  return boost::math::quantile(boost::math::chi_squared(df), 0.999);
}

double ChiSquare(const std::vector<double>& counts, double expected) {
  double stat = 0.0;
  for (double c : counts) stat += (c - expected) * (c - expected) / expected;
  return stat;
}

TEST(RngStateTest, SameSeedSameStream) {
  RngState a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const uint64_t va = a.NextU64();
    EXPECT_EQ(va, b.NextU64());
    EXPECT_NE(va, c.NextU64());
  }
}

TEST(RngStateTest, ChildrenAreIndependentOfDrawOrder) {
  RngState parent(7);
  RngState early = parent.Child(5);
  for (int i = 0; i < 1000; ++i) parent.NextU64();
  RngState late = parent.Child(5);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(early.NextU64(), late.NextU64());

  RngState c0 = RngState(7).Child(0);
  RngState c1 = RngState(7).Child(1);
  EXPECT_NE(c0.NextU64(), c1.NextU64());

  std::vector<RngState> split = RngState(7).Split(3);
  ASSERT_EQ(split.size(), 3u);
  RngState direct = RngState(7).Child(2);
  EXPECT_EQ(split[2].NextU64(), direct.NextU64());
}

TEST(RngStateTest, NestedChildrenDiffer) {
  std::set<uint64_t> firsts;
  RngState master(1);
  for (uint64_t s = 0; s < 20; ++s) {
    for (uint64_t r = 0; r < 20; ++r) {
      RngState c = master.Child(s).Child(r);
      firsts.insert(c.NextU64());
    }
  }
  EXPECT_EQ(firsts.size(), 400u);
}

TEST(RngStateTest, Uniform01Range) {
  RngState rng(3);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.Uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 5 * std::sqrt(1.0 / 12 / n));
}

TEST(RngStateTest, UniformIntIsUniform) {
  RngState rng(4);
  const uint64_t bound = 7;
  const int n = 140000;
  std::vector<double> counts(bound, 0.0);
  for (int i = 0; i < n; ++i) {
    const uint64_t v = rng.UniformInt(bound);
    ASSERT_LT(v, bound);
    counts[v] += 1;
  }
  EXPECT_LT(ChiSquare(counts, static_cast<double>(n) / bound),
            ChiSquareCutoff(bound - 1));
}

TEST(RngStateTest, StandardNormalMoments) {
  RngState rng(5);
  const int n = 400000;
  double s1 = 0, s2 = 0, s4 = 0;
  int beyond = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.StandardNormal();
    s1 += z;
    s2 += z * z;
    s4 += z * z * z * z;
    beyond += std::abs(z) > 1.959963984540054;
  }
  EXPECT_NEAR(s1 / n, 0.0, 5 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 5 * std::sqrt(2.0 / n));
  EXPECT_NEAR(s4 / n, 3.0, 5 * std::sqrt(96.0 / n));
  EXPECT_NEAR(static_cast<double>(beyond) / n, 0.05,
              5 * std::sqrt(0.05 * 0.95 / n));
}

TEST(SchemeTest, ParseRoundTrip) {
  for (SchemeKind k : {SchemeKind::kSrswor, SchemeKind::kPoisson,
                       SchemeKind::kWithReplacement, SchemeKind::kCyclic}) {
    absl::StatusOr<SchemeKind> parsed = ParseSchemeKind(SchemeKindName(k));
    ASSERT_TRUE(parsed.ok());
    EXPECT_EQ(*parsed, k);
  }
  EXPECT_FALSE(ParseSchemeKind("bootstrap").ok());
}

TEST(SchemeTest, Validation) {
  EXPECT_FALSE(ValidateScheme({SchemeKind::kSrswor, 0}, 10).ok());
  EXPECT_FALSE(ValidateScheme({SchemeKind::kSrswor, 11}, 10).ok());
  EXPECT_FALSE(ValidateScheme({SchemeKind::kCyclic, 11}, 10).ok());
  EXPECT_TRUE(ValidateScheme({SchemeKind::kWithReplacement, 11}, 10).ok());
  EXPECT_FALSE(ValidateScheme({SchemeKind::kSrswor, 1}, 0).ok());
  RngState rng(1);
  EXPECT_FALSE(DrawBatch({SchemeKind::kCyclic, 1}, 4, 0, rng).ok());
}

TEST(BatchTest, CyclicWrapsAround) {
  RngState rng(1);
  const SamplingScheme s{SchemeKind::kCyclic, 2};
  EXPECT_EQ(*DrawBatch(s, 4, 1, rng), (std::vector<int64_t>{0, 1}));
  EXPECT_EQ(*DrawBatch(s, 4, 2, rng), (std::vector<int64_t>{2, 3}));
  EXPECT_EQ(*DrawBatch(s, 4, 3, rng), (std::vector<int64_t>{0, 1}));
  // n not divisible by m: batches straddle the end of the data.
  EXPECT_EQ(*DrawBatch(s, 3, 2, rng), (std::vector<int64_t>{2, 0}));
}

TEST(BatchTest, SrsworIsUniformOverSubsets) {
  const int64_t n = 5, m = 2;
  absl::StatusOr<BatchSampler> sampler =
      BatchSampler::Create({SchemeKind::kSrswor, m}, n);
  ASSERT_TRUE(sampler.ok());
  RngState rng(2);
  std::map<std::pair<int64_t, int64_t>, double> counts;
  std::vector<int64_t> batch;
  const int draws = 100000;
  for (int t = 1; t <= draws; ++t) {
    sampler->Draw(t, rng, batch);
    ASSERT_EQ(batch.size(), 2u);
    ASSERT_NE(batch[0], batch[1]);
    counts[{std::min(batch[0], batch[1]), std::max(batch[0], batch[1])}] += 1;
  }
  ASSERT_EQ(counts.size(), 10u);
  std::vector<double> c;
  for (const auto& [k, v] : counts) c.push_back(v);
  EXPECT_LT(ChiSquare(c, draws / 10.0), ChiSquareCutoff(9));
}

TEST(BatchTest, SrsworFullBatchIsPermutation) {
  RngState rng(3);
  absl::StatusOr<std::vector<int64_t>> b =
      DrawBatch({SchemeKind::kSrswor, 6}, 6, 1, rng);
  ASSERT_TRUE(b.ok());
  std::vector<int64_t> sorted = *b;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<int64_t>{0, 1, 2, 3, 4, 5}));
}

TEST(BatchTest, PoissonInclusionProbability) {
  const int64_t n = 20, m = 3;
  absl::StatusOr<BatchSampler> sampler =
      BatchSampler::Create({SchemeKind::kPoisson, m}, n);
  ASSERT_TRUE(sampler.ok());
  RngState rng(4);
  std::vector<double> counts(n, 0.0);
  std::vector<int64_t> batch;
  const int draws = 100000;
  double size_sum = 0, size_sq = 0;
  int empty = 0;
  for (int t = 1; t <= draws; ++t) {
    sampler->Draw(t, rng, batch);
    std::set<int64_t> unique(batch.begin(), batch.end());
    ASSERT_EQ(unique.size(), batch.size());
    for (int64_t i : batch) counts[i] += 1;
    size_sum += batch.size();
    size_sq += static_cast<double>(batch.size() * batch.size());
    empty += batch.empty();
  }
  const double q = static_cast<double>(m) / n;
  for (double c : counts) {
    EXPECT_NEAR(c / draws, q, 5 * std::sqrt(q * (1 - q) / draws));
  }
  const double mean = size_sum / draws;
  EXPECT_NEAR(mean, m, 0.03);
  EXPECT_NEAR(size_sq / draws - mean * mean, m * (1 - q), 0.05);
  EXPECT_NEAR(static_cast<double>(empty) / draws, std::pow(1 - q, n), 0.005);
}

TEST(BatchTest, WithReplacementIsUniform) {
  const int64_t n = 6, m = 4;
  absl::StatusOr<BatchSampler> sampler =
      BatchSampler::Create({SchemeKind::kWithReplacement, m}, n);
  ASSERT_TRUE(sampler.ok());
  RngState rng(5);
  std::vector<double> counts(n, 0.0);
  std::vector<int64_t> batch;
  const int draws = 30000;
  int repeats = 0;
  for (int t = 1; t <= draws; ++t) {
    sampler->Draw(t, rng, batch);
    ASSERT_EQ(batch.size(), static_cast<size_t>(m));
    for (int64_t i : batch) counts[i] += 1;
    repeats += std::set<int64_t>(batch.begin(), batch.end()).size() < batch.size();
  }
  EXPECT_LT(ChiSquare(counts, draws * m / static_cast<double>(n)),
            ChiSquareCutoff(n - 1));
  // P(all distinct) = 6*5*4*3 / 6^4.
  EXPECT_NEAR(1.0 - static_cast<double>(repeats) / draws, 360.0 / 1296.0, 0.01);
}

TEST(BatchTest, DeterministicGivenRng) {
  for (SchemeKind k : {SchemeKind::kSrswor, SchemeKind::kPoisson,
                       SchemeKind::kWithReplacement}) {
    RngState a(9), b(9);
    for (int t = 1; t < 50; ++t) {
      EXPECT_EQ(*DrawBatch({k, 3}, 17, t, a), *DrawBatch({k, 3}, 17, t, b));
    }
  }
}

TEST(GaussianTest, ZeroAndInvalidScale) {
  RngState rng(1);
  absl::StatusOr<Eigen::VectorXd> z = Gaussian(rng, 4, 0.0);
  ASSERT_TRUE(z.ok());
  EXPECT_TRUE(z->isZero());
  EXPECT_FALSE(Gaussian(rng, 4, -1.0).ok());
  EXPECT_FALSE(Gaussian(rng, 4, std::nan("")).ok());
  EXPECT_FALSE(Gaussian(rng, -1, 1.0).ok());
}

TEST(GaussianTest, ScaleIsApplied) {
  RngState rng(2);
  absl::StatusOr<Eigen::VectorXd> z = Gaussian(rng, 200000, 3.0);
  ASSERT_TRUE(z.ok());
  const double var = z->squaredNorm() / z->size();
  EXPECT_NEAR(var, 9.0, 9.0 * 5 * std::sqrt(2.0 / z->size()));
}

}  // namespace
}  // namespace dpsgd
