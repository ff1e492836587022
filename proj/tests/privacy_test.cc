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

#include "dpsgd/privacy.h"

#include <cmath>
#include <limits>
#include <vector>

#include "Eigen/Core"
#include "gtest/gtest.h"

namespace dpsgd {
namespace {

PrivacySpec Gdp(double mu) {
  PrivacySpec s;
  s.framework = Framework::kGdp;
  s.mu = mu;
  return s;
}

PrivacySpec EpsDelta(double eps, double delta) {
  PrivacySpec s;
  s.framework = Framework::kEpsDelta;
  s.epsilon = eps;
  s.delta = delta;
  return s;
}

PrivacySpec Rdp(double eps, double gamma) {
  PrivacySpec s;
  s.framework = Framework::kRdp;
  s.epsilon = eps;
  s.gamma = gamma;
  return s;
}

// Direct evaluation in extended precision, valid where nothing overflows.
long double NaiveGdpMu(long double sigma, long double c) {
  auto phi = [](long double x) {
    return 0.5L * std::erfc(-x / std::sqrt(2.0L));
  };
  const long double inner = std::exp(1.0L / (sigma * sigma)) *
                                phi(1.5L / sigma) +
                            3.0L * phi(-0.5L / sigma) - 2.0L;
  return std::sqrt(2.0L) * c * std::sqrt(inner);
}

TEST(FrameworkTest, ParseRoundTrip) {
  for (Framework f : {Framework::kNone, Framework::kEpsDelta, Framework::kRdp,
                      Framework::kGdp}) {
    absl::StatusOr<Framework> parsed = ParseFramework(FrameworkName(f));
    ASSERT_TRUE(parsed.ok());
    EXPECT_EQ(*parsed, f);
  }
  EXPECT_FALSE(ParseFramework("zcdp").ok());
}

TEST(FrameworkTest, Validation) {
  EXPECT_FALSE(ValidatePrivacySpec(Gdp(0)).ok());
  EXPECT_FALSE(ValidatePrivacySpec(EpsDelta(1, 0)).ok());
  EXPECT_FALSE(ValidatePrivacySpec(EpsDelta(1, 1)).ok());
  EXPECT_FALSE(ValidatePrivacySpec(EpsDelta(-1, 1e-5)).ok());
  EXPECT_FALSE(ValidatePrivacySpec(Rdp(1, 0.5)).ok());
  EXPECT_TRUE(ValidatePrivacySpec(Rdp(1, 2)).ok());
  EXPECT_TRUE(ValidatePrivacySpec(PrivacySpec{}).ok());
}

// Reference values evaluated with 40-digit arithmetic.
TEST(GdpTest, MuFromSigmaReferenceValues) {
  struct Case {
    double sigma, c, mu;
  };
  const Case cases[] = {
      {1.0, 1.0, 1.7101424755953306091},
      {0.5, 1.0, 10.295670338513974025},
      {2.0, 0.3, 0.18826579251865179878},
      {5.0, 2.0, 0.43492853555237331285},
      {0.1, 1.0, 7.3322808754385638365e+21},
  };
  for (const Case& k : cases) {
    absl::StatusOr<double> mu = GdpMuFromSigma(k.sigma, k.c);
    ASSERT_TRUE(mu.ok());
    EXPECT_NEAR(*mu, k.mu, 1e-13 * k.mu) << "sigma=" << k.sigma;
  }
}

TEST(GdpTest, AgreesWithNaiveEvaluation) {
  for (double sigma = 0.3; sigma < 20; sigma *= 1.37) {
    for (double c : {0.05, 1.0, 7.0}) {
      absl::StatusOr<double> mu = GdpMuFromSigma(sigma, c);
      ASSERT_TRUE(mu.ok());
      const double naive = static_cast<double>(NaiveGdpMu(sigma, c));
      EXPECT_NEAR(*mu, naive, 1e-12 * naive) << sigma << " " << c;
    }
  }
}

TEST(GdpTest, LargeAndSmallSigmaStayFinite) {
  // Tiny sigma: exp(1/sigma^2) overflows a double, the log form does not.
  absl::StatusOr<double> log_mu = GdpLogMuFromSigma(0.01, 1.0);
  ASSERT_TRUE(log_mu.ok());
  EXPECT_NEAR(*log_mu, 0.5 * std::log(2.0) + 0.5 * 1e4, 1e-6);
  EXPECT_FALSE(GdpMuFromSigma(0.01, 1.0).ok());
  // Huge sigma: the radicand is ~ 1 / (2 sigma^2), so mu ~ c / sigma, and it
  // must not cancel to zero.
  absl::StatusOr<double> mu = GdpMuFromSigma(1e6, 1.0);
  ASSERT_TRUE(mu.ok());
  EXPECT_NEAR(*mu, 1.000000398942450824e-6, 1e-15);
}

TEST(GdpTest, DecreasingInSigma) {
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma = 0.2; sigma < 100; sigma *= 1.1) {
    const double mu = *GdpMuFromSigma(sigma, 1.0);
    EXPECT_LT(mu, prev);
    prev = mu;
  }
}

TEST(GdpTest, RoundTripInversion) {
  for (double c : {0.01, 0.3, 1.0, 4.0, 50.0}) {
    for (double mu = 1e-3; mu < 1e3; mu *= 1.9) {
      absl::StatusOr<double> sigma = GdpSigmaFromMu(mu, c);
      ASSERT_TRUE(sigma.ok()) << sigma.status();
      const double back = *GdpMuFromSigma(*sigma, c);
      EXPECT_LE(std::abs(back - mu), 1e-10 * std::max(1.0, mu))
          << "mu=" << mu << " c=" << c;
    }
  }
}

TEST(GdpTest, InversionErrors) {
  EXPECT_FALSE(GdpSigmaFromMu(0.0, 1.0).ok());
  EXPECT_FALSE(GdpSigmaFromMu(1.0, 0.0).ok());
  EXPECT_FALSE(GdpMuFromSigma(-1.0, 1.0).ok());
}

TEST(CalibrateSigma1Test, GdpUsesCompositionConstant) {
  // c = m sqrt(T) / n = 1 and sigma1 = 2 sigma delta_g / m.
  absl::StatusOr<Sigma1Calibration> cal =
      CalibrateSigma1(Gdp(2.0), 3.0, 2, 200, 10000);
  ASSERT_TRUE(cal.ok());
  EXPECT_DOUBLE_EQ(cal->gdp_c, 1.0);
  EXPECT_NEAR(*GdpMuFromSigma(cal->gdp_sigma, 1.0), 2.0, 1e-10);
  EXPECT_DOUBLE_EQ(cal->sigma1, 2.0 * cal->gdp_sigma * 3.0 / 2.0);
  EXPECT_NEAR(cal->gdp_sigma, 0.9164505511797368, 1e-12);
}

TEST(CalibrateSigma1Test, EpsDeltaHandValue) {
  // 2 * 1 * 1 * sqrt(1e4 * ln(1e5)) / (100 * 0.5).
  absl::StatusOr<Sigma1Calibration> cal =
      CalibrateSigma1(EpsDelta(0.5, 1e-5), 1.0, 1, 100, 10000);
  ASSERT_TRUE(cal.ok());
  EXPECT_NEAR(cal->sigma1, 2.0 * std::sqrt(1e4 * std::log(1e5)) / 50.0,
              1e-13);
  EXPECT_TRUE(cal->warnings.empty());
}

TEST(CalibrateSigma1Test, RdpHandValue) {
  // 2 * 1.5 * (4 / 100) * sqrt(1e4 / 0.5).
  absl::StatusOr<Sigma1Calibration> cal =
      CalibrateSigma1(Rdp(0.5, 2.0), 1.5, 4, 100, 10000);
  ASSERT_TRUE(cal.ok());
  EXPECT_NEAR(cal->sigma1, 2.0 * 1.5 * 0.04 * std::sqrt(2e4), 1e-12);
}

TEST(CalibrateSigma1Test, WarnsOutsideRegime) {
  // c1 m^2 T / n^2 = 1e-2 < epsilon.
  absl::StatusOr<Sigma1Calibration> cal =
      CalibrateSigma1(EpsDelta(1.0, 1e-5), 1.0, 1, 1000, 10000);
  ASSERT_TRUE(cal.ok());
  EXPECT_EQ(cal->warnings.size(), 1u);
  cal = CalibrateSigma1(Rdp(1.0, 2.0), 1.0, 1, 1000, 10000);
  ASSERT_TRUE(cal.ok());
  EXPECT_EQ(cal->warnings.size(), 1u);
}

TEST(CalibrateSigma1Test, NoneIsZero) {
  absl::StatusOr<Sigma1Calibration> cal =
      CalibrateSigma1(PrivacySpec{}, 5.0, 1, 100, 100);
  ASSERT_TRUE(cal.ok());
  EXPECT_EQ(cal->sigma1, 0.0);
}

TEST(CalibrateSigma1Test, RejectsBadInputs) {
  EXPECT_FALSE(CalibrateSigma1(Gdp(1), -1.0, 1, 10, 10).ok());
  EXPECT_FALSE(CalibrateSigma1(Gdp(1), 1.0, 0, 10, 10).ok());
  EXPECT_FALSE(CalibrateSigma1(Gdp(1), 1.0, 1, 10, 0).ok());
  EXPECT_FALSE(CalibrateSigma1(Gdp(-1), 1.0, 1, 10, 10).ok());
}

// Every noise scale is proportional to the sensitivity it protects.
TEST(CalibrationPropertyTest, LinearInSensitivity) {
  const std::vector<PrivacySpec> specs = {Gdp(2.0), EpsDelta(0.5, 1e-6),
                                          Rdp(2.0, 3.0)};
  for (const PrivacySpec& spec : specs) {
    for (double delta : {0.1, 1.0, 7.5}) {
      const double s1 = CalibrateSigma1(spec, delta, 3, 500, 250000)->sigma1;
      const double s2 = CalibrateSigma1(spec, 2 * delta, 3, 500, 250000)->sigma1;
      EXPECT_NEAR(s2, 2 * s1, 1e-12 * s2);
      const double m1 = *CalibrateMatrixNoise(spec, delta, 500);
      const double m2 = *CalibrateMatrixNoise(spec, 3 * delta, 500);
      EXPECT_NEAR(m2, 3 * m1, 1e-15 * m2);
    }
  }
  EXPECT_NEAR(*CalibrateDpgdSigma(2.0, 4.0, 100, 10),
              4 * *CalibrateDpgdSigma(2.0, 1.0, 100, 10), 1e-15);
}

TEST(MatrixNoiseTest, HandValues) {
  EXPECT_NEAR(*CalibrateMatrixNoise(Gdp(2.0), 6.0, 400),
              6.0 / 400 * std::sqrt(2.0) / 2.0, 1e-16);
  EXPECT_NEAR(*CalibrateMatrixNoise(EpsDelta(0.5, 1e-5), 1.0, 100),
              2.0 * 0.01 * std::sqrt(2.0 * std::log(2.5e5)) / 0.5, 1e-15);
  EXPECT_NEAR(*CalibrateMatrixNoise(Rdp(2.0, 4.0), 1.0, 10),
              0.1 * std::sqrt(2.0), 1e-15);
  EXPECT_EQ(*CalibrateMatrixNoise(PrivacySpec{}, 1.0, 10), 0.0);
  EXPECT_FALSE(CalibrateMatrixNoise(Gdp(1), -1.0, 10).ok());
}

TEST(DpgdSigmaTest, HandValuesAndLimit) {
  EXPECT_NEAR(*CalibrateDpgdSigma(2.0, 3.0, 1000, 8),
              std::sqrt(16.0) * 3.0 / (1000 * 2.0), 1e-16);
  EXPECT_EQ(*CalibrateDpgdSigma(std::numeric_limits<double>::infinity(), 3.0,
                                1000, 8),
            0.0);
  // Splitting mu over T steps: per-step mu / sqrt(T) gives total mu.
  const double per_step_mu = 2.0 / std::sqrt(8.0);
  EXPECT_NEAR(*CalibrateDpgdSigma(2.0, 3.0, 1000, 8),
              2 * 3.0 / 1000 / per_step_mu / std::sqrt(2.0), 1e-16);
}

TEST(PerturbTest, SymmetricOutputAndZeroNoise) {
  Eigen::MatrixXd m(3, 3);
  m << 2, 1, 0, 1, 3, 0.5, 0, 0.5, 1;
  RngState rng(1);
  absl::StatusOr<Eigen::MatrixXd> same = PerturbSymmetric(m, 0.0, rng);
  ASSERT_TRUE(same.ok());
  EXPECT_EQ(*same, m);
  absl::StatusOr<Eigen::MatrixXd> noisy = PerturbSymmetric(m, 0.3, rng);
  ASSERT_TRUE(noisy.ok());
  EXPECT_EQ(*noisy, noisy->transpose());
  EXPECT_NE(*noisy, m);
  Eigen::MatrixXd asym = m;
  asym(0, 1) += 1e-3;
  EXPECT_FALSE(PerturbSymmetric(asym, 0.1, rng).ok());
  EXPECT_FALSE(PerturbSymmetric(Eigen::MatrixXd::Zero(2, 3), 0.1, rng).ok());
  EXPECT_FALSE(PerturbSymmetric(m, -0.1, rng).ok());
}

TEST(PerturbTest, EntryVariance) {
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 2);
  RngState rng(2);
  const int reps = 50000;
  double diag = 0, off = 0;
  for (int r = 0; r < reps; ++r) {
    Eigen::MatrixXd e = *PerturbSymmetric(zero, 2.0, rng);
    diag += e(0, 0) * e(0, 0);
    off += e(0, 1) * e(0, 1);
  }
  EXPECT_NEAR(diag / reps, 4.0, 4 * 5 * std::sqrt(2.0 / reps));
  EXPECT_NEAR(off / reps, 4.0, 4 * 5 * std::sqrt(2.0 / reps));
}

TEST(BudgetTest, GdpComposesInQuadrature) {
  const PrivacySpec spec = Gdp(2.0);
  BudgetSummary b = BudgetReport(
      spec, {UsageFor("theta", spec), UsageFor("A", spec), UsageFor("S", spec)});
  EXPECT_NEAR(b.mu, 2.0 * std::sqrt(3.0), 1e-15);
  EXPECT_EQ(b.releases.size(), 3u);
}

TEST(BudgetTest, EpsDeltaAdds) {
  const PrivacySpec spec = EpsDelta(0.5, 1e-6);
  BudgetSummary b =
      BudgetReport(spec, {UsageFor("theta", spec), UsageFor("A", spec)});
  EXPECT_DOUBLE_EQ(b.epsilon, 1.0);
  EXPECT_DOUBLE_EQ(b.delta, 2e-6);
  EXPECT_EQ(b.mu, 0.0);
}

}  // namespace
}  // namespace dpsgd
