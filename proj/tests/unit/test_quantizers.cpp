// Copyright 2026 The hfl Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include <gtest/gtest.h>

#include <cmath>

#include "hfl/quantizers.hpp"

namespace hfl {
namespace {

ParamVector probe(Eigen::Index d, std::uint64_t seed) {
  RngStream rng(seed, {77});
  std::normal_distribution<double> unit(0.0, 1.0);
  ParamVector x(d);
  for (Eigen::Index i = 0; i < d; ++i) x(i) = unit(rng);
  return x;
}

TEST(Quantizer, IdentityIsExact) {
  RngStream rng(1, {});
  const ParamVector x = probe(10, 1);
  EXPECT_EQ(quantize(QuantizerSpec::identity(10), x, rng), x);
}

TEST(Quantizer, SparsificationKeepsRScaledCoordinates) {
  const ParamVector x = ParamVector::LinSpaced(20, 1.0, 20.0);
  RngStream rng(3, {});
  for (int trial = 0; trial < 50; ++trial) {
    const ParamVector q = quantize(QuantizerSpec::sparsification(20, 5), x, rng);
    int kept = 0;
    for (Eigen::Index i = 0; i < 20; ++i) {
      if (q(i) != 0) {
        ++kept;
        EXPECT_DOUBLE_EQ(q(i), 4.0 * x(i));
      }
    }
    EXPECT_EQ(kept, 5);
  }
}

TEST(Quantizer, FullSparsificationIsIdentity) {
  const ParamVector x = probe(12, 2);
  RngStream rng(3, {});
  EXPECT_EQ(quantize(QuantizerSpec::sparsification(12, 12), x, rng), x);
}

TEST(Quantizer, RoundingOutputsLevels) {
  const ParamVector x = probe(30, 4);
  const double norm = x.norm();
  RngStream rng(5, {});
  for (int levels : {1, 3, 8}) {
    const ParamVector q = quantize(QuantizerSpec::rounding(30, levels), x, rng);
    for (Eigen::Index i = 0; i < 30; ++i) {
      if (q(i) == 0) continue;
      EXPECT_EQ(std::signbit(q(i)), std::signbit(x(i)));
      const double level = std::abs(q(i)) / norm * levels;
      EXPECT_NEAR(level, std::round(level), 1e-9);
      EXPECT_LE(std::round(level), levels);
    }
  }
}

TEST(Quantizer, ZeroVectorMapsToZero) {
  RngStream rng(5, {});
  const ParamVector zero = ParamVector::Zero(8);
  EXPECT_EQ(quantize(QuantizerSpec::rounding(8, 2), zero, rng), zero);
  EXPECT_EQ(quantize(QuantizerSpec::sparsification(8, 2), zero, rng), zero);
}

TEST(Quantizer, SameStreamSameOutput) {
  const ParamVector x = probe(16, 9);
  RngStream a = make_stream(1, StreamKind::kClientQuantizer, 2, 3);
  RngStream b = make_stream(1, StreamKind::kClientQuantizer, 2, 3);
  EXPECT_EQ(quantize(QuantizerSpec::rounding(16, 2), x, a), quantize(QuantizerSpec::rounding(16, 2), x, b));
}

TEST(Quantizer, RejectsBadInput) {
  RngStream rng(1, {});
  EXPECT_THROW(quantize(QuantizerSpec::identity(3), ParamVector::Zero(4), rng), ConfigError);
  ParamVector bad = ParamVector::Zero(3);
  bad(1) = std::nan("");
  EXPECT_THROW(quantize(QuantizerSpec::rounding(3, 2), bad, rng), InputError);
  EXPECT_THROW(QuantizerSpec::sparsification(5, 0).validate(), ConfigError);
  EXPECT_THROW(QuantizerSpec::sparsification(5, 6).validate(), ConfigError);
  EXPECT_THROW(QuantizerSpec::rounding(5, 0).validate(), ConfigError);
}

TEST(Quantizer, VarianceFactors) {
  EXPECT_EQ(variance_factor(QuantizerSpec::identity(100)), 0.0);
  EXPECT_DOUBLE_EQ(variance_factor(QuantizerSpec::sparsification(100, 5)), 19.0);
  EXPECT_DOUBLE_EQ(variance_factor(QuantizerSpec::sparsification(100, 100)), 0.0);
  EXPECT_DOUBLE_EQ(variance_factor(QuantizerSpec::rounding(100, 1)), 10.0);   // sqrt(d)/s
  EXPECT_DOUBLE_EQ(variance_factor(QuantizerSpec::rounding(100, 16)), 100.0 / 256);  // d/s^2
  EXPECT_EQ(levels_from_bits(2), 2);
  EXPECT_EQ(levels_from_bits(8), 128);
  EXPECT_THROW(levels_from_bits(1), ConfigError);
}

TEST(Quantizer, KindNames) {
  for (auto k : {QuantizerKind::kIdentity, QuantizerKind::kRandomSparsification, QuantizerKind::kStochasticRounding}) {
    EXPECT_EQ(quantizer_kind_from_string(to_string(k)), k);
  }
  EXPECT_THROW(quantizer_kind_from_string("topk"), ConfigError);
}

// Sparsification error has exactly (d/r - 1)||x||^2 expected energy.
TEST(Quantizer, SparsificationVarianceMatchesMonteCarlo) {
  const ParamVector x = probe(40, 3);
  RngStream rng(21, {});
  const int draws = 40000;
  double acc = 0;
  ParamVector mean = ParamVector::Zero(40);
  for (int t = 0; t < draws; ++t) {
    const ParamVector q = quantize(QuantizerSpec::sparsification(40, 8), x, rng);
    acc += (q - x).squaredNorm();
    mean += q;
  }
  mean /= draws;
  EXPECT_NEAR(acc / draws / x.squaredNorm(), 4.0, 0.1);
  EXPECT_LT((mean - x).norm(), 0.1 * x.norm());
}

TEST(Certification, PassesForUnbiasedQuantizers) {
  std::vector<ParamVector> probes = {probe(50, 1), ParamVector::Ones(50), ParamVector::Zero(50)};
  for (const auto& spec : {QuantizerSpec::sparsification(50, 5), QuantizerSpec::rounding(50, 2),
                           QuantizerSpec::identity(50)}) {
    // 4-sigma checks on 50 coordinates reject about 1% of seeds by chance.
    const auto report = certify_assumption3(spec, probes, 10000, 18);
    EXPECT_TRUE(report.pass()) << spec.params();
    ASSERT_EQ(report.probes.size(), 3U);
    EXPECT_TRUE(report.probes[2].zero_probe);
  }
}

TEST(Certification, TightSlackCatchesVarianceExcess) {
  // The rounding bound min(d/s^2, sqrt(d)/s) is loose but never below the truth;
  // a negative slack shrinks it below the empirical ratio for sparsification.
  std::vector<ParamVector> probes = {probe(50, 2)};
  CertificationTolerance tol;
  tol.variance_slack = -0.2;
  EXPECT_FALSE(certify_assumption3(QuantizerSpec::sparsification(50, 5), probes, 10000, 3, tol).pass());
}

TEST(Certification, NeedsEnoughDraws) {
  std::vector<ParamVector> probes = {ParamVector::Ones(4)};
  EXPECT_THROW(certify_assumption3(QuantizerSpec::identity(4), probes, 100, 1), ConfigError);
}

}  // namespace
}  // namespace hfl
