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
#include <random>
#include <sstream>

#include "hfl/model.hpp"

namespace hfl {
namespace {

LossModel small_logistic(int clients, double ridge, int batch = 4) {
  const LabeledDataset data = make_gaussian_blobs(60 * clients, 3, 2, 1.5, 5);
  LogisticProblem p;
  p.ridge = ridge;
  p.batch_size = batch;
  for (int i = 0; i < clients; ++i) {
    ClientSamples cs;
    cs.features = data.features.middleRows(60 * i, 60);
    cs.labels.resize(60);
    for (int r = 0; r < 60; ++r) cs.labels(r) = data.labels[static_cast<std::size_t>(60 * i + r)];
    p.clients.push_back(cs);
  }
  return LossModel::logistic(std::move(p));
}

TEST(Quadratic, LossAndGradientClosedForm) {
  QuadraticProblem p;
  p.curvature = (ParamVector(2) << 1.0, 3.0).finished();
  p.centers = {(ParamVector(2) << 1.0, 0.0).finished(), (ParamVector(2) << -1.0, 2.0).finished()};
  const LossModel m = LossModel::quadratic(p);
  const ParamVector x = (ParamVector(2) << 0.5, 1.0).finished();
  EXPECT_DOUBLE_EQ(m.local_loss(0, x), 0.5 * (0.25 + 3.0));
  EXPECT_DOUBLE_EQ(m.local_loss(1, x), 0.5 * (2.25 + 3.0));
  EXPECT_DOUBLE_EQ(global_loss(m, x), 0.5 * (1.625 + 2.625));
  const ParamVector g = global_gradient(m, x);
  EXPECT_DOUBLE_EQ(g(0), 0.5);   // 1 * (0.5 - 0)
  EXPECT_DOUBLE_EQ(g(1), 0.0);   // 3 * (1 - 1)
}

TEST(Quadratic, RejectsBadShapes) {
  QuadraticProblem p;
  p.curvature = ParamVector::Ones(2);
  p.centers = {ParamVector::Zero(3)};
  EXPECT_THROW(LossModel::quadratic(p), ConfigError);
  p.centers = {ParamVector::Zero(2)};
  p.curvature(0) = 0;
  EXPECT_THROW(LossModel::quadratic(p), ConfigError);
}

TEST(Quadratic, ConstantsAreExact) {
  const LossModel m = LossModel::iid_quadratic(ParamVector::LinSpaced(5, 0.1, 2.0), ParamVector::Zero(5), 3, 0.6, 4);
  const auto c = constants(m, ParamVector::Ones(5));
  EXPECT_DOUBLE_EQ(c.lipschitz, 2.0);
  EXPECT_DOUBLE_EQ(c.sigma2, 0.36 / 4);
  EXPECT_FALSE(c.sigma2_estimated);
  EXPECT_EQ(c.f_star, 0.0);
}

TEST(Quadratic, StochasticGradientUnbiasedWithDeclaredVariance) {
  const LossModel m = LossModel::iid_quadratic(ParamVector::Ones(4), ParamVector::Zero(4), 1, 0.8, 2);
  const ParamVector x = ParamVector::Constant(4, 0.3);
  const ParamVector exact = m.local_gradient(0, x);
  RngStream rng(3, {});
  const int draws = 50000;
  ParamVector mean = ParamVector::Zero(4);
  double energy = 0;
  for (int t = 0; t < draws; ++t) {
    const ParamVector g = stochastic_gradient(m, 0, x, rng);
    mean += g;
    energy += (g - exact).squaredNorm();
  }
  mean /= draws;
  EXPECT_LT((mean - exact).norm(), 4 * std::sqrt(0.32 / draws));
  EXPECT_NEAR(energy / draws, 0.32, 0.01);
}

TEST(Logistic, GradientMatchesFiniteDifferences) {
  const LossModel m = small_logistic(2, 0.01);
  const ParamVector x = (ParamVector(3) << 0.2, -0.4, 0.7).finished();
  const ParamVector g = m.local_gradient(1, x);
  for (Eigen::Index j = 0; j < 3; ++j) {
    ParamVector e = ParamVector::Zero(3);
    e(j) = 1e-6;
    const double fd = (m.local_loss(1, x + e) - m.local_loss(1, x - e)) / 2e-6;
    EXPECT_NEAR(g(j), fd, 1e-7);
  }
}

TEST(Logistic, LipschitzBoundHolds) {
  const LossModel m = small_logistic(3, 0.05);
  const double L = constants(m, ParamVector::Zero(3), 1, 200).lipschitz;
  RngStream rng(8, {});
  std::normal_distribution<double> unit(0.0, 2.0);
  for (int t = 0; t < 200; ++t) {
    ParamVector x(3), y(3);
    for (int j = 0; j < 3; ++j) {
      x(j) = unit(rng);
      y(j) = unit(rng);
    }
    for (int i = 0; i < 3; ++i) {
      EXPECT_LE((m.local_gradient(i, x) - m.local_gradient(i, y)).norm(), L * (x - y).norm() * (1 + 1e-12));
    }
  }
}

TEST(Logistic, MiniBatchGradientUnbiased) {
  const LossModel m = small_logistic(1, 0.0, 3);
  const ParamVector x = ParamVector::Constant(3, 0.1);
  const ParamVector exact = m.local_gradient(0, x);
  RngStream rng(4, {});
  ParamVector mean = ParamVector::Zero(3);
  const int draws = 60000;
  for (int t = 0; t < draws; ++t) mean += stochastic_gradient(m, 0, x, rng);
  mean /= draws;
  EXPECT_LT((mean - exact).norm(), 0.01);
  const auto c = constants(m, x, 2, 4000);
  EXPECT_TRUE(c.sigma2_estimated);
  EXPECT_GT(c.sigma2, 0.0);
}

TEST(Logistic, GlobalLossWeightsBySampleCount) {
  LogisticProblem p;
  ClientSamples a, b;
  a.features = Eigen::MatrixXd::Ones(1, 1);
  a.labels = ParamVector::Ones(1);
  b.features = Eigen::MatrixXd::Ones(3, 1);
  b.labels = ParamVector::Zero(3);
  p.clients = {a, b};
  const LossModel m = LossModel::logistic(p);
  const ParamVector x = ParamVector::Constant(1, 0.5);
  EXPECT_DOUBLE_EQ(global_loss(m, x), (1 * m.local_loss(0, x) + 3 * m.local_loss(1, x)) / 4);
}

TEST(SgdStep, SubtractsScaledGradient) {
  const ParamVector x = (ParamVector(2) << 1.0, 2.0).finished();
  const ParamVector g = (ParamVector(2) << 0.5, -1.0).finished();
  EXPECT_EQ(sgd_step(x, g, 0.1), (ParamVector(2) << 1.0 - 0.05, 2.0 + 0.1).finished());
  EXPECT_THROW(sgd_step(x, g, 0.0), ConfigError);
  EXPECT_THROW(sgd_step(x, ParamVector::Zero(3), 0.1), ConfigError);
}

TEST(GradOracle, UsesItsOwnStream) {
  const LossModel m = LossModel::iid_quadratic(ParamVector::Ones(3), ParamVector::Zero(3), 2, 1.0);
  GradOracle a(m, 1, make_stream(1, StreamKind::kGradient, 1, 0));
  RngStream rng = make_stream(1, StreamKind::kGradient, 1, 0);
  const ParamVector x = ParamVector::Ones(3);
  EXPECT_EQ(a(x), stochastic_gradient(m, 1, x, rng));
}

TEST(Dataset, ReadsCsvWithHeader) {
  std::istringstream in("label,a,b\n1,0.5,2\n0,-1,3.5\n");
  const LabeledDataset d = read_labeled_csv(in);
  ASSERT_EQ(d.size(), 2U);
  EXPECT_EQ(d.labels[0], 1);
  EXPECT_EQ(d.features(1, 1), 3.5);
}

TEST(Dataset, RejectsRaggedRows) {
  std::istringstream in("1,0.5,2\n0,1\n");
  EXPECT_THROW(read_labeled_csv(in), InputError);
}

TEST(Dataset, BlobsAreSeeded) {
  const auto a = make_gaussian_blobs(40, 4, 2, 3.0, 11);
  const auto b = make_gaussian_blobs(40, 4, 2, 3.0, 11);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.features, make_gaussian_blobs(40, 4, 2, 3.0, 12).features);
}

}  // namespace
}  // namespace hfl
