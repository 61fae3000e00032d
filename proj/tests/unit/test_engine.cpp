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
#include <sstream>

#include "hfl/engine.hpp"

namespace hfl {
namespace {

EngineConfig quadratic_config(int n, std::vector<int> sizes, double noise, std::uint64_t seed) {
  EngineConfig c;
  const int d = 6;
  c.topology = build_association(n, static_cast<int>(sizes.size()), sizes);
  c.model = std::make_shared<const LossModel>(
      LossModel::iid_quadratic(ParamVector::LinSpaced(d, 0.2, 1.0), ParamVector::Zero(d), n, noise));
  c.x0 = ParamVector::Constant(d, 2.0);
  c.schedule.tau1 = 3;
  c.schedule.tau2 = 2;
  c.schedule.cloud_rounds = 10;
  c.schedule.eta0 = 0.1;
  c.client_quantizer = QuantizerSpec::identity(d);
  c.edge_quantizer = QuantizerSpec::identity(d);
  c.seed = seed;
  c.latency = {2.0, 33.0, 330.0};
  return c;
}

std::shared_ptr<const LossModel> hetero_model(int n, int d) {
  QuadraticProblem p;
  p.curvature = ParamVector::LinSpaced(d, 0.3, 1.0);
  for (int i = 0; i < n; ++i) p.centers.push_back(ParamVector::LinSpaced(d, -1.0, 1.0) * (i - n / 2.0));
  return std::make_shared<const LossModel>(LossModel::quadratic(p));
}

TEST(EdgeAggregate, Examples) {
  std::vector<RngStream> streams(2, RngStream(1, {}));
  const ParamVector u = (ParamVector(2) << 0.5, -0.5).finished();
  const std::vector<ParamVector> deltas = {(ParamVector(2) << 2, 0).finished(), (ParamVector(2) << 0, 2).finished()};
  EXPECT_EQ(edge_aggregate(u, deltas, QuantizerSpec::identity(2), streams), (ParamVector(2) << 1.5, 0.5).finished());

  std::vector<RngStream> one(1, RngStream(1, {}));
  EXPECT_EQ(edge_aggregate(u, std::span(deltas).first(1), QuantizerSpec::identity(2), one), u + deltas[0]);

  const std::vector<ParamVector> same(5, deltas[0]);
  std::vector<RngStream> five(5, RngStream(1, {}));
  EXPECT_EQ(edge_aggregate(u, same, QuantizerSpec::identity(2), five), u + deltas[0]);
  EXPECT_THROW(edge_aggregate(ParamVector::Zero(3), deltas, QuantizerSpec::identity(2), streams), ConfigError);
}

TEST(CloudAggregate, Examples) {
  const ParamVector x = ParamVector::Ones(3);
  const std::vector<ParamVector> zero(2, ParamVector::Zero(3));
  std::vector<RngStream> streams(2, RngStream(1, {}));
  const std::vector<double> w = {0.25, 0.75};
  EXPECT_EQ(cloud_aggregate(x, zero, w, QuantizerSpec::rounding(3, 2), streams), x);

  const std::vector<ParamVector> d = {ParamVector::Constant(3, 4.0), ParamVector::Constant(3, -2.0)};
  EXPECT_EQ(cloud_aggregate(x, d, w, QuantizerSpec::identity(3), streams), ParamVector::Constant(3, 1 + 1.0 - 1.5));

  const Topology equal = build_association(6, 2, std::vector<int>{3, 3});
  const auto ww = cloud_weights(equal, Weighting::kWeighted);
  const auto wu = cloud_weights(equal, Weighting::kUniform);
  EXPECT_EQ(ww, wu);
  EXPECT_EQ(cloud_aggregate(x, d, ww, QuantizerSpec::identity(3), streams, Weighting::kWeighted),
            cloud_aggregate(x, d, wu, QuantizerSpec::identity(3), streams, Weighting::kUniform));

  const std::vector<double> bad = {0.5, 0.5 + 1e-9};
  EXPECT_THROW(cloud_aggregate(x, d, bad, QuantizerSpec::identity(3), streams), ConfigError);
  EXPECT_THROW(cloud_aggregate(x, d, w, QuantizerSpec::identity(3), streams, Weighting::kUniform), ConfigError);
}

TEST(CloudAggregate, UnbiasedAroundVirtualState) {
  const ParamVector x = ParamVector::Zero(4);
  const std::vector<ParamVector> d = {ParamVector::LinSpaced(4, 1, 4), ParamVector::LinSpaced(4, -2, 0.5)};
  const std::vector<double> w = {0.3, 0.7};
  const ParamVector virt = virtual_unquantized_state(x, d, w);
  ParamVector mean = ParamVector::Zero(4);
  const int draws = 40000;
  for (int t = 0; t < draws; ++t) {
    std::vector<RngStream> streams = {make_stream(1, StreamKind::kEdgeQuantizer, 0, t),
                                      make_stream(1, StreamKind::kEdgeQuantizer, 1, t)};
    mean += cloud_aggregate(x, d, w, QuantizerSpec::rounding(4, 1), streams);
  }
  mean /= draws;
  EXPECT_LT((mean - virt).norm(), 0.05);
  EXPECT_EQ(virtual_unquantized_state(x, std::vector<ParamVector>(2, ParamVector::Zero(4)), w), x);
}

TEST(Engine, SingleClientIsPlainSgd) {
  for (std::uint64_t seed : {1, 2, 3}) {
    EngineConfig c = quadratic_config(1, {1}, 0.5, seed);
    c.schedule.tau1 = 1;
    c.schedule.tau2 = 1;
    c.schedule.cloud_rounds = 200;
    const RunTrace t = run_hier_local_qsgd(c);
    const auto sgd = run_plain_sgd(*c.model, c.x0, c.schedule, 200, seed);
    ASSERT_EQ(t.models.size(), sgd.size());
    for (std::size_t k = 0; k < sgd.size(); ++k) ASSERT_EQ(t.models[k], sgd[k]) << "round " << k;
  }
}

TEST(Engine, FedAvgWithOneClientIsPlainSgd) {
  EngineConfig c = quadratic_config(1, {1}, 0.5, 4);
  c.schedule.tau1 = 1;
  c.schedule.cloud_rounds = 50;
  const RunTrace t = run_fedavg(c);
  const auto sgd = run_plain_sgd(*c.model, c.x0, c.schedule, 50, 4);
  for (std::size_t k = 0; k < sgd.size(); ++k) ASSERT_EQ(t.models[k], sgd[k]);
}

TEST(Engine, SingleTierMatchesFedAvg) {
  EngineConfig c = quadratic_config(5, {5}, 0.7, 9);
  c.schedule.tau2 = 1;
  c.schedule.tau1 = 4;
  c.client_quantizer = QuantizerSpec::rounding(6, 4);
  const RunTrace h = run_hier_local_qsgd(c);
  const RunTrace f = run_fedavg(c);
  ASSERT_EQ(h.rows.size(), f.rows.size());
  for (std::size_t k = 0; k < h.rows.size(); ++k) {
    ASSERT_EQ(h.models[k], f.models[k]);
    EXPECT_EQ(h.rows[k].loss, f.rows[k].loss);
    EXPECT_EQ(h.rows[k].grad_norm_sq, f.rows[k].grad_norm_sq);
  }
}

TEST(Engine, IdenticalDeterministicClientsFollowOneClient) {
  EngineConfig c = quadratic_config(4, {4}, 0.0, 1);
  c.schedule.tau1 = 5;
  c.schedule.cloud_rounds = 8;
  const RunTrace t = run_fedavg(c);
  const auto solo = run_plain_sgd(*c.model, c.x0, c.schedule, 40, 1);
  for (std::size_t k = 0; k < t.models.size(); ++k) EXPECT_TRUE(t.models[k].isApprox(solo[5 * k], 1e-14));
}

TEST(Engine, TwoClientFedAvgIsSgdOnAverage) {
  QuadraticProblem p;
  p.curvature = (ParamVector(2) << 1.0, 0.5).finished();
  p.centers = {(ParamVector(2) << 1.0, -1.0).finished(), (ParamVector(2) << 3.0, 5.0).finished()};
  EngineConfig c = quadratic_config(2, {2}, 0.0, 1);
  c.model = std::make_shared<const LossModel>(LossModel::quadratic(p));
  c.x0 = ParamVector::Zero(2);
  c.client_quantizer = c.edge_quantizer = QuantizerSpec::identity(2);
  c.schedule.tau1 = 1;
  c.schedule.cloud_rounds = 30;
  c.schedule.eta0 = 0.2;
  const RunTrace t = run_fedavg(c);
  // Hand recursion: x <- x - eta A (x - (c1 + c2)/2).
  ParamVector x = ParamVector::Zero(2);
  const ParamVector center = (ParamVector(2) << 2.0, 2.0).finished();
  for (std::size_t k = 1; k < t.models.size(); ++k) {
    x = x - 0.2 * p.curvature.cwiseProduct(x - center);
    EXPECT_TRUE(t.models[k].isApprox(x, 1e-13));
  }
}

TEST(Engine, ConvergesOnNoiselessQuadratic) {
  EngineConfig c = quadratic_config(8, {4, 4}, 0.0, 1);
  c.schedule.cloud_rounds = 200;
  c.schedule.eta0 = 0.05;
  const RunTrace t = run_hier_local_qsgd(c);
  EXPECT_LT(t.final_row().grad_norm_sq, 1e-4);
  for (std::size_t k = 1; k < t.rows.size(); ++k) EXPECT_LE(t.rows[k].loss, t.rows[k - 1].loss);
}

TEST(Engine, TraceBookkeeping) {
  EngineConfig c = quadratic_config(6, {4, 2}, 0.3, 2);
  c.client_quantizer = QuantizerSpec::sparsification(6, 2);
  c.edge_quantizer = QuantizerSpec::rounding(6, 4);
  const RunTrace t = run_hier_local_qsgd(c);
  ASSERT_EQ(t.rows.size(), 11U);
  const std::uint64_t full = 6 * 32;
  const std::uint64_t per_round = 6 * 2 * quantized_payload_bits(c.client_quantizer, full) +
                                  2 * quantized_payload_bits(c.edge_quantizer, full);
  const double rt = round_time(3, 2, c.latency);
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    EXPECT_EQ(t.rows[k].k, static_cast<long>(k));
    EXPECT_EQ(t.rows[k].t_total, static_cast<long>(6 * k));
    EXPECT_EQ(t.rows[k].uplink_bits, per_round * k);
    EXPECT_EQ(t.rows[k].wall_clock_s, static_cast<double>(k) * rt);
    EXPECT_EQ(t.rows[k].tau1, 3);
    EXPECT_EQ(t.rows[k].tau2, 2);
  }
}

TEST(Engine, WorkerCountDoesNotChangeTrace) {
  EngineConfig c = quadratic_config(12, {5, 4, 3}, 0.8, 5);
  c.client_quantizer = QuantizerSpec::rounding(6, 2);
  c.edge_quantizer = QuantizerSpec::sparsification(6, 3);
  const std::string one = trace_csv(run_hier_local_qsgd(c));
  c.workers = 8;
  EXPECT_EQ(trace_csv(run_hier_local_qsgd(c)), one);
}

TEST(Engine, SeedChangesTrace) {
  EngineConfig c = quadratic_config(4, {2, 2}, 0.8, 5);
  const std::string a = trace_csv(run_hier_local_qsgd(c));
  c.seed = 6;
  EXPECT_NE(trace_csv(run_hier_local_qsgd(c)), a);
}

TEST(Engine, DiagnosticsWithIdentityEdgeQuantizer) {
  EngineConfig c = quadratic_config(4, {3, 1}, 0.5, 3);
  c.client_quantizer = QuantizerSpec::rounding(6, 2);
  c.diagnostics = true;
  const RunTrace t = run_hier_local_qsgd(c);
  ASSERT_EQ(t.virtual_models.size(), t.models.size() - 1);
  for (std::size_t k = 0; k < t.virtual_models.size(); ++k) {
    EXPECT_EQ(t.virtual_models[k], t.models[k + 1]);
    EXPECT_EQ(t.quantization_error[k], 0.0);
  }
}

TEST(Engine, AssociationInvarianceDeterministic) {
  auto run = [](std::vector<int> sizes, Weighting w) {
    EngineConfig c = quadratic_config(20, sizes, 0.0, 1);
    c.model = hetero_model(20, 6);
    c.schedule.tau2 = 1;
    c.schedule.cloud_rounds = 30;
    c.schedule.eta0 = 0.05;
    c.weighting = w;
    return run_hier_local_qsgd(c);
  };
  const RunTrace base = run({10, 10}, Weighting::kWeighted);
  const RunTrace skew = run({18, 2}, Weighting::kWeighted);
  for (std::size_t k = 0; k < base.models.size(); ++k) {
    EXPECT_LE((base.models[k] - skew.models[k]).norm(), 1e-10 * base.models[k].norm());
  }
  const RunTrace uniform = run({18, 2}, Weighting::kUniform);
  EXPECT_GT((uniform.final_row().loss - base.final_row().loss), 1e-6);
}

TEST(Engine, DivergenceIsReported) {
  EngineConfig c = quadratic_config(2, {2}, 0.0, 1);
  c.schedule.eta0 = 50.0;
  c.schedule.cloud_rounds = 100;
  const RunTrace t = run_hier_local_qsgd(c);
  ASSERT_TRUE(t.diverged());
  EXPECT_LT(static_cast<long>(t.rows.size()), 101);
  EXPECT_EQ(t.divergence->round, static_cast<long>(t.rows.size()));
  EXPECT_FALSE(t.warnings.empty());  // G < 0
}

TEST(Engine, WallClockBudgetStopsEarly) {
  EngineConfig c = quadratic_config(2, {1, 1}, 0.1, 1);
  c.schedule.cloud_rounds = 1000;
  const double rt = round_time(3, 2, c.latency);
  c.schedule.wall_clock_budget_s = 7.5 * rt;
  const RunTrace t = run_hier_local_qsgd(c);
  EXPECT_EQ(t.final_row().k, 7);
}

TEST(Engine, StepDecayPerEpoch) {
  Schedule s;
  s.eta0 = 0.1;
  s.eta_decay = 0.5;
  s.iterations_per_epoch = 10;
  EXPECT_EQ(s.eta_at(0), 0.1);
  EXPECT_EQ(s.eta_at(9), 0.1);
  EXPECT_EQ(s.eta_at(10), 0.05);
  EXPECT_EQ(s.eta_at(25), 0.025);
  s.eta_decay = 0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Engine, ConfigValidation) {
  EngineConfig c = quadratic_config(4, {2, 2}, 0.1, 1);
  c.client_quantizer = QuantizerSpec::identity(5);
  EXPECT_THROW(run_hier_local_qsgd(c), ConfigError);
  c = quadratic_config(4, {2, 2}, 0.1, 1);
  c.x0 = ParamVector::Zero(2);
  EXPECT_THROW(run_hier_local_qsgd(c), ConfigError);
  c = quadratic_config(4, {2, 2}, 0.1, 1);
  c.topology = build_association(3, 1, std::vector<int>{3});
  EXPECT_THROW(run_hier_local_qsgd(c), ConfigError);
}

TEST(TraceCsv, RoundTrip) {
  EngineConfig c = quadratic_config(4, {2, 2}, 0.3, 1);
  const RunTrace t = run_hier_local_qsgd(c);
  const std::string csv = trace_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "k,t_total,wall_clock_s,loss,grad_norm_sq,tau1,tau2,eta,uplink_bits");
  std::istringstream in(csv);
  const RunTrace back = read_trace_csv(in);
  ASSERT_EQ(back.rows.size(), t.rows.size());
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    EXPECT_EQ(back.rows[k].loss, t.rows[k].loss);
    EXPECT_EQ(back.rows[k].wall_clock_s, t.rows[k].wall_clock_s);
    EXPECT_EQ(back.rows[k].uplink_bits, t.rows[k].uplink_bits);
  }
  std::istringstream bad("nope\n");
  EXPECT_THROW(read_trace_csv(bad), InputError);
}

}  // namespace
}  // namespace hfl
