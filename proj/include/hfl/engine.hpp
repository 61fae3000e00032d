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
//
// Hierarchical local SGD with quantized uploads.
//
// One cloud round: every edge starts from the cloud model x_k; for tau2 edge
// rounds each client runs tau1 SGD steps from its edge model and uploads
// Q1(delta); the edge adds the mean of its clients' quantized deltas. The
// cloud then adds sum_l w_l Q2(edge update), w_l = m_l/n (weighted) or 1/s
// (uniform).
//
// Clients accumulate their delta step by step (delta -= eta g) instead of
// subtracting end and start models, and edges accumulate their cloud-bound
// update the same way. With one client, one edge and identity quantizers the
// cloud iterate is then bit-identical to plain SGD, and with tau2 = 1 it is
// bit-identical to FedAvg.
//
// Randomness: client i's gradient at global local step t uses stream
// (seed, kGradient, i, t); its Q1 draw at global edge round r uses
// (seed, kClientQuantizer, i, r); edge l's Q2 draw at cloud round k uses
// (seed, kEdgeQuantizer, l, k). Results do not depend on the worker count.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hfl/latency.hpp"
#include "hfl/model.hpp"
#include "hfl/quantizers.hpp"
#include "hfl/topology.hpp"

namespace hfl {

enum class Weighting { kWeighted, kUniform };

std::string to_string(Weighting w);
Weighting weighting_from_string(const std::string& name);

struct Schedule {
  int tau1 = 1;
  int tau2 = 1;
  long cloud_rounds = 1;  // K; an upper bound when a wall-clock budget is set
  double eta0 = 0.01;
  double eta_decay = 1.0;            // multiplied in once per epoch
  long iterations_per_epoch = 0;     // 0 disables decay
  std::optional<double> wall_clock_budget_s;  // stop before a round would exceed it

  void validate() const;
  /// Step size in force at global local step t.
  double eta_at(long step) const;
};

struct EngineConfig {
  Topology topology;
  std::shared_ptr<const LossModel> model;
  ParamVector x0;
  Schedule schedule;
  QuantizerSpec client_quantizer;  // Q1
  QuantizerSpec edge_quantizer;    // Q2
  Weighting weighting = Weighting::kWeighted;
  std::uint64_t seed = 0;
  LatencyModel latency;
  int value_bits = 32;  // full-precision bits per coordinate
  int workers = 1;
  bool diagnostics = false;  // record the virtual unquantized cloud average

  void validate() const;
  std::uint64_t full_bits() const;
};

/// One row per cloud round k = 0..K (row 0 is the initial model).
struct TraceRow {
  long k = 0;
  long t_total = 0;  // local SGD steps per client so far
  double wall_clock_s = 0.0;
  double loss = 0.0;          // f(x_k), full batch
  double grad_norm_sq = 0.0;  // ||grad f(x_k)||^2
  double reported_loss = 0.0; // mean of client-reported f_i(x_k)
  int tau1 = 0;
  int tau2 = 0;
  double eta = 0.0;
  std::uint64_t uplink_bits = 0;  // cumulative
};

struct DivergenceEvent {
  long round = 0;
  std::string reason;
};

struct RunTrace {
  std::vector<TraceRow> rows;
  std::vector<ParamVector> models;          // x_k for every row
  std::vector<ParamVector> virtual_models;  // x_bar_k for k >= 1 when diagnostics are on
  std::vector<double> quantization_error;   // ||x_k - x_bar_k||^2 when diagnostics are on
  std::optional<DivergenceEvent> divergence;
  std::vector<std::string> warnings;
  double g_value = 0.0;
  SmoothnessConstants constants;

  bool diverged() const { return divergence.has_value(); }
  const TraceRow& final_row() const { return rows.back(); }
};

/// mean_i Q1(delta_i), client i quantized with streams[i].
ParamVector edge_update(std::span<const ParamVector> deltas, const QuantizerSpec& spec,
                        std::span<RngStream> streams);

/// u + mean_i Q1(delta_i).
ParamVector edge_aggregate(const ParamVector& u, std::span<const ParamVector> deltas, const QuantizerSpec& spec,
                           std::span<RngStream> streams);

/// Coefficients m_l/n (weighted) or 1/s (uniform).
std::vector<double> cloud_weights(const Topology& topology, Weighting weighting);

/// x + sum_l w_l Q2(delta_l). Weighted mode requires the weights to sum to 1
/// within 1e-12; uniform mode requires every weight to equal 1/s.
ParamVector cloud_aggregate(const ParamVector& x, std::span<const ParamVector> deltas, std::span<const double> weights,
                            const QuantizerSpec& spec, std::span<RngStream> streams,
                            Weighting weighting = Weighting::kWeighted);

/// x + sum_l w_l delta_l: the cloud model had Q2 been skipped.
ParamVector virtual_unquantized_state(const ParamVector& x, std::span<const ParamVector> deltas,
                                      std::span<const double> weights);

/// Steps the three-tier algorithm one cloud round at a time, so a controller
/// can change tau1/tau2 between rounds.
class HierarchicalSimulator {
 public:
  explicit HierarchicalSimulator(EngineConfig config);

  /// Runs one cloud round. Returns false (and records the event) on divergence.
  bool run_round(int tau1, int tau2);

  const ParamVector& cloud_model() const { return x_; }
  long round() const { return round_; }
  long local_steps() const { return steps_; }
  double wall_clock_s() const { return trace_.rows.back().wall_clock_s; }
  double current_eta() const;
  bool diverged() const { return trace_.diverged(); }
  const EngineConfig& config() const { return config_; }
  const RunTrace& trace() const { return trace_; }
  RunTrace take_trace() { return std::move(trace_); }

 private:
  void record_row(int tau1, int tau2);

  EngineConfig config_;
  ParamVector x_;
  long round_ = 0;
  long steps_ = 0;
  long edge_rounds_ = 0;
  std::uint64_t bits_ = 0;
  // Wall clock is base + rounds_since_change * round_time so that fixed
  // schedules give exactly k * round_time.
  double wall_base_ = 0.0;
  long wall_rounds_ = 0;
  int last_tau1_ = 0;
  int last_tau2_ = 0;
  std::uint64_t payload_q1_ = 0;
  std::uint64_t payload_q2_ = 0;
  std::vector<double> weights_;
  RunTrace trace_;
};

/// Whether the next round at (tau1, tau2) still fits the schedule's limits.
bool round_fits(const HierarchicalSimulator& sim, int tau1, int tau2);

RunTrace run_hier_local_qsgd(const EngineConfig& config);

/// Two-tier FedAvg: tau = schedule.tau1 local steps, then
/// x_{k+1} = x_k + (1/n) sum_i Q(delta_i) with Q = client_quantizer.
/// The topology is ignored except for n. Uploads go straight to the cloud:
/// a round costs tau D_comp + D_ec and n payloads.
RunTrace run_fedavg(const EngineConfig& config);

/// Single-client SGD with client 0's gradient stream; returns x_0..x_T.
std::vector<ParamVector> run_plain_sgd(const LossModel& model, const ParamVector& x0, const Schedule& schedule,
                                       long iterations, std::uint64_t seed, int client = 0);

/// Trace CSV: k,t_total,wall_clock_s,loss,grad_norm_sq,tau1,tau2,eta,uplink_bits.
void write_trace_csv(std::ostream& out, const RunTrace& trace);
std::string trace_csv(const RunTrace& trace);

/// Parses a trace CSV back (models are not stored in the CSV).
RunTrace read_trace_csv(std::istream& in);

/// Hierarchical quantities needed by G: n, s, q1, q2 and L.
double engine_g_value(const EngineConfig& config, const SmoothnessConstants& constants);

}  // namespace hfl
