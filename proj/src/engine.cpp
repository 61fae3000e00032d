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

#include "hfl/engine.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <exception>
#include <sstream>

#include "hfl/bound.hpp"

namespace hfl {
namespace {

constexpr double kDivergenceNorm = 1e12;

ParamVector mean_vector(std::span<const ParamVector> vs) {
  ParamVector sum = ParamVector::Zero(vs.front().size());
  for (const auto& v : vs) sum += v;
  return sum / static_cast<double>(vs.size());
}

struct ClientUpload {
  ParamVector quantized;
  bool finite = true;
};

// tau1 local SGD steps from `start`; returns Q1 of the accumulated delta.
ClientUpload local_training(const LossModel& model, const Schedule& schedule, std::uint64_t seed, int client,
                            const ParamVector& start, long step_base, int tau1, const QuantizerSpec& quantizer,
                            long quantizer_round) {
  ParamVector x = start;
  ParamVector delta = ParamVector::Zero(start.size());
  for (int t1 = 0; t1 < tau1; ++t1) {
    const long t = step_base + t1;
    RngStream rng = make_stream(seed, StreamKind::kGradient, static_cast<std::uint64_t>(client),
                                static_cast<std::uint64_t>(t));
    const ParamVector g = stochastic_gradient(model, client, x, rng);
    const double eta = schedule.eta_at(t);
    x = sgd_step(x, g, eta);
    delta -= eta * g;
  }
  ClientUpload up;
  if (!delta.allFinite()) {
    up.finite = false;
    return up;
  }
  RngStream rng = make_stream(seed, StreamKind::kClientQuantizer, static_cast<std::uint64_t>(client),
                              static_cast<std::uint64_t>(quantizer_round));
  up.quantized = quantize(quantizer, delta, rng);
  return up;
}

// Runs body(i) for i in [0, count) on `workers` threads; rethrows the
// lowest-index exception.
template <typename Body>
void parallel_for_clients(int count, int workers, Body&& body) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
#pragma omp parallel for num_threads(workers) schedule(static)
  for (int i = 0; i < count; ++i) {
    try {
      body(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

const char* divergence_reason(const ParamVector& x) {
  if (!x.allFinite()) return "non-finite parameters";
  if (x.norm() > kDivergenceNorm) return "parameter norm exceeded 1e12";
  return nullptr;
}

double mean_reported_loss(const LossModel& model, const ParamVector& x) {
  double sum = 0.0;
  for (int i = 0; i < model.num_clients(); ++i) sum += model.local_loss(i, x);
  return sum / model.num_clients();
}

TraceRow evaluate_row(const LossModel& model, const ParamVector& x) {
  TraceRow row;
  row.loss = global_loss(model, x);
  row.grad_norm_sq = global_gradient(model, x).squaredNorm();
  row.reported_loss = mean_reported_loss(model, x);
  return row;
}

}  // namespace

std::string to_string(Weighting w) { return w == Weighting::kWeighted ? "weighted" : "uniform"; }

Weighting weighting_from_string(const std::string& name) {
  if (name == "weighted") return Weighting::kWeighted;
  if (name == "uniform") return Weighting::kUniform;
  throw ConfigError("unknown aggregation weighting '" + name + "'");
}

void Schedule::validate() const {
  if (tau1 < 1 || tau2 < 1) throw ConfigError("schedule: tau1 and tau2 must be positive");
  if (cloud_rounds < 1) throw ConfigError("schedule: cloud_rounds must be positive");
  if (!(eta0 > 0) || !std::isfinite(eta0)) throw ConfigError("schedule: eta0 must be positive");
  if (!(eta_decay > 0 && eta_decay <= 1)) throw ConfigError("schedule: eta_decay must be in (0, 1]");
  if (iterations_per_epoch < 0) throw ConfigError("schedule: iterations_per_epoch must be non-negative");
  if (wall_clock_budget_s && !(*wall_clock_budget_s > 0)) throw ConfigError("schedule: budget must be positive");
}

double Schedule::eta_at(long step) const {
  if (iterations_per_epoch <= 0 || eta_decay == 1.0) return eta0;
  return eta0 * std::pow(eta_decay, static_cast<double>(step / iterations_per_epoch));
}

void EngineConfig::validate() const {
  if (!model) throw ConfigError("engine: no loss model");
  if (topology.num_clients() != model->num_clients()) {
    throw ConfigError("engine: topology has " + std::to_string(topology.num_clients()) + " clients, model has " +
                      std::to_string(model->num_clients()));
  }
  if (x0.size() != model->dim()) throw ConfigError("engine: x0 dimension does not match the model");
  if (!x0.allFinite()) throw InputError("engine: non-finite x0");
  schedule.validate();
  client_quantizer.validate();
  edge_quantizer.validate();
  if (client_quantizer.dim != model->dim() || edge_quantizer.dim != model->dim()) {
    throw ConfigError("engine: quantizer dimension does not match the model");
  }
  latency.validate();
  if (value_bits < 1) throw ConfigError("engine: value_bits must be positive");
  if (workers < 1) throw ConfigError("engine: workers must be positive");
}

std::uint64_t EngineConfig::full_bits() const {
  return static_cast<std::uint64_t>(value_bits) * static_cast<std::uint64_t>(model->dim());
}

ParamVector edge_update(std::span<const ParamVector> deltas, const QuantizerSpec& spec,
                        std::span<RngStream> streams) {
  if (deltas.empty()) throw ConfigError("edge_update: an edge needs at least one client");
  if (streams.size() != deltas.size()) throw ConfigError("edge_update: one stream per client required");
  std::vector<ParamVector> quantized;
  quantized.reserve(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i) quantized.push_back(quantize(spec, deltas[i], streams[i]));
  return mean_vector(quantized);
}

ParamVector edge_aggregate(const ParamVector& u, std::span<const ParamVector> deltas, const QuantizerSpec& spec,
                           std::span<RngStream> streams) {
  const ParamVector inc = edge_update(deltas, spec, streams);
  if (inc.size() != u.size()) throw ConfigError("edge_aggregate: dimension mismatch");
  return u + inc;
}

std::vector<double> cloud_weights(const Topology& topology, Weighting weighting) {
  std::vector<double> w;
  for (int l = 0; l < topology.num_edges(); ++l) {
    w.push_back(weighting == Weighting::kWeighted
                    ? static_cast<double>(topology.edge_size(l)) / static_cast<double>(topology.num_clients())
                    : 1.0 / static_cast<double>(topology.num_edges()));
  }
  return w;
}

ParamVector cloud_aggregate(const ParamVector& x, std::span<const ParamVector> deltas, std::span<const double> weights,
                            const QuantizerSpec& spec, std::span<RngStream> streams, Weighting weighting) {
  if (deltas.size() != weights.size() || streams.size() != deltas.size() || deltas.empty()) {
    throw ConfigError("cloud_aggregate: need one weight and one stream per edge");
  }
  if (weighting == Weighting::kWeighted) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("cloud_aggregate: weights must sum to 1");
  } else {
    const double uniform = 1.0 / static_cast<double>(weights.size());
    for (double w : weights) {
      if (w != uniform) throw ConfigError("cloud_aggregate: uniform mode requires weights 1/s");
    }
  }
  ParamVector sum = ParamVector::Zero(x.size());
  for (std::size_t l = 0; l < deltas.size(); ++l) sum += weights[l] * quantize(spec, deltas[l], streams[l]);
  return x + sum;
}

ParamVector virtual_unquantized_state(const ParamVector& x, std::span<const ParamVector> deltas,
                                      std::span<const double> weights) {
  if (deltas.size() != weights.size()) throw ConfigError("virtual state: one weight per edge required");
  ParamVector sum = ParamVector::Zero(x.size());
  for (std::size_t l = 0; l < deltas.size(); ++l) sum += weights[l] * deltas[l];
  return x + sum;
}

double engine_g_value(const EngineConfig& config, const SmoothnessConstants& constants) {
  BoundParams p;
  p.lipschitz = constants.lipschitz;
  p.eta = config.schedule.eta0;
  p.sigma2 = constants.sigma2;
  p.n = config.topology.num_clients();
  p.s = config.topology.num_edges();
  p.tau1 = config.schedule.tau1;
  p.tau2 = config.schedule.tau2;
  p.q1 = variance_factor(config.client_quantizer);
  p.q2 = variance_factor(config.edge_quantizer);
  p.f0 = 0.0;
  p.f_star = 0.0;
  return compute_G(p);
}

HierarchicalSimulator::HierarchicalSimulator(EngineConfig config) : config_(std::move(config)) {
  config_.validate();
  x_ = config_.x0;
  payload_q1_ = quantized_payload_bits(config_.client_quantizer, config_.full_bits());
  payload_q2_ = quantized_payload_bits(config_.edge_quantizer, config_.full_bits());
  weights_ = cloud_weights(config_.topology, config_.weighting);
  trace_.constants = constants(*config_.model, x_, config_.seed);
  trace_.g_value = engine_g_value(config_, trace_.constants);
  if (trace_.g_value < 0) {
    trace_.warnings.push_back("G = " + std::to_string(trace_.g_value) +
                              " < 0: the convergence bound does not apply to this configuration");
  }
  record_row(config_.schedule.tau1, config_.schedule.tau2);
}

double HierarchicalSimulator::current_eta() const { return config_.schedule.eta_at(steps_ > 0 ? steps_ - 1 : 0); }

void HierarchicalSimulator::record_row(int tau1, int tau2) {
  TraceRow row = evaluate_row(*config_.model, x_);
  row.k = round_;
  row.t_total = steps_;
  row.tau1 = tau1;
  row.tau2 = tau2;
  row.eta = current_eta();
  row.uplink_bits = bits_;
  if (round_ > 0) {
    if (tau1 != last_tau1_ || tau2 != last_tau2_) {
      wall_base_ = trace_.rows.back().wall_clock_s;
      wall_rounds_ = 0;
      last_tau1_ = tau1;
      last_tau2_ = tau2;
    }
    ++wall_rounds_;
    row.wall_clock_s = wall_base_ + static_cast<double>(wall_rounds_) * round_time(tau1, tau2, config_.latency);
  }
  trace_.rows.push_back(row);
  trace_.models.push_back(x_);
}

bool HierarchicalSimulator::run_round(int tau1, int tau2) {
  if (diverged()) return false;
  if (tau1 < 1 || tau2 < 1) throw ConfigError("run_round: intervals must be positive");
  const Topology& topo = config_.topology;
  const LossModel& model = *config_.model;
  const int n = topo.num_clients();
  const int s = topo.num_edges();

  std::vector<ParamVector> edge_model(static_cast<std::size_t>(s), x_);
  std::vector<ParamVector> edge_total(static_cast<std::size_t>(s), ParamVector::Zero(x_.size()));
  std::vector<ClientUpload> uploads(static_cast<std::size_t>(n));

  for (int t2 = 0; t2 < tau2; ++t2) {
    const long edge_round = edge_rounds_ + t2;
    const long step_base = steps_ + static_cast<long>(t2) * tau1;
    parallel_for_clients(n, config_.workers, [&](int i) {
      uploads[static_cast<std::size_t>(i)] =
          local_training(model, config_.schedule, config_.seed, i, edge_model[static_cast<std::size_t>(topo.edge_of(i))],
                         step_base, tau1, config_.client_quantizer, edge_round);
    });
    for (const auto& up : uploads) {
      if (!up.finite) {
        trace_.divergence = DivergenceEvent{round_ + 1, "non-finite client update"};
        return false;
      }
    }
    for (int l = 0; l < s; ++l) {
      std::vector<ParamVector> member_uploads;
      for (int i : topo.members(l)) member_uploads.push_back(uploads[static_cast<std::size_t>(i)].quantized);
      const ParamVector inc = mean_vector(member_uploads);
      edge_model[static_cast<std::size_t>(l)] += inc;
      edge_total[static_cast<std::size_t>(l)] += inc;
    }
  }

  std::vector<RngStream> streams;
  for (int l = 0; l < s; ++l) {
    streams.push_back(make_stream(config_.seed, StreamKind::kEdgeQuantizer, static_cast<std::uint64_t>(l),
                                  static_cast<std::uint64_t>(round_)));
  }
  for (const auto& e : edge_total) {
    if (!e.allFinite()) {
      trace_.divergence = DivergenceEvent{round_ + 1, "non-finite edge update"};
      return false;
    }
  }
  ParamVector next = cloud_aggregate(x_, edge_total, weights_, config_.edge_quantizer, streams, config_.weighting);
  if (config_.diagnostics) {
    ParamVector virt = virtual_unquantized_state(x_, edge_total, weights_);
    trace_.quantization_error.push_back((next - virt).squaredNorm());
    trace_.virtual_models.push_back(std::move(virt));
  }
  if (const char* reason = divergence_reason(next)) {
    trace_.divergence = DivergenceEvent{round_ + 1, reason};
    return false;
  }

  x_ = std::move(next);
  ++round_;
  steps_ += static_cast<long>(tau1) * tau2;
  edge_rounds_ += tau2;
  bits_ += static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(tau2) * payload_q1_ +
           static_cast<std::uint64_t>(s) * payload_q2_;
  record_row(tau1, tau2);
  return true;
}

bool round_fits(const HierarchicalSimulator& sim, int tau1, int tau2) {
  const Schedule& sched = sim.config().schedule;
  if (sim.diverged() || sim.round() >= sched.cloud_rounds) return false;
  if (!sched.wall_clock_budget_s) return true;
  return sim.wall_clock_s() + round_time(tau1, tau2, sim.config().latency) <= *sched.wall_clock_budget_s * (1 + 1e-12);
}

RunTrace run_hier_local_qsgd(const EngineConfig& config) {
  HierarchicalSimulator sim(config);
  const int tau1 = sim.config().schedule.tau1;
  const int tau2 = sim.config().schedule.tau2;
  while (round_fits(sim, tau1, tau2)) sim.run_round(tau1, tau2);
  return sim.take_trace();
}

RunTrace run_fedavg(const EngineConfig& config) {
  config.validate();
  const LossModel& model = *config.model;
  const int n = model.num_clients();
  const int tau = config.schedule.tau1;
  const std::uint64_t payload = quantized_payload_bits(config.client_quantizer, config.full_bits());
  const double per_round = tau * config.latency.d_comp_s + config.latency.d_ec_s;

  RunTrace trace;
  trace.constants = constants(model, config.x0, config.seed);
  ParamVector x = config.x0;
  long steps = 0;
  std::uint64_t bits = 0;
  auto record = [&](long k) {
    TraceRow row = evaluate_row(model, x);
    row.k = k;
    row.t_total = steps;
    row.wall_clock_s = static_cast<double>(k) * per_round;
    row.tau1 = tau;
    row.tau2 = 1;
    row.eta = config.schedule.eta_at(steps > 0 ? steps - 1 : 0);
    row.uplink_bits = bits;
    trace.rows.push_back(row);
    trace.models.push_back(x);
  };
  record(0);

  std::vector<ClientUpload> uploads(static_cast<std::size_t>(n));
  for (long k = 0; k < config.schedule.cloud_rounds; ++k) {
    if (config.schedule.wall_clock_budget_s &&
        trace.rows.back().wall_clock_s + per_round > *config.schedule.wall_clock_budget_s * (1 + 1e-12)) {
      break;
    }
    parallel_for_clients(n, config.workers, [&](int i) {
      uploads[static_cast<std::size_t>(i)] =
          local_training(model, config.schedule, config.seed, i, x, steps, tau, config.client_quantizer, k);
    });
    std::vector<ParamVector> quantized;
    for (auto& up : uploads) {
      if (!up.finite) {
        trace.divergence = DivergenceEvent{k + 1, "non-finite client update"};
        return trace;
      }
      quantized.push_back(up.quantized);
    }
    ParamVector next = x + mean_vector(quantized);
    if (const char* reason = divergence_reason(next)) {
      trace.divergence = DivergenceEvent{k + 1, reason};
      return trace;
    }
    x = std::move(next);
    steps += tau;
    bits += static_cast<std::uint64_t>(n) * payload;
    record(k + 1);
  }
  return trace;
}

std::vector<ParamVector> run_plain_sgd(const LossModel& model, const ParamVector& x0, const Schedule& schedule,
                                       long iterations, std::uint64_t seed, int client) {
  std::vector<ParamVector> iterates{x0};
  ParamVector x = x0;
  for (long t = 0; t < iterations; ++t) {
    RngStream rng = make_stream(seed, StreamKind::kGradient, static_cast<std::uint64_t>(client),
                                static_cast<std::uint64_t>(t));
    x = sgd_step(x, stochastic_gradient(model, client, x, rng), schedule.eta_at(t));
    iterates.push_back(x);
  }
  return iterates;
}

void write_trace_csv(std::ostream& out, const RunTrace& trace) {
  out << "k,t_total,wall_clock_s,loss,grad_norm_sq,tau1,tau2,eta,uplink_bits\n";
  char buf[512];
  for (const auto& r : trace.rows) {
    std::snprintf(buf, sizeof(buf), "%ld,%ld,%.17g,%.17g,%.17g,%d,%d,%.17g,%" PRIu64 "\n", r.k, r.t_total,
                  r.wall_clock_s, r.loss, r.grad_norm_sq, r.tau1, r.tau2, r.eta, r.uplink_bits);
    out << buf;
  }
}

std::string trace_csv(const RunTrace& trace) {
  std::ostringstream os;
  write_trace_csv(os, trace);
  return os.str();
}

RunTrace read_trace_csv(std::istream& in) {
  RunTrace trace;
  std::string line;
  if (!std::getline(in, line) || line.rfind("k,t_total", 0) != 0) throw InputError("trace csv: missing header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    TraceRow r;
    std::istringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9) throw InputError("trace csv: expected 9 columns");
    try {
      r.k = std::stol(cells[0]);
      r.t_total = std::stol(cells[1]);
      r.wall_clock_s = std::stod(cells[2]);
      r.loss = std::stod(cells[3]);
      r.grad_norm_sq = std::stod(cells[4]);
      r.tau1 = std::stoi(cells[5]);
      r.tau2 = std::stoi(cells[6]);
      r.eta = std::stod(cells[7]);
      r.uplink_bits = std::stoull(cells[8]);
    } catch (const std::exception&) {
      throw InputError("trace csv: malformed row '" + line + "'");
    }
    trace.rows.push_back(r);
  }
  return trace;
}

}  // namespace hfl
