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

#include "hfl/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hfl {
namespace {

int ceil_to_interval(double v) {
  if (!std::isfinite(v) || v > std::numeric_limits<int>::max()) throw ConditionError("interval overflow");
  return std::max(1, static_cast<int>(std::ceil(v)));
}

void check_loss(double f) {
  if (!(f > 0) || !std::isfinite(f)) {
    throw ConditionError("tau1 update needs a positive finite loss, got " + std::to_string(f));
  }
}

}  // namespace

int tau2_from_delays(double d_de_s, double d_ec_s, int n, int s, double q1) {
  if (!(d_de_s > 0) || !(d_ec_s >= 0)) throw ConfigError("tau2_from_delays: d_de must be positive, d_ec non-negative");
  if (n < 1 || s < 1 || s > n) throw ConfigError("tau2_from_delays: need 1 <= s <= n");
  if (!(q1 >= 0)) throw ConfigError("tau2_from_delays: q1 must be non-negative");
  const double r = (1.0 + q1) / (static_cast<double>(n) / s);
  if (!(r < 1.0)) {
    throw ConditionError("tau2_from_delays: 1 + q1 >= n/s, the delay rule has no solution; choose tau2 manually");
  }
  return ceil_to_interval(std::sqrt((d_ec_s / d_de_s) * (1.0 - r) / r));
}

void AdaptState::validate() const {
  if (tau1_initial < 1 || tau1 < 1) throw ConfigError("adaptive: tau1 must be positive");
  if (!(f0 > 0) || !std::isfinite(f0)) throw ConditionError("adaptive: initial loss must be positive");
  if (!(eta0 > 0)) throw ConfigError("adaptive: eta0 must be positive");
  if (!(window_s >= 0)) throw ConfigError("adaptive: window length must be non-negative");
}

int update_tau1(const AdaptState& state, double f_current) {
  state.validate();
  check_loss(f_current);
  return ceil_to_interval(std::sqrt(f_current / state.f0) * state.tau1_initial);
}

int update_tau1_with_decay(const AdaptState& state, double f_current, double eta_current) {
  state.validate();
  check_loss(f_current);
  if (!(eta_current > 0)) throw ConditionError("tau1 update needs a positive step size");
  return ceil_to_interval(std::sqrt((state.eta0 / eta_current) * (f_current / state.f0)) * state.tau1_initial);
}

void AdaptiveSettings::validate() const {
  if (tau1_initial < 1) throw ConfigError("adaptive: tau1_initial must be positive");
  if (!(window_s >= 0) || !std::isfinite(window_s)) throw ConfigError("adaptive: window_s must be non-negative");
  if (tau2 && *tau2 < 1) throw ConfigError("adaptive: tau2 must be positive");
}

int adaptive_tau2(const EngineConfig& config, const AdaptiveSettings& settings) {
  if (settings.tau2) return *settings.tau2;
  return tau2_from_delays(config.latency.d_de_s, config.latency.d_ec_s, config.topology.num_clients(),
                          config.topology.num_edges(), variance_factor(config.client_quantizer));
}

RunTrace adaptive_run(EngineConfig config, const AdaptiveSettings& settings) {
  settings.validate();
  const int tau2 = adaptive_tau2(config, settings);
  config.schedule.tau1 = settings.tau1_initial;
  config.schedule.tau2 = tau2;
  HierarchicalSimulator sim(std::move(config));

  AdaptState state;
  state.tau1_initial = settings.tau1_initial;
  state.tau1 = settings.tau1_initial;
  state.eta0 = sim.config().schedule.eta0;
  state.window_s = settings.window_s;
  const bool adapting = settings.update_enabled && settings.window_s > 0;
  if (adapting) {
    state.f0 = sim.trace().rows.front().reported_loss;
    state.validate();
  }

  while (round_fits(sim, state.tau1, tau2)) {
    if (!sim.run_round(state.tau1, tau2)) break;
    if (!adapting) continue;
    const double wall = sim.wall_clock_s();
    if (wall < static_cast<double>(state.window_index) * state.window_s) continue;
    const double f = sim.trace().rows.back().reported_loss;
    state.tau1 = settings.use_decay_rule ? update_tau1_with_decay(state, f, sim.config().schedule.eta_at(sim.local_steps())) : update_tau1(state, f);
    state.window_index = static_cast<long>(std::floor(wall / state.window_s)) + 1;
  }
  return sim.take_trace();
}

}  // namespace hfl
