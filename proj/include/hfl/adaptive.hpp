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
// Wall-clock-windowed interval control: tau2 is fixed from the delay ratio,
// tau1 shrinks with the square root of the loss ratio at each window boundary.

#pragma once

#include <optional>

#include "hfl/engine.hpp"

namespace hfl {

/// ceil(sqrt((d_ec/d_de) (1 - r) / r)) with r = (1 + q1) / (n/s).
/// Throws ConditionError unless 1 + q1 < n/s; pick tau2 by hand then.
int tau2_from_delays(double d_de_s, double d_ec_s, int n, int s, double q1);

struct AdaptState {
  int tau1_initial = 1;
  double f0 = 1.0;    // reported loss at the initial model
  double eta0 = 0.01;
  double window_s = 0.0;  // T0
  long window_index = 1;  // next boundary is window_index * T0
  int tau1 = 1;           // in force

  void validate() const;
};

/// ceil(sqrt(f_current / f0) tau1_initial).
int update_tau1(const AdaptState& state, double f_current);

/// ceil(sqrt((eta0 / eta_current) (f_current / f0)) tau1_initial).
int update_tau1_with_decay(const AdaptState& state, double f_current, double eta_current);

struct AdaptiveSettings {
  int tau1_initial = 1;
  double window_s = 0.0;  // 0 means a single window
  bool use_decay_rule = false;
  bool update_enabled = true;
  std::optional<int> tau2;  // overrides tau2_from_delays

  void validate() const;
};

/// Runs the engine under the controller. The schedule's tau1/tau2 are replaced
/// by tau1_initial and the chosen tau2; its K and wall-clock budget still
/// bound the run. tau1 changes at the first cloud round whose wall clock
/// reaches j*T0, using the mean client-reported loss at that round.
RunTrace adaptive_run(EngineConfig config, const AdaptiveSettings& settings);

/// The tau2 adaptive_run would use.
int adaptive_tau2(const EngineConfig& config, const AdaptiveSettings& settings);

}  // namespace hfl
