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
// Closed-form convergence bound for hierarchical local SGD with quantized
// uploads, and the interval choices derived from it.
//
// Notation: a = (1 + q1) / (n/s) is the per-edge weight of the client-edge
// quantization noise. Every formula is kept in its displayed form; the
// rewrite and specialization helpers exist so tests can cross-check them.
// All functions are templated on the scalar so tests can re-evaluate in
// long double.

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "hfl/core.hpp"
#include "hfl/topology.hpp"

namespace hfl {

template <typename Scalar>
struct BoundParamsT {
  Scalar lipschitz = 1;  // L
  Scalar eta = Scalar(0.01);
  Scalar sigma2 = 0;
  int n = 1;
  int s = 1;
  int tau1 = 1;
  int tau2 = 1;
  Scalar q1 = 0;
  Scalar q2 = 0;
  long rounds = 1;  // K
  Scalar f0 = 1;
  Scalar f_star = 0;

  void validate() const {
    if (!(lipschitz > 0) || !(eta > 0) || !(sigma2 >= 0)) throw ConfigError("bound: need L > 0, eta > 0, sigma2 >= 0");
    if (s < 1 || n < s) throw ConfigError("bound: need n >= s >= 1");
    if (tau1 < 1 || tau2 < 1 || rounds < 1) throw ConfigError("bound: intervals and K must be positive");
    if (!(q1 >= 0) || !(q2 >= 0)) throw ConfigError("bound: q1, q2 must be non-negative");
    if (!(f0 >= f_star)) throw ConfigError("bound: need f0 >= f*");
  }

  template <typename Other>
  BoundParamsT<Other> cast() const {
    return {Other(lipschitz), Other(eta), Other(sigma2), n,  s,          tau1,
            tau2,             Other(q1),  Other(q2),     rounds, Other(f0), Other(f_star)};
  }
};

using BoundParams = BoundParamsT<double>;

template <typename Scalar>
struct BoundResult {
  Scalar value = 0;
  bool valid = false;  // G >= 0
};

/// The three additive terms of the stationarity bound.
template <typename Scalar>
struct BoundTerms {
  Scalar optimization = 0;     // 2(f0 - f*) / (eta K tau1 tau2)
  Scalar local_variance = 0;   // L^2 eta^2 / 2 [a tau1 (tau2 - 1) + (tau1 - 1)] sigma^2
  Scalar global_variance = 0;  // L eta (1 + q1)(1 + q2) sigma^2 / n
  Scalar total() const { return optimization + local_variance + global_variance; }
};

template <typename Scalar>
Scalar quantization_weight(const BoundParamsT<Scalar>& p) {
  return (1 + p.q1) / (Scalar(p.n) / Scalar(p.s));
}

/// G = 1 - L^2 eta^2 [tau1(tau1-1)/2 + tau1 tau2 (tau2(tau2-1)/2 + q1 tau2)]
///       - L eta (1 + q2)(tau1 tau2 + q1 tau1 / n).
template <typename Scalar>
Scalar compute_G(const BoundParamsT<Scalar>& p) {
  p.validate();
  const Scalar t1 = p.tau1;
  const Scalar t2 = p.tau2;
  const Scalar L = p.lipschitz;
  const Scalar eta = p.eta;
  return 1 - L * L * eta * eta * (t1 * (t1 - 1) / 2 + t1 * t2 * (t2 * (t2 - 1) / 2 + p.q1 * t2)) -
         L * eta * (1 + p.q2) * (t1 * t2 + p.q1 * t1 / Scalar(p.n));
}

template <typename Scalar>
BoundTerms<Scalar> theorem1_terms(const BoundParamsT<Scalar>& p) {
  p.validate();
  const Scalar t1 = p.tau1;
  const Scalar t2 = p.tau2;
  const Scalar L = p.lipschitz;
  const Scalar eta = p.eta;
  BoundTerms<Scalar> terms;
  terms.optimization = 2 * (p.f0 - p.f_star) / (eta * Scalar(p.rounds) * t1 * t2);
  terms.local_variance = L * L * eta * eta / 2 * (quantization_weight(p) * t1 * (t2 - 1) + (t1 - 1)) * p.sigma2;
  terms.global_variance = L * eta * (1 / Scalar(p.n)) * (1 + p.q1) * (1 + p.q2) * p.sigma2;
  return terms;
}

/// Upper bound on (1/K) sum_k E||grad f(x_k)||^2; `valid` is false when G < 0.
template <typename Scalar>
BoundResult<Scalar> theorem1_rhs(const BoundParamsT<Scalar>& p) {
  return {theorem1_terms(p).total(), compute_G(p) >= 0};
}

/// The sigma^2-dependent part of theorem1_rhs.
template <typename Scalar>
Scalar theorem1_variance_part(const BoundParamsT<Scalar>& p) {
  const auto terms = theorem1_terms(p);
  return terms.local_variance + terms.global_variance;
}

/// Same variance part regrouped by tau1 tau2 and tau1:
/// L^2 eta^2/2 [a tau1 tau2 + (1 - a) tau1 - 1] sigma^2 + L eta (1+q1)(1+q2) sigma^2 / n.
/// At fixed tau1 tau2 the sign of (1 - a) decides whether more frequent edge
/// aggregation helps or hurts.
template <typename Scalar>
Scalar variance_term_rewrite(const BoundParamsT<Scalar>& p) {
  p.validate();
  const Scalar t1 = p.tau1;
  const Scalar t2 = p.tau2;
  const Scalar L = p.lipschitz;
  const Scalar eta = p.eta;
  const Scalar a = quantization_weight(p);
  return L * L * eta * eta / 2 * (a * t1 * t2 + (1 - a) * t1 - 1) * p.sigma2 +
         L * eta * (1 + p.q1) * (1 + p.q2) * p.sigma2 / Scalar(p.n);
}

/// q1 at which the tau1-coefficient of the rewrite vanishes: n/s - 1.
template <typename Scalar>
Scalar flip_threshold_q1(int n, int s) {
  return Scalar(n) / Scalar(s) - 1;
}

/// Bound with the step size eta = 1 / (L sqrt(K tau1 tau2)) substituted and simplified.
template <typename Scalar>
BoundTerms<Scalar> rate_form_terms(const BoundParamsT<Scalar>& p) {
  p.validate();
  const Scalar t1 = p.tau1;
  const Scalar t2 = p.tau2;
  const Scalar total_steps = Scalar(p.rounds) * t1 * t2;
  BoundTerms<Scalar> terms;
  terms.optimization = 2 * p.lipschitz * (p.f0 - p.f_star) / std::sqrt(total_steps);
  terms.local_variance = 1 / total_steps * Scalar(0.5) * (quantization_weight(p) * t1 * (t2 - 1) + (t1 - 1)) * p.sigma2;
  terms.global_variance = 1 / std::sqrt(total_steps) * (1 + p.q1) * (1 + p.q2) * p.sigma2 / Scalar(p.n);
  return terms;
}

template <typename Scalar>
Scalar rate_form_step_size(const BoundParamsT<Scalar>& p) {
  return 1 / (p.lipschitz * std::sqrt(Scalar(p.rounds) * Scalar(p.tau1) * Scalar(p.tau2)));
}

/// Per-client noise levels and the two aggregates derived from them:
/// sigma_c^2 = mean_i sigma_i^2, sigma_e^2 = (1/n) sum_l mean_{j in C^l} sigma_j^2.
class HeteroVariances {
 public:
  HeteroVariances(std::vector<double> per_client, const Topology& topology)
      : per_client_(std::move(per_client)), topology_(topology) {
    if (static_cast<int>(per_client_.size()) != topology_.num_clients()) {
      throw ConfigError("hetero variances: one sigma_i^2 per client required");
    }
    for (double v : per_client_) {
      if (!(v >= 0)) throw ConfigError("hetero variances: sigma_i^2 must be non-negative");
    }
  }

  const std::vector<double>& per_client() const { return per_client_; }

  double sigma_c2() const {
    double sum = 0;
    for (double v : per_client_) sum += v;
    return sum / static_cast<double>(per_client_.size());
  }

  double sigma_e2() const {
    double sum = 0;
    for (int edge = 0; edge < topology_.num_edges(); ++edge) {
      double edge_sum = 0;
      for (int j : topology_.members(edge)) edge_sum += per_client_[static_cast<std::size_t>(j)];
      sum += edge_sum / topology_.edge_size(edge);
    }
    return sum / topology_.num_clients();
  }

 private:
  std::vector<double> per_client_;
  Topology topology_;
};

/// Bound with client-specific noise levels. p.sigma2 is ignored; with equal
/// sigma_i^2 = sigma^2, sigma_e^2 = (s/n) sigma^2 and this equals theorem1_rhs.
inline BoundResult<double> theorem1_rhs_hetero(const BoundParams& p, const HeteroVariances& h) {
  p.validate();
  const double t1 = p.tau1;
  const double t2 = p.tau2;
  const double L = p.lipschitz;
  const double eta = p.eta;
  const double sc = h.sigma_c2();
  const double se = h.sigma_e2();
  const double value = 2 * (p.f0 - p.f_star) / (eta * static_cast<double>(p.rounds) * t1 * t2) +
                       L * L * eta * eta / 2 * ((t1 - 1) * sc + (1 + p.q1) * t1 * (t2 - 1) * se) +
                       L * eta * (1.0 / p.n) * (1 + p.q1) * (1 + p.q2) * sc;
  return {value, compute_G(p) >= 0};
}

/// time_budget_bound with real-valued intervals, for continuous optimization.
template <typename Scalar>
Scalar time_budget_bound_real(const BoundParamsT<Scalar>& p, Scalar t1, Scalar t2, Scalar d_comp, Scalar d_de,
                              Scalar d_ec, Scalar budget) {
  const Scalar L = p.lipschitz;
  const Scalar eta = p.eta;
  return 2 * (p.f0 - p.f_star) / (eta * budget) * (d_comp + d_de / t1 + d_ec / (t1 * t2)) +
         L * L * eta * eta / 2 * (quantization_weight(p) * t1 * (t2 - 1) + (t1 - 1)) * p.sigma2 +
         L * eta * (1 / Scalar(p.n)) * (1 + p.q1) * (1 + p.q2) * p.sigma2;
}

/// Bound after spending a wall-clock budget T:
/// 2(f0 - f*) / (eta T) (D_comp + D_de/tau1 + D_ec/(tau1 tau2)) + variance part.
/// p.rounds is ignored; K is implied by T.
template <typename Scalar>
Scalar time_budget_bound(const BoundParamsT<Scalar>& p, Scalar d_comp, Scalar d_de, Scalar d_ec, Scalar budget) {
  p.validate();
  if (!(budget > 0)) throw ConfigError("time_budget_bound: T must be positive");
  if (!(d_comp >= 0 && d_de >= 0 && d_ec >= 0)) throw ConfigError("time_budget_bound: delays must be non-negative");
  const Scalar t1 = p.tau1;
  const Scalar t2 = p.tau2;
  if (!(t1 * t2 * d_comp + t2 * d_de + d_ec > 0)) throw ConfigError("time_budget_bound: zero round time");
  return time_budget_bound_real(p, t1, t2, d_comp, d_de, d_ec, budget);
}

template <typename Scalar>
struct OptimalIntervals {
  Scalar tau1 = 0;
  Scalar tau2 = 0;
};

/// Real-valued minimizer of time_budget_bound over (tau1, tau2). Requires
/// 1 + q1 < n/s; throws ConditionError otherwise. Callers round up.
template <typename Scalar>
OptimalIntervals<Scalar> optimal_intervals(const BoundParamsT<Scalar>& p, Scalar d_de, Scalar d_ec, Scalar budget) {
  p.validate();
  const Scalar a = quantization_weight(p);
  if (!(a < 1)) throw ConditionError("optimal intervals need 1 + q1 < n/s");
  if (!(budget > 0)) throw ConfigError("optimal_intervals: T must be positive");
  if (!(d_de > 0) || !(d_ec >= 0)) throw ConfigError("optimal_intervals: need D_de > 0 and D_ec >= 0");
  if (!(p.sigma2 > 0)) throw ConditionError("optimal intervals need sigma2 > 0");
  const Scalar L = p.lipschitz;
  const Scalar eta = p.eta;
  OptimalIntervals<Scalar> out;
  out.tau1 = std::sqrt(4 * (p.f0 - p.f_star) * d_de / (eta * eta * eta * L * L * p.sigma2 * budget * (1 - a)));
  out.tau2 = std::sqrt(d_ec / d_de * (1 - a) / a);
  return out;
}

}  // namespace hfl
