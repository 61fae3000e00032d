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
// Unbiased random compressors: E[Q(x)] = x, E||Q(x) - x||^2 <= q ||x||^2.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hfl/core.hpp"
#include "hfl/rng.hpp"

namespace hfl {

enum class QuantizerKind { kIdentity, kRandomSparsification, kStochasticRounding };

std::string to_string(QuantizerKind kind);
QuantizerKind quantizer_kind_from_string(const std::string& name);

struct QuantizerSpec {
  QuantizerKind kind = QuantizerKind::kIdentity;
  Eigen::Index dim = 1;
  Eigen::Index kept = 1;  // sparsification: coordinates kept (r)
  int levels = 1;         // rounding: number of magnitude levels (s)

  static QuantizerSpec identity(Eigen::Index dim) { return {QuantizerKind::kIdentity, dim, dim, 1}; }
  static QuantizerSpec sparsification(Eigen::Index dim, Eigen::Index kept) {
    return {QuantizerKind::kRandomSparsification, dim, kept, 1};
  }
  static QuantizerSpec rounding(Eigen::Index dim, int levels) {
    return {QuantizerKind::kStochasticRounding, dim, dim, levels};
  }

  /// Throws ConfigError when the parameters are out of range.
  void validate() const;

  /// Short human-readable parameter string, e.g. "r=5" or "levels=4".
  std::string params() const;

  bool operator==(const QuantizerSpec&) const = default;
};

/// Sign-magnitude convention: one bit of sign, the rest encode 2^(bits-1) levels.
int levels_from_bits(int bits);

/// Tightest q with E||Q(x)-x||^2 <= q||x||^2: 0, d/r - 1, min(d/s^2, sqrt(d)/s).
double variance_factor(const QuantizerSpec& spec);

/// One random draw of Q(x). Consumes randomness from `rng`; identical
/// (spec, x, stream) triples give identical outputs.
template <typename Derived>
Vector<typename Derived::Scalar> quantize(const QuantizerSpec& spec, const Eigen::MatrixBase<Derived>& x,
                                          RngStream& rng) {
  using Scalar = typename Derived::Scalar;
  spec.validate();
  if (x.size() != spec.dim) {
    throw ConfigError("quantize: vector has dimension " + std::to_string(x.size()) +
                      ", quantizer expects " + std::to_string(spec.dim));
  }
  if (!x.allFinite()) throw InputError("quantize: non-finite input entry");

  switch (spec.kind) {
    case QuantizerKind::kIdentity:
      return x;

    case QuantizerKind::kRandomSparsification: {
      // Partial Fisher-Yates: the first `kept` slots form a uniform r-subset.
      const Eigen::Index d = spec.dim;
      std::vector<Eigen::Index> index(static_cast<std::size_t>(d));
      for (Eigen::Index i = 0; i < d; ++i) index[static_cast<std::size_t>(i)] = i;
      const Scalar scale = static_cast<Scalar>(d) / static_cast<Scalar>(spec.kept);
      Vector<Scalar> out = Vector<Scalar>::Zero(d);
      for (Eigen::Index i = 0; i < spec.kept; ++i) {
        std::uniform_int_distribution<Eigen::Index> pick(i, d - 1);
        std::swap(index[static_cast<std::size_t>(i)], index[static_cast<std::size_t>(pick(rng))]);
        const Eigen::Index j = index[static_cast<std::size_t>(i)];
        out(j) = scale * x(j);
      }
      return out;
    }

    case QuantizerKind::kStochasticRounding: {
      const Scalar norm = x.norm();
      Vector<Scalar> out = Vector<Scalar>::Zero(spec.dim);
      if (norm == Scalar(0)) return out;
      const int s = spec.levels;
      for (Eigen::Index i = 0; i < spec.dim; ++i) {
        const Scalar ratio = std::abs(x(i)) / norm;
        int level = std::min(static_cast<int>(std::floor(ratio * s)), s - 1);
        const Scalar p_up = ratio * s - level;
        if (static_cast<Scalar>(rng.uniform()) < p_up) ++level;
        if (level == 0) continue;
        const Scalar magnitude = norm * (static_cast<Scalar>(level) / static_cast<Scalar>(s));
        out(i) = x(i) < Scalar(0) ? -magnitude : magnitude;
      }
      return out;
    }
  }
  return x;
}

struct CertificationTolerance {
  double sigma_multiple = 4.0;   // unbiasedness: |mean - x| <= k * se per coordinate
  double variance_slack = 0.05;  // variance ratio <= q * (1 + slack)
};

struct ProbeCertificate {
  std::size_t probe_id = 0;
  bool zero_probe = false;
  double mean_deviation = 0.0;  // ||mean(Q(x)) - x||
  double variance_ratio = 0.0;  // mean ||Q(x)-x||^2 / ||x||^2 (0 for zero probes)
  double q_bound = 0.0;
  bool unbiased = false;
  bool variance_ok = false;
  bool pass() const { return unbiased && variance_ok; }
};

struct CertificationReport {
  QuantizerSpec spec;
  std::size_t draws = 0;
  std::vector<ProbeCertificate> probes;
  bool pass() const;
};

/// Monte-Carlo check of unbiasedness and the variance bound for each probe.
/// Requires draws >= 10^4.
CertificationReport certify_assumption3(const QuantizerSpec& spec, std::span<const ParamVector> probes,
                                        std::size_t draws, std::uint64_t seed,
                                        CertificationTolerance tolerance = {});

}  // namespace hfl
