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

#include "hfl/quantizers.hpp"

#include <algorithm>
#include <limits>

namespace hfl {

std::string to_string(QuantizerKind kind) {
  switch (kind) {
    case QuantizerKind::kIdentity:
      return "identity";
    case QuantizerKind::kRandomSparsification:
      return "random-sparsification";
    case QuantizerKind::kStochasticRounding:
      return "stochastic-rounding";
  }
  return "unknown";
}

QuantizerKind quantizer_kind_from_string(const std::string& name) {
  if (name == "identity") return QuantizerKind::kIdentity;
  if (name == "random-sparsification" || name == "sparsification") return QuantizerKind::kRandomSparsification;
  if (name == "stochastic-rounding" || name == "rounding") return QuantizerKind::kStochasticRounding;
  throw ConfigError("unknown quantizer kind '" + name + "'");
}

void QuantizerSpec::validate() const {
  if (dim < 1) throw ConfigError("quantizer dim must be >= 1, got " + std::to_string(dim));
  if (kind == QuantizerKind::kRandomSparsification && (kept < 1 || kept > dim)) {
    throw ConfigError("sparsification requires 1 <= r <= dim, got r=" + std::to_string(kept) +
                      " dim=" + std::to_string(dim));
  }
  if (kind == QuantizerKind::kStochasticRounding && levels < 1) {
    throw ConfigError("stochastic rounding requires levels >= 1, got " + std::to_string(levels));
  }
}

std::string QuantizerSpec::params() const {
  switch (kind) {
    case QuantizerKind::kIdentity:
      return "dim=" + std::to_string(dim);
    case QuantizerKind::kRandomSparsification:
      return "dim=" + std::to_string(dim) + ";r=" + std::to_string(kept);
    case QuantizerKind::kStochasticRounding:
      return "dim=" + std::to_string(dim) + ";levels=" + std::to_string(levels);
  }
  return {};
}

int levels_from_bits(int bits) {
  if (bits < 2 || bits > 31) throw ConfigError("bits per coordinate must be in [2, 31]");
  return 1 << (bits - 1);
}

double variance_factor(const QuantizerSpec& spec) {
  spec.validate();
  const auto d = static_cast<double>(spec.dim);
  switch (spec.kind) {
    case QuantizerKind::kIdentity:
      return 0.0;
    case QuantizerKind::kRandomSparsification:
      return d / static_cast<double>(spec.kept) - 1.0;
    case QuantizerKind::kStochasticRounding: {
      const auto s = static_cast<double>(spec.levels);
      return std::min(d / (s * s), std::sqrt(d) / s);
    }
  }
  return 0.0;
}

bool CertificationReport::pass() const {
  return std::all_of(probes.begin(), probes.end(), [](const ProbeCertificate& p) { return p.pass(); });
}

CertificationReport certify_assumption3(const QuantizerSpec& spec, std::span<const ParamVector> probes,
                                        std::size_t draws, std::uint64_t seed,
                                        CertificationTolerance tolerance) {
  spec.validate();
  if (draws < 10000) throw ConfigError("certification needs at least 10^4 draws");

  CertificationReport report;
  report.spec = spec;
  report.draws = draws;
  const double q = variance_factor(spec);
  const auto m = static_cast<double>(draws);

  for (std::size_t id = 0; id < probes.size(); ++id) {
    const ParamVector& x = probes[id];
    if (x.size() != spec.dim) throw ConfigError("certification probe has wrong dimension");
    RngStream rng = make_stream(seed, StreamKind::kCertification, id);

    ProbeCertificate cert;
    cert.probe_id = id;
    cert.q_bound = q;
    cert.zero_probe = x.isZero(0.0);

    if (cert.zero_probe) {
      bool all_zero = true;
      for (std::size_t t = 0; t < draws && all_zero; ++t) all_zero = quantize(spec, x, rng).isZero(0.0);
      cert.unbiased = all_zero;
      cert.variance_ok = all_zero;
      report.probes.push_back(cert);
      continue;
    }

    ParamVector sum = ParamVector::Zero(x.size());
    ParamVector sum_sq = ParamVector::Zero(x.size());
    double err_sq = 0.0;
    for (std::size_t t = 0; t < draws; ++t) {
      const ParamVector y = quantize(spec, x, rng);
      const ParamVector centered = y - x;
      sum += centered;
      sum_sq += centered.cwiseAbs2();
      err_sq += centered.squaredNorm();
    }
    // Accumulate around x so deterministic coordinates give an exact zero mean.
    const ParamVector mean_err = sum / m;
    const ParamVector var = ((sum_sq / m) - mean_err.cwiseAbs2()).cwiseMax(0.0) * (m / (m - 1.0));
    const ParamVector se = (var / m).cwiseSqrt();
    const double eps = 64.0 * std::numeric_limits<double>::epsilon();
    bool unbiased = true;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double allowed = tolerance.sigma_multiple * se(i) + eps * (std::abs(x(i)) + x.norm());
      if (std::abs(mean_err(i)) > allowed) unbiased = false;
    }
    cert.mean_deviation = mean_err.norm();
    cert.variance_ratio = err_sq / m / x.squaredNorm();
    cert.unbiased = unbiased;
    cert.variance_ok = cert.variance_ratio <= q * (1.0 + tolerance.variance_slack) + eps;
    report.probes.push_back(cert);
  }
  return report;
}

}  // namespace hfl
