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

#include "hfl/latency.hpp"

#include <bit>
#include <cmath>

namespace hfl {
namespace {

std::uint64_t ceil_log2(std::uint64_t v) { return v <= 1 ? 0 : std::bit_width(v - 1); }

bool non_negative(double v) { return v >= 0 && std::isfinite(v); }
bool positive(double v) { return v > 0 && std::isfinite(v); }

}  // namespace

void LatencyModel::validate() const {
  if (!non_negative(d_comp_s) || !non_negative(d_de_s) || !non_negative(d_ec_s)) {
    throw ConfigError("latency constants must be finite and non-negative");
  }
}

void ChannelParams::validate() const {
  if (!positive(payload_bits) || !positive(bandwidth_hz) || !positive(channel_gain) ||
      !positive(transmit_power_w) || !positive(noise_power_w) || !positive(cycles_per_bit) ||
      !non_negative(bits_per_iteration) || !positive(cpu_hz)) {
    throw ConfigError("channel parameters must be positive");
  }
}

double round_time(int tau1, int tau2, const LatencyModel& m) {
  if (tau1 < 1 || tau2 < 1) throw ConfigError("round_time: intervals must be positive");
  return static_cast<double>(tau1) * tau2 * m.d_comp_s + tau2 * m.d_de_s + m.d_ec_s;
}

double wall_clock(long rounds, int tau1, int tau2, const LatencyModel& m) {
  if (rounds < 1) throw ConfigError("wall_clock: rounds must be positive");
  return static_cast<double>(rounds) * round_time(tau1, tau2, m);
}

double comm_latency(const ChannelParams& ch) {
  ch.validate();
  return ch.payload_bits / (ch.bandwidth_hz * std::log2(1.0 + ch.channel_gain * ch.transmit_power_w / ch.noise_power_w));
}

double comp_latency(const ChannelParams& ch) {
  ch.validate();
  return ch.cycles_per_bit * ch.bits_per_iteration / ch.cpu_hz;
}

std::uint64_t quantized_payload_bits(const QuantizerSpec& spec, std::uint64_t full_bits) {
  spec.validate();
  if (full_bits < 1) throw ConfigError("payload: full_bits must be positive");
  const auto dim = static_cast<std::uint64_t>(spec.dim);
  const std::uint64_t value_bits = std::max<std::uint64_t>(1, full_bits / dim);
  switch (spec.kind) {
    case QuantizerKind::kIdentity:
      return full_bits;
    case QuantizerKind::kRandomSparsification:
      return static_cast<std::uint64_t>(spec.kept) * (ceil_log2(dim) + value_bits);
    case QuantizerKind::kStochasticRounding:
      return dim * (1 + ceil_log2(static_cast<std::uint64_t>(spec.levels) + 1)) + value_bits;
  }
  return full_bits;
}

LatencyModel latency_from_full_precision(double d_comp_s, double full_upload_s, double edge_cloud_factor,
                                         const QuantizerSpec& client_quantizer,
                                         const QuantizerSpec& edge_quantizer, std::uint64_t full_bits) {
  if (!non_negative(full_upload_s) || !positive(edge_cloud_factor)) {
    throw ConfigError("latency: upload time must be non-negative and edge-cloud factor positive");
  }
  const auto full = static_cast<double>(full_bits);
  LatencyModel m;
  m.d_comp_s = d_comp_s;
  m.d_de_s = full_upload_s * static_cast<double>(quantized_payload_bits(client_quantizer, full_bits)) / full;
  m.d_ec_s = edge_cloud_factor * full_upload_s *
             static_cast<double>(quantized_payload_bits(edge_quantizer, full_bits)) / full;
  m.validate();
  return m;
}

LatencyModel latency_from_channel(const ChannelParams& ch, double edge_cloud_factor,
                                  const QuantizerSpec& client_quantizer, const QuantizerSpec& edge_quantizer,
                                  std::uint64_t full_bits) {
  return latency_from_full_precision(comp_latency(ch), comm_latency(ch), edge_cloud_factor, client_quantizer,
                                     edge_quantizer, full_bits);
}

}  // namespace hfl
