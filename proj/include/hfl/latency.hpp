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
// Wall-clock accounting for hierarchical training. Clients are homogeneous
// and only uplinks cost time.

#pragma once

#include <cstdint>

#include "hfl/quantizers.hpp"

namespace hfl {

struct LatencyModel {
  double d_comp_s = 0.0;  // one local SGD iteration
  double d_de_s = 0.0;    // one quantized client->edge upload
  double d_ec_s = 0.0;    // one quantized edge->cloud upload

  void validate() const;
};

/// Physical channel and compute parameters.
struct ChannelParams {
  double payload_bits = 0.0;        // W
  double bandwidth_hz = 0.0;        // B
  double channel_gain = 0.0;        // h
  double transmit_power_w = 0.0;    // p
  double noise_power_w = 0.0;       // N0
  double cycles_per_bit = 0.0;      // c
  double bits_per_iteration = 0.0;  // D
  double cpu_hz = 0.0;              // f

  void validate() const;
};

/// Time of one cloud round: tau1*tau2*D_comp + tau2*D_de + D_ec.
double round_time(int tau1, int tau2, const LatencyModel& m);

/// K cloud rounds.
double wall_clock(long rounds, int tau1, int tau2, const LatencyModel& m);

/// W / (B log2(1 + h p / N0)).
double comm_latency(const ChannelParams& ch);

/// c D / f.
double comp_latency(const ChannelParams& ch);

/// Bits on the wire for one quantized upload of a `spec.dim`-vector whose
/// full-precision encoding takes `full_bits`. Values and the norm scalar use
/// full_bits / dim bits; sparse indices use ceil(log2 dim) bits.
std::uint64_t quantized_payload_bits(const QuantizerSpec& spec, std::uint64_t full_bits);

/// Latencies for quantized uploads: the full-precision upload time scaled by
/// each quantizer's payload fraction. The edge->cloud link is
/// `edge_cloud_factor` times slower than the client->edge link.
LatencyModel latency_from_full_precision(double d_comp_s, double full_upload_s, double edge_cloud_factor,
                                         const QuantizerSpec& client_quantizer,
                                         const QuantizerSpec& edge_quantizer, std::uint64_t full_bits);

LatencyModel latency_from_channel(const ChannelParams& ch, double edge_cloud_factor,
                                  const QuantizerSpec& client_quantizer, const QuantizerSpec& edge_quantizer,
                                  std::uint64_t full_bits);

}  // namespace hfl
