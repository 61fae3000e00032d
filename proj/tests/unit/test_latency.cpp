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

#include "hfl/latency.hpp"

namespace hfl {
namespace {

TEST(Latency, RoundAndWallClock) {
  const LatencyModel m{2.0, 33.0, 330.0};
  EXPECT_DOUBLE_EQ(round_time(50, 5, m), 250 * 2.0 + 5 * 33.0 + 330.0);
  EXPECT_DOUBLE_EQ(wall_clock(4, 50, 5, m), 4 * 995.0);
  EXPECT_THROW(round_time(0, 1, m), ConfigError);
  EXPECT_THROW(wall_clock(0, 1, 1, m), ConfigError);
  EXPECT_THROW((LatencyModel{-1, 0, 0}).validate(), ConfigError);
}

ChannelParams cnn_channel() {
  ChannelParams ch;
  ch.payload_bits = 5852170.0 * 32;
  ch.bandwidth_hz = 1e6;
  ch.channel_gain = 1e-8;
  ch.transmit_power_w = 0.5;
  ch.noise_power_w = 1e-10;
  ch.cycles_per_bit = 20;
  ch.bits_per_iteration = 1e8;
  ch.cpu_hz = 1e9;
  return ch;
}

TEST(Latency, ChannelReproducesReportedDelays) {
  const ChannelParams ch = cnn_channel();
  EXPECT_NEAR(std::log2(1 + 1e-8 * 0.5 / 1e-10), 5.672, 5e-4);
  EXPECT_NEAR(comm_latency(ch), 33.0, 0.05);
  EXPECT_DOUBLE_EQ(comp_latency(ch), 2.0);
}

TEST(Latency, PayloadBits) {
  const std::uint64_t full = 100 * 32;
  EXPECT_EQ(quantized_payload_bits(QuantizerSpec::identity(100), full), full);
  EXPECT_EQ(quantized_payload_bits(QuantizerSpec::sparsification(100, 5), full), 5U * (7 + 32));
  EXPECT_EQ(quantized_payload_bits(QuantizerSpec::rounding(100, 4), full), 100U * (1 + 3) + 32);
  EXPECT_EQ(quantized_payload_bits(QuantizerSpec::rounding(100, 1), full), 100U * (1 + 1) + 32);
}

TEST(Latency, ScalesUploadTimesByPayload) {
  const std::uint64_t full = 1000 * 32;
  const auto id = QuantizerSpec::identity(1000);
  const LatencyModel m = latency_from_full_precision(2.0, 33.0, 10.0, id, id, full);
  EXPECT_DOUBLE_EQ(m.d_de_s, 33.0);
  EXPECT_DOUBLE_EQ(m.d_ec_s, 330.0);
  const auto sparse = QuantizerSpec::sparsification(1000, 10);
  const LatencyModel q = latency_from_full_precision(2.0, 33.0, 10.0, sparse, id, full);
  EXPECT_DOUBLE_EQ(q.d_de_s, 33.0 * 10 * (10 + 32) / 32000.0);
  const LatencyModel c = latency_from_channel(cnn_channel(), 10.0, id, id, full);
  EXPECT_NEAR(c.d_de_s, 33.0, 0.05);
  EXPECT_DOUBLE_EQ(c.d_ec_s, 10 * c.d_de_s);
}

TEST(Latency, RejectsBadChannel) {
  ChannelParams ch = cnn_channel();
  ch.bandwidth_hz = 0;
  EXPECT_THROW(comm_latency(ch), ConfigError);
}

}  // namespace
}  // namespace hfl
