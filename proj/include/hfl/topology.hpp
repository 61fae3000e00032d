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

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hfl/core.hpp"
#include "hfl/rng.hpp"

namespace hfl {

/// Client-edge association. Clients are 0..n-1, edges 0..s-1; each client
/// belongs to exactly one edge and every edge has at least one client.
class Topology {
 public:
  Topology() = default;

  int num_clients() const { return static_cast<int>(edge_of_.size()); }
  int num_edges() const { return static_cast<int>(members_.size()); }
  int edge_of(int client) const { return edge_of_.at(static_cast<std::size_t>(client)); }
  int edge_size(int edge) const { return static_cast<int>(members_.at(static_cast<std::size_t>(edge)).size()); }
  const std::vector<int>& members(int edge) const { return members_.at(static_cast<std::size_t>(edge)); }
  std::vector<int> edge_sizes() const;

 private:
  friend Topology build_association(int n, int s, std::span<const int> sizes);
  std::vector<int> edge_of_;
  std::vector<std::vector<int>> members_;
};

/// Contiguous assignment: the first sizes[0] clients to edge 0, and so on.
Topology build_association(int n, int s, std::span<const int> sizes);

/// n / s.
double effective_cluster_size(const Topology& topology);

struct DataPartition {
  std::vector<std::vector<std::size_t>> client_indices;  // sorted, disjoint, non-empty
  double alpha = 0.0;
};

/// Per class, draws client proportions from a symmetric Dir(alpha) and deals
/// that class's (shuffled) samples accordingly. Clients left empty take one
/// sample from the currently largest client.
DataPartition dirichlet_partition(std::span<const int> labels, int n, double alpha, RngStream& rng);

}  // namespace hfl
