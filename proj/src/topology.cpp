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

#include "hfl/topology.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>

#include "hfl/core.hpp"

namespace hfl {

std::vector<int> Topology::edge_sizes() const {
  std::vector<int> sizes;
  for (const auto& m : members_) sizes.push_back(static_cast<int>(m.size()));
  return sizes;
}

Topology build_association(int n, int s, std::span<const int> sizes) {
  if (n < 1 || s < 1) throw ConfigError("association: n and s must be positive");
  if (static_cast<int>(sizes.size()) != s) {
    throw ConfigError("association: expected " + std::to_string(s) + " edge sizes, got " +
                      std::to_string(sizes.size()));
  }
  if (std::any_of(sizes.begin(), sizes.end(), [](int m) { return m < 1; })) {
    throw ConfigError("association: every edge needs at least one client");
  }
  if (std::accumulate(sizes.begin(), sizes.end(), 0) != n) {
    throw ConfigError("association: edge sizes must sum to n=" + std::to_string(n));
  }
  Topology t;
  t.members_.resize(static_cast<std::size_t>(s));
  int client = 0;
  for (int edge = 0; edge < s; ++edge) {
    for (int j = 0; j < sizes[static_cast<std::size_t>(edge)]; ++j, ++client) {
      t.edge_of_.push_back(edge);
      t.members_[static_cast<std::size_t>(edge)].push_back(client);
    }
  }
  return t;
}

double effective_cluster_size(const Topology& topology) {
  return static_cast<double>(topology.num_clients()) / static_cast<double>(topology.num_edges());
}

DataPartition dirichlet_partition(std::span<const int> labels, int n, double alpha, RngStream& rng) {
  if (!(alpha > 0) || !std::isfinite(alpha)) throw ConfigError("dirichlet: alpha must be positive");
  if (n < 1) throw ConfigError("dirichlet: need at least one client");
  if (labels.size() < static_cast<std::size_t>(n)) throw ConfigError("dirichlet: fewer samples than clients");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  DataPartition part;
  part.alpha = alpha;
  part.client_indices.resize(static_cast<std::size_t>(n));
  std::gamma_distribution<double> gamma(alpha, 1.0);

  for (auto& [label, indices] : by_class) {
    std::shuffle(indices.begin(), indices.end(), rng);
    std::vector<double> share(static_cast<std::size_t>(n));
    double total = 0.0;
    for (auto& w : share) total += (w = gamma(rng));
    if (!(total > 0)) {
      // Every gamma draw underflowed (tiny alpha): the whole class goes to one client.
      std::fill(share.begin(), share.end(), 0.0);
      share[std::uniform_int_distribution<std::size_t>(0, share.size() - 1)(rng)] = 1.0;
      total = 1.0;
    }
    const auto count = static_cast<double>(indices.size());
    double cumulative = 0.0;
    std::size_t begin = 0;
    for (std::size_t c = 0; c < share.size(); ++c) {
      cumulative += share[c] / total;
      const std::size_t end =
          c + 1 == share.size() ? indices.size()
                                : std::min(indices.size(), static_cast<std::size_t>(std::llround(cumulative * count)));
      for (std::size_t j = begin; j < std::max(begin, end); ++j) part.client_indices[c].push_back(indices[j]);
      begin = std::max(begin, end);
    }
  }

  for (auto& client : part.client_indices) {
    if (!client.empty()) continue;
    auto largest = std::max_element(part.client_indices.begin(), part.client_indices.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
    client.push_back(largest->back());
    largest->pop_back();
  }
  for (auto& client : part.client_indices) std::sort(client.begin(), client.end());
  return part;
}

}  // namespace hfl
