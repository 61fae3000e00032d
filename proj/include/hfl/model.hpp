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
// Loss models with known smoothness and gradient-noise constants.
//
// Quadratic: f_i(x) = 1/2 (x - c_i)^T A (x - c_i), A diagonal and positive.
//   The stochastic gradient adds isotropic Gaussian noise of total variance
//   noise_sigma^2 / batch, so L and sigma^2 are exact.
// Logistic: f_i(x) = mean over local samples of softplus(a^T x) - y a^T x,
//   plus ridge/2 ||x||^2. Mini-batches are sampled uniformly with replacement.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "hfl/core.hpp"
#include "hfl/rng.hpp"

namespace hfl {

struct QuadraticProblem {
  ParamVector curvature;             // diagonal of A, entries in (0, L]
  std::vector<ParamVector> centers;  // one per client
  double noise_sigma = 0.0;
  int batch_size = 1;
};

struct ClientSamples {
  Eigen::MatrixXd features;  // one row per sample
  ParamVector labels;        // 0 or 1
};

struct LogisticProblem {
  std::vector<ClientSamples> clients;
  double ridge = 0.0;
  int batch_size = 1;
};

/// Labeled dataset as ingested from CSV or generated synthetically.
struct LabeledDataset {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  std::size_t size() const { return labels.size(); }
};

struct SmoothnessConstants {
  double lipschitz = 0.0;   // L
  double sigma2 = 0.0;      // per-client gradient noise bound
  double f_star = 0.0;      // lower bound of f
  bool sigma2_estimated = false;
};

class LossModel {
 public:
  /// Validates shapes and ranges; throws ConfigError.
  static LossModel quadratic(QuadraticProblem problem);
  static LossModel logistic(LogisticProblem problem);

  /// Every client shares one center: the IID setting the convergence theory assumes.
  static LossModel iid_quadratic(ParamVector curvature, const ParamVector& center, int clients,
                                 double noise_sigma, int batch_size = 1);

  bool is_quadratic() const { return std::holds_alternative<QuadraticProblem>(problem_); }
  const QuadraticProblem& as_quadratic() const { return std::get<QuadraticProblem>(problem_); }
  const LogisticProblem& as_logistic() const { return std::get<LogisticProblem>(problem_); }

  Eigen::Index dim() const { return dim_; }
  int num_clients() const { return clients_; }
  /// Weight of client i in the global loss (its sample count; 1 for quadratic).
  double client_weight(int client) const;

  double local_loss(int client, const ParamVector& x) const;
  ParamVector local_gradient(int client, const ParamVector& x) const;
  int batch_size() const;

 private:
  explicit LossModel(std::variant<QuadraticProblem, LogisticProblem> problem);
  void check_dim(const ParamVector& x) const;

  std::variant<QuadraticProblem, LogisticProblem> problem_;
  Eigen::Index dim_ = 0;
  int clients_ = 0;
};

/// f(x) = sum_i D_i f_i(x) / sum_i D_i, evaluated on full local data.
double global_loss(const LossModel& model, const ParamVector& x);
ParamVector global_gradient(const LossModel& model, const ParamVector& x);

/// One unbiased draw of the gradient of f_i at x.
ParamVector stochastic_gradient(const LossModel& model, int client, const ParamVector& x, RngStream& rng);

/// A client's gradient oracle: the model, the client id, and a private stream.
class GradOracle {
 public:
  GradOracle(const LossModel& model, int client, RngStream rng) : model_(&model), client_(client), rng_(rng) {}
  ParamVector operator()(const ParamVector& x) { return stochastic_gradient(*model_, client_, x, rng_); }
  int client() const { return client_; }

 private:
  const LossModel* model_;
  int client_;
  RngStream rng_;
};

/// x - eta * g.
template <typename DerivedX, typename DerivedG>
Vector<typename DerivedX::Scalar> sgd_step(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedG>& g,
                                           typename DerivedX::Scalar eta) {
  if (x.size() != g.size()) throw ConfigError("sgd_step: dimension mismatch");
  if (!(eta > 0)) throw ConfigError("sgd_step: eta must be positive");
  return x - eta * g;
}

/// L, sigma^2 and f*. For logistic models sigma^2 is a Monte-Carlo estimate at x0
/// (maximum over clients) and is flagged as such.
SmoothnessConstants constants(const LossModel& model, const ParamVector& x0, std::uint64_t seed = 0,
                              int estimate_draws = 2000);

/// One row per sample: label, then features.
LabeledDataset read_labeled_csv(std::istream& in);
LabeledDataset load_labeled_csv(const std::string& path);

/// Seeded Gaussian blobs: class k centered at separation * e_{k mod features}.
LabeledDataset make_gaussian_blobs(std::size_t samples, Eigen::Index features, int classes, double separation,
                                   std::uint64_t seed);

}  // namespace hfl
