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

#include "hfl/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace hfl {
namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

LossModel::LossModel(std::variant<QuadraticProblem, LogisticProblem> problem) : problem_(std::move(problem)) {}

LossModel LossModel::quadratic(QuadraticProblem problem) {
  if (problem.curvature.size() < 1) throw ConfigError("quadratic: empty curvature");
  if (!(problem.curvature.array() > 0).all() || !problem.curvature.allFinite()) {
    throw ConfigError("quadratic: curvature entries must be finite and positive");
  }
  if (problem.centers.empty()) throw ConfigError("quadratic: need at least one client center");
  for (const auto& c : problem.centers) {
    if (c.size() != problem.curvature.size()) throw ConfigError("quadratic: center dimension mismatch");
    if (!c.allFinite()) throw InputError("quadratic: non-finite center");
  }
  if (!(problem.noise_sigma >= 0) || !std::isfinite(problem.noise_sigma)) {
    throw ConfigError("quadratic: noise_sigma must be non-negative");
  }
  if (problem.batch_size < 1) throw ConfigError("quadratic: batch_size must be >= 1");
  const auto dim = problem.curvature.size();
  const auto clients = static_cast<int>(problem.centers.size());
  LossModel m(std::move(problem));
  m.dim_ = dim;
  m.clients_ = clients;
  return m;
}

LossModel LossModel::logistic(LogisticProblem problem) {
  if (problem.clients.empty()) throw ConfigError("logistic: need at least one client");
  const Eigen::Index dim = problem.clients.front().features.cols();
  if (dim < 1) throw ConfigError("logistic: need at least one feature");
  for (const auto& c : problem.clients) {
    if (c.features.rows() < 1) throw ConfigError("logistic: every client needs at least one sample");
    if (c.features.cols() != dim) throw ConfigError("logistic: feature dimension mismatch across clients");
    if (c.labels.size() != c.features.rows()) throw ConfigError("logistic: label count mismatch");
    if (!c.features.allFinite()) throw InputError("logistic: non-finite feature");
    for (Eigen::Index r = 0; r < c.labels.size(); ++r) {
      if (c.labels(r) != 0.0 && c.labels(r) != 1.0) throw InputError("logistic: labels must be 0 or 1");
    }
  }
  if (!(problem.ridge >= 0)) throw ConfigError("logistic: ridge must be non-negative");
  if (problem.batch_size < 1) throw ConfigError("logistic: batch_size must be >= 1");
  const auto clients = static_cast<int>(problem.clients.size());
  LossModel m(std::move(problem));
  m.dim_ = dim;
  m.clients_ = clients;
  return m;
}

LossModel LossModel::iid_quadratic(ParamVector curvature, const ParamVector& center, int clients,
                                   double noise_sigma, int batch_size) {
  if (clients < 1) throw ConfigError("iid_quadratic: clients must be >= 1");
  QuadraticProblem p;
  p.curvature = std::move(curvature);
  p.centers.assign(static_cast<std::size_t>(clients), center);
  p.noise_sigma = noise_sigma;
  p.batch_size = batch_size;
  return quadratic(std::move(p));
}

void LossModel::check_dim(const ParamVector& x) const {
  if (x.size() != dim_) {
    throw ConfigError("model expects dimension " + std::to_string(dim_) + ", got " + std::to_string(x.size()));
  }
}

double LossModel::client_weight(int client) const {
  if (is_quadratic()) return 1.0;
  return static_cast<double>(as_logistic().clients.at(static_cast<std::size_t>(client)).labels.size());
}

int LossModel::batch_size() const {
  return is_quadratic() ? as_quadratic().batch_size : as_logistic().batch_size;
}

double LossModel::local_loss(int client, const ParamVector& x) const {
  check_dim(x);
  if (is_quadratic()) {
    const auto& q = as_quadratic();
    const ParamVector diff = x - q.centers.at(static_cast<std::size_t>(client));
    return 0.5 * diff.dot(q.curvature.cwiseProduct(diff));
  }
  const auto& lg = as_logistic();
  const auto& data = lg.clients.at(static_cast<std::size_t>(client));
  const ParamVector z = data.features * x;
  double total = 0.0;
  for (Eigen::Index r = 0; r < z.size(); ++r) total += softplus(z(r)) - data.labels(r) * z(r);
  return total / static_cast<double>(z.size()) + 0.5 * lg.ridge * x.squaredNorm();
}

ParamVector LossModel::local_gradient(int client, const ParamVector& x) const {
  check_dim(x);
  if (is_quadratic()) {
    const auto& q = as_quadratic();
    return q.curvature.cwiseProduct(x - q.centers.at(static_cast<std::size_t>(client)));
  }
  const auto& lg = as_logistic();
  const auto& data = lg.clients.at(static_cast<std::size_t>(client));
  ParamVector residual = data.features * x;
  for (Eigen::Index r = 0; r < residual.size(); ++r) residual(r) = sigmoid(residual(r)) - data.labels(r);
  return data.features.transpose() * residual / static_cast<double>(residual.size()) + lg.ridge * x;
}

double global_loss(const LossModel& model, const ParamVector& x) {
  double total = 0.0;
  double weight = 0.0;
  for (int i = 0; i < model.num_clients(); ++i) {
    const double w = model.client_weight(i);
    total += w * model.local_loss(i, x);
    weight += w;
  }
  return total / weight;
}

ParamVector global_gradient(const LossModel& model, const ParamVector& x) {
  ParamVector total = ParamVector::Zero(model.dim());
  double weight = 0.0;
  for (int i = 0; i < model.num_clients(); ++i) {
    const double w = model.client_weight(i);
    total += w * model.local_gradient(i, x);
    weight += w;
  }
  return total / weight;
}

ParamVector stochastic_gradient(const LossModel& model, int client, const ParamVector& x, RngStream& rng) {
  if (model.is_quadratic()) {
    const auto& q = model.as_quadratic();
    ParamVector g = model.local_gradient(client, x);
    if (q.noise_sigma > 0) {
      const double per_coord =
          q.noise_sigma / std::sqrt(static_cast<double>(model.dim()) * static_cast<double>(q.batch_size));
      std::normal_distribution<double> noise(0.0, per_coord);
      for (Eigen::Index j = 0; j < g.size(); ++j) g(j) += noise(rng);
    }
    return g;
  }
  if (x.size() != model.dim()) throw ConfigError("stochastic_gradient: dimension mismatch");
  const auto& lg = model.as_logistic();
  const auto& data = lg.clients.at(static_cast<std::size_t>(client));
  std::uniform_int_distribution<Eigen::Index> pick(0, data.features.rows() - 1);
  ParamVector g = ParamVector::Zero(model.dim());
  for (int b = 0; b < lg.batch_size; ++b) {
    const Eigen::Index r = pick(rng);
    const double z = data.features.row(r).dot(x);
    g += (sigmoid(z) - data.labels(r)) * data.features.row(r).transpose();
  }
  return g / static_cast<double>(lg.batch_size) + lg.ridge * x;
}

SmoothnessConstants constants(const LossModel& model, const ParamVector& x0, std::uint64_t seed,
                              int estimate_draws) {
  SmoothnessConstants c;
  c.f_star = 0.0;
  if (model.is_quadratic()) {
    const auto& q = model.as_quadratic();
    c.lipschitz = q.curvature.maxCoeff();
    c.sigma2 = q.noise_sigma * q.noise_sigma / static_cast<double>(q.batch_size);
    return c;
  }
  const auto& lg = model.as_logistic();
  double max_row_sq = 0.0;
  for (const auto& data : lg.clients) max_row_sq = std::max(max_row_sq, data.features.rowwise().squaredNorm().maxCoeff());
  c.lipschitz = max_row_sq / 4.0 + lg.ridge;

  if (estimate_draws < 2) throw ConfigError("constants: need at least two Monte-Carlo draws");
  double worst = 0.0;
  for (int i = 0; i < model.num_clients(); ++i) {
    RngStream rng = make_stream(seed, StreamKind::kConstants, static_cast<std::uint64_t>(i));
    const ParamVector exact = model.local_gradient(i, x0);
    double acc = 0.0;
    for (int t = 0; t < estimate_draws; ++t) acc += (stochastic_gradient(model, i, x0, rng) - exact).squaredNorm();
    worst = std::max(worst, acc / estimate_draws);
  }
  c.sigma2 = worst;
  c.sigma2_estimated = true;
  return c;
}

LabeledDataset read_labeled_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        if (rows.empty() && values.empty()) break;  // header row
        throw InputError("csv line " + std::to_string(line_no) + ": cannot parse '" + cell + "'");
      }
    }
    if (values.empty()) continue;
    if (values.size() < 2) throw InputError("csv line " + std::to_string(line_no) + ": need label and features");
    if (width == 0) width = values.size();
    if (values.size() != width) throw InputError("csv line " + std::to_string(line_no) + ": ragged row");
    const double label = values.front();
    if (label != std::floor(label)) throw InputError("csv line " + std::to_string(line_no) + ": non-integer label");
    labels.push_back(static_cast<int>(label));
    rows.emplace_back(values.begin() + 1, values.end());
  }
  if (rows.empty()) throw InputError("csv: no samples");
  LabeledDataset ds;
  ds.labels = std::move(labels);
  ds.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j + 1 < width; ++j) {
      ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = rows[r][j];
    }
  }
  if (!ds.features.allFinite()) throw InputError("csv: non-finite feature");
  return ds;
}

LabeledDataset load_labeled_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset '" + path + "'");
  return read_labeled_csv(in);
}

LabeledDataset make_gaussian_blobs(std::size_t samples, Eigen::Index features, int classes, double separation,
                                   std::uint64_t seed) {
  if (samples < 1 || features < 1 || classes < 1) throw ConfigError("blobs: sizes must be positive");
  RngStream rng = make_stream(seed, StreamKind::kDataset);
  std::normal_distribution<double> unit(0.0, 1.0);
  LabeledDataset ds;
  ds.features.resize(static_cast<Eigen::Index>(samples), features);
  ds.labels.resize(samples);
  for (std::size_t r = 0; r < samples; ++r) {
    const int label = static_cast<int>(r % static_cast<std::size_t>(classes));
    ds.labels[r] = label;
    for (Eigen::Index j = 0; j < features; ++j) ds.features(static_cast<Eigen::Index>(r), j) = unit(rng);
    ds.features(static_cast<Eigen::Index>(r), label % features) += separation;
  }
  return ds;
}

}  // namespace hfl
