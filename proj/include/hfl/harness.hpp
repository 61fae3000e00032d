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
// Experiment configuration, sweeps and result files.
//
// A config is one JSON document; physical quantities carry their unit in the
// field name. parse() fills in every default, so the normalized document is
// the complete description of a run and is what the metadata sidecar stores.
//
// Sweeps are a list of axis groups. Each group maps dotted field paths to
// equal-length value lists that are zipped together; groups are combined as a
// Cartesian product, first group outermost:
//
//   "sweep": [{"schedule.tau1": [125, 50, 10], "schedule.tau2": [2, 5, 25]},
//             {"weighting": ["weighted", "uniform"]}]
//
// Run seeds are derive_seed(master_seed, {point, repetition}).

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hfl/adaptive.hpp"
#include "hfl/engine.hpp"

namespace hfl {

using Json = nlohmann::ordered_json;

/// Every problem found in a config, each prefixed with its field path.
class ConfigValidationError : public ConfigError {
 public:
  explicit ConfigValidationError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

class OutputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fills defaults and validates; throws ConfigValidationError.
Json normalize_config(const Json& document);

struct SweepAxis {
  std::string path;  // dotted
  std::vector<Json> values;
};

struct SweepPoint {
  std::size_t index = 0;
  Json overrides = Json::object();  // path -> value
  Json config;                      // normalized, overrides applied
};

struct ExperimentConfig {
  Json document;  // normalized
  std::vector<std::vector<SweepAxis>> sweep;
  std::vector<SweepPoint> points;
  std::filesystem::path output_dir;
  std::uint64_t master_seed = 0;
  int repetitions = 1;

  static ExperimentConfig parse(const Json& document);
  /// Accepts a config or a run metadata sidecar (whose "config" is re-run).
  static ExperimentConfig load(const std::filesystem::path& path);

  std::vector<std::string> axis_paths() const;
};

/// Engine inputs built from one normalized point config.
struct BuiltRun {
  EngineConfig engine;
  std::string algorithm;  // "hierarchical" or "fedavg"
  std::optional<AdaptiveSettings> adaptive;
  Json topology_summary;
  Json partition_summary;  // null for quadratic models
};

BuiltRun build_run(const Json& point_config, std::uint64_t run_seed);

/// Runs one point; fills `metadata` with the sidecar contents if given.
RunTrace run_point(const Json& point_config, std::uint64_t run_seed, Json* metadata = nullptr);

std::uint64_t run_seed_for(const Json& point_config, std::uint64_t master_seed, std::size_t point, int rep);

struct RunRecord {
  std::size_t point = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  Json overrides;
  RunTrace trace;
  std::string trace_file;
  std::string metadata_file;
};

struct ResultSet {
  std::filesystem::path output_dir;
  std::vector<std::string> axis_paths;
  std::vector<RunRecord> runs;
};

/// Runs every point x repetition and writes trace_*.csv, meta_*.json,
/// summary.csv and experiment.json into the output directory.
ResultSet run_experiment(const ExperimentConfig& config);

/// point,rep,seed,<axes...>,status,rounds,final_loss,final_grad_norm_sq,
/// total_wall_clock_s,total_uplink_bits. Diverged runs report NaN losses.
void write_summary_csv(std::ostream& out, const ResultSet& results);
std::string summary_csv(const ResultSet& results);

enum class CheckpointAxis { kRound, kWallClock };

struct TraceGroup {
  std::string name;
  std::vector<RunTrace> traces;
};

struct ComparisonRow {
  std::string group;
  double checkpoint = 0.0;
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t count = 0;
  bool interpolated = false;
};

/// Mean and standard error of `metric` ("loss" or "grad_norm_sq") per group at
/// shared checkpoints. If the traces' grids differ, every trace is linearly
/// interpolated onto the coarsest grid over the common range and rows are
/// flagged.
std::vector<ComparisonRow> compare_runs(std::span<const TraceGroup> groups, CheckpointAxis axis,
                                        const std::string& metric = "loss");

/// One group per sweep point, named by its overrides.
std::vector<TraceGroup> group_by_point(const ResultSet& results);

void write_comparison_csv(std::ostream& out, std::span<const ComparisonRow> rows);

/// Reads every trace_*.csv in a directory, or one trace file.
std::vector<RunTrace> load_traces(const std::filesystem::path& path);

}  // namespace hfl
