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
// hflsim: command-line front end for the hierarchical FL simulator.
//
// Errors go to stderr as one JSON object, {"error": {...}}, with exit codes
// 2 (usage/config), 3 (input), 4 (condition), 5 (output), 1 (other).

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hfl/adaptive.hpp"
#include "hfl/bound.hpp"
#include "hfl/harness.hpp"
#include "hfl/latency.hpp"
#include "hfl/quantizers.hpp"

namespace {

using hfl::Json;

int report_error(const std::string& type, const std::string& message, int code,
                 const std::vector<std::string>& issues = {}) {
  Json err = Json::object();
  err["type"] = type;
  err["message"] = message;
  if (!issues.empty()) err["issues"] = issues;
  Json out = Json::object();
  out["error"] = err;
  out["exit_code"] = code;
  std::cerr << out.dump() << std::endl;
  return code;
}

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw hfl::InputError("cannot open config " + path);
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw hfl::InputError("config " + path + " is not valid JSON: " + e.what());
  }
  // A run's metadata sidecar re-executes its stored config.
  if (doc.is_object() && doc.contains("config") && doc.contains("trace_file")) doc = doc["config"];
  return doc;
}

struct RunOptions {
  std::string config;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool adaptive = false;
  std::optional<int> tau1_initial;
  std::optional<double> window_seconds;
  bool decay_rule = false;
  std::optional<double> d_comp_seconds;
  std::optional<double> d_de_seconds;
  std::optional<double> d_ec_seconds;
};

void apply_overrides(Json& doc, const RunOptions& o) {
  if (!doc.is_object()) return;
  if (o.output_dir) doc["output_dir"] = *o.output_dir;
  if (o.seed) doc["master_seed"] = *o.seed;
  if (o.workers) doc["workers"] = *o.workers;
  if (o.d_comp_seconds || o.d_de_seconds || o.d_ec_seconds) {
    if (!doc.contains("latency") || !doc["latency"].is_object()) doc["latency"] = Json::object();
    if (o.d_comp_seconds) doc["latency"]["d_comp_seconds"] = *o.d_comp_seconds;
    if (o.d_de_seconds) doc["latency"]["d_de_seconds"] = *o.d_de_seconds;
    if (o.d_ec_seconds) doc["latency"]["d_ec_seconds"] = *o.d_ec_seconds;
  }
  if (o.adaptive || o.tau1_initial || o.window_seconds || o.decay_rule) {
    if (!doc.contains("adaptive") || !doc["adaptive"].is_object()) doc["adaptive"] = Json::object();
    if (o.tau1_initial) doc["adaptive"]["tau1_initial"] = *o.tau1_initial;
    if (o.window_seconds) doc["adaptive"]["window_seconds"] = *o.window_seconds;
    if (o.decay_rule) doc["adaptive"]["use_decay_rule"] = true;
  }
}

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("-c,--config", o.config, "Experiment config (JSON) or a run metadata file")->required();
  cmd->add_option("-o,--output-dir", o.output_dir, "Output directory (overrides the config)");
  cmd->add_option("--seed", o.seed, "Master seed (overrides the config)");
  cmd->add_option("--workers", o.workers, "Worker threads per run");
  cmd->add_option("--d-comp-seconds", o.d_comp_seconds, "Per-iteration compute latency");
  cmd->add_option("--d-de-seconds", o.d_de_seconds, "Client-edge upload latency");
  cmd->add_option("--d-ec-seconds", o.d_ec_seconds, "Edge-cloud upload latency");
}

int execute(const RunOptions& o, bool want_sweep) {
  Json doc = read_json(o.config);
  apply_overrides(doc, o);
  const hfl::ExperimentConfig cfg = hfl::ExperimentConfig::parse(doc);
  if (want_sweep && cfg.points.size() < 2 && cfg.axis_paths().empty()) {
    throw hfl::ConfigValidationError({"sweep: `sweep` needs at least one axis; use `run` for a single point"});
  }
  if (!want_sweep && !cfg.axis_paths().empty()) {
    throw hfl::ConfigValidationError({"sweep: config has sweep axes; use the `sweep` subcommand"});
  }
  const hfl::ResultSet results = hfl::run_experiment(cfg);
  Json out = Json::object();
  out["output_dir"] = results.output_dir.string();
  out["summary"] = (results.output_dir / "summary.csv").string();
  out["points"] = cfg.points.size();
  out["runs"] = results.runs.size();
  std::size_t diverged = 0;
  for (const auto& r : results.runs) diverged += r.trace.diverged() ? 1 : 0;
  out["diverged"] = diverged;
  std::cout << out.dump(2) << std::endl;
  return 0;
}

struct BoundOptions {
  double lipschitz = 1.0;
  double eta = 0.01;
  double sigma2 = 1.0;
  int n = 20;
  int s = 4;
  int tau1 = 1;
  int tau2 = 1;
  double q1 = 0.0;
  double q2 = 0.0;
  long rounds = 100;
  double f0 = 1.0;
  double f_star = 0.0;
};

void add_bound_options(CLI::App* cmd, BoundOptions& b) {
  cmd->add_option("--lipschitz", b.lipschitz, "Smoothness constant L")->capture_default_str();
  cmd->add_option("--eta", b.eta, "Step size")->capture_default_str();
  cmd->add_option("--sigma2", b.sigma2, "Gradient noise variance")->capture_default_str();
  cmd->add_option("--clients", b.n, "Number of clients n")->capture_default_str();
  cmd->add_option("--edges", b.s, "Number of edges s")->capture_default_str();
  cmd->add_option("--tau1", b.tau1, "Client-edge interval")->capture_default_str();
  cmd->add_option("--tau2", b.tau2, "Edge-cloud interval")->capture_default_str();
  cmd->add_option("--q1", b.q1, "Client quantizer variance factor")->capture_default_str();
  cmd->add_option("--q2", b.q2, "Edge quantizer variance factor")->capture_default_str();
  cmd->add_option("--rounds", b.rounds, "Cloud rounds K")->capture_default_str();
  cmd->add_option("--f0", b.f0, "Initial loss")->capture_default_str();
  cmd->add_option("--f-star", b.f_star, "Loss lower bound")->capture_default_str();
}

hfl::BoundParams to_params(const BoundOptions& b) {
  hfl::BoundParams p;
  p.lipschitz = b.lipschitz;
  p.eta = b.eta;
  p.sigma2 = b.sigma2;
  p.n = b.n;
  p.s = b.s;
  p.tau1 = b.tau1;
  p.tau2 = b.tau2;
  p.q1 = b.q1;
  p.q2 = b.q2;
  p.rounds = b.rounds;
  p.f0 = b.f0;
  p.f_star = b.f_star;
  p.validate();
  return p;
}

Json terms_json(const hfl::BoundTerms<double>& t) {
  Json j = Json::object();
  j["optimization"] = t.optimization;
  j["local_variance"] = t.local_variance;
  j["global_variance"] = t.global_variance;
  j["total"] = t.total();
  return j;
}

int bound_command(const BoundOptions& b) {
  const hfl::BoundParams p = to_params(b);
  const auto rhs = hfl::theorem1_rhs(p);
  Json out = Json::object();
  out["G"] = hfl::compute_G(p);
  out["valid"] = rhs.valid;
  out["rhs"] = rhs.value;
  out["terms"] = terms_json(hfl::theorem1_terms(p));
  out["variance_part"] = hfl::theorem1_variance_part(p);
  out["quantization_weight"] = hfl::quantization_weight(p);
  out["flip_threshold_q1"] = hfl::flip_threshold_q1<double>(p.n, p.s);
  out["rate_form_eta"] = hfl::rate_form_step_size(p);
  out["rate_form_terms"] = terms_json(hfl::rate_form_terms(p));
  std::cout << out.dump(2) << std::endl;
  return 0;
}

struct PlanOptions {
  BoundOptions bound;
  std::optional<std::string> config;
  double budget_seconds = 0.0;
  double d_comp = 2.0;
  double d_de = 33.0;
  double d_ec = 330.0;
};

int plan_command(PlanOptions o, CLI::App* cmd) {
  hfl::BoundParams p = to_params(o.bound);
  hfl::LatencyModel lat{o.d_comp, o.d_de, o.d_ec};
  Json source = "flags";
  if (o.config) {
    const hfl::ExperimentConfig cfg = hfl::ExperimentConfig::parse(read_json(*o.config));
    const Json& point = cfg.points.front().config;
    const hfl::BuiltRun run = hfl::build_run(point, hfl::run_seed_for(point, cfg.master_seed, 0, 0));
    const hfl::SmoothnessConstants c = hfl::constants(*run.engine.model, run.engine.x0, run.engine.seed);
    auto unset = [&](const char* flag) { return cmd->count(flag) == 0; };
    if (unset("--lipschitz")) p.lipschitz = c.lipschitz;
    if (unset("--sigma2")) p.sigma2 = c.sigma2;
    if (unset("--eta")) p.eta = run.engine.schedule.eta0;
    if (unset("--clients")) p.n = run.engine.topology.num_clients();
    if (unset("--edges")) p.s = run.engine.topology.num_edges();
    if (unset("--q1")) p.q1 = hfl::variance_factor(run.engine.client_quantizer);
    if (unset("--q2")) p.q2 = hfl::variance_factor(run.engine.edge_quantizer);
    if (unset("--f0")) p.f0 = hfl::global_loss(*run.engine.model, run.engine.x0);
    if (unset("--d-comp-seconds")) lat.d_comp_s = run.engine.latency.d_comp_s;
    if (unset("--d-de-seconds")) lat.d_de_s = run.engine.latency.d_de_s;
    if (unset("--d-ec-seconds")) lat.d_ec_s = run.engine.latency.d_ec_s;
    if (unset("--budget-seconds") && run.engine.schedule.wall_clock_budget_s) {
      o.budget_seconds = *run.engine.schedule.wall_clock_budget_s;
    }
    source = *o.config;
  }
  if (!(o.budget_seconds > 0)) throw hfl::ConfigError("plan: --budget-seconds must be positive");
  lat.validate();
  p.validate();

  const auto opt = hfl::optimal_intervals(p, lat.d_de_s, lat.d_ec_s, o.budget_seconds);
  hfl::BoundParams chosen = p;
  chosen.tau1 = static_cast<int>(std::ceil(opt.tau1));
  chosen.tau2 = static_cast<int>(std::ceil(opt.tau2));
  const double round_s = hfl::round_time(chosen.tau1, chosen.tau2, lat);
  Json out = Json::object();
  out["source"] = source;
  out["lipschitz"] = p.lipschitz;
  out["sigma2"] = p.sigma2;
  out["eta"] = p.eta;
  out["q1"] = p.q1;
  out["q2"] = p.q2;
  out["latency_seconds"] = {{"d_comp", lat.d_comp_s}, {"d_de", lat.d_de_s}, {"d_ec", lat.d_ec_s}};
  out["budget_seconds"] = o.budget_seconds;
  out["optimal_real"] = {{"tau1", opt.tau1}, {"tau2", opt.tau2}};
  out["recommended"] = {{"tau1", chosen.tau1}, {"tau2", chosen.tau2}};
  out["tau2_from_delays"] = hfl::tau2_from_delays(lat.d_de_s, lat.d_ec_s, p.n, p.s, p.q1);
  out["round_seconds"] = round_s;
  out["cloud_rounds"] = static_cast<long>(std::floor(o.budget_seconds / round_s));
  out["time_budget_bound"] =
      hfl::time_budget_bound(chosen, lat.d_comp_s, lat.d_de_s, lat.d_ec_s, o.budget_seconds);
  out["G"] = hfl::compute_G(chosen);
  std::cout << out.dump(2) << std::endl;
  return 0;
}

std::vector<hfl::ParamVector> bench_probes(Eigen::Index dim, std::uint64_t seed) {
  std::vector<hfl::ParamVector> probes;
  hfl::RngStream rng = hfl::make_stream(seed, hfl::StreamKind::kCertification, 999);
  std::normal_distribution<double> unit(0.0, 1.0);
  hfl::ParamVector gaussian(dim);
  for (Eigen::Index i = 0; i < dim; ++i) gaussian(i) = unit(rng);
  probes.push_back(gaussian);
  probes.push_back(hfl::ParamVector::Ones(dim));
  hfl::ParamVector spike = hfl::ParamVector::Zero(dim);
  spike(0) = 3.0;
  probes.push_back(spike);
  hfl::ParamVector ramp(dim);
  for (Eigen::Index i = 0; i < dim; ++i) ramp(i) = (i % 2 ? -1.0 : 1.0) * static_cast<double>(i + 1) / dim;
  probes.push_back(ramp);
  probes.push_back(hfl::ParamVector::Zero(dim));
  return probes;
}

struct BenchOptions {
  std::vector<std::string> specs;
  Eigen::Index dim = 100;
  std::size_t draws = 100000;
  std::uint64_t seed = 1;
  std::optional<std::string> output;
};

hfl::QuantizerSpec parse_bench_spec(const std::string& text, Eigen::Index dim) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  auto number = [&]() -> long {
    try {
      std::size_t used = 0;
      const long v = std::stol(arg, &used);
      if (used != arg.size()) throw std::invalid_argument(arg);
      return v;
    } catch (const std::exception&) {
      throw hfl::ConfigError("quantize-bench: bad parameter in spec '" + text + "'");
    }
  };
  if (kind == "identity") return hfl::QuantizerSpec::identity(dim);
  if (kind == "sparsification" || kind == "random-sparsification") return hfl::QuantizerSpec::sparsification(dim, number());
  if (kind == "rounding" || kind == "stochastic-rounding") return hfl::QuantizerSpec::rounding(dim, static_cast<int>(number()));
  if (kind == "rounding-bits") return hfl::QuantizerSpec::rounding(dim, hfl::levels_from_bits(static_cast<int>(number())));
  throw hfl::ConfigError("quantize-bench: unknown spec '" + text +
                         "' (use identity, sparsification:R, rounding:S or rounding-bits:B)");
}

int bench_command(const BenchOptions& o) {
  std::vector<std::string> specs = o.specs;
  if (specs.empty()) specs = {"sparsification:5", "sparsification:50", "sparsification:100",
                              "rounding:1",       "rounding:4",        "rounding:16"};
  const auto probes = bench_probes(o.dim, o.seed);
  std::ofstream file;
  if (o.output) {
    file.open(*o.output);
    if (!file) throw hfl::OutputError("cannot write " + *o.output);
  }
  std::ostream& out = o.output ? static_cast<std::ostream&>(file) : std::cout;
  out << "kind,params,probe-id,mean-dev,var-ratio,q-bound,pass\n";
  out.precision(10);
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const hfl::QuantizerSpec spec = parse_bench_spec(specs[k], o.dim);
    const auto report = hfl::certify_assumption3(spec, probes, o.draws, hfl::derive_seed(o.seed, {k}));
    for (const auto& c : report.probes) {
      out << hfl::to_string(spec.kind) << "," << spec.params() << "," << c.probe_id << "," << c.mean_deviation << ","
          << c.variance_ratio << "," << c.q_bound << "," << (c.pass() ? "true" : "false") << "\n";
    }
  }
  return 0;
}

struct CompareOptions {
  std::vector<std::string> groups;
  std::string axis = "round";
  std::string metric = "loss";
  std::optional<std::string> output;
};

int compare_command(const CompareOptions& o) {
  std::vector<hfl::TraceGroup> groups;
  for (const auto& g : o.groups) {
    const auto eq = g.find('=');
    if (eq == std::string::npos || eq == 0) throw hfl::ConfigError("compare: --group expects NAME=PATH, got '" + g + "'");
    groups.push_back({g.substr(0, eq), hfl::load_traces(g.substr(eq + 1))});
  }
  const auto axis = o.axis == "round" ? hfl::CheckpointAxis::kRound : hfl::CheckpointAxis::kWallClock;
  const auto rows = hfl::compare_runs(groups, axis, o.metric);
  if (o.output) {
    std::ofstream file(*o.output);
    if (!file) throw hfl::OutputError("cannot write " + *o.output);
    hfl::write_comparison_csv(file, rows);
  } else {
    hfl::write_comparison_csv(std::cout, rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical federated learning simulator"};
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "Run a single experiment (all repetitions)");
  add_run_options(run, run_opts);
  run->add_flag("--adaptive", run_opts.adaptive, "Use the adaptive interval controller");
  run->add_option("--tau1-initial", run_opts.tau1_initial, "Initial tau1 for the adaptive controller");
  run->add_option("--window-seconds", run_opts.window_seconds, "Adaptive window length T0");
  run->add_flag("--decay-rule", run_opts.decay_rule, "Use the step-size-aware tau1 rule");

  RunOptions sweep_opts;
  auto* sweep = app.add_subcommand("sweep", "Run every point of the config's sweep");
  add_run_options(sweep, sweep_opts);

  BoundOptions bound_opts;
  auto* bound = app.add_subcommand("bound", "Evaluate the convergence bound");
  add_bound_options(bound, bound_opts);

  PlanOptions plan_opts;
  auto* plan = app.add_subcommand("plan", "Recommend (tau1, tau2) for a wall-clock budget");
  add_bound_options(plan, plan_opts.bound);
  plan->add_option("--config", plan_opts.config, "Take constants, topology, quantizers and latency from a config");
  plan->add_option("--budget-seconds", plan_opts.budget_seconds, "Wall-clock budget T");
  plan->add_option("--d-comp-seconds", plan_opts.d_comp, "Per-iteration compute latency")->capture_default_str();
  plan->add_option("--d-de-seconds", plan_opts.d_de, "Client-edge upload latency")->capture_default_str();
  plan->add_option("--d-ec-seconds", plan_opts.d_ec, "Edge-cloud upload latency")->capture_default_str();

  BenchOptions bench_opts;
  auto* bench = app.add_subcommand("quantize-bench", "Monte-Carlo certification of quantizers");
  bench->add_option("--spec", bench_opts.specs, "identity | sparsification:R | rounding:S | rounding-bits:B");
  bench->add_option("--dim", bench_opts.dim, "Vector dimension")->capture_default_str();
  bench->add_option("--draws", bench_opts.draws, "Draws per probe (>= 10000)")->capture_default_str();
  bench->add_option("--seed", bench_opts.seed, "Seed")->capture_default_str();
  bench->add_option("-o,--output", bench_opts.output, "CSV output file (default stdout)");

  CompareOptions cmp_opts;
  auto* compare = app.add_subcommand("compare", "Mean and standard error of traces per group");
  compare->add_option("--group", cmp_opts.groups, "NAME=PATH (trace directory or file), repeatable")->required();
  compare->add_option("--axis", cmp_opts.axis, "round or wall_clock")
      ->check(CLI::IsMember({"round", "wall_clock"}))
      ->capture_default_str();
  compare->add_option("--metric", cmp_opts.metric, "loss or grad_norm_sq")
      ->check(CLI::IsMember({"loss", "grad_norm_sq"}))
      ->capture_default_str();
  compare->add_option("-o,--output", cmp_opts.output, "CSV output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 2);
  }

  try {
    if (*run) return execute(run_opts, false);
    if (*sweep) return execute(sweep_opts, true);
    if (*bound) return bound_command(bound_opts);
    if (*plan) return plan_command(plan_opts, plan);
    if (*bench) return bench_command(bench_opts);
    if (*compare) return compare_command(cmp_opts);
  } catch (const hfl::ConfigValidationError& e) {
    return report_error("config", "invalid config", 2, e.issues());
  } catch (const hfl::ConfigError& e) {
    return report_error("config", e.what(), 2);
  } catch (const hfl::InputError& e) {
    return report_error("input", e.what(), 3);
  } catch (const hfl::ConditionError& e) {
    return report_error("condition", e.what(), 4);
  } catch (const hfl::OutputError& e) {
    return report_error("output", e.what(), 5);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), 1);
  }
  return 0;
}
