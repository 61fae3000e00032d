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

#include "hfl/harness.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "hfl/latency.hpp"

namespace hfl {
namespace fs = std::filesystem;

ConfigValidationError::ConfigValidationError(std::vector<std::string> issues)
    : ConfigError([&] {
        std::string msg = "invalid config";
        for (const auto& i : issues) msg += "\n  " + i;
        return msg;
      }()),
      issues_(std::move(issues)) {}

namespace {

using Issues = std::vector<std::string>;

std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

// Reads one JSON object, recording problems by path and writing the
// normalized fields to `out`.
class Section {
 public:
  Section(const Json* in, std::string path, Issues& issues, std::initializer_list<const char*> known)
      : path_(std::move(path)), issues_(issues) {
    if (in && !in->is_null()) {
      if (!in->is_object()) {
        issue("", "must be an object");
      } else {
        in_ = in;
        for (const auto& [key, value] : in->items()) {
          if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
            issue(key, "unknown field");
          }
        }
      }
    }
  }

  void issue(const std::string& key, const std::string& msg) {
    const std::string p = key.empty() ? path_ : join_path(path_, key);
    issues_.push_back((p.empty() ? std::string("$") : p) + ": " + msg);
  }

  std::string path(const std::string& key) const { return join_path(path_, key); }
  const Json* raw(const char* key) const {
    if (!in_) return nullptr;
    auto it = in_->find(key);
    return it == in_->end() || it->is_null() ? nullptr : &*it;
  }
  bool has(const char* key) const { return raw(key) != nullptr; }

  double real(const char* key, std::optional<double> def, double lo, bool lo_open,
              double hi = std::numeric_limits<double>::infinity()) {
    const Json* v = raw(key);
    double x = def.value_or(0.0);
    if (!v) {
      if (!def) issue(key, "required");
    } else if (!v->is_number()) {
      issue(key, "must be a number");
    } else {
      x = v->get<double>();
      if (!std::isfinite(x) || (lo_open ? !(x > lo) : !(x >= lo)) || x > hi) {
        issue(key, "out of range (" + std::string(lo_open ? "> " : ">= ") + fmt(lo) +
                       (std::isfinite(hi) ? ", <= " + fmt(hi) : "") + ")");
      }
    }
    out[key] = x;
    return x;
  }

  long integer(const char* key, std::optional<long> def, long lo, long hi = std::numeric_limits<long>::max()) {
    const Json* v = raw(key);
    long x = def.value_or(lo);
    if (!v) {
      if (!def) issue(key, "required");
    } else if (!v->is_number_integer()) {
      issue(key, "must be an integer");
    } else {
      x = v->get<long>();
      if (x < lo || x > hi) issue(key, "out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    out[key] = x;
    return x;
  }

  std::uint64_t seed(const char* key, std::optional<std::uint64_t> def) {
    const Json* v = raw(key);
    std::uint64_t x = def.value_or(0);
    if (!v) {
      if (!def) issue(key, "required");
    } else if (!v->is_number_unsigned()) {
      issue(key, "must be a non-negative integer");
    } else {
      x = v->get<std::uint64_t>();
    }
    out[key] = x;
    return x;
  }

  std::string text(const char* key, std::optional<std::string> def, std::initializer_list<const char*> allowed = {}) {
    const Json* v = raw(key);
    std::string x = def.value_or("");
    if (!v) {
      if (!def) issue(key, "required");
    } else if (!v->is_string()) {
      issue(key, "must be a string");
    } else {
      x = v->get<std::string>();
      if (allowed.size() && std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return x == a; })) {
        std::string list;
        for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
        issue(key, "must be one of: " + list);
      }
    }
    out[key] = x;
    return x;
  }

  bool boolean(const char* key, bool def) {
    const Json* v = raw(key);
    bool x = def;
    if (v) {
      if (!v->is_boolean()) {
        issue(key, "must be true or false");
      } else {
        x = v->get<bool>();
      }
    }
    out[key] = x;
    return x;
  }

  // A scalar (filled to `dim`) or an array of `dim` numbers. dim < 0 skips
  // the length check and keeps scalars as given.
  void vector(const char* key, double def, long dim, bool positive) {
    const Json* v = raw(key);
    if (!v) {
      out[key] = dim < 0 ? Json(def) : Json(std::vector<double>(static_cast<std::size_t>(std::max(dim, 0L)), def));
      return;
    }
    auto ok = [&](const Json& e) {
      return e.is_number() && std::isfinite(e.get<double>()) && (!positive || e.get<double>() > 0);
    };
    const char* need = positive ? "positive finite numbers" : "finite numbers";
    if (v->is_number()) {
      if (!ok(*v)) issue(key, std::string("must be ") + need);
      out[key] = dim < 0 ? *v : Json(std::vector<double>(static_cast<std::size_t>(std::max(dim, 0L)), v->get<double>()));
    } else if (v->is_array()) {
      if (dim >= 0 && static_cast<long>(v->size()) != dim) {
        issue(key, "expected " + std::to_string(dim) + " entries, got " + std::to_string(v->size()));
      }
      if (!std::all_of(v->begin(), v->end(), ok)) issue(key, std::string("entries must be ") + need);
      out[key] = *v;
    } else {
      issue(key, "must be a number or an array of numbers");
      out[key] = def;
    }
  }

  Json out = Json::object();

 private:
  static std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  }

  const Json* in_ = nullptr;
  std::string path_;
  Issues& issues_;
};

const Json* child(const Json& doc, const char* key) {
  auto it = doc.find(key);
  return it == doc.end() ? nullptr : &*it;
}

// Returns the model dimension when it is known without loading data, else -1.
long normalize_model(const Json& doc, Json& out, Issues& issues, long clients) {
  const Json* in = child(doc, "model");
  if (!in || !in->is_object()) {
    issues.push_back("model: required object");
    return -1;
  }
  const Json* kind_node = child(*in, "kind");
  const std::string kind = kind_node && kind_node->is_string() ? kind_node->get<std::string>() : "";
  if (kind == "quadratic") {
    Section m(in, "model", issues,
              {"kind", "dim", "curvature", "centers", "center", "center_spread", "noise_sigma", "batch_size", "x0"});
    m.out["kind"] = kind;
    const long dim = m.integer("dim", std::nullopt, 1, 1000000);
    const Json* curv = m.raw("curvature");
    if (curv && curv->is_object()) {
      Section range(curv, m.path("curvature"), issues, {"min", "max"});
      const double lo = range.real("min", std::nullopt, 0.0, true);
      const double hi = range.real("max", std::nullopt, lo, false);
      std::vector<double> values;
      for (long j = 0; j < dim; ++j) values.push_back(dim == 1 ? lo : lo + (hi - lo) * j / static_cast<double>(dim - 1));
      m.out["curvature"] = values;
    } else {
      m.vector("curvature", 1.0, dim, true);
    }
    const std::string centers = m.text("centers", "iid", {"iid", "heterogeneous"});
    m.vector("center", 0.0, dim, false);
    m.real("center_spread", centers == "heterogeneous" ? 1.0 : 0.0, 0.0, false);
    m.real("noise_sigma", 0.0, 0.0, false);
    m.integer("batch_size", 1, 1);
    m.vector("x0", 0.0, dim, false);
    out["model"] = m.out;
    return dim;
  }
  if (kind == "logistic") {
    Section m(in, "model", issues, {"kind", "dataset_csv", "synthetic", "dirichlet_alpha", "ridge", "batch_size", "x0"});
    m.out["kind"] = kind;
    long dim = -1;
    if (m.has("dataset_csv")) {
      m.text("dataset_csv", std::nullopt);
      m.out["synthetic"] = nullptr;
      if (m.has("synthetic")) m.issue("synthetic", "give either dataset_csv or synthetic, not both");
    } else {
      m.out["dataset_csv"] = nullptr;
      Section syn(m.raw("synthetic"), m.path("synthetic"), issues, {"samples", "features", "separation"});
      const long samples = syn.integer("samples", 2000, 1);
      dim = syn.integer("features", 10, 1, 100000);
      syn.real("separation", 2.0, 0.0, false);
      if (clients > 0 && samples < clients) syn.issue("samples", "fewer samples than clients");
      m.out["synthetic"] = syn.out;
    }
    m.real("dirichlet_alpha", 100.0, 0.0, true);
    m.real("ridge", 1e-3, 0.0, false);
    m.integer("batch_size", 8, 1);
    m.vector("x0", 0.0, dim, false);
    out["model"] = m.out;
    return dim;
  }
  issues.push_back("model.kind: must be one of: quadratic, logistic");
  return -1;
}

void normalize_quantizer(const Json* in, const std::string& path, Json& out, Issues& issues, long dim) {
  Section q(in, path, issues, {"kind", "kept", "levels", "bits"});
  const std::string raw_kind = q.text("kind", "identity",
                                      {"identity", "random-sparsification", "sparsification", "stochastic-rounding",
                                       "rounding"});
  Json result = Json::object();
  QuantizerKind kind = QuantizerKind::kIdentity;
  try {
    kind = quantizer_kind_from_string(raw_kind);
  } catch (const ConfigError&) {
  }
  result["kind"] = to_string(kind);
  if (kind == QuantizerKind::kRandomSparsification) {
    result["kept"] = q.integer("kept", std::nullopt, 1, dim > 0 ? dim : std::numeric_limits<long>::max());
    if (q.has("levels") || q.has("bits")) q.issue("", "levels/bits apply to stochastic rounding only");
  } else if (kind == QuantizerKind::kStochasticRounding) {
    if (q.has("levels") && q.has("bits")) q.issue("", "give either levels or bits, not both");
    if (q.has("bits")) {
      const long bits = q.integer("bits", std::nullopt, 2, 31);
      result["levels"] = bits >= 2 && bits <= 31 ? levels_from_bits(static_cast<int>(bits)) : 1;
    } else {
      result["levels"] = q.integer("levels", std::nullopt, 1, std::numeric_limits<int>::max());
    }
    if (q.has("kept")) q.issue("kept", "applies to sparsification only");
  } else if (q.has("kept") || q.has("levels") || q.has("bits")) {
    q.issue("", "identity takes no parameters");
  }
  out = result;
}

void normalize_latency(const Json& doc, Json& out, Issues& issues) {
  Section l(child(doc, "latency"), "latency", issues,
            {"d_comp_seconds", "d_de_seconds", "d_ec_seconds", "channel", "edge_cloud_factor"});
  if (l.has("channel")) {
    if (l.has("d_comp_seconds") || l.has("d_de_seconds") || l.has("d_ec_seconds")) {
      l.issue("", "give either the *_seconds delays or channel, not both");
    }
    Section ch(l.raw("channel"), l.path("channel"), issues,
               {"payload_bits", "bandwidth_hz", "channel_gain", "transmit_power_watts", "noise_power_watts",
                "cycles_per_bit", "bits_per_iteration", "cpu_hz"});
    for (const char* key : {"payload_bits", "bandwidth_hz", "channel_gain", "transmit_power_watts",
                            "noise_power_watts", "cycles_per_bit", "cpu_hz"}) {
      ch.real(key, std::nullopt, 0.0, true);
    }
    ch.real("bits_per_iteration", std::nullopt, 0.0, false);
    Json result = Json::object();
    result["channel"] = ch.out;
    result["edge_cloud_factor"] = l.real("edge_cloud_factor", 10.0, 0.0, true);
    out["latency"] = result;
    return;
  }
  if (l.has("edge_cloud_factor")) l.issue("edge_cloud_factor", "only used with channel");
  l.real("d_comp_seconds", 0.0, 0.0, false);
  l.real("d_de_seconds", 0.0, 0.0, false);
  l.real("d_ec_seconds", 0.0, 0.0, false);
  out["latency"] = l.out;
}

std::vector<int> balanced_sizes(long n, long s) {
  std::vector<int> sizes;
  for (long l = 0; l < s; ++l) sizes.push_back(static_cast<int>(n / s + (l < n % s ? 1 : 0)));
  return sizes;
}

std::string pointer_of(const std::string& dotted) {
  std::string p;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) p += "/" + part;
  return p;
}

std::string scalar_text(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NaN";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ParamVector to_vector(const Json& v, long dim) {
  if (v.is_number()) return ParamVector::Constant(dim, v.get<double>());
  const auto values = v.get<std::vector<double>>();
  if (static_cast<long>(values.size()) != dim) {
    throw ConfigError("vector field has " + std::to_string(values.size()) + " entries, model dimension is " +
                      std::to_string(dim));
  }
  return Eigen::Map<const ParamVector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

QuantizerSpec quantizer_from(const Json& q, Eigen::Index dim) {
  switch (quantizer_kind_from_string(q.at("kind").get<std::string>())) {
    case QuantizerKind::kIdentity:
      return QuantizerSpec::identity(dim);
    case QuantizerKind::kRandomSparsification:
      return QuantizerSpec::sparsification(dim, q.at("kept").get<Eigen::Index>());
    case QuantizerKind::kStochasticRounding:
      return QuantizerSpec::rounding(dim, q.at("levels").get<int>());
  }
  return QuantizerSpec::identity(dim);
}

Json constants_json(const SmoothnessConstants& c) {
  Json j = Json::object();
  j["lipschitz"] = c.lipschitz;
  j["sigma2"] = c.sigma2;
  j["f_star"] = c.f_star;
  j["sigma2_estimated"] = c.sigma2_estimated;
  return j;
}

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw OutputError("cannot write " + path.string());
  out << contents;
  out.close();
  if (!out) throw OutputError("failed writing " + path.string());
}

std::string run_name(std::size_t point, int rep) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "p%04zu_r%03d", point, rep);
  return buf;
}

}  // namespace

Json normalize_config(const Json& document) {
  Issues issues;
  if (!document.is_object()) throw ConfigValidationError({"$: config must be a JSON object"});
  Section fields(&document, "", issues,
                 {"algorithm", "model", "data_seed", "topology", "schedule", "quantizers", "weighting", "latency",
                  "adaptive", "value_bits", "workers", "diagnostics", "master_seed", "repetitions", "output_dir",
                  "run_seed", "sweep"});
  Json out = Json::object();

  out["algorithm"] = fields.text("algorithm", "hierarchical", {"hierarchical", "fedavg"});
  const std::uint64_t master = fields.seed("master_seed", 0);
  out["master_seed"] = master;
  out["data_seed"] = fields.seed("data_seed", master);
  out["run_seed"] = nullptr;
  if (fields.has("run_seed")) out["run_seed"] = fields.seed("run_seed", std::nullopt);
  out["repetitions"] = fields.integer("repetitions", 1, 1, 1000000);
  out["output_dir"] = fields.text("output_dir", "hfl_out");
  out["workers"] = fields.integer("workers", 1, 1, 1024);
  out["value_bits"] = fields.integer("value_bits", 32, 1, 1024);
  out["diagnostics"] = fields.boolean("diagnostics", false);
  out["weighting"] = fields.text("weighting", "weighted", {"weighted", "uniform"});

  Section topo(child(document, "topology"), "topology", issues, {"clients", "edges", "edge_sizes"});
  const long n = topo.integer("clients", std::nullopt, 1, 1000000);
  const long s = topo.integer("edges", 1, 1, std::max(n, 1L));
  if (const Json* sizes = topo.raw("edge_sizes")) {
    bool ok = sizes->is_array() && static_cast<long>(sizes->size()) == s;
    long total = 0;
    if (ok) {
      for (const auto& m : *sizes) {
        ok = ok && m.is_number_integer() && m.get<long>() >= 1;
        if (ok) total += m.get<long>();
      }
    }
    if (!ok) {
      topo.issue("edge_sizes", "must be " + std::to_string(s) + " positive integers");
    } else if (total != n) {
      topo.issue("edge_sizes", "must sum to clients=" + std::to_string(n));
    }
    topo.out["edge_sizes"] = *sizes;
  } else {
    topo.out["edge_sizes"] = balanced_sizes(n, std::max(s, 1L));
  }
  out["topology"] = topo.out;

  const long dim = normalize_model(document, out, issues, n);

  Section sched(child(document, "schedule"), "schedule", issues,
                {"tau1", "tau2", "cloud_rounds", "eta0", "eta_decay", "iterations_per_epoch",
                 "wall_clock_budget_seconds"});
  const long tau1 = sched.integer("tau1", 1, 1, std::numeric_limits<int>::max());
  sched.integer("tau2", 1, 1, std::numeric_limits<int>::max());
  sched.integer("cloud_rounds", 100, 1);
  sched.real("eta0", std::nullopt, 0.0, true);
  sched.real("eta_decay", 1.0, 0.0, true, 1.0);
  sched.integer("iterations_per_epoch", 0, 0);
  if (sched.has("wall_clock_budget_seconds")) {
    sched.real("wall_clock_budget_seconds", std::nullopt, 0.0, true);
  } else {
    sched.out["wall_clock_budget_seconds"] = nullptr;
  }
  out["schedule"] = sched.out;

  Section quant(child(document, "quantizers"), "quantizers", issues, {"client", "edge"});
  Json quantizers = Json::object();
  normalize_quantizer(quant.raw("client"), quant.path("client"), quantizers["client"], issues, dim);
  normalize_quantizer(quant.raw("edge"), quant.path("edge"), quantizers["edge"], issues, dim);
  out["quantizers"] = quantizers;

  normalize_latency(document, out, issues);

  out["adaptive"] = nullptr;
  if (const Json* a = fields.raw("adaptive")) {
    Section ad(a, "adaptive", issues, {"tau1_initial", "window_seconds", "use_decay_rule", "enabled", "tau2"});
    ad.integer("tau1_initial", tau1, 1, std::numeric_limits<int>::max());
    ad.real("window_seconds", 0.0, 0.0, false);
    ad.boolean("use_decay_rule", false);
    ad.boolean("enabled", true);
    if (ad.has("tau2")) {
      ad.integer("tau2", std::nullopt, 1, std::numeric_limits<int>::max());
    } else {
      ad.out["tau2"] = nullptr;
    }
    out["adaptive"] = ad.out;
    if (out["algorithm"] == "fedavg") issues.push_back("adaptive: not available with algorithm fedavg");
  }

  Json sweep = Json::array();
  if (const Json* sw = fields.raw("sweep")) {
    if (sw->is_object()) {
      sweep.push_back(*sw);
    } else if (sw->is_array()) {
      sweep = *sw;
    } else {
      issues.push_back("sweep: must be an object or an array of objects");
    }
  }
  out["sweep"] = sweep;

  if (!issues.empty()) throw ConfigValidationError(std::move(issues));
  return out;
}

ExperimentConfig ExperimentConfig::parse(const Json& document) {
  ExperimentConfig cfg;
  cfg.document = normalize_config(document);
  cfg.output_dir = cfg.document["output_dir"].get<std::string>();
  cfg.master_seed = cfg.document["master_seed"].get<std::uint64_t>();
  cfg.repetitions = cfg.document["repetitions"].get<int>();

  Issues issues;
  Json base = cfg.document;
  base["sweep"] = Json::array();
  for (std::size_t g = 0; g < cfg.document["sweep"].size(); ++g) {
    const Json& group = cfg.document["sweep"][g];
    const std::string gpath = "sweep[" + std::to_string(g) + "]";
    if (!group.is_object() || group.empty()) {
      issues.push_back(gpath + ": must be a non-empty object of path -> value list");
      continue;
    }
    std::vector<SweepAxis> axes;
    std::size_t length = 0;
    for (const auto& [path, values] : group.items()) {
      const std::string apath = gpath + "." + path;
      if (path == "sweep" || path.rfind("sweep.", 0) == 0) {
        issues.push_back(apath + ": cannot sweep the sweep");
        continue;
      }
      if (!base.contains(Json::json_pointer(pointer_of(path)))) {
        issues.push_back(apath + ": no such field");
        continue;
      }
      if (!values.is_array() || values.empty()) {
        issues.push_back(apath + ": must be a non-empty list of values");
        continue;
      }
      if (length && values.size() != length) {
        issues.push_back(apath + ": zipped axes in one group need equal lengths");
        continue;
      }
      length = values.size();
      axes.push_back({path, std::vector<Json>(values.begin(), values.end())});
    }
    cfg.sweep.push_back(std::move(axes));
  }
  if (!issues.empty()) throw ConfigValidationError(std::move(issues));

  std::size_t total = 1;
  for (const auto& group : cfg.sweep) total *= group.empty() ? 1 : group.front().values.size();
  for (std::size_t index = 0; index < total; ++index) {
    SweepPoint point;
    point.index = index;
    Json doc = base;
    std::size_t rest = index;
    std::size_t stride = total;
    for (const auto& group : cfg.sweep) {
      if (group.empty()) continue;
      stride /= group.front().values.size();
      const std::size_t pick = rest / stride;
      rest %= stride;
      for (const auto& axis : group) {
        doc[Json::json_pointer(pointer_of(axis.path))] = axis.values[pick];
        point.overrides[axis.path] = axis.values[pick];
      }
    }
    try {
      point.config = normalize_config(doc);
    } catch (const ConfigValidationError& e) {
      for (const auto& i : e.issues()) issues.push_back("sweep point " + std::to_string(index) + ": " + i);
    }
    cfg.points.push_back(std::move(point));
  }
  if (!cfg.document["run_seed"].is_null() && (total > 1 || cfg.repetitions > 1)) {
    issues.push_back("run_seed: only valid for a single run (no sweep, one repetition)");
  }
  if (!issues.empty()) throw ConfigValidationError(std::move(issues));
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InputError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  if (doc.is_object() && doc.contains("config") && doc.contains("trace_file")) doc = doc["config"];
  return parse(doc);
}

std::vector<std::string> ExperimentConfig::axis_paths() const {
  std::vector<std::string> paths;
  for (const auto& group : sweep) {
    for (const auto& axis : group) paths.push_back(axis.path);
  }
  return paths;
}

BuiltRun build_run(const Json& c, std::uint64_t run_seed) {
  BuiltRun run;
  run.algorithm = c.at("algorithm").get<std::string>();
  const std::uint64_t data_seed = c.at("data_seed").get<std::uint64_t>();
  const Json& topo = c.at("topology");
  const int n = topo.at("clients").get<int>();
  const int s = topo.at("edges").get<int>();
  const auto sizes = topo.at("edge_sizes").get<std::vector<int>>();
  run.engine.topology = build_association(n, s, sizes);
  run.topology_summary = Json::object();
  run.topology_summary["clients"] = n;
  run.topology_summary["edges"] = s;
  run.topology_summary["edge_sizes"] = sizes;
  run.topology_summary["effective_cluster_size"] = effective_cluster_size(run.engine.topology);
  run.partition_summary = nullptr;

  const Json& m = c.at("model");
  Eigen::Index dim = 0;
  if (m.at("kind") == "quadratic") {
    dim = m.at("dim").get<Eigen::Index>();
    QuadraticProblem p;
    p.curvature = to_vector(m.at("curvature"), dim);
    const ParamVector center = to_vector(m.at("center"), dim);
    const double spread = m.at("center_spread").get<double>();
    const bool hetero = m.at("centers") == "heterogeneous";
    for (int i = 0; i < n; ++i) {
      ParamVector ci = center;
      if (hetero) {
        RngStream rng = make_stream(data_seed, StreamKind::kDataset, static_cast<std::uint64_t>(i));
        std::normal_distribution<double> unit(0.0, 1.0);
        for (Eigen::Index j = 0; j < dim; ++j) ci(j) += spread * unit(rng);
      }
      p.centers.push_back(std::move(ci));
    }
    p.noise_sigma = m.at("noise_sigma").get<double>();
    p.batch_size = m.at("batch_size").get<int>();
    run.engine.model = std::make_shared<const LossModel>(LossModel::quadratic(std::move(p)));
  } else {
    LabeledDataset data;
    if (!m.at("dataset_csv").is_null()) {
      data = load_labeled_csv(m.at("dataset_csv").get<std::string>());
    } else {
      const Json& syn = m.at("synthetic");
      data = make_gaussian_blobs(syn.at("samples").get<std::size_t>(), syn.at("features").get<Eigen::Index>(), 2,
                                 syn.at("separation").get<double>(), data_seed);
    }
    for (int label : data.labels) {
      if (label != 0 && label != 1) throw InputError("logistic model needs labels 0 or 1, found " + std::to_string(label));
    }
    dim = data.features.cols();
    RngStream rng = make_stream(data_seed, StreamKind::kPartition);
    const double alpha = m.at("dirichlet_alpha").get<double>();
    const DataPartition part = dirichlet_partition(data.labels, n, alpha, rng);
    LogisticProblem p;
    p.ridge = m.at("ridge").get<double>();
    p.batch_size = m.at("batch_size").get<int>();
    Json counts = Json::array();
    Json positives = Json::array();
    for (const auto& idx : part.client_indices) {
      ClientSamples cs;
      cs.features.resize(static_cast<Eigen::Index>(idx.size()), dim);
      cs.labels.resize(static_cast<Eigen::Index>(idx.size()));
      long pos = 0;
      for (std::size_t r = 0; r < idx.size(); ++r) {
        cs.features.row(static_cast<Eigen::Index>(r)) = data.features.row(static_cast<Eigen::Index>(idx[r]));
        cs.labels(static_cast<Eigen::Index>(r)) = data.labels[idx[r]];
        pos += data.labels[idx[r]];
      }
      counts.push_back(idx.size());
      positives.push_back(pos);
      p.clients.push_back(std::move(cs));
    }
    run.partition_summary = Json::object();
    run.partition_summary["alpha"] = alpha;
    run.partition_summary["samples"] = data.size();
    run.partition_summary["client_samples"] = counts;
    run.partition_summary["client_positive_labels"] = positives;
    run.engine.model = std::make_shared<const LossModel>(LossModel::logistic(std::move(p)));
  }
  run.engine.x0 = to_vector(m.at("x0"), dim);

  const Json& sched = c.at("schedule");
  run.engine.schedule.tau1 = sched.at("tau1").get<int>();
  run.engine.schedule.tau2 = sched.at("tau2").get<int>();
  run.engine.schedule.cloud_rounds = sched.at("cloud_rounds").get<long>();
  run.engine.schedule.eta0 = sched.at("eta0").get<double>();
  run.engine.schedule.eta_decay = sched.at("eta_decay").get<double>();
  run.engine.schedule.iterations_per_epoch = sched.at("iterations_per_epoch").get<long>();
  if (!sched.at("wall_clock_budget_seconds").is_null()) {
    run.engine.schedule.wall_clock_budget_s = sched.at("wall_clock_budget_seconds").get<double>();
  }

  run.engine.client_quantizer = quantizer_from(c.at("quantizers").at("client"), dim);
  run.engine.edge_quantizer = quantizer_from(c.at("quantizers").at("edge"), dim);
  run.engine.weighting = weighting_from_string(c.at("weighting").get<std::string>());
  run.engine.seed = run_seed;
  run.engine.value_bits = c.at("value_bits").get<int>();
  run.engine.workers = c.at("workers").get<int>();
  run.engine.diagnostics = c.at("diagnostics").get<bool>();

  const Json& lat = c.at("latency");
  if (lat.contains("channel")) {
    const Json& ch = lat.at("channel");
    ChannelParams p;
    p.payload_bits = ch.at("payload_bits").get<double>();
    p.bandwidth_hz = ch.at("bandwidth_hz").get<double>();
    p.channel_gain = ch.at("channel_gain").get<double>();
    p.transmit_power_w = ch.at("transmit_power_watts").get<double>();
    p.noise_power_w = ch.at("noise_power_watts").get<double>();
    p.cycles_per_bit = ch.at("cycles_per_bit").get<double>();
    p.bits_per_iteration = ch.at("bits_per_iteration").get<double>();
    p.cpu_hz = ch.at("cpu_hz").get<double>();
    run.engine.latency = latency_from_channel(p, lat.at("edge_cloud_factor").get<double>(),
                                              run.engine.client_quantizer, run.engine.edge_quantizer,
                                              run.engine.full_bits());
  } else {
    run.engine.latency.d_comp_s = lat.at("d_comp_seconds").get<double>();
    run.engine.latency.d_de_s = lat.at("d_de_seconds").get<double>();
    run.engine.latency.d_ec_s = lat.at("d_ec_seconds").get<double>();
  }

  if (!c.at("adaptive").is_null()) {
    const Json& a = c.at("adaptive");
    AdaptiveSettings settings;
    settings.tau1_initial = a.at("tau1_initial").get<int>();
    settings.window_s = a.at("window_seconds").get<double>();
    settings.use_decay_rule = a.at("use_decay_rule").get<bool>();
    settings.update_enabled = a.at("enabled").get<bool>();
    if (!a.at("tau2").is_null()) settings.tau2 = a.at("tau2").get<int>();
    run.adaptive = settings;
  }
  run.engine.validate();
  return run;
}

std::uint64_t run_seed_for(const Json& point_config, std::uint64_t master_seed, std::size_t point, int rep) {
  if (!point_config.at("run_seed").is_null()) return point_config.at("run_seed").get<std::uint64_t>();
  return derive_seed(master_seed, {static_cast<std::uint64_t>(point), static_cast<std::uint64_t>(rep)});
}

RunTrace run_point(const Json& point_config, std::uint64_t run_seed, Json* metadata) {
  BuiltRun run = build_run(point_config, run_seed);
  RunTrace trace;
  int tau2 = run.engine.schedule.tau2;
  if (run.algorithm == "fedavg") {
    trace = run_fedavg(run.engine);
    tau2 = 1;
  } else if (run.adaptive) {
    tau2 = adaptive_tau2(run.engine, *run.adaptive);
    trace = adaptive_run(run.engine, *run.adaptive);
  } else {
    trace = run_hier_local_qsgd(run.engine);
  }
  if (metadata) {
    Json& meta = *metadata;
    meta = Json::object();
    Json config = point_config;
    config["run_seed"] = run_seed;
    config["repetitions"] = 1;
    config["sweep"] = Json::array();
    meta["config"] = config;
    meta["seed"] = run_seed;
    meta["algorithm"] = run.algorithm;
    meta["g_value"] = trace.g_value;
    meta["constants"] = constants_json(trace.constants);
    Json lat = Json::object();
    lat["d_comp_seconds"] = run.engine.latency.d_comp_s;
    lat["d_de_seconds"] = run.engine.latency.d_de_s;
    lat["d_ec_seconds"] = run.engine.latency.d_ec_s;
    meta["latency_seconds"] = lat;
    meta["tau2"] = tau2;
    meta["payload_bits"] = {
        {"client", quantized_payload_bits(run.engine.client_quantizer, run.engine.full_bits())},
        {"edge", quantized_payload_bits(run.engine.edge_quantizer, run.engine.full_bits())}};
    meta["topology"] = run.topology_summary;
    meta["partition"] = run.partition_summary;
    meta["warnings"] = trace.warnings;
    meta["divergence"] = nullptr;
    if (trace.divergence) meta["divergence"] = {{"round", trace.divergence->round}, {"reason", trace.divergence->reason}};
    meta["rows"] = trace.rows.size();
  }
  return trace;
}

ResultSet run_experiment(const ExperimentConfig& config) {
  ResultSet results;
  results.output_dir = config.output_dir;
  results.axis_paths = config.axis_paths();
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec || !fs::is_directory(config.output_dir)) {
    throw OutputError("cannot create output directory " + config.output_dir.string());
  }
  write_file(config.output_dir / "experiment.json", config.document.dump(2) + "\n");

  for (const auto& point : config.points) {
    for (int rep = 0; rep < config.repetitions; ++rep) {
      RunRecord rec;
      rec.point = point.index;
      rec.rep = rep;
      rec.seed = run_seed_for(point.config, config.master_seed, point.index, rep);
      rec.overrides = point.overrides;
      Json meta;
      rec.trace = run_point(point.config, rec.seed, &meta);
      const std::string name = run_name(point.index, rep);
      rec.trace_file = "trace_" + name + ".csv";
      rec.metadata_file = "meta_" + name + ".json";
      meta["point"] = point.index;
      meta["rep"] = rep;
      meta["overrides"] = point.overrides;
      meta["trace_file"] = rec.trace_file;
      write_file(config.output_dir / rec.trace_file, trace_csv(rec.trace));
      write_file(config.output_dir / rec.metadata_file, meta.dump(2) + "\n");
      results.runs.push_back(std::move(rec));
    }
  }
  write_file(config.output_dir / "summary.csv", summary_csv(results));
  return results;
}

void write_summary_csv(std::ostream& out, const ResultSet& results) {
  out << "point,rep,seed";
  for (const auto& p : results.axis_paths) out << "," << p;
  out << ",status,rounds,final_loss,final_grad_norm_sq,total_wall_clock_s,total_uplink_bits\n";
  for (const auto& r : results.runs) {
    const TraceRow& last = r.trace.final_row();
    out << r.point << "," << r.rep << "," << r.seed;
    for (const auto& p : results.axis_paths) {
      out << "," << (r.overrides.contains(p) ? scalar_text(r.overrides[p]) : "");
    }
    const bool diverged = r.trace.diverged();
    out << "," << (diverged ? "diverged@" + std::to_string(r.trace.divergence->round) : "ok") << "," << last.k << ","
        << format_double(diverged ? std::nan("") : last.loss) << ","
        << format_double(diverged ? std::nan("") : last.grad_norm_sq) << "," << format_double(last.wall_clock_s)
        << "," << last.uplink_bits << "\n";
  }
}

std::string summary_csv(const ResultSet& results) {
  std::ostringstream os;
  write_summary_csv(os, results);
  return os.str();
}

namespace {

double checkpoint_of(const TraceRow& r, CheckpointAxis axis) {
  return axis == CheckpointAxis::kRound ? static_cast<double>(r.k) : r.wall_clock_s;
}

double metric_of(const TraceRow& r, const std::string& metric) {
  return metric == "loss" ? r.loss : r.grad_norm_sq;
}

// Linear interpolation of the metric at checkpoint x (x within the trace's range).
double interpolate(const RunTrace& t, CheckpointAxis axis, const std::string& metric, double x) {
  const auto& rows = t.rows;
  auto it = std::lower_bound(rows.begin(), rows.end(), x,
                             [&](const TraceRow& r, double v) { return checkpoint_of(r, axis) < v; });
  if (it == rows.end()) return metric_of(rows.back(), metric);
  if (checkpoint_of(*it, axis) == x || it == rows.begin()) return metric_of(*it, metric);
  const TraceRow& hi = *it;
  const TraceRow& lo = *(it - 1);
  const double x0 = checkpoint_of(lo, axis);
  const double x1 = checkpoint_of(hi, axis);
  const double w = (x - x0) / (x1 - x0);
  return (1 - w) * metric_of(lo, metric) + w * metric_of(hi, metric);
}

}  // namespace

std::vector<ComparisonRow> compare_runs(std::span<const TraceGroup> groups, CheckpointAxis axis,
                                        const std::string& metric) {
  if (metric != "loss" && metric != "grad_norm_sq") throw ConfigError("compare: metric must be loss or grad_norm_sq");
  std::vector<std::vector<double>> grids;
  for (const auto& g : groups) {
    if (g.traces.empty()) throw InputError("compare: group '" + g.name + "' has no traces");
    for (const auto& t : g.traces) {
      if (t.rows.empty()) throw InputError("compare: empty trace in group '" + g.name + "'");
      std::vector<double> grid;
      for (const auto& r : t.rows) grid.push_back(checkpoint_of(r, axis));
      grids.push_back(std::move(grid));
    }
  }
  if (grids.empty()) return {};

  const bool same = std::all_of(grids.begin(), grids.end(), [&](const auto& g) { return g == grids.front(); });
  std::vector<double> grid = grids.front();
  if (!same) {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (const auto& g : grids) {
      lo = std::max(lo, g.front());
      hi = std::min(hi, g.back());
    }
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (const auto& g : grids) {
      std::vector<double> clipped;
      std::copy_if(g.begin(), g.end(), std::back_inserter(clipped), [&](double x) { return x >= lo && x <= hi; });
      if (clipped.size() < best) {
        best = clipped.size();
        grid = std::move(clipped);
      }
    }
  }

  std::vector<ComparisonRow> rows;
  for (const auto& g : groups) {
    for (double x : grid) {
      std::vector<double> values;
      for (const auto& t : g.traces) values.push_back(interpolate(t, axis, metric, x));
      const double n = static_cast<double>(values.size());
      const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
      double ss = 0.0;
      for (double v : values) ss += (v - mean) * (v - mean);
      ComparisonRow row;
      row.group = g.name;
      row.checkpoint = x;
      row.mean = mean;
      row.standard_error = values.size() > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0;
      row.count = values.size();
      row.interpolated = !same;
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<TraceGroup> group_by_point(const ResultSet& results) {
  std::map<std::size_t, TraceGroup> by_point;
  for (const auto& r : results.runs) {
    TraceGroup& g = by_point[r.point];
    if (g.name.empty()) g.name = r.overrides.empty() ? "point" + std::to_string(r.point) : r.overrides.dump();
    g.traces.push_back(r.trace);
  }
  std::vector<TraceGroup> groups;
  for (auto& [point, g] : by_point) groups.push_back(std::move(g));
  return groups;
}

void write_comparison_csv(std::ostream& out, std::span<const ComparisonRow> rows) {
  out << "group,checkpoint,mean,standard_error,count,interpolated\n";
  for (const auto& r : rows) {
    std::string name = r.group;
    if (name.find_first_of(",\"") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : name) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      name = quoted + "\"";
    }
    out << name << "," << format_double(r.checkpoint) << "," << format_double(r.mean) << ","
        << format_double(r.standard_error) << "," << r.count << "," << (r.interpolated ? "true" : "false") << "\n";
  }
}

std::vector<RunTrace> load_traces(const fs::path& path) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("trace_", 0) == 0 && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(path)) {
    files.push_back(path);
  }
  if (files.empty()) throw InputError("no trace files at " + path.string());
  std::vector<RunTrace> traces;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw InputError("cannot open " + f.string());
    traces.push_back(read_trace_csv(in));
  }
  return traces;
}

}  // namespace hfl
