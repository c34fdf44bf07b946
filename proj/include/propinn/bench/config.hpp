#pragma once

// Experiment configuration: one JSON document, named profiles, and
// path=value overrides.

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "propinn/core/errors.hpp"
#include "propinn/core/jet_batch.hpp"
#include "propinn/models/mlp.hpp"
#include "propinn/models/propinn.hpp"
#include "propinn/pde/benchmarks.hpp"
#include "propinn/pde/reference_grid.hpp"
#include "propinn/training/train.hpp"

namespace propinn {

struct SeedSpec {
  std::uint64_t init = 0;
  std::uint64_t perturbation = 0;
  std::uint64_t sampling = 0;
};

struct EvalSpec {
  int n_x = 256;
  int n_t = 100;
  long every = 0;
};

struct DiagnosticsSpec {
  bool correlation_map = false;
  int map_points = 10000;
  std::vector<double> offset{0.01, 0.0};
  std::optional<double> failure_threshold;  // default: 1e-3 x median
  bool positive_ratio = false;
  int ratio_points = 10000;
  double ratio_distance = 1e-2;
  bool boost_check = false;
  int boost_cases = 200;
  double boost_radius = 0.09;
  /// Mean correlation over a coarse grid every `dynamics_every` iterations.
  bool dynamics = false;
  long dynamics_every = 100;
  int dynamics_points = 400;
};

struct ExperimentConfig {
  std::string profile = "desk";
  std::string problem = "convection";
  std::string model = "propinn";  // propinn | mlp
  MlpConfig mlp;
  ProPinnConfig propinn;
  CollocationSpec collocation = CollocationSpec::grid(101, 101);
  OptimizerKind optimizer = OptimizerKind::lbfgs;
  long iterations = 1000;
  LbfgsOptions lbfgs;
  AdamOptions adam;
  std::optional<LossWeights> weights;  // empty: the problem's defaults
  SeedSpec seeds;
  EvalSpec eval;
  bool resample_perturbations = true;
  bool record_wall_time = true;
  std::string output_dir = "runs/experiment";
  DiagnosticsSpec diagnostics;
};

// ---------------------------------------------------------------------------
// JSON mapping
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

inline void expect_known_keys(const nlohmann::json& j, std::initializer_list<const char*> keys,
                              const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

inline std::string activation_name(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
  }
  return "tanh";
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  json j;
  j["profile"] = c.profile;
  j["problem"] = c.problem;
  j["model"] = {
      {"kind", c.model},
      {"mlp",
       {{"hidden_width", c.mlp.hidden_width},
        {"depth", c.mlp.depth},
        {"activation", detail::activation_name(c.mlp.activation)}}},
      {"propinn",
       {{"d_model", c.propinn.d_model},
        {"num_scales", c.propinn.num_scales},
        {"region_sizes", c.propinn.region_sizes},
        {"perturb_counts", c.propinn.resolved().perturb_counts},
        {"projector_hidden", c.propinn.projector_hidden},
        {"mixer_hidden", c.propinn.mixer_hidden},
        {"head_hidden", c.propinn.head_hidden},
        {"head_depth", c.propinn.head_depth},
        {"activation", detail::activation_name(c.propinn.activation)},
        {"detach_perturbation", c.propinn.detach_perturbation}}},
  };
  if (c.collocation.kind == CollocationSpec::Kind::grid)
    j["collocation"] = {{"kind", "grid"}, {"n_x", c.collocation.n_x}, {"n_t", c.collocation.n_t}};
  else
    j["collocation"] = {{"kind", "random"}, {"n", c.collocation.n}};
  j["optimizer"] = {
      {"kind", c.optimizer == OptimizerKind::lbfgs ? "lbfgs" : "adam"},
      {"iterations", c.iterations},
      {"lbfgs",
       {{"history", c.lbfgs.history},
        {"c1", c.lbfgs.c1},
        {"c2", c.lbfgs.c2},
        {"max_line_search_evals", c.lbfgs.max_line_search_evals},
        {"curvature_eps", c.lbfgs.curvature_eps},
        {"fallback_step", c.lbfgs.fallback_step},
        {"inner_iterations", c.lbfgs.inner_iterations},
        {"tolerance_grad", c.lbfgs.tolerance_grad},
        {"tolerance_change", c.lbfgs.tolerance_change}}},
      {"adam", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
      {"resample_perturbations", c.resample_perturbations},
  };
  if (c.weights)
    j["weights"] = {{"res", c.weights->res}, {"ic", c.weights->ic}, {"bc", c.weights->bc}};
  else
    j["weights"] = nullptr;
  j["seeds"] = {{"init", c.seeds.init}, {"perturbation", c.seeds.perturbation}, {"sampling", c.seeds.sampling}};
  j["eval"] = {{"n_x", c.eval.n_x}, {"n_t", c.eval.n_t}, {"every", c.eval.every}};
  j["record_wall_time"] = c.record_wall_time;
  j["output_dir"] = c.output_dir;
  const auto& d = c.diagnostics;
  j["diagnostics"] = {
      {"correlation_map", d.correlation_map},
      {"map_points", d.map_points},
      {"offset", d.offset},
      {"failure_threshold", d.failure_threshold ? json(*d.failure_threshold) : json(nullptr)},
      {"positive_ratio", d.positive_ratio},
      {"ratio_points", d.ratio_points},
      {"ratio_distance", d.ratio_distance},
      {"boost_check", d.boost_check},
      {"boost_cases", d.boost_cases},
      {"boost_radius", d.boost_radius},
      {"dynamics", d.dynamics},
      {"dynamics_every", d.dynamics_every},
      {"dynamics_points", d.dynamics_points},
  };
  return j;
}

/// Defaults a named profile puts under the user's document.
inline nlohmann::json profile_defaults(const std::string& name) {
  if (name == "desk") return {{"model", {{"mlp", {{"hidden_width", 128}, {"depth", 4}}}}}};
  if (name == "paper") return {{"model", {{"mlp", {{"hidden_width", 512}, {"depth", 4}}}}}};
  throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

inline ExperimentConfig from_json(const nlohmann::json& in) {
  using detail::read_if;
  detail::expect_known_keys(in,
                            {"profile", "problem", "model", "collocation", "optimizer", "weights", "seeds", "eval",
                             "record_wall_time", "output_dir", "diagnostics", "content_hash"},
                            "config");
  ExperimentConfig c;
  read_if(in, "profile", c.profile);
  nlohmann::json j = profile_defaults(c.profile);
  j.merge_patch(in);

  try {
    read_if(j, "problem", c.problem);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      detail::expect_known_keys(m, {"kind", "mlp", "propinn"}, "model");
      read_if(m, "kind", c.model);
      if (m.contains("mlp")) {
        const auto& q = m.at("mlp");
        detail::expect_known_keys(q, {"hidden_width", "depth", "activation"}, "model.mlp");
        read_if(q, "hidden_width", c.mlp.hidden_width);
        read_if(q, "depth", c.mlp.depth);
        if (q.contains("activation")) c.mlp.activation = parse_activation(q.at("activation").get<std::string>());
      }
      if (m.contains("propinn")) {
        const auto& q = m.at("propinn");
        detail::expect_known_keys(q,
                                  {"d_model", "num_scales", "region_sizes", "perturb_counts", "projector_hidden",
                                   "mixer_hidden", "head_hidden", "head_depth", "activation", "detach_perturbation"},
                                  "model.propinn");
        read_if(q, "d_model", c.propinn.d_model);
        read_if(q, "num_scales", c.propinn.num_scales);
        read_if(q, "region_sizes", c.propinn.region_sizes);
        read_if(q, "perturb_counts", c.propinn.perturb_counts);
        read_if(q, "projector_hidden", c.propinn.projector_hidden);
        read_if(q, "mixer_hidden", c.propinn.mixer_hidden);
        read_if(q, "head_hidden", c.propinn.head_hidden);
        read_if(q, "head_depth", c.propinn.head_depth);
        read_if(q, "detach_perturbation", c.propinn.detach_perturbation);
        if (q.contains("activation"))
          c.propinn.activation = parse_activation(q.at("activation").get<std::string>());
      }
    }
    if (j.contains("collocation")) {
      const auto& q = j.at("collocation");
      detail::expect_known_keys(q, {"kind", "n_x", "n_t", "n"}, "collocation");
      const std::string kind = q.value("kind", "grid");
      if (kind == "grid")
        c.collocation = CollocationSpec::grid(q.value("n_x", 101), q.value("n_t", 101));
      else if (kind == "random")
        c.collocation = CollocationSpec::random(q.value("n", 10000), 0);
      else
        throw ConfigError("collocation.kind must be grid or random");
    }
    if (j.contains("optimizer")) {
      const auto& q = j.at("optimizer");
      detail::expect_known_keys(q, {"kind", "iterations", "lbfgs", "adam", "resample_perturbations"}, "optimizer");
      const std::string kind = q.value("kind", "lbfgs");
      if (kind == "lbfgs")
        c.optimizer = OptimizerKind::lbfgs;
      else if (kind == "adam")
        c.optimizer = OptimizerKind::adam;
      else
        throw ConfigError("optimizer.kind must be lbfgs or adam");
      read_if(q, "iterations", c.iterations);
      read_if(q, "resample_perturbations", c.resample_perturbations);
      if (q.contains("lbfgs")) {
        const auto& l = q.at("lbfgs");
        detail::expect_known_keys(l,
                                  {"history", "c1", "c2", "max_line_search_evals", "curvature_eps", "fallback_step",
                                   "inner_iterations", "tolerance_grad", "tolerance_change"},
                                  "optimizer.lbfgs");
        read_if(l, "history", c.lbfgs.history);
        read_if(l, "c1", c.lbfgs.c1);
        read_if(l, "c2", c.lbfgs.c2);
        read_if(l, "max_line_search_evals", c.lbfgs.max_line_search_evals);
        read_if(l, "curvature_eps", c.lbfgs.curvature_eps);
        read_if(l, "fallback_step", c.lbfgs.fallback_step);
        read_if(l, "inner_iterations", c.lbfgs.inner_iterations);
        read_if(l, "tolerance_grad", c.lbfgs.tolerance_grad);
        read_if(l, "tolerance_change", c.lbfgs.tolerance_change);
      }
      if (q.contains("adam")) {
        const auto& a = q.at("adam");
        detail::expect_known_keys(a, {"lr", "beta1", "beta2", "eps"}, "optimizer.adam");
        read_if(a, "lr", c.adam.lr);
        read_if(a, "beta1", c.adam.beta1);
        read_if(a, "beta2", c.adam.beta2);
        read_if(a, "eps", c.adam.eps);
      }
    }
    if (j.contains("weights") && !j.at("weights").is_null()) {
      const auto& q = j.at("weights");
      detail::expect_known_keys(q, {"res", "ic", "bc"}, "weights");
      LossWeights w;
      read_if(q, "res", w.res);
      read_if(q, "ic", w.ic);
      read_if(q, "bc", w.bc);
      c.weights = w;
    }
    if (j.contains("seeds")) {
      const auto& q = j.at("seeds");
      detail::expect_known_keys(q, {"init", "perturbation", "sampling"}, "seeds");
      read_if(q, "init", c.seeds.init);
      read_if(q, "perturbation", c.seeds.perturbation);
      read_if(q, "sampling", c.seeds.sampling);
    }
    if (j.contains("eval")) {
      const auto& q = j.at("eval");
      detail::expect_known_keys(q, {"n_x", "n_t", "every"}, "eval");
      read_if(q, "n_x", c.eval.n_x);
      read_if(q, "n_t", c.eval.n_t);
      read_if(q, "every", c.eval.every);
    }
    read_if(j, "record_wall_time", c.record_wall_time);
    read_if(j, "output_dir", c.output_dir);
    if (j.contains("diagnostics")) {
      const auto& q = j.at("diagnostics");
      detail::expect_known_keys(q,
                                {"correlation_map", "map_points", "offset", "failure_threshold", "positive_ratio",
                                 "ratio_points", "ratio_distance", "boost_check", "boost_cases", "boost_radius",
                                 "dynamics", "dynamics_every", "dynamics_points"},
                                "diagnostics");
      auto& d = c.diagnostics;
      read_if(q, "correlation_map", d.correlation_map);
      read_if(q, "map_points", d.map_points);
      read_if(q, "offset", d.offset);
      if (q.contains("failure_threshold") && !q.at("failure_threshold").is_null())
        d.failure_threshold = q.at("failure_threshold").get<double>();
      read_if(q, "positive_ratio", d.positive_ratio);
      read_if(q, "ratio_points", d.ratio_points);
      read_if(q, "ratio_distance", d.ratio_distance);
      read_if(q, "boost_check", d.boost_check);
      read_if(q, "boost_cases", d.boost_cases);
      read_if(q, "boost_radius", d.boost_radius);
      read_if(q, "dynamics", d.dynamics);
      read_if(q, "dynamics_every", d.dynamics_every);
      read_if(q, "dynamics_points", d.dynamics_points);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.collocation.seed = c.seeds.sampling;
  return c;
}

/// Checks every cross-field constraint and that all names resolve.
inline void validate(const ExperimentConfig& c) {
  if (c.problem != "convection" && c.problem != "reaction" && c.problem != "wave" && c.problem != "allen_cahn")
    throw ConfigError("unknown problem '" + c.problem + "'");
  if (c.model == "mlp") {
    MlpConfig m = c.mlp;
    m.validate();
  } else if (c.model == "propinn") {
    c.propinn.validate();
  } else {
    throw ConfigError("unknown model '" + c.model + "' (expected propinn or mlp)");
  }
  if (c.iterations < 0) throw ConfigError("iterations must be >= 0");
  if (c.eval.n_x < 2 || c.eval.n_t < 2) throw ConfigError("evaluation grid needs at least 2 x 2 points");
  if (c.eval.every < 0) throw ConfigError("eval.every must be >= 0");
  if (c.collocation.kind == CollocationSpec::Kind::grid && (c.collocation.n_x < 2 || c.collocation.n_t < 2))
    throw ConfigError("collocation grid needs at least 2 x 2 points");
  if (c.collocation.kind == CollocationSpec::Kind::random && c.collocation.n < 1)
    throw ConfigError("random collocation needs n >= 1");
  c.lbfgs.validate();
  c.adam.validate();
  if (c.weights) c.weights->validate();
  const auto& d = c.diagnostics;
  if (d.offset.size() != 2) throw ConfigError("diagnostics.offset must have one entry per coordinate");
  if (d.map_points < 1 || d.ratio_points < 1 || d.boost_cases < 1 || d.dynamics_points < 1)
    throw ConfigError("diagnostic point counts must be >= 1");
  if (!(d.ratio_distance >= 0.0) || !(d.boost_radius > 0.0)) throw ConfigError("diagnostic distances out of range");
  if (d.dynamics_every < 1) throw ConfigError("diagnostics.dynamics_every must be >= 1");
}

/// Parses "a.b.c=value" and writes value (as JSON when it parses, else as a
/// string) at that path.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not path=value");
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override path '" + path + "' has an empty component");
    if (!node->is_object()) *node = nlohmann::json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read " + path);
  nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path + " is not valid JSON");
  return j;
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  nlohmann::json j = read_json_file(path);
  for (const auto& o : overrides) apply_override(j, o);
  ExperimentConfig c = from_json(j);
  validate(c);
  return c;
}

/// Hash of the resolved configuration; two configs with equal hashes run
/// identically.
inline std::string content_hash(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("output_dir");
  return "fnv1a64:" + hex64(fnv1a64(j.dump()));
}

inline PdeProblem problem_for(const ExperimentConfig& c) { return make_problem(c.problem); }

inline LossWeights weights_for(const ExperimentConfig& c, const PdeProblem& p) {
  return c.weights ? *c.weights : p.weights;
}

}  // namespace propinn
