#pragma once

// Experiment runner: trains one configuration and writes every artifact to
// its output directory; repeat, sweep and diagnose build on it.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "propinn/bench/config.hpp"
#include "propinn/bench/metrics.hpp"
#include "propinn/diagnostics/correlation.hpp"
#include "propinn/training/train.hpp"

namespace propinn {

namespace fs = std::filesystem;

struct BoostSummary {
  int cases = 0;
  int assumption_ok = 0;
  int holds = 0;  // among assumption_ok cases
};

struct DiagnosticsReport {
  std::optional<double> map_mean;
  std::optional<double> map_median;
  std::optional<double> failure_threshold;
  std::optional<double> failure_fraction;
  std::optional<double> positive_ratio;
  std::optional<BoostSummary> boost;
};

struct RunResult {
  int status = 0;  // 0 finished, 2 aborted on a non-finite loss
  std::string message;
  MetricsReport metrics;
  std::vector<double> params;
  long lbfgs_evaluations = 0;
  long line_search_failures = 0;
  DiagnosticsReport diagnostics;
  fs::path dir;
};

namespace detail {

inline void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

/// Uniform point in the closed ball of radius r around the origin (2-D).
inline Eigen::Vector2d in_disc(Rng& rng, double r) {
  while (true) {
    const Eigen::Vector2d v(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    if (v.norm() <= 1.0) return v * r;
  }
}

inline nlohmann::json metrics_json(const MetricsReport& m) {
  return {{"rmae", m.rmae},
          {"rel_l1", m.rel_l1},
          {"rrmse", m.rrmse},
          {"l1_numerator", m.l1_numerator},
          {"points", m.points},
          {"final_loss", m.final_loss},
          {"final_res", m.final_res},
          {"final_ic", m.final_ic},
          {"final_bc", m.final_bc},
          {"wall_ms", m.wall_ms},
          {"iterations", m.iterations}};
}

}  // namespace detail

/// Boost inequality over random compliant pairs: |x - x'| <= R/3 and nine
/// offsets with norm <= R/3, drawn from the diagnostics stream of `seed`.
template <DifferentiableModel M>
BoostSummary boost_summary(const M& model, std::span<const double> params, const Domain& domain, int cases,
                           double radius, std::uint64_t seed) {
  Rng rng(derive_seed(seed, streams::kDiagnostics));
  BoostSummary s;
  for (int c = 0; c < cases; ++c) {
    Eigen::Vector2d x;
    for (int i = 0; i < 2; ++i) x(i) = rng.uniform(domain.lo[i], domain.hi[i]);
    const Eigen::Vector2d x2 = x + detail::in_disc(rng, radius / 3.0);
    Eigen::MatrixXd off(2, 9);
    for (int i = 0; i < 9; ++i) off.col(i) = detail::in_disc(rng, radius / 3.0);
    const auto r = boost_check(model, params, std::span<const double>(x.data(), 2),
                               std::span<const double>(x2.data(), 2), off, radius);
    ++s.cases;
    if (r.assumption_ok) {
      ++s.assumption_ok;
      if (r.holds) ++s.holds;
    }
  }
  return s;
}

/// Runs the enabled end-of-run diagnostics and writes their exports into `dir`.
template <DifferentiableModel M>
DiagnosticsReport run_diagnostics(const ExperimentConfig& c, const M& model, std::span<const double> params,
                                  const PdeProblem& problem, const fs::path& dir) {
  const auto& d = c.diagnostics;
  DiagnosticsReport rep;
  nlohmann::json j = nlohmann::json::object();
  if (d.correlation_map) {
    const auto field = correlation_map(model, params, equispaced_points(problem.domain, d.map_points), d.offset, c.model);
    const double threshold = d.failure_threshold.value_or(field.default_threshold());
    std::ofstream map(dir / "correlation_map.csv", std::ios::binary), mask(dir / "failure_mask.csv", std::ios::binary);
    write_correlation_csv(map, field);
    write_failure_mask_csv(mask, field, threshold);
    std::size_t failed = 0;
    for (double v : field.values) failed += v < threshold ? 1 : 0;
    rep.map_mean = field.mean();
    rep.map_median = field.median();
    rep.failure_threshold = threshold;
    rep.failure_fraction = static_cast<double>(failed) / static_cast<double>(field.values.size());
    j["correlation_map"] = {{"points", field.values.size()},
                            {"offset", d.offset},
                            {"mean", *rep.map_mean},
                            {"median", *rep.map_median},
                            {"failure_threshold", threshold},
                            {"failure_fraction", *rep.failure_fraction},
                            {"params_hash", field.params_hash}};
  }
  if (d.positive_ratio) {
    rep.positive_ratio = positive_ratio(model, params, equispaced_points(problem.domain, d.ratio_points), d.ratio_distance);
    j["positive_ratio"] = {{"points", d.ratio_points}, {"distance", d.ratio_distance}, {"ratio", *rep.positive_ratio}};
  }
  if (d.boost_check) {
    rep.boost = boost_summary(model, params, problem.domain, d.boost_cases, d.boost_radius, c.seeds.init);
    j["boost_check"] = {{"cases", rep.boost->cases},
                        {"radius", d.boost_radius},
                        {"assumption_ok", rep.boost->assumption_ok},
                        {"holds", rep.boost->holds}};
  }
  if (!j.empty()) detail::write_json(dir / "diagnostics.json", j);
  return rep;
}

/// Calls `f(model)` with the model the configuration describes.
template <class F>
decltype(auto) with_model(const ExperimentConfig& c, F&& f) {
  if (c.model == "mlp") {
    MlpConfig m = c.mlp;
    m.input_dim = 2;
    m.output_dim = 1;
    return f(Mlp(m));
  }
  if (c.model == "propinn") return f(ProPinn(c.propinn));
  throw ConfigError("unknown model '" + c.model + "'");
}

template <DifferentiableModel M>
RunResult run_model(const ExperimentConfig& c, const M& model) {
  const fs::path dir(c.output_dir);
  fs::create_directories(dir);
  nlohmann::json echo = to_json(c);
  echo["content_hash"] = content_hash(c);
  detail::write_json(dir / "config.json", echo);

  const PdeProblem problem = problem_for(c);
  const CollocationSet set = sample_collocation(problem, c.collocation);
  const LossWeights weights = weights_for(c, problem);
  const EvalGrid grid = make_eval_grid(problem, c.eval.n_x, c.eval.n_t);

  TrainSchedule schedule;
  schedule.optimizer = c.optimizer;
  schedule.iterations = c.iterations;
  schedule.lbfgs = c.lbfgs;
  schedule.adam = c.adam;
  schedule.eval_every = c.eval.every;
  schedule.perturbation_seed = c.seeds.perturbation;
  schedule.resample_perturbations = c.resample_perturbations;
  schedule.record_wall_time = c.record_wall_time;
  const M eval_model = model_for_evaluation(model, schedule);

  std::ofstream trace(dir / "trace.csv", std::ios::binary);
  write_trace_csv(trace, {});
  std::ofstream dynamics;
  Eigen::MatrixXd dyn_points;
  if (c.diagnostics.dynamics) {
    dynamics.open(dir / "dynamics.csv", std::ios::binary);
    dynamics << "iteration,mean_G,median_G\n";
    dyn_points = equispaced_points(problem.domain, c.diagnostics.dynamics_points);
  }
  schedule.on_row = [&](const TraceRow& row, std::span<const double> params) {
    std::ostringstream line;
    write_trace_csv(line, {row});
    const std::string text = line.str();
    trace << text.substr(text.find('\n') + 1) << std::flush;
    if (c.diagnostics.dynamics &&
        (row.iteration % c.diagnostics.dynamics_every == 0 || row.iteration == c.iterations)) {
      const auto f = correlation_map(eval_model, params, dyn_points, c.diagnostics.offset);
      dynamics << row.iteration << ',' << fmt17(f.mean()) << ',' << fmt17(f.median()) << '\n' << std::flush;
    }
  };

  RunResult out;
  out.dir = dir;
  try {
    auto r = train(model, model.init_params(c.seeds.init), problem, set, weights, schedule, &grid);
    out.metrics = r.metrics;
    out.params = r.state.params.values;
    out.lbfgs_evaluations = r.state.lbfgs.evaluations;
    out.line_search_failures = r.state.lbfgs.line_search_failures;
  } catch (const TrainingAborted& e) {
    out.status = 2;
    out.message = e.what();
    detail::write_json(dir / "snapshot.json",
                       {{"message", out.message}, {"iteration", e.iteration}, {"params", e.params},
                        {"gradient", e.gradient}});
    return out;
  }

  nlohmann::json mj = detail::metrics_json(out.metrics);
  mj["lbfgs_evaluations"] = out.lbfgs_evaluations;
  mj["line_search_failures"] = out.line_search_failures;
  mj["content_hash"] = echo["content_hash"];
  detail::write_json(dir / "metrics.json", mj);
  detail::write_json(dir / "params.json",
                     {{"model", c.model}, {"content_hash", echo["content_hash"]}, {"values", out.params}});

  const auto pred = predict(eval_model, out.params, grid.points);
  std::string sol = "x,t,u,reference\n", err = "x,t,error\n";
  for (Eigen::Index e = 0; e < grid.points.cols(); ++e) {
    const std::size_t i = static_cast<std::size_t>(e);
    const std::string xt = fmt17(grid.points(0, e)) + ',' + fmt17(grid.points(1, e)) + ',';
    sol += xt + fmt17(pred[i]) + ',' + fmt17(grid.reference[i]) + '\n';
    err += xt + fmt17(pred[i] - grid.reference[i]) + '\n';
  }
  detail::write_file(dir / "solution.csv", sol);
  detail::write_file(dir / "error_map.csv", err);

  out.diagnostics = run_diagnostics(c, eval_model, out.params, problem, dir);
  return out;
}

inline RunResult run_experiment(const ExperimentConfig& c) {
  validate(c);
  return with_model(c, [&](const auto& m) { return run_model(c, m); });
}

/// Diagnostics on parameters read from `params_path`, or on a fresh
/// initialization when the path is empty.
inline DiagnosticsReport diagnose(const ExperimentConfig& c, const std::string& params_path) {
  validate(c);
  return with_model(c, [&](const auto& m) {
    std::vector<double> params = m.init_params(c.seeds.init).values;
    if (!params_path.empty()) {
      const auto j = read_json_file(params_path);
      params = j.at("values").get<std::vector<double>>();
      if (params.size() != m.layout().total()) throw ConfigError(params_path + " does not match the model");
    }
    TrainSchedule s;
    s.perturbation_seed = c.seeds.perturbation;
    s.resample_perturbations = c.resample_perturbations;
    const fs::path dir(c.output_dir);
    fs::create_directories(dir);
    return run_diagnostics(c, model_for_evaluation(m, s), params, problem_for(c), dir);
  });
}

// ---------------------------------------------------------------------------
// Repeats and paired comparison
// ---------------------------------------------------------------------------

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single run
  std::vector<double> values;
};

inline Aggregate aggregate(std::vector<double> values) {
  if (values.empty()) throw ConfigError("nothing to aggregate");
  Aggregate a;
  a.values = std::move(values);
  const double n = static_cast<double>(a.values.size());
  for (double v : a.values) a.mean += v;
  a.mean /= n;
  if (a.values.size() > 1) {
    double ss = 0.0;
    for (double v : a.values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / (n - 1.0));
  }
  return a;
}

/// One-sided paired t-test of H1: mean(a - b) < 0.
struct PairedTest {
  long n = 0;
  double mean_diff = 0.0;
  double t = 0.0;
  double p_value = 1.0;
};

inline PairedTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ConfigError("paired t-test needs two equal samples of size >= 2");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const Aggregate g = aggregate(d);
  PairedTest t;
  t.n = static_cast<long>(d.size());
  t.mean_diff = g.mean;
  if (g.std == 0.0) {
    t.t = g.mean < 0.0 ? -std::numeric_limits<double>::infinity()
                       : (g.mean > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    t.p_value = g.mean < 0.0 ? 0.0 : (g.mean > 0.0 ? 1.0 : 0.5);
    return t;
  }
  t.t = g.mean / (g.std / std::sqrt(static_cast<double>(t.n)));
  t.p_value = boost::math::cdf(boost::math::students_t(static_cast<double>(t.n - 1)), t.t);
  return t;
}

/// Configuration of repeat `i`: every seed shifted by i, output in run_<i>.
inline ExperimentConfig repeat_config(const ExperimentConfig& base, int i, const fs::path& root) {
  ExperimentConfig c = base;
  const auto k = static_cast<std::uint64_t>(i);
  c.seeds.init += k;
  c.seeds.perturbation += k;
  c.seeds.sampling += k;
  c.collocation.seed = c.seeds.sampling;
  c.output_dir = (root / ("run_" + std::to_string(i))).string();
  return c;
}

inline nlohmann::json aggregate_json(const std::vector<RunResult>& runs) {
  std::vector<double> rmae, rel, rrmse;
  nlohmann::json per = nlohmann::json::array();
  for (const auto& r : runs) {
    rmae.push_back(r.metrics.rmae);
    rel.push_back(r.metrics.rel_l1);
    rrmse.push_back(r.metrics.rrmse);
    per.push_back({{"dir", r.dir.string()}, {"status", r.status}, {"rmae", r.metrics.rmae},
                   {"rel_l1", r.metrics.rel_l1}, {"rrmse", r.metrics.rrmse}});
  }
  auto stat = [](const std::vector<double>& v) {
    const Aggregate a = aggregate(v);
    return nlohmann::json{{"mean", a.mean}, {"std", a.std}, {"values", a.values}};
  };
  return {{"runs", per}, {"rmae", stat(rmae)}, {"rel_l1", stat(rel)}, {"rrmse", stat(rrmse)}};
}

/// Runs `n` seeds of `a` (and of `b` when given) and writes aggregate.json
/// under a's output directory. With `b` the report carries one-sided paired
/// t-tests of "a has lower error than b" per metric.
inline nlohmann::json repeat(const ExperimentConfig& a, int n, const std::optional<ExperimentConfig>& b = std::nullopt) {
  if (n < 1) throw ConfigError("repeat count must be >= 1");
  const fs::path root(a.output_dir);
  std::vector<RunResult> ra, rb;
  for (int i = 0; i < n; ++i) {
    ra.push_back(run_experiment(repeat_config(a, i, b ? root / "a" : root)));
    if (b) rb.push_back(run_experiment(repeat_config(*b, i, root / "b")));
  }
  nlohmann::json out;
  if (!b) {
    out = aggregate_json(ra);
  } else {
    out = {{"a", aggregate_json(ra)}, {"b", aggregate_json(rb)}};
    if (n >= 2) {
      nlohmann::json tests;
      for (const char* metric : {"rmae", "rel_l1", "rrmse"}) {
        const auto va = out["a"][metric]["values"].get<std::vector<double>>();
        const auto vb = out["b"][metric]["values"].get<std::vector<double>>();
        const PairedTest t = paired_t_test(va, vb);
        tests[metric] = {{"n", t.n}, {"mean_diff", t.mean_diff}, {"t", t.t}, {"p_value", t.p_value}};
      }
      out["paired_t_test"] = tests;
    }
  }
  fs::create_directories(root);
  detail::write_json(root / "aggregate.json", out);
  return out;
}

/// One run per value written at config path `path`, in sweep_<i>.
inline nlohmann::json sweep(const ExperimentConfig& base, const std::string& path,
                            const std::vector<nlohmann::json>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  const fs::path root(base.output_dir);
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < values.size(); ++i) {
    nlohmann::json j = to_json(base);
    apply_override(j, path + "=" + values[i].dump());
    ExperimentConfig c = from_json(j);
    c.output_dir = (root / ("sweep_" + std::to_string(i))).string();
    const RunResult r = run_experiment(c);
    out.push_back({{"dir", c.output_dir}, {"value", values[i]}, {"status", r.status}, {"rmae", r.metrics.rmae},
                   {"rel_l1", r.metrics.rel_l1}, {"rrmse", r.metrics.rrmse}});
  }
  fs::create_directories(root);
  detail::write_json(root / "sweep.json", {{"path", path}, {"runs", out}});
  return out;
}

}  // namespace propinn
