#pragma once

// Full-batch training loops. Models that carry random perturbations get a
// fresh batch at the start of each iteration; the batch stays frozen for
// every evaluation inside that iteration, line search included.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "propinn/bench/metrics.hpp"
#include "propinn/core/errors.hpp"
#include "propinn/core/flat_params.hpp"
#include "propinn/core/rng.hpp"
#include "propinn/pde/reference_grid.hpp"
#include "propinn/training/adam.hpp"
#include "propinn/training/lbfgs.hpp"
#include "propinn/training/loss.hpp"

namespace propinn {

enum class OptimizerKind { lbfgs, adam };

struct TraceRow {
  long iteration = 0;
  double total = 0.0;
  double res = 0.0;
  double ic = 0.0;
  double bc = 0.0;
  double rmae = std::numeric_limits<double>::quiet_NaN();  // NaN when not evaluated
  double rrmse = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
};

struct TrainSchedule {
  OptimizerKind optimizer = OptimizerKind::lbfgs;
  long iterations = 1000;
  LbfgsOptions lbfgs;
  AdamOptions adam;
  /// Test metrics every K iterations; 0 means only at the start and the end.
  long eval_every = 0;
  std::uint64_t perturbation_seed = 0;
  bool resample_perturbations = true;
  /// Off gives traces that are byte-identical across runs.
  bool record_wall_time = true;
  /// Called with every trace row and the parameters it describes.
  std::function<void(const TraceRow&, std::span<const double> params)> on_row;

  void validate() const {
    if (iterations < 0) throw ConfigError("iteration budget must be >= 0");
    if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
    lbfgs.validate();
    adam.validate();
  }
};

struct TrainState {
  FlatParams params;
  long iteration = 0;
  AdamState adam;
  LbfgsState lbfgs;
  std::vector<TraceRow> trace;
  /// Perturbation seed used by each iteration (empty for models without one).
  std::vector<std::uint64_t> perturbation_seeds;
};

/// Non-finite loss at the current iterate. Carries the last parameters and
/// gradient for post-mortem inspection.
class TrainingAborted : public DivergenceError {
 public:
  TrainingAborted(const std::string& what, long iteration, std::vector<double> params, std::vector<double> gradient)
      : DivergenceError(what), iteration(iteration), params(std::move(params)), gradient(std::move(gradient)) {}
  long iteration;
  std::vector<double> params;
  std::vector<double> gradient;
};

template <class M>
concept Resamplable = requires(const M& m, std::uint64_t s) {
  { m.resampled(s) } -> std::same_as<M>;
};

/// The model with the perturbations used for iteration `k` (k >= 1) or, for
/// k = 0, the initial evaluation.
template <DifferentiableModel M>
M model_for_iteration(const M& model, const TrainSchedule& s, long k) {
  if constexpr (Resamplable<M>) {
    if (s.resample_perturbations) return model.resampled(derive_seed(s.perturbation_seed, streams::kPerturbation,
                                                                     static_cast<std::uint64_t>(k)));
  }
  return model;
}

/// The model used for test metrics: a fixed perturbation batch per seed.
template <DifferentiableModel M>
M model_for_evaluation(const M& model, const TrainSchedule& s) {
  if constexpr (Resamplable<M>) {
    if (s.resample_perturbations) return model.resampled(derive_seed(s.perturbation_seed, streams::kEvaluation));
  }
  return model;
}

template <DifferentiableModel M>
struct TrainResult {
  TrainState state;
  M model;  // carries the perturbations of the last iteration
  MetricsReport metrics;  // test metrics of the final parameters (zeros without an eval grid)
};

template <DifferentiableModel M>
TrainResult<M> train(const M& model, FlatParams init, const PdeProblem& problem, const CollocationSet& set,
                     const LossWeights& weights, const TrainSchedule& schedule, const EvalGrid* eval = nullptr) {
  schedule.validate();
  weights.validate();
  if (init.size() != model.layout().total()) throw ConfigError("initial parameters do not match the model");
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    if (!schedule.record_wall_time) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  };

  TrainResult<M> out{TrainState{std::move(init)}, model_for_iteration(model, schedule, 0), {}};
  TrainState& st = out.state;
  const M eval_model = model_for_evaluation(model, schedule);

  auto abort_if_nonfinite = [&](const LossBreakdown& b, std::span<const double> g) {
    if (!std::isfinite(b.total))
      throw TrainingAborted("non-finite loss at iteration " + std::to_string(st.iteration), st.iteration,
                            st.params.values, std::vector<double>(g.begin(), g.end()));
  };
  auto row_from = [&](const LossBreakdown& b) {
    TraceRow r;
    r.iteration = st.iteration;
    r.total = b.total;
    r.res = b.res;
    r.ic = b.ic;
    r.bc = b.bc;
    const bool due = st.iteration == 0 || st.iteration == schedule.iterations ||
                     (schedule.eval_every > 0 && st.iteration % schedule.eval_every == 0);
    if (eval && due) {
      const auto m = evaluate_metrics(eval_model, st.params.values, *eval);
      r.rmae = m.rmae;
      r.rrmse = m.rrmse;
    }
    r.wall_ms = elapsed_ms();
    return r;
  };

  LossBreakdown current = composite_loss(out.model, st.params.values, problem, set, weights, true);
  abort_if_nonfinite(current, current.gradient);
  st.trace.push_back(row_from(current));
  if (schedule.on_row) schedule.on_row(st.trace.back(), st.params.values);

  for (long k = 1; k <= schedule.iterations; ++k) {
    const M mk = model_for_iteration(model, schedule, k);
    if constexpr (Resamplable<M>) {
      if (schedule.resample_perturbations) st.perturbation_seeds.push_back(mk.perturbations().seed);
    }
    const bool objective_changed = Resamplable<M> && schedule.resample_perturbations;

    if (schedule.optimizer == OptimizerKind::adam) {
      // The row records the loss where the gradient was taken.
      current = composite_loss(mk, st.params.values, problem, set, weights, true);
      abort_if_nonfinite(current, current.gradient);
      adam_step(st.params.values, st.adam, current.gradient, schedule.adam);
    } else {
      if (objective_changed) st.lbfgs.valid = false;
      if (!st.lbfgs.valid && k == 1 && !objective_changed) {
        st.lbfgs.f = current.total;
        st.lbfgs.g = current.gradient;
        st.lbfgs.valid = true;
      }
      const bool fresh = !st.lbfgs.valid;
      std::vector<LossBreakdown> evals;
      Objective f = [&](std::span<const double> x, std::span<double> g) {
        LossBreakdown b = composite_loss(mk, x, problem, set, weights, true);
        std::copy(b.gradient.begin(), b.gradient.end(), g.begin());
        const double v = b.total;
        b.gradient.clear();
        evals.push_back(std::move(b));
        return v;
      };
      const LbfgsStepInfo info = lbfgs_step(st.params.values, st.lbfgs, f, schedule.lbfgs);
      if (info.step_length > 0.0)
        current = evals.at(static_cast<std::size_t>(info.accepted_eval));
      else if (fresh)
        current = evals.front();
      abort_if_nonfinite(current, st.lbfgs.g);
    }
    st.iteration = k;
    st.trace.push_back(row_from(current));
    if (schedule.on_row) schedule.on_row(st.trace.back(), st.params.values);
    out.model = mk;
  }
  if (eval) {
    out.metrics = evaluate_metrics(eval_model, st.params.values, *eval);
  }
  const TraceRow& last = st.trace.back();
  out.metrics.final_loss = last.total;
  out.metrics.final_res = last.res;
  out.metrics.final_ic = last.ic;
  out.metrics.final_bc = last.bc;
  out.metrics.wall_ms = elapsed_ms();
  out.metrics.iterations = st.iteration;
  return out;
}

/// iteration,total_loss,res_loss,ic_loss,bc_loss,rmae,rrmse,wall_ms
inline void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows) {
  auto field = [](double v) { return std::isnan(v) ? std::string() : fmt17(v); };
  os << "iteration,total_loss,res_loss,ic_loss,bc_loss,rmae,rrmse,wall_ms\n";
  for (const auto& r : rows)
    os << r.iteration << ',' << fmt17(r.total) << ',' << fmt17(r.res) << ',' << fmt17(r.ic) << ',' << fmt17(r.bc)
       << ',' << field(r.rmae) << ',' << field(r.rrmse) << ',' << fmt17(r.wall_ms) << '\n';
}

}  // namespace propinn
