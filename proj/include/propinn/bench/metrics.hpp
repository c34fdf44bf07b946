#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "propinn/core/autodiff.hpp"
#include "propinn/core/errors.hpp"
#include "propinn/core/parallel.hpp"
#include "propinn/pde/problem.hpp"

namespace propinn {

/// Relative errors of a prediction against a reference on the same points.
///
/// `rmae` and `rrmse` follow the printed formulas, both of which take a square
/// root of the ratio of sums:
///   rmae  = sqrt( sum|e| / sum|u| ),   rrmse = sqrt( sum e^2 / sum u^2 ).
/// `rel_l1` is the usual relative L1 error sum|e| / sum|u|. The usual
/// relative L2 error coincides with `rrmse`.
struct MetricsReport {
  double rmae = 0.0;
  double rel_l1 = 0.0;
  double rrmse = 0.0;
  double l1_numerator = 0.0;  // sum |e|
  std::size_t points = 0;

  // Filled in by the training drivers.
  double final_loss = 0.0;
  double final_res = 0.0;
  double final_ic = 0.0;
  double final_bc = 0.0;
  double wall_ms = 0.0;
  long iterations = 0;
};

inline MetricsReport compute_metrics(std::span<const double> prediction, std::span<const double> reference) {
  if (prediction.size() != reference.size()) throw ConfigError("prediction and reference grids differ in size");
  if (reference.empty()) throw ConfigError("empty metric grid");
  std::vector<double> ae(reference.size()), au(reference.size()), se(reference.size()), su(reference.size());
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double e = prediction[i] - reference[i];
    ae[i] = std::abs(e);
    au[i] = std::abs(reference[i]);
    se[i] = e * e;
    su[i] = reference[i] * reference[i];
  }
  const double sae = pairwise_sum(ae), sau = pairwise_sum(au), sse = pairwise_sum(se), ssu = pairwise_sum(su);
  if (!(sau > 0.0) || !(ssu > 0.0)) throw DegenerateReference("reference is identically zero");
  MetricsReport r;
  r.rel_l1 = sae / sau;
  r.rmae = std::sqrt(r.rel_l1);
  r.rrmse = std::sqrt(sse / ssu);
  r.l1_numerator = sae;
  r.points = reference.size();
  return r;
}

/// Held-out evaluation points with reference values (x fastest).
struct EvalGrid {
  int n_x = 0;
  int n_t = 0;
  Eigen::MatrixXd points;
  std::vector<double> reference;
};

inline EvalGrid make_eval_grid(const PdeProblem& problem, int n_x = 256, int n_t = 100) {
  if (!problem.reference) throw ConfigError("problem '" + problem.name + "' has no reference solution");
  EvalGrid g{n_x, n_t, tensor_grid(problem.domain, n_x, n_t), {}};
  g.reference.resize(static_cast<std::size_t>(g.points.cols()));
  for (Eigen::Index e = 0; e < g.points.cols(); ++e)
    g.reference[static_cast<std::size_t>(e)] =
        problem.reference(std::span<const double>(g.points.data() + e * g.points.rows(), g.points.rows()));
  return g;
}

/// First output channel on every grid point, evaluated in fixed-size chunks.
template <DifferentiableModel M>
std::vector<double> predict(const M& model, std::span<const double> params, const Eigen::MatrixXd& points) {
  const Eigen::Index n = points.cols();
  const Eigen::Index chunks = (n + kReductionChunk - 1) / kReductionChunk;
  std::vector<double> out(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t c) {
    const Eigen::Index b = static_cast<Eigen::Index>(c) * kReductionChunk;
    const Eigen::Index len = std::min(kReductionChunk, n - b);
    for (Eigen::Index s = b; s < b + len; s += kModelBatch) {
      const Eigen::Index w = std::min(kModelBatch, b + len - s);
      const Eigen::MatrixXd v = forward_values(model, params, points.middleCols(s, w));
      for (Eigen::Index i = 0; i < w; ++i) out[static_cast<std::size_t>(s + i)] = v(0, i);
    }
  });
  return out;
}

template <DifferentiableModel M>
MetricsReport evaluate_metrics(const M& model, std::span<const double> params, const EvalGrid& grid) {
  return compute_metrics(predict(model, params, grid.points), grid.reference);
}

}  // namespace propinn
