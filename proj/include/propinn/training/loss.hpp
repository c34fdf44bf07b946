#pragma once

#include <span>
#include <vector>

#include "propinn/core/autodiff.hpp"
#include "propinn/pde/problem.hpp"

namespace propinn {

struct LossBreakdown {
  double total = 0.0;
  double res = 0.0;
  double ic = 0.0;
  double bc = 0.0;
  std::vector<double> gradient;  // empty unless requested
};

/// L = lambda_res mean|F|^2 + lambda_ic mean|I|^2 + lambda_bc mean|B|^2 and,
/// optionally, its exact gradient over the parameters.
template <DifferentiableModel M>
LossBreakdown composite_loss(const M& model, std::span<const double> params, const PdeProblem& problem,
                             const CollocationSet& set, const LossWeights& weights, bool with_gradient) {
  const auto terms = loss_terms(problem, set, weights);
  LossValue v = evaluate_loss(model, params, terms, with_gradient);
  return {v.total, v.terms[0], v.terms[1], v.terms[2], std::move(v.gradient)};
}

}  // namespace propinn
