#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "propinn/core/errors.hpp"

namespace propinn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(lr > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0))
      throw ConfigError("invalid Adam hyperparameters");
  }
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

/// Bias-corrected Adam update of `params` in place.
inline void adam_step(std::span<double> params, AdamState& state, std::span<const double> grad,
                      const AdamOptions& opt) {
  if (grad.size() != params.size()) throw ConfigError("gradient length does not match parameters");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw ConfigError("Adam moments do not match parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = opt.beta1 * state.m[i] + (1.0 - opt.beta1) * grad[i];
    state.v[i] = opt.beta2 * state.v[i] + (1.0 - opt.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
  }
}

}  // namespace propinn
