#pragma once

// Limited-memory BFGS with a strong-Wolfe line search (cubic interpolation,
// bracketing then zoom).

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "propinn/core/errors.hpp"

namespace propinn {

/// f(x), writing the gradient into `grad`.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct LbfgsOptions {
  int history = 50;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search_evals = 25;
  double curvature_eps = 1e-10;  // pairs with s'y at or below this are skipped
  double fallback_step = 1e-4;   // length of the gradient step taken when the line search fails
  int inner_iterations = 1;      // quasi-Newton updates per step
  double tolerance_grad = 0.0;   // stop when max |g| <= this
  double tolerance_change = 1e-14;

  void validate() const {
    if (history < 0) throw ConfigError("L-BFGS history must be >= 0");
    if (!(c1 > 0.0 && c1 < c2 && c2 < 1.0)) throw ConfigError("need 0 < c1 < c2 < 1");
    if (max_line_search_evals < 1 || inner_iterations < 1) throw ConfigError("L-BFGS budgets must be >= 1");
    if (!(fallback_step > 0.0)) throw ConfigError("fallback step must be positive");
  }
};

struct LbfgsState {
  std::deque<std::vector<double>> s, y;
  std::deque<double> rho;
  long iterations = 0;
  long evaluations = 0;
  long line_search_failures = 0;
  long skipped_pairs = 0;
  /// Value and gradient at the current point under the current objective.
  /// Clear `valid` whenever the objective changes between steps.
  double f = 0.0;
  std::vector<double> g;
  bool valid = false;

  std::size_t history_size() const { return s.size(); }
  void clear_history() {
    s.clear();
    y.clear();
    rho.clear();
  }
};

struct LbfgsStepInfo {
  double f_before = 0.0;
  double f_after = 0.0;
  double step_length = 0.0;
  int evaluations = 0;
  /// Index, in call order within this step, of the evaluation at the accepted point.
  int accepted_eval = 0;
  bool line_search_failed = false;
  bool converged = false;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

/// Minimizer of the cubic through (x1, f1, g1), (x2, f2, g2), clamped to bounds.
inline double cubic_interpolate(double x1, double f1, double g1, double x2, double f2, double g2, double lo,
                                double hi) {
  const double mid = 0.5 * (lo + hi);
  if (!std::isfinite(f1) || !std::isfinite(f2) || !std::isfinite(g1) || !std::isfinite(g2)) return mid;
  const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
  const double d2sq = d1 * d1 - g1 * g2;
  if (d2sq < 0.0) return mid;
  const double d2 = std::sqrt(d2sq);
  const double t = (x1 <= x2) ? x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
                              : x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2));
  if (!std::isfinite(t)) return mid;
  return std::min(std::max(t, lo), hi);
}

struct Trial {
  double t = 0.0;
  double f = 0.0;
  double gtd = 0.0;
  std::vector<double> g;
  int eval = 0;
};

struct LineSearchResult {
  Trial best;
  int evals = 0;
  bool wolfe = false;
};

/// Strong-Wolfe search along d from x (value f0, slope gtd0 < 0).
inline LineSearchResult strong_wolfe(const std::function<Trial(double)>& eval, double f0, std::span<const double> g0,
                                     double gtd0, double t, double d_norm, const LbfgsOptions& opt) {
  Trial prev{0.0, f0, gtd0, std::vector<double>(g0.begin(), g0.end()), 0};
  Trial cur = eval(t);
  int evals = 1;
  std::array<Trial, 2> bracket;
  bool have_bracket = false;
  bool done = false;

  int it = 0;
  while (it < opt.max_line_search_evals) {
    if (cur.f > f0 + opt.c1 * cur.t * gtd0 || (it > 1 && cur.f >= prev.f)) {
      bracket = {prev, cur};
      have_bracket = true;
      break;
    }
    if (std::abs(cur.gtd) <= -opt.c2 * gtd0) {
      bracket = {cur, cur};
      have_bracket = true;
      done = true;
      break;
    }
    if (cur.gtd >= 0.0) {
      bracket = {prev, cur};
      have_bracket = true;
      break;
    }
    if (evals >= opt.max_line_search_evals) break;
    const double lo = cur.t + 0.01 * (cur.t - prev.t);
    const double hi = cur.t * 10.0;
    const double next = cubic_interpolate(prev.t, prev.f, prev.gtd, cur.t, cur.f, cur.gtd, lo, hi);
    prev = std::move(cur);
    cur = eval(next);
    ++evals;
    ++it;
  }
  if (!have_bracket) {
    // Budget spent while still descending: keep the better of start and last.
    Trial start{0.0, f0, gtd0, std::vector<double>(g0.begin(), g0.end()), 0};
    bracket = {start, cur};
  }

  int low = bracket[0].f <= bracket[1].f ? 0 : 1;
  int high = 1 - low;
  bool insufficient = false;
  while (!done && evals < opt.max_line_search_evals) {
    if (std::abs(bracket[1].t - bracket[0].t) * d_norm < opt.tolerance_change) break;
    const double bmin = std::min(bracket[0].t, bracket[1].t);
    const double bmax = std::max(bracket[0].t, bracket[1].t);
    double tz = cubic_interpolate(bracket[0].t, bracket[0].f, bracket[0].gtd, bracket[1].t, bracket[1].f,
                                  bracket[1].gtd, bmin, bmax);
    const double eps = 0.1 * (bmax - bmin);
    if (std::min(bmax - tz, tz - bmin) < eps) {
      if (insufficient || tz >= bmax || tz <= bmin) {
        tz = std::abs(tz - bmax) < std::abs(tz - bmin) ? bmax - eps : bmin + eps;
        insufficient = false;
      } else {
        insufficient = true;
      }
    } else {
      insufficient = false;
    }
    Trial z = eval(tz);
    ++evals;
    if (z.f > f0 + opt.c1 * z.t * gtd0 || z.f >= bracket[low].f) {
      bracket[high] = std::move(z);
    } else {
      if (std::abs(z.gtd) <= -opt.c2 * gtd0) {
        done = true;
      } else if (z.gtd * (bracket[high].t - bracket[low].t) >= 0.0) {
        bracket[high] = bracket[low];
      }
      bracket[low] = std::move(z);
    }
    low = bracket[0].f <= bracket[1].f ? 0 : 1;
    high = 1 - low;
  }
  return {bracket[low], evals, done};
}

}  // namespace detail

/// One L-BFGS step: up to `inner_iterations` quasi-Newton updates, each with
/// its own line search, on an objective that is fixed for the whole step.
/// A line search that ends without sufficient decrease is replaced by a short
/// normalized gradient step (taken only if it lowers f) and counted in
/// `line_search_failures`; the history is then reset.
inline LbfgsStepInfo lbfgs_step(std::vector<double>& x, LbfgsState& state, const Objective& objective,
                                const LbfgsOptions& opt) {
  opt.validate();
  const std::size_t n = x.size();
  LbfgsStepInfo info;
  int eval_index = 0;

  if (!state.valid || state.g.size() != n) {
    state.g.assign(n, 0.0);
    state.f = objective(x, state.g);
    ++state.evaluations;
    state.valid = true;
    ++eval_index;
  }
  info.f_before = state.f;
  info.f_after = state.f;
  if (!std::isfinite(state.f)) return info;

  std::vector<double> d(n), x_trial(n);
  for (int inner = 0; inner < opt.inner_iterations; ++inner) {
    std::vector<double>& g = state.g;
    if (detail::max_abs(g) <= opt.tolerance_grad) {
      info.converged = true;
      break;
    }

    // Two-loop recursion.
    auto set_steepest = [&] {
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
    };
    set_steepest();
    const std::size_t m = state.s.size();
    if (m > 0) {
      std::vector<double> alpha(m);
      for (std::size_t k = m; k-- > 0;) {
        alpha[k] = state.rho[k] * detail::dot(state.s[k], d);
        for (std::size_t i = 0; i < n; ++i) d[i] -= alpha[k] * state.y[k][i];
      }
      const double gamma = detail::dot(state.s.back(), state.y.back()) / detail::dot(state.y.back(), state.y.back());
      for (double& v : d) v *= gamma;
      for (std::size_t k = 0; k < m; ++k) {
        const double beta = state.rho[k] * detail::dot(state.y[k], d);
        for (std::size_t i = 0; i < n; ++i) d[i] += (alpha[k] - beta) * state.s[k][i];
      }
    }
    double gtd = detail::dot(g, d);
    if (!(gtd < 0.0)) {
      state.clear_history();
      set_steepest();
      gtd = detail::dot(g, d);
    }
    double l1 = 0.0;
    for (double v : g) l1 += std::abs(v);
    const double t0 = state.s.empty() ? std::min(1.0, 1.0 / l1) : 1.0;

    auto eval = [&](double t) {
      detail::Trial tr;
      tr.t = t;
      tr.g.assign(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) x_trial[i] = x[i] + t * d[i];
      tr.f = objective(x_trial, tr.g);
      ++state.evaluations;
      tr.eval = eval_index++;
      if (!std::isfinite(tr.f)) {
        tr.f = std::numeric_limits<double>::infinity();
        tr.gtd = std::numeric_limits<double>::infinity();
      } else {
        tr.gtd = detail::dot(tr.g, d);
      }
      return tr;
    };
    const double f_old = state.f;
    auto ls = detail::strong_wolfe(eval, state.f, g, gtd, t0, detail::max_abs(d), opt);
    info.evaluations += ls.evals;
    detail::Trial& acc = ls.best;
    const bool decreased = acc.t > 0.0 && std::isfinite(acc.f) && acc.f <= f_old + opt.c1 * acc.t * gtd;

    if (!decreased) {
      ++state.line_search_failures;
      info.line_search_failed = true;
      state.clear_history();
      const double gn = std::sqrt(detail::dot(g, g));
      const double t = opt.fallback_step / gn;
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      detail::Trial fb = eval(t);
      ++info.evaluations;
      if (std::isfinite(fb.f) && fb.f < f_old) {
        for (std::size_t i = 0; i < n; ++i) x[i] += t * d[i];
        state.f = fb.f;
        state.g = std::move(fb.g);
        info.accepted_eval = fb.eval;
        info.step_length = t;
      }
      ++state.iterations;
      break;
    }

    // Curvature pair from gradients of the same objective.
    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = acc.t * d[i];
      y[i] = acc.g[i] - g[i];
    }
    const double sy = detail::dot(s, y);
    if (opt.history > 0 && sy > opt.curvature_eps) {
      if (static_cast<int>(state.s.size()) == opt.history) {
        state.s.pop_front();
        state.y.pop_front();
        state.rho.pop_front();
      }
      state.s.push_back(s);
      state.y.push_back(std::move(y));
      state.rho.push_back(1.0 / sy);
    } else if (opt.history > 0) {
      ++state.skipped_pairs;
    }
    for (std::size_t i = 0; i < n; ++i) x[i] += s[i];
    state.f = acc.f;
    state.g = std::move(acc.g);
    info.accepted_eval = acc.eval;
    info.step_length = acc.t;
    ++state.iterations;
    if (std::abs(state.f - f_old) < opt.tolerance_change * std::max(1.0, std::abs(f_old)) ||
        detail::max_abs(s) < opt.tolerance_change)
      break;
  }
  info.f_after = state.f;
  return info;
}

/// Runs lbfgs_step until `max_steps` or convergence on a fixed objective.
inline LbfgsState lbfgs_minimize(std::vector<double>& x, const Objective& objective, const LbfgsOptions& opt,
                                 int max_steps) {
  LbfgsState state;
  for (int k = 0; k < max_steps; ++k) {
    const auto info = lbfgs_step(x, state, objective, opt);
    if (info.converged) break;
  }
  return state;
}

}  // namespace propinn
