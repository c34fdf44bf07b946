#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "propinn/core/autodiff.hpp"
#include "propinn/core/condition.hpp"
#include "propinn/core/errors.hpp"
#include "propinn/core/jet.hpp"
#include "propinn/core/rng.hpp"
#include "propinn/models/feature_model.hpp"

namespace propinn {

struct LossWeights {
  double res = 1.0;
  double ic = 1.0;
  double bc = 1.0;

  void validate() const {
    for (double w : {res, ic, bc})
      if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and nonnegative");
  }
};

/// Axis-aligned box; the last coordinate is time.
struct Domain {
  std::vector<double> lo, hi;

  int dims() const { return static_cast<int>(lo.size()); }
  double t_lo() const { return lo.back(); }
  double t_hi() const { return hi.back(); }

  bool contains(std::span<const double> x, double tol = 1e-12) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (x[i] < lo[i] - tol || x[i] > hi[i] + tol) return false;
    return true;
  }
};

enum class BoundaryKind { periodic, periodic_with_derivative, dirichlet_zero };

/// A benchmark PDE on one spatial dimension plus time: residual operator F,
/// initial condition I, boundary condition B, default loss weights and a
/// reference solution.
struct PdeProblem {
  std::string name;
  Domain domain;
  int output_dim = 1;
  Condition residual;
  Condition initial;
  Condition boundary;  // arity 2: (x = lo, t) paired with (x = hi, t)
  BoundaryKind boundary_kind = BoundaryKind::periodic;
  LossWeights weights;
  std::function<double(std::span<const double>)> reference;
  /// Closed-form reference for exact jets; empty for gridded references.
  ClosedForm reference_closed_form;
  /// RMS residual bound for the reference solution on interior points.
  double residual_tolerance = 1e-8;
};

/// F(field)(x) for a closed-form field.
inline std::vector<double> residual_of(const PdeProblem& problem, const ClosedForm& field, std::span<const double> x) {
  const Jet2 jet = closed_form_jet(field, x);
  std::vector<double> out(static_cast<std::size_t>(problem.residual.components()), 0.0);
  problem.residual(std::span<const Jet2>(&jet, 1), x, std::span<double>(out));
  return out;
}

/// RMS of the residual of a closed-form field over the columns of `points`.
inline double residual_rms(const PdeProblem& problem, const ClosedForm& field, const Eigen::MatrixXd& points) {
  double sum = 0.0;
  std::size_t n = 0;
  for (Eigen::Index e = 0; e < points.cols(); ++e) {
    const std::span<const double> x(points.data() + e * points.rows(), static_cast<std::size_t>(points.rows()));
    for (double r : residual_of(problem, field, x)) {
      sum += r * r;
      ++n;
    }
  }
  return n ? std::sqrt(sum / static_cast<double>(n)) : 0.0;
}

/// Uniform interior samples, `dims x n`.
inline Eigen::MatrixXd uniform_interior(const Domain& d, Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd pts(d.dims(), n);
  for (Eigen::Index e = 0; e < n; ++e)
    for (int i = 0; i < d.dims(); ++i) pts(i, e) = rng.uniform(d.lo[i], d.hi[i]);
  return pts;
}

/// Throws unless the closed-form reference satisfies its own residual.
inline void self_validate(const PdeProblem& problem) {
  if (!problem.reference_closed_form) return;
  const Eigen::MatrixXd pts = uniform_interior(problem.domain, 64, 0x5e1f);
  const double rms = residual_rms(problem, problem.reference_closed_form, pts);
  if (!(rms <= problem.residual_tolerance))
    throw ConfigError(problem.name + ": reference residual RMS " + std::to_string(rms) + " exceeds tolerance");
}

// ---------------------------------------------------------------------------
// Collocation
// ---------------------------------------------------------------------------

struct CollocationSpec {
  enum class Kind { grid, random } kind = Kind::grid;
  int n_x = 101;
  int n_t = 101;
  int n = 0;  // random: interior count
  std::uint64_t seed = 0;

  static CollocationSpec grid(int nx, int nt) { return {Kind::grid, nx, nt, 0, 0}; }
  static CollocationSpec random(int n, std::uint64_t seed) { return {Kind::random, 0, 0, n, seed}; }
};

/// Points are stored column-wise (dims x count). Residual points cover the
/// whole grid including its faces; initial points lie on t = t_lo; boundary
/// entries pair (x_lo, t) with (x_hi, t).
struct CollocationSet {
  Eigen::MatrixXd interior;
  Eigen::MatrixXd initial;
  Eigen::MatrixXd boundary_left;
  Eigen::MatrixXd boundary_right;
  CollocationSpec spec;

  Eigen::Index n_res() const { return interior.cols(); }
  Eigen::Index n_ic() const { return initial.cols(); }
  Eigen::Index n_bc() const { return boundary_left.cols(); }
};

inline std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[i] = (n == 1) ? a : a + (b - a) * static_cast<double>(i) / (n - 1);
  if (n > 1) v.back() = b;
  return v;
}

/// Tensor grid, x fastest: column index = j_t * n_x + i_x.
inline Eigen::MatrixXd tensor_grid(const Domain& d, int n_x, int n_t) {
  const auto xs = linspace(d.lo[0], d.hi[0], n_x);
  const auto ts = linspace(d.t_lo(), d.t_hi(), n_t);
  Eigen::MatrixXd g(2, static_cast<Eigen::Index>(n_x) * n_t);
  for (int j = 0; j < n_t; ++j)
    for (int i = 0; i < n_x; ++i) {
      g(0, j * n_x + i) = xs[i];
      g(1, j * n_x + i) = ts[j];
    }
  return g;
}

inline CollocationSet sample_collocation(const PdeProblem& problem, const CollocationSpec& spec) {
  const Domain& d = problem.domain;
  if (d.dims() != 2) throw ConfigError("collocation sampling supports one space dimension plus time");
  CollocationSet set;
  set.spec = spec;
  if (spec.kind == CollocationSpec::Kind::grid) {
    if (spec.n_x < 2 || spec.n_t < 2) throw ConfigError("grid collocation needs at least 2 points per axis");
    set.interior = tensor_grid(d, spec.n_x, spec.n_t);
    set.initial = set.interior.leftCols(spec.n_x);
    set.boundary_left.resize(2, spec.n_t);
    set.boundary_right.resize(2, spec.n_t);
    for (int j = 0; j < spec.n_t; ++j) {
      set.boundary_left.col(j) = set.interior.col(static_cast<Eigen::Index>(j) * spec.n_x);
      set.boundary_right.col(j) = set.interior.col(static_cast<Eigen::Index>(j) * spec.n_x + spec.n_x - 1);
    }
    return set;
  }
  if (spec.n < 2) throw ConfigError("random collocation needs at least 2 points");
  Rng rng(derive_seed(spec.seed, streams::kSampling));
  const int n_edge = std::max(2, static_cast<int>(std::lround(std::sqrt(static_cast<double>(spec.n)))));
  set.interior.resize(2, spec.n);
  for (int e = 0; e < spec.n; ++e) {
    set.interior(0, e) = rng.uniform(d.lo[0], d.hi[0]);
    set.interior(1, e) = rng.uniform(d.t_lo(), d.t_hi());
  }
  set.initial.resize(2, n_edge);
  for (int e = 0; e < n_edge; ++e) {
    set.initial(0, e) = rng.uniform(d.lo[0], d.hi[0]);
    set.initial(1, e) = d.t_lo();
  }
  set.boundary_left.resize(2, n_edge);
  set.boundary_right.resize(2, n_edge);
  for (int e = 0; e < n_edge; ++e) {
    const double t = rng.uniform(d.t_lo(), d.t_hi());
    set.boundary_left.col(e) << d.lo[0], t;
    set.boundary_right.col(e) << d.hi[0], t;
  }
  return set;
}

/// The three weighted mean-square terms of the composite PINN loss. Pointers
/// refer into `problem` and `set`, which must outlive the result.
inline std::vector<LossTermRef> loss_terms(const PdeProblem& problem, const CollocationSet& set,
                                           const LossWeights& w) {
  w.validate();
  auto mean_weight = [](double lambda, Eigen::Index n, const char* what) {
    if (n == 0) {
      if (lambda != 0.0) throw ConfigError(std::string("empty ") + what + " collocation subset with nonzero weight");
      return 0.0;
    }
    return lambda / static_cast<double>(n);
  };
  std::vector<LossTermRef> terms;
  terms.push_back({&problem.residual, {&set.interior}, mean_weight(w.res, set.n_res(), "residual")});
  terms.push_back({&problem.initial, {&set.initial}, mean_weight(w.ic, set.n_ic(), "initial")});
  terms.push_back(
      {&problem.boundary, {&set.boundary_left, &set.boundary_right}, mean_weight(w.bc, set.n_bc(), "boundary")});
  return terms;
}

}  // namespace propinn
