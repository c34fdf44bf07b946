#pragma once

// Linear finite elements for -u'' = f on (0,1) with u(0) = u(1) = 0, solved by
// Jacobi iteration so that information visibly moves one node per sweep.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <ostream>
#include <vector>

#include "propinn/core/errors.hpp"
#include "propinn/pde/reference_grid.hpp"

namespace propinn {

/// n interior nodes at x_j = j h, h = 1/(n+1); node j (0-based) sits at (j+1) h.
/// The stiffness matrix is tridiagonal with `diag` on the diagonal and `off`
/// on both neighbours.
struct HatBasisMesh {
  int n = 0;
  double h = 0.0;
  double diag = 0.0;
  double off = 0.0;
  std::vector<double> load;

  double node(int j) const { return (j + 1) * h; }

  /// D(Psi_i, Psi_j).
  double stiffness(int i, int j) const {
    if (i == j) return diag;
    return std::abs(i - j) == 1 ? off : 0.0;
  }
};

namespace detail {

inline HatBasisMesh empty_mesh(int n) {
  if (n < 1) throw ConfigError("FEM mesh needs at least one interior node");
  HatBasisMesh m;
  m.n = n;
  m.h = 1.0 / (n + 1);
  m.diag = 2.0 / m.h;
  m.off = -1.0 / m.h;
  m.load.assign(static_cast<std::size_t>(n), 0.0);
  return m;
}

}  // namespace detail

/// b_j = integral of f * Psi_j, three-point Gauss-Legendre on each half of
/// the hat (exact when f is a polynomial of degree <= 4 per element).
inline HatBasisMesh assemble(int n, const std::function<double(double)>& f) {
  HatBasisMesh m = detail::empty_mesh(n);
  static constexpr std::array<double, 3> gx{-0.7745966692414834, 0.0, 0.7745966692414834};
  static constexpr std::array<double, 3> gw{5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  for (int j = 0; j < n; ++j) {
    const double xj = m.node(j);
    double b = 0.0;
    for (int side : {-1, 1}) {
      const double a = xj + side * m.h;  // far end of this half, where Psi_j = 0
      const double mid = 0.5 * (xj + a), half = 0.5 * (a - xj);
      for (std::size_t q = 0; q < 3; ++q) {
        const double x = mid + half * gx[q];
        const double psi = 1.0 - std::abs(x - xj) / m.h;
        b += gw[q] * std::abs(half) * f(x) * psi;
      }
    }
    m.load[static_cast<std::size_t>(j)] = b;
  }
  return m;
}

/// Load concentrated on one node: b = magnitude * e_source.
inline HatBasisMesh assemble_point_load(int n, int source, double magnitude = 1.0) {
  HatBasisMesh m = detail::empty_mesh(n);
  if (source < 0 || source >= n) throw ConfigError("point load outside the mesh");
  m.load[static_cast<std::size_t>(source)] = magnitude;
  return m;
}

/// u_j <- (b_j - sum_{i != j} D(Psi_i, Psi_j) u_i) / D(Psi_j, Psi_j).
inline std::vector<double> jacobi_iterate(const HatBasisMesh& m, const std::vector<double>& u) {
  if (static_cast<int>(u.size()) != m.n) throw ConfigError("iterate length does not match mesh");
  std::vector<double> next(u.size());
  for (int j = 0; j < m.n; ++j) {
    double s = m.load[static_cast<std::size_t>(j)];
    if (j > 0) s -= m.off * u[static_cast<std::size_t>(j - 1)];
    if (j + 1 < m.n) s -= m.off * u[static_cast<std::size_t>(j + 1)];
    next[static_cast<std::size_t>(j)] = s / m.diag;
  }
  return next;
}

/// Thomas algorithm; used as the fixed-point oracle.
inline std::vector<double> direct_solve(const HatBasisMesh& m) {
  std::vector<double> c(static_cast<std::size_t>(m.n)), d(static_cast<std::size_t>(m.n));
  for (int j = 0; j < m.n; ++j) {
    const double denom = m.diag - (j > 0 ? m.off * c[j - 1] : 0.0);
    c[j] = m.off / denom;
    d[j] = (m.load[j] - (j > 0 ? m.off * d[j - 1] : 0.0)) / denom;
  }
  std::vector<double> u(static_cast<std::size_t>(m.n));
  for (int j = m.n; j-- > 0;) u[j] = d[j] - (j + 1 < m.n ? c[j] * u[j + 1] : 0.0);
  return u;
}

/// Largest index distance from the load support to a node holding a nonzero
/// value; -1 while every value is zero.
inline int propagation_front(const HatBasisMesh& m, const std::vector<double>& u) {
  std::vector<int> support;
  for (int j = 0; j < m.n; ++j)
    if (m.load[static_cast<std::size_t>(j)] != 0.0) support.push_back(j);
  int front = -1;
  for (int j = 0; j < m.n; ++j) {
    if (u[static_cast<std::size_t>(j)] == 0.0) continue;
    int dist = std::numeric_limits<int>::max();
    for (int s : support) dist = std::min(dist, std::abs(j - s));
    if (support.empty()) dist = 0;
    front = std::max(front, dist);
  }
  return front;
}

struct FemSolveOptions {
  double tol = 1e-12;
  long max_iterations = 10'000'000;
  /// Stop on the estimated remaining error, update * rho / (1 - rho) with rho
  /// the observed contraction of successive updates, instead of on the update
  /// alone. Slow modes make the plain update test stop early: for n = 31 it
  /// leaves an error about 200 times the final update.
  bool bound_error = true;
  /// Keep every iterate for export.
  bool record_history = false;
};

struct FemSolution {
  std::vector<double> u;
  long iterations = 0;
  std::vector<int> front;  // front[k] after k sweeps, k = 0..iterations
  std::vector<double> updates;  // max |u^(k) - u^(k-1)|, k = 1..iterations
  std::vector<std::vector<double>> history;  // iterates 0..iterations when recorded
};

/// Jacobi sweeps from u = 0. A sweep is taken only if its update does not
/// meet the stopping rule, so a mesh solved exactly by one sweep reports one
/// iteration.
inline FemSolution solve(const HatBasisMesh& m, const FemSolveOptions& opt = {}) {
  if (!(opt.tol > 0.0)) throw ConfigError("tolerance must be positive");
  FemSolution s;
  s.u.assign(static_cast<std::size_t>(m.n), 0.0);
  s.front.push_back(propagation_front(m, s.u));
  if (opt.record_history) s.history.push_back(s.u);
  double prev_update = std::numeric_limits<double>::infinity();
  int growth = 0;
  while (true) {
    std::vector<double> next = jacobi_iterate(m, s.u);
    double update = 0.0;
    for (std::size_t j = 0; j < next.size(); ++j) update = std::max(update, std::abs(next[j] - s.u[j]));
    if (!std::isfinite(update)) throw DivergenceError("Jacobi iterate is not finite");
    bool done = update < opt.tol;
    if (done && opt.bound_error && update > 0.0 && std::isfinite(prev_update)) {
      const double rho = std::min(update / prev_update, 1.0 - 1e-15);
      done = update * rho / (1.0 - rho) < opt.tol;
    }
    if (done) break;
    if (s.iterations >= opt.max_iterations) throw DivergenceError("Jacobi did not converge within the budget");
    growth = update > prev_update ? growth + 1 : 0;
    if (growth >= 10) throw DivergenceError("Jacobi updates grew for 10 consecutive sweeps");
    prev_update = update;
    s.u = std::move(next);
    ++s.iterations;
    s.updates.push_back(update);
    s.front.push_back(propagation_front(m, s.u));
    if (opt.record_history) s.history.push_back(s.u);
  }
  return s;
}

/// iter,node,value for every recorded iterate; node is the 1-based mesh index.
inline void write_fem_trace_csv(std::ostream& os, const FemSolution& s) {
  os << "iter,node,value\n";
  for (std::size_t k = 0; k < s.history.size(); ++k)
    for (std::size_t j = 0; j < s.history[k].size(); ++j) os << k << ',' << j + 1 << ',' << fmt17(s.history[k][j]) << '\n';
}

}  // namespace propinn
