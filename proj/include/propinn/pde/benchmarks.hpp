#pragma once

#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "propinn/pde/problem.hpp"
#include "propinn/pde/reference_grid.hpp"
#include "propinn/pde/spectral.hpp"

namespace propinn {

inline constexpr double kConvectionBeta = 50.0;
inline constexpr double kReactionRho = 5.0;
inline constexpr double kWaveSpeedSquared = 4.0;
inline constexpr double kAllenCahnDiffusion = 1e-4;
inline constexpr double kAllenCahnReaction = 5.0;

/// u_t + 50 u_x = 0 on (0, 2pi) x (0, 1), u(x, 0) = sin x, periodic in x.
inline PdeProblem convection_problem() {
  using std::sin;
  PdeProblem p;
  p.name = "convection";
  p.domain = {{0.0, 0.0}, {2.0 * std::numbers::pi, 1.0}};
  p.residual = Condition("convection.residual", 1, 1, 1, [](auto jets, auto, auto out) {
    out[0] = jets[0].d1[1] + kConvectionBeta * jets[0].d1[0];
  });
  p.initial = Condition("convection.initial", 1, 0, 1, [](auto jets, auto x, auto out) {
    out[0] = jets[0].value - std::sin(x[0]);
  });
  p.boundary = Condition("convection.boundary", 2, 0, 1,
                         [](auto jets, auto, auto out) { out[0] = jets[0].value - jets[1].value; });
  p.boundary_kind = BoundaryKind::periodic;
  p.reference = [](std::span<const double> x) { return std::sin(x[0] - kConvectionBeta * x[1]); };
  p.reference_closed_form = [](std::span<const Taylor2> x) { return sin(x[0] - kConvectionBeta * x[1]); };
  p.residual_tolerance = 1e-8;
  self_validate(p);
  return p;
}

/// Gaussian bump exp(-(x - pi)^2 / (2 (pi/4)^2)).
template <class T>
T reaction_bump(const T& x) {
  using std::exp;
  const double s = std::numbers::pi / 4.0;
  const T d = x - std::numbers::pi;
  return exp(-1.0 * (d * d) / (2.0 * s * s));
}

/// u_t - 5 u (1 - u) = 0 on (0, 2pi) x (0, 1), Gaussian initial bump,
/// periodic in x; logistic closed-form solution.
inline PdeProblem reaction_problem() {
  PdeProblem p;
  p.name = "reaction";
  p.domain = {{0.0, 0.0}, {2.0 * std::numbers::pi, 1.0}};
  p.residual = Condition("reaction.residual", 1, 1, 1, [](auto jets, auto, auto out) {
    const auto& u = jets[0].value;
    out[0] = jets[0].d1[1] - kReactionRho * u * (1.0 - u);
  });
  p.initial = Condition("reaction.initial", 1, 0, 1, [](auto jets, auto x, auto out) {
    out[0] = jets[0].value - reaction_bump(x[0]);
  });
  p.boundary = Condition("reaction.boundary", 2, 0, 1,
                         [](auto jets, auto, auto out) { out[0] = jets[0].value - jets[1].value; });
  p.boundary_kind = BoundaryKind::periodic;
  p.reference = [](std::span<const double> x) {
    const double h = reaction_bump(x[0]);
    const double g = h * std::exp(kReactionRho * x[1]);
    return g / (g + 1.0 - h);
  };
  p.reference_closed_form = [](std::span<const Taylor2> x) {
    const Taylor2 h = reaction_bump(x[0]);
    const Taylor2 g = h * exp(kReactionRho * x[1]);
    return g / (g + 1.0 - h);
  };
  p.residual_tolerance = 1e-9;
  self_validate(p);
  return p;
}

/// u_tt - 4 u_xx = 0 on (0, 1) x (0, 1), u(x, 0) = sin(pi x) + sin(3 pi x)/2,
/// u_t(x, 0) = 0, u = 0 at both ends. The velocity condition is a second
/// component of the initial term.
inline PdeProblem wave_problem() {
  using std::cos;
  using std::sin;
  constexpr double pi = std::numbers::pi;
  PdeProblem p;
  p.name = "wave";
  p.domain = {{0.0, 0.0}, {1.0, 1.0}};
  p.residual = Condition("wave.residual", 1, 2, 1, [](auto jets, auto, auto out) {
    out[0] = jets[0].d2[1] - kWaveSpeedSquared * jets[0].d2[0];
  });
  p.initial = Condition("wave.initial", 1, 1, 2, [](auto jets, auto x, auto out) {
    out[0] = jets[0].value - (std::sin(pi * x[0]) + 0.5 * std::sin(3.0 * pi * x[0]));
    out[1] = jets[0].d1[1];
  });
  p.boundary = Condition("wave.boundary", 2, 0, 2, [](auto jets, auto, auto out) {
    out[0] = jets[0].value;
    out[1] = jets[1].value;
  });
  p.boundary_kind = BoundaryKind::dirichlet_zero;
  p.reference = [](std::span<const double> x) {
    return std::sin(pi * x[0]) * std::cos(2.0 * pi * x[1]) + 0.5 * std::sin(3.0 * pi * x[0]) * std::cos(6.0 * pi * x[1]);
  };
  p.reference_closed_form = [](std::span<const Taylor2> x) {
    return sin(pi * x[0]) * cos(2.0 * pi * x[1]) + 0.5 * sin(3.0 * pi * x[0]) * cos(6.0 * pi * x[1]);
  };
  p.residual_tolerance = 1e-8;
  self_validate(p);
  return p;
}

/// Default spectral reference, computed once per process.
inline std::shared_ptr<const ReferenceGrid> default_allen_cahn_reference() {
  static std::once_flag once;
  static std::shared_ptr<const ReferenceGrid> grid;
  std::call_once(once, [] { grid = std::make_shared<const ReferenceGrid>(spectral_reference()); });
  return grid;
}

/// u_t - 1e-4 u_xx + 5 u^3 - 5 u = 0 on (-1, 1) x (0, 1),
/// u(x, 0) = x^2 cos(pi x), periodic value and slope. Initial weight 10.
/// Without a grid argument the default spectral reference is generated.
inline PdeProblem allen_cahn_problem(std::shared_ptr<const ReferenceGrid> reference = nullptr) {
  constexpr double pi = std::numbers::pi;
  if (!reference) reference = default_allen_cahn_reference();
  reference->validate();
  PdeProblem p;
  p.name = "allen_cahn";
  p.domain = {{-1.0, 0.0}, {1.0, 1.0}};
  p.residual = Condition("allen_cahn.residual", 1, 2, 1, [](auto jets, auto, auto out) {
    const auto& u = jets[0].value;
    out[0] = jets[0].d1[1] - kAllenCahnDiffusion * jets[0].d2[0] + kAllenCahnReaction * u * u * u -
             kAllenCahnReaction * u;
  });
  p.initial = Condition("allen_cahn.initial", 1, 0, 1, [](auto jets, auto x, auto out) {
    out[0] = jets[0].value - x[0] * x[0] * std::cos(pi * x[0]);
  });
  p.boundary = Condition("allen_cahn.boundary", 2, 1, 2, [](auto jets, auto, auto out) {
    out[0] = jets[0].value - jets[1].value;
    out[1] = jets[0].d1[0] - jets[1].d1[0];
  });
  p.boundary_kind = BoundaryKind::periodic_with_derivative;
  p.weights = {1.0, 10.0, 1.0};
  p.reference = [reference](std::span<const double> x) { return (*reference)(x[0], x[1]); };
  p.residual_tolerance = 0.0;  // gridded: checked by the spectral self-convergence study
  return p;
}

inline PdeProblem make_problem(const std::string& name) {
  if (name == "convection") return convection_problem();
  if (name == "reaction") return reaction_problem();
  if (name == "wave") return wave_problem();
  if (name == "allen_cahn") return allen_cahn_problem();
  throw ConfigError("unknown problem '" + name + "'");
}

}  // namespace propinn
