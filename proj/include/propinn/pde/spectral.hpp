#pragma once

// Fourier pseudo-spectral solver for the periodic Allen-Cahn equation
//   u_t = eps * u_xx + a * (u - u^3),   x in [-1, 1) periodic,
// with SBDF2 time stepping: diffusion implicit, reaction extrapolated.

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "propinn/core/errors.hpp"
#include "propinn/pde/reference_grid.hpp"

namespace propinn {

struct SpectralOptions {
  int resolution = 512;  // Fourier nodes on [-1, 1)
  double dt = 1e-5;
  int n_x_out = 512;  // output nodes on [-1, 1], both ends included
  int n_t_out = 201;  // output times on [0, t_end], both ends included
  double t_end = 1.0;
  double diffusion = 1e-4;
  double reaction = 5.0;
};

namespace detail {

/// RAII wrapper around a pair of real <-> half-complex FFTW plans.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n), real_(static_cast<std::size_t>(n)), spec_(static_cast<std::size_t>(n / 2 + 1)) {
    auto* r = real_.data();
    auto* c = reinterpret_cast<fftw_complex*>(spec_.data());
    forward_ = fftw_plan_dft_r2c_1d(n, r, c, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_1d(n, c, r, FFTW_ESTIMATE);
  }
  ~RealFft() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void to_spectral(const std::vector<double>& u, std::vector<std::complex<double>>& out) {
    real_ = u;
    fftw_execute(forward_);
    out = spec_;
  }
  /// Unnormalized inverse; caller divides by n.
  void to_physical(const std::vector<std::complex<double>>& in, std::vector<double>& out) {
    spec_ = in;
    fftw_execute(backward_);
    out = real_;
  }

 private:
  int n_;
  std::vector<double> real_;
  std::vector<std::complex<double>> spec_;
  fftw_plan forward_{};
  fftw_plan backward_{};
};

}  // namespace detail

inline double allen_cahn_initial(double x) { return x * x * std::cos(std::numbers::pi * x); }

/// Evaluates the real trigonometric interpolant of `coef` (unnormalized r2c
/// output of length N/2 + 1) at x.
inline double trig_eval(const std::vector<std::complex<double>>& coef, int n, double x) {
  const double theta = std::numbers::pi * (x + 1.0);
  double s = coef[0].real();
  const int half = n / 2;
  for (int m = 1; m < (n + 1) / 2; ++m) {
    const std::complex<double> e(std::cos(m * theta), std::sin(m * theta));
    s += 2.0 * (coef[m] * e).real();
  }
  if (n % 2 == 0) s += coef[half].real() * std::cos(half * theta);
  return s / n;
}

/// Integrates from the initial condition to t_end and samples the solution
/// on the output grid. The t = 0 row is the initial condition itself; later
/// rows are the spectral interpolant of the solver state.
inline ReferenceGrid spectral_reference(const SpectralOptions& opt = {},
                                        const std::function<void(const std::string&)>& log = nullptr) {
  const int n = opt.resolution;
  if (n < 4) throw ConfigError("spectral resolution must be at least 4");
  if (!(opt.dt > 0.0) || !(opt.t_end > 0.0)) throw ConfigError("spectral time step and horizon must be positive");
  if (opt.n_x_out < 2 || opt.n_t_out < 2) throw ConfigError("spectral output grid needs at least 2 nodes per axis");
  std::vector<std::string> notes;
  if ((n & (n - 1)) != 0) notes.push_back("resolution " + std::to_string(n) + " is not a power of two");

  const double frame = opt.t_end / (opt.n_t_out - 1);
  const double ratio = frame / opt.dt;
  const long steps_per_frame = std::lround(ratio);
  if (steps_per_frame < 1 || std::abs(ratio - static_cast<double>(steps_per_frame)) > 1e-9 * ratio)
    throw ConfigError("time step must divide the output frame interval");

  const int nk = n / 2 + 1;
  std::vector<double> k2(static_cast<std::size_t>(nk));
  for (int m = 0; m < nk; ++m) k2[m] = std::pow(std::numbers::pi * m, 2);

  std::vector<double> nodes(static_cast<std::size_t>(n)), u(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    nodes[j] = -1.0 + 2.0 * j / n;
    u[j] = allen_cahn_initial(nodes[j]);
  }

  detail::RealFft fft(n);
  auto reaction = [&](const std::vector<double>& v, std::vector<double>& out) {
    out.resize(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) out[j] = opt.reaction * (v[j] - v[j] * v[j] * v[j]);
  };

  std::vector<std::complex<double>> u_hat, u_prev_hat, n_hat, n_prev_hat, next(static_cast<std::size_t>(nk));
  std::vector<double> nl;
  fft.to_spectral(u, u_hat);
  reaction(u, nl);
  fft.to_spectral(nl, n_hat);

  ReferenceGrid grid;
  grid.xs.resize(static_cast<std::size_t>(opt.n_x_out));
  for (int i = 0; i < opt.n_x_out; ++i) grid.xs[i] = -1.0 + 2.0 * i / (opt.n_x_out - 1);
  grid.xs.back() = 1.0;
  grid.ts.resize(static_cast<std::size_t>(opt.n_t_out));
  for (int j = 0; j < opt.n_t_out; ++j) grid.ts[j] = opt.t_end * j / (opt.n_t_out - 1);
  grid.values.assign(grid.xs.size() * grid.ts.size(), 0.0);
  for (std::size_t i = 0; i < grid.xs.size(); ++i) grid.at_node(i, 0) = allen_cahn_initial(grid.xs[i]);

  // Trigonometric basis at the output abscissae, reused for every frame.
  const int modes = (n + 1) / 2;
  std::vector<double> cos_tab(grid.xs.size() * modes), sin_tab(grid.xs.size() * modes), nyq(grid.xs.size());
  for (std::size_t i = 0; i < grid.xs.size(); ++i) {
    const double theta = std::numbers::pi * (grid.xs[i] + 1.0);
    for (int m = 0; m < modes; ++m) {
      cos_tab[i * modes + m] = std::cos(m * theta);
      sin_tab[i * modes + m] = std::sin(m * theta);
    }
    nyq[i] = (n % 2 == 0) ? std::cos((n / 2) * theta) : 0.0;
  }
  auto sample_frame = [&](std::size_t frame_index) {
    for (std::size_t i = 0; i < grid.xs.size(); ++i) {
      double s = u_hat[0].real();
      for (int m = 1; m < modes; ++m)
        s += 2.0 * (u_hat[m].real() * cos_tab[i * modes + m] - u_hat[m].imag() * sin_tab[i * modes + m]);
      if (n % 2 == 0) s += u_hat[n / 2].real() * nyq[i];
      grid.at_node(i, frame_index) = s / n;
    }
  };

  const long total_steps = steps_per_frame * (opt.n_t_out - 1);
  const double dt = opt.dt, eps = opt.diffusion;
  for (long step = 1; step <= total_steps; ++step) {
    if (step == 1) {
      for (int m = 0; m < nk; ++m) next[m] = (u_hat[m] + dt * n_hat[m]) / (1.0 + dt * eps * k2[m]);
    } else {
      for (int m = 0; m < nk; ++m)
        next[m] = (4.0 * u_hat[m] - u_prev_hat[m] + 2.0 * dt * (2.0 * n_hat[m] - n_prev_hat[m])) /
                  (3.0 + 2.0 * dt * eps * k2[m]);
    }
    u_prev_hat.swap(u_hat);
    u_hat = next;
    n_prev_hat.swap(n_hat);
    fft.to_physical(u_hat, u);
    for (double& v : u) v /= n;
    reaction(u, nl);
    fft.to_spectral(nl, n_hat);
    for (double v : u)
      if (!std::isfinite(v)) throw DivergenceError("spectral solver produced a non-finite value");
    if (step % steps_per_frame == 0) sample_frame(static_cast<std::size_t>(step / steps_per_frame));
  }

  grid.metadata = {{"generator", "fourier_pseudo_spectral_sbdf2"},
                   {"equation", "u_t = eps*u_xx + a*(u - u^3)"},
                   {"resolution", n},
                   {"dt", opt.dt},
                   {"t_end", opt.t_end},
                   {"diffusion", opt.diffusion},
                   {"reaction", opt.reaction},
                   {"notes", notes}};
  if (log)
    for (const auto& s : notes) log(s);
  return grid;
}

/// Root-mean-square difference between two grids of identical shape.
inline double grid_rms_difference(const ReferenceGrid& a, const ReferenceGrid& b) {
  if (a.values.size() != b.values.size()) throw ConfigError("grid shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += std::pow(a.values[i] - b.values[i], 2);
  return std::sqrt(s / static_cast<double>(a.values.size()));
}

}  // namespace propinn
