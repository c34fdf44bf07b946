// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "propinn/bench/experiment.hpp"
#include "propinn/core/alloc.hpp"
#include "propinn/diagnostics/correlation.hpp"
#include "propinn/fem/hat_fem.hpp"
#include "propinn/models/mlp.hpp"
#include "propinn/models/propinn.hpp"
#include "propinn/pde/benchmarks.hpp"

using namespace propinn;
using propinn::testing::fd_gradient;
using propinn::testing::fd_jet;
using propinn::testing::rel_error;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Eigen::Vector2d uniform_point(Rng& rng, const Domain& d) {
  return {rng.uniform(d.lo[0], d.hi[0]), rng.uniform(d.lo[1], d.hi[1])};
}

std::span<const double> view(const Eigen::Vector2d& v) { return {v.data(), 2}; }

Mlp random_mlp(Rng& rng) {
  MlpConfig c;
  c.hidden_width = 4 + static_cast<int>(rng.uniform(0.0, 29.0));
  c.depth = 2 + static_cast<int>(rng.uniform(0.0, 3.0));
  return Mlp(c);
}

ProPinnConfig random_propinn_config(Rng& rng) {
  ProPinnConfig c;
  c.d_model = 4 + static_cast<int>(rng.uniform(0.0, 12.0));
  c.head_hidden = 6 + static_cast<int>(rng.uniform(0.0, 18.0));
  c.perturb_counts = {2 + static_cast<int>(rng.uniform(0.0, 6.0)), 2 + static_cast<int>(rng.uniform(0.0, 6.0)),
                      2 + static_cast<int>(rng.uniform(0.0, 6.0))};
  return c;
}

// ---------------------------------------------------------------------------
// 1. Autodiff against central differences
// ---------------------------------------------------------------------------

template <class M>
double jet_and_gradient_error(const M& m, const std::vector<double>& p, const Eigen::Vector2d& x) {
  const std::vector<double> xv{x[0], x[1]};
  const Jet2 j = input_jet(m, p, xv)[0];
  const auto fd = fd_jet([&](std::span<const double> q) { return forward(m, p, q)(0); }, xv);
  const double ej = rel_error(std::vector<double>{j.value, j.d1[0], j.d1[1], j.d2[0], j.d2[1]},
                              std::vector<double>{fd.value, fd.d1[0], fd.d1[1], fd.d2[0], fd.d2[1]});
  const auto g = param_gradient(m, p, xv);
  const std::vector<double> exact(g.entries.data(), g.entries.data() + g.cols());
  const double eg = rel_error(exact, fd_gradient([&](std::span<const double> q) { return forward(m, q, xv)(0); }, p));
  return std::max(ej, eg);
}

template <class M>
double loss_gradient_error(const M& m, const std::vector<double>& p, const PdeProblem& problem,
                           const Eigen::MatrixXd& pts) {
  const auto exact = param_gradient_of_residual_loss(m, p, pts, problem.residual);
  auto f = [&](std::span<const double> q) {
    LossTermRef t{&problem.residual, {&pts}, 1.0 / static_cast<double>(pts.cols())};
    return evaluate_loss(m, q, {t}, false).total;
  };
  return rel_error(exact, fd_gradient(f, p));
}

Outcome criterion_autodiff() {
  Rng rng(1001);
  const Domain unit{{-1.0, -1.0}, {1.0, 1.0}};
  double worst = 0.0;
  for (int c = 0; c < 50; ++c) {
    const Eigen::Vector2d x = uniform_point(rng, unit);
    if (c % 2 == 0) {
      const Mlp m = random_mlp(rng);
      worst = std::max(worst, jet_and_gradient_error(m, m.init_params(static_cast<std::uint64_t>(c)).values, x));
    } else {
      const ProPinnConfig pc = random_propinn_config(rng);
      const ProPinn m(pc, sample_perturbations(pc, static_cast<std::uint64_t>(c)));
      worst = std::max(worst, jet_and_gradient_error(m, m.init_params(static_cast<std::uint64_t>(c)).values, x));
    }
  }
  double worst_loss = 0.0;
  for (const auto& problem : {convection_problem(), reaction_problem(), wave_problem()}) {
    for (int c = 0; c < 2; ++c) {
      const auto pts = uniform_interior(problem.domain, 8, 2000 + c);
      const Mlp m = random_mlp(rng);
      worst_loss = std::max(worst_loss, loss_gradient_error(m, m.init_params(c).values, problem, pts));
      const ProPinnConfig pc = random_propinn_config(rng);
      const ProPinn pm(pc, sample_perturbations(pc, 50 + c));
      worst_loss = std::max(worst_loss, loss_gradient_error(pm, pm.init_params(c).values, problem, pts));
    }
  }
  return {worst < 1e-6 && worst_loss < 1e-5,
          fmt("worst jet/param rel err %.2e (< 1e-6), worst residual-loss rel err %.2e (< 1e-5)", worst, worst_loss)};
}

// ---------------------------------------------------------------------------
// 2. Stiffness coefficient converges to the gradient correlation
// ---------------------------------------------------------------------------

Outcome criterion_stiffness() {
  Rng rng(2002);
  const Domain d = convection_problem().domain;
  const std::vector<double> lambdas{1e-4, 1e-5, 1e-6};
  double worst_rel = 0.0, worst_slope = 1e300;
  int cases = 0;
  auto check = [&](const auto& m, std::uint64_t seed) {
    const auto p = m.init_params(seed).values;
    const Eigen::Vector2d x = uniform_point(rng, d);
    const Eigen::Vector2d x2 = x + Eigen::Vector2d(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05));
    const double G = gradient_correlation(m, p, view(x), view(x2));
    const auto est = stiffness_estimate(m, p, view(x), view(x2), lambdas);
    worst_rel = std::max(worst_rel, std::abs(est.limit - G) / std::max(G, 1e-12));
    // Least-squares slope of log|D - G| against log lambda. Larger steps
    // leave the first-order regime: the quadratic term can flip the sign of
    // D - G near lambda = 1e-2.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < 3; ++i) {
      const double lx = std::log10(lambdas[i]), ly = std::log10(std::abs(est.values[i] - G));
      sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly;
    }
    const double slope = (3 * sxy - sx * sy) / (3 * sxx - sx * sx);
    worst_slope = std::min(worst_slope, slope);
    ++cases;
  };
  for (int c = 0; c < 60; ++c) {
    const Mlp m = random_mlp(rng);
    check(m, static_cast<std::uint64_t>(c));
  }
  for (int c = 0; c < 40; ++c) {
    const ProPinnConfig pc = random_propinn_config(rng);
    check(ProPinn(pc, sample_perturbations(pc, static_cast<std::uint64_t>(c))), static_cast<std::uint64_t>(c));
  }
  return {cases >= 100 && worst_rel < 1e-3 && worst_slope >= 0.9,
          fmt("%d cases, worst |D(1e-6)-G|/G %.2e (< 1e-3), min log-log slope %.3f (>= 0.9)", cases, worst_rel,
              worst_slope)};
}

// ---------------------------------------------------------------------------
// 3. Region gradients never lower the correlation when the assumption holds
// ---------------------------------------------------------------------------

Outcome criterion_boost() {
  Rng rng(3003);
  const Domain d = convection_problem().domain;
  const double R = 0.09;
  int checked = 0, held = 0, attempts = 0;
  auto in_disc = [&](double r) {
    Eigen::Vector2d v;
    do v = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    while (v.norm() > 1.0);
    return Eigen::Vector2d(v * r);
  };
  while (checked < 200 && attempts < 2000) {
    const auto seed = static_cast<std::uint64_t>(attempts++);
    const Eigen::Vector2d x = uniform_point(rng, d);
    const Eigen::Vector2d x2 = x + in_disc(R / 3);
    Eigen::MatrixXd off(2, 9);
    for (int i = 0; i < 9; ++i) off.col(i) = in_disc(R / 3);
    BoostCheck r;
    if (seed % 2 == 0) {
      const Mlp m = random_mlp(rng);
      r = boost_check(m, m.init_params(seed).values, view(x), view(x2), off, R);
    } else {
      const ProPinnConfig pc = random_propinn_config(rng);
      const ProPinn m(pc, sample_perturbations(pc, seed));
      r = boost_check(m, m.init_params(seed).values, view(x), view(x2), off, R);
    }
    if (!r.assumption_ok) continue;
    ++checked;
    if (r.g_region >= r.g_point - 1e-12 * r.scale) ++held;
  }
  return {checked >= 200 && held == checked,
          fmt("%d/%d cases with the assumption satisfied hold (%d draws)", held, checked, attempts)};
}

// ---------------------------------------------------------------------------
// 4. Positive ratio of a fresh vanilla PINN
// ---------------------------------------------------------------------------

Outcome criterion_positive_ratio() {
  const Mlp m(from_json({{"profile", "desk"}}).mlp);
  const auto p = m.init_params(0).values;
  bool ok = true;
  std::string detail;
  for (const auto& problem : {convection_problem(), reaction_problem(), wave_problem(), allen_cahn_problem()}) {
    const double r = positive_ratio(m, p, equispaced_points(problem.domain, 10000), 1e-2);
    ok = ok && r == 1.0;
    detail += fmt("%s %.4f  ", problem.name.c_str(), r);
  }
  return {ok, detail + "(all must be 1)"};
}

// ---------------------------------------------------------------------------
// 5. FEM Jacobi propagation
// ---------------------------------------------------------------------------

Outcome criterion_fem() {
  const HatBasisMesh m = assemble(31, [](double) { return 1.0; });
  const FemSolution s = solve(m, {.tol = 1e-12});
  double err = 0.0;
  for (int j = 0; j < m.n; ++j) {
    const double x = m.node(j);
    err = std::max(err, std::abs(s.u[static_cast<std::size_t>(j)] - 0.5 * x * (1.0 - x)));
  }
  int max_step = 0;
  for (std::size_t k = 1; k < s.front.size(); ++k) max_step = std::max(max_step, s.front[k] - s.front[k - 1]);

  const int source = 15;
  const HatBasisMesh pm = assemble_point_load(31, source);
  std::vector<double> u(31, 0.0);
  bool local = true;
  for (int k = 1; k <= 31; ++k) {
    u = jacobi_iterate(pm, u);
    for (int j = 0; j < 31; ++j)
      if (std::abs(j - source) >= k && u[static_cast<std::size_t>(j)] != 0.0) local = false;
  }
  return {err < 1e-10 && max_step <= 1 && local,
          fmt("max nodal error %.2e (< 1e-10) after %ld sweeps, max front step %d, point load local: %s", err,
              s.iterations, max_step, local ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 6. Reference solutions
// ---------------------------------------------------------------------------

Outcome criterion_references() {
  std::string detail;
  bool ok = true;
  for (const auto& problem : {convection_problem(), reaction_problem(), wave_problem()}) {
    const double rms = residual_rms(problem, problem.reference_closed_form, uniform_interior(problem.domain, 1000, 6));
    ok = ok && rms < 1e-8;
    detail += fmt("%s residual RMS %.2e, ", problem.name.c_str(), rms);
  }
  SpectralOptions a, b;
  b.dt = a.dt / 2;
  const double diff = grid_rms_difference(spectral_reference(a), spectral_reference(b));
  ok = ok && diff < 1e-6;
  return {ok, detail + fmt("allen_cahn dt-halving RMS %.2e (all < 1e-8 / 1e-6)", diff)};
}

// ---------------------------------------------------------------------------
// Training criteria share runs
// ---------------------------------------------------------------------------

class Runs {
 public:
  Runs(std::string root, std::vector<std::string> overrides) : root_(std::move(root)), overrides_(std::move(overrides)) {}

  const RunResult& get(const std::string& problem, const std::string& model, bool detach, int seed) {
    const std::string key = problem + "/" + model + (detach ? "_detach" : "") + "/" + std::to_string(seed);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    nlohmann::json j = {{"profile", "desk"}, {"problem", problem}, {"model", {{"kind", model}}}};
    if (detach) j["model"]["propinn"] = {{"detach_perturbation", true}};
    for (const auto& o : overrides_) apply_override(j, o);
    ExperimentConfig base = from_json(j);
    validate(base);
    const ExperimentConfig c = repeat_config(base, seed, fs::path(root_) / problem / (model + (detach ? "_detach" : "")));
    const auto t0 = std::chrono::steady_clock::now();
    RunResult r = run_experiment(c);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("    run %-34s rel_l1 %.4f  rrmse %.4f  loss %.3e  %.0f s%s\n", key.c_str(), r.metrics.rel_l1,
                r.metrics.rrmse, r.metrics.final_loss, secs, r.status ? "  (aborted)" : "");
    std::fflush(stdout);
    return cache_.emplace(key, std::move(r)).first->second;
  }

 private:
  std::string root_;
  std::vector<std::string> overrides_;
  std::map<std::string, RunResult> cache_;
};

Outcome criterion_convection_gap(Runs& runs) {
  bool ok = true;
  std::string detail;
  for (int s = 0; s < 3; ++s) {
    const RunResult& mlp = runs.get("convection", "mlp", false, s);
    const RunResult& pro = runs.get("convection", "propinn", false, s);
    const double a = mlp.metrics.rel_l1, b = pro.metrics.rel_l1;
    const bool seed_ok = mlp.status == 0 && pro.status == 0 && a > 0.3 && b < 0.10 && a >= 5.0 * b;
    ok = ok && seed_ok;
    detail += fmt("seed %d: mlp %.3f propinn %.3f ratio %.1f; ", s, a, b, a / b);
  }
  return {ok, detail + "(need mlp > 0.3, propinn < 0.10, ratio >= 5)"};
}

Outcome criterion_reaction(Runs& runs) {
  bool ok = true;
  std::string detail;
  for (int s = 0; s < 3; ++s) {
    const RunResult& r = runs.get("reaction", "propinn", false, s);
    ok = ok && r.status == 0 && r.metrics.rrmse < 0.10;
    detail += fmt("seed %d rrmse %.4f; ", s, r.metrics.rrmse);
  }
  return {ok, detail + "(need < 0.10)"};
}

Outcome criterion_detach(Runs& runs) {
  bool ok = true;
  std::string detail;
  for (int s = 0; s < 3; ++s) {
    const RunResult& full = runs.get("convection", "propinn", false, s);
    const RunResult& det = runs.get("convection", "propinn", true, s);
    ok = ok && full.status == 0 && det.metrics.rel_l1 > full.metrics.rel_l1;
    detail += fmt("seed %d: detached %.3f full %.3f; ", s, det.metrics.rel_l1, full.metrics.rel_l1);
  }
  return {ok, detail + "(detached must be strictly worse)"};
}

// ---------------------------------------------------------------------------
// 9. Correlation field at initialization
// ---------------------------------------------------------------------------

Outcome criterion_correlation_direction() {
  const PdeProblem problem = convection_problem();
  const Eigen::MatrixXd pts = equispaced_points(problem.domain, 10000);
  const std::vector<double> offset{0.01, 0.0};
  const Mlp mlp(from_json({{"profile", "desk"}}).mlp);
  bool ok = true;
  std::string detail;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const ProPinnConfig pc;
    const ProPinn pro(pc, sample_perturbations(pc, s));
    const double gm = correlation_map(mlp, mlp.init_params(s).values, pts, offset).mean();
    const double gp = correlation_map(pro, pro.init_params(s).values, pts, offset).mean();
    ok = ok && gp > gm;
    detail += fmt("seed %d: propinn %.3g mlp %.3g; ", static_cast<int>(s), gp, gm);
  }
  return {ok, detail + "(propinn must exceed mlp)"};
}

// ---------------------------------------------------------------------------
// 11. Metric identities
// ---------------------------------------------------------------------------

Outcome criterion_metrics() {
  Rng rng(1111);
  std::vector<double> u(25600), pred(25600);
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = rng.uniform(-2.0, 2.0);
    pred[i] = u[i] + rng.uniform(-0.3, 0.3);
  }
  const MetricsReport exact = compute_metrics(u, u);
  const MetricsReport base = compute_metrics(pred, u);
  double worst = 0.0;
  for (double c : {1e-6, 0.37, 5.0, 1e8}) {
    std::vector<double> su(u.size()), sp(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) su[i] = c * u[i], sp[i] = c * pred[i];
    const MetricsReport m = compute_metrics(sp, su);
    worst = std::max({worst, std::abs(m.rmae - base.rmae), std::abs(m.rrmse - base.rrmse),
                      std::abs(m.rel_l1 - base.rel_l1)});
  }
  const bool zero = exact.rmae == 0.0 && exact.rrmse == 0.0 && exact.rel_l1 == 0.0;
  return {zero && worst < 1e-12,
          fmt("exact-solution metrics zero: %s, max scaling drift %.2e (< 1e-12)", zero ? "yes" : "no", worst)};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"ProPINN acceptance suite"};
  std::vector<int> only;
  std::vector<std::string> overrides;
  std::string out = "acceptance_runs";
  app.add_option("--criteria", only, "run only these criterion numbers")->delimiter(',');
  app.add_option("--set", overrides, "config override applied to every training run, e.g. optimizer.iterations=100");
  app.add_option("--out", out, "directory for training-run artifacts");
  CLI11_PARSE(app, argc, argv);

  Runs runs(out, overrides);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"autodiff matches finite differences", criterion_autodiff},
      {"stiffness D(lambda) converges to G", criterion_stiffness},
      {"region gradients boost correlation", criterion_boost},
      {"positive ratio of a fresh PINN is 1", criterion_positive_ratio},
      {"FEM Jacobi propagation", criterion_fem},
      {"reference self-validation", criterion_references},
      {"convection failure-mode gap", [&] { return criterion_convection_gap(runs); }},
      {"reaction rRMSE", [&] { return criterion_reaction(runs); }},
      {"correlation field direction", criterion_correlation_direction},
      {"detach ablation", [&] { return criterion_detach(runs); }},
      {"metric identities", criterion_metrics},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s: %s | %s | %.1f s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
