#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "propinn/bench/experiment.hpp"
#include "propinn/core/alloc.hpp"
#include "propinn/fem/hat_fem.hpp"
#include "propinn/pde/spectral.hpp"

using namespace propinn;

namespace {

// Leftover "--a.b=value" / "--a.b value" arguments become config overrides,
// so flag names mirror config paths.
std::vector<std::string> path_overrides(const std::vector<std::string>& extras) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.rfind("--", 0) != 0 || a.size() <= 2) throw ConfigError("unexpected argument '" + a + "'");
    const std::string body = a.substr(2);
    if (body.find('=') != std::string::npos) {
      out.push_back(body);
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("flag '" + a + "' needs a value");
      out.push_back(body + "=" + extras[++i]);
    }
  }
  return out;
}

struct ConfigArgs {
  std::string path;
  std::vector<std::string> sets;
};

void add_config_args(CLI::App* sub, ConfigArgs& a) {
  sub->add_option("config", a.path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--set", a.sets, "override a config path: --set optimizer.iterations=10");
  sub->allow_extras();
}

ExperimentConfig resolve(const CLI::App* sub, const ConfigArgs& a) {
  std::vector<std::string> o = a.sets;
  for (auto& s : path_overrides(sub->remaining())) o.push_back(std::move(s));
  return load_config(a.path, o);
}

void print_metrics(const RunResult& r) {
  std::printf("rmae %.6g  rel_l1 %.6g  rrmse %.6g  loss %.6g  iterations %ld\n", r.metrics.rmae, r.metrics.rel_l1,
              r.metrics.rrmse, r.metrics.final_loss, r.metrics.iterations);
  std::printf("artifacts in %s\n", r.dir.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"ProPINN experiments, diagnostics and reference tools"};
  app.require_subcommand(1);

  ConfigArgs run_args;
  auto* run = app.add_subcommand("run", "train one configuration and export all artifacts");
  add_config_args(run, run_args);

  ConfigArgs rep_args;
  int rep_n = 3;
  std::string compare;
  auto* rep = app.add_subcommand("repeat", "run n seeds and aggregate; optionally compare against a second config");
  add_config_args(rep, rep_args);
  rep->add_option("--n", rep_n, "number of seeds")->check(CLI::PositiveNumber);
  rep->add_option("--compare", compare, "baseline config for a one-sided paired t-test")->check(CLI::ExistingFile);

  ConfigArgs diag_args;
  std::string params;
  auto* diag = app.add_subcommand("diagnose", "correlation map, positive ratio and boost check");
  add_config_args(diag, diag_args);
  diag->add_option("--params", params, "params.json from a previous run (default: fresh initialization)")
      ->check(CLI::ExistingFile);

  ConfigArgs sweep_args;
  std::string sweep_path, sweep_values, sweep_file;
  auto* sw = app.add_subcommand("sweep", "one run per value of a config path");
  add_config_args(sw, sweep_args);
  auto* sw_file = sw->add_option("--grid", sweep_file, "JSON file {\"path\": ..., \"values\": [...]}")
                      ->check(CLI::ExistingFile);
  auto* sw_path = sw->add_option("--path", sweep_path, "config path to vary, e.g. model.propinn.region_sizes");
  sw->add_option("--values", sweep_values, "JSON array of values")->needs(sw_path);
  sw_path->excludes(sw_file);

  int fem_n = 31;
  double fem_tol = 1e-12;
  bool fem_plain = false;
  std::string fem_out, fem_load = "uniform";
  auto* fem = app.add_subcommand("fem-demo", "Jacobi FEM solve of -u'' = f on (0, 1)");
  fem->add_option("--n", fem_n, "interior nodes")->check(CLI::PositiveNumber);
  fem->add_option("--tol", fem_tol, "update tolerance");
  fem->add_option("--load", fem_load, "uniform (f = 1) or point (unit load at the middle node)")
      ->check(CLI::IsMember({"uniform", "point"}));
  fem->add_flag("--plain-stop", fem_plain, "stop on the update alone, without the error bound");
  fem->add_option("--out", fem_out, "write the iteration trace CSV here");

  SpectralOptions spec;
  std::string spec_out;
  auto* sref = app.add_subcommand("spectral-ref", "Allen-Cahn pseudo-spectral reference grid");
  sref->add_option("--out", spec_out, "output CSV path (a .json sidecar is written next to it)")->required();
  sref->add_option("--resolution", spec.resolution, "Fourier nodes");
  sref->add_option("--dt", spec.dt, "time step");
  sref->add_option("--nx", spec.n_x_out, "output nodes in x");
  sref->add_option("--nt", spec.n_t_out, "output nodes in t");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const RunResult r = run_experiment(resolve(run, run_args));
      if (r.status != 0) {
        std::fprintf(stderr, "run aborted: %s (snapshot in %s)\n", r.message.c_str(), r.dir.string().c_str());
        return r.status;
      }
      print_metrics(r);
    } else if (*rep) {
      const ExperimentConfig a = resolve(rep, rep_args);
      std::optional<ExperimentConfig> b;
      if (!compare.empty()) {
        b = load_config(compare, path_overrides(rep->remaining()));
        b->output_dir = a.output_dir;
      }
      const auto report = repeat(a, rep_n, b);
      std::cout << report.dump(2) << "\n";
    } else if (*diag) {
      const ExperimentConfig c = resolve(diag, diag_args);
      diagnose(c, params);
      std::printf("diagnostics in %s\n", c.output_dir.c_str());
    } else if (*sw) {
      nlohmann::json values = nlohmann::json::parse(sweep_values, nullptr, false);
      if (!sweep_file.empty()) {
        const auto grid = read_json_file(sweep_file);
        if (!grid.contains("path") || !grid.contains("values")) throw ConfigError(sweep_file + " needs path and values");
        sweep_path = grid["path"].get<std::string>();
        values = grid["values"];
      }
      if (sweep_path.empty()) throw ConfigError("sweep needs --grid or --path/--values");
      if (values.is_discarded() || !values.is_array()) throw ConfigError("sweep values must be a JSON array");
      const auto out = sweep(resolve(sw, sweep_args), sweep_path, values.get<std::vector<nlohmann::json>>());
      std::cout << out.dump(2) << "\n";
    } else if (*fem) {
      const HatBasisMesh m = fem_load == "point" ? assemble_point_load(fem_n, fem_n / 2)
                                                 : assemble(fem_n, [](double) { return 1.0; });
      const FemSolution s =
          solve(m, {.tol = fem_tol, .bound_error = !fem_plain, .record_history = !fem_out.empty()});
      double err = 0.0;
      if (fem_load == "uniform")
        for (int j = 0; j < m.n; ++j) {
          const double x = m.node(j);
          err = std::max(err, std::abs(s.u[static_cast<std::size_t>(j)] - 0.5 * x * (1.0 - x)));
        }
      int max_step = 0;
      for (std::size_t k = 1; k < s.front.size(); ++k) max_step = std::max(max_step, s.front[k] - s.front[k - 1]);
      std::printf("iterations %ld  final update %.3e  max front step %d\n", s.iterations,
                  s.updates.empty() ? 0.0 : s.updates.back(), max_step);
      if (fem_load == "uniform") std::printf("max nodal error vs x(1-x)/2: %.3e\n", err);
      if (!fem_out.empty()) {
        std::ofstream f(fem_out, std::ios::binary);
        if (!f) throw ConfigError("cannot write " + fem_out);
        write_fem_trace_csv(f, s);
      }
    } else if (*sref) {
      const ReferenceGrid g = spectral_reference(spec, [](const std::string& note) {
        std::fprintf(stderr, "note: %s\n", note.c_str());
      });
      g.save(spec_out);
      std::printf("wrote %s (%zu x %zu)\n", spec_out.c_str(), g.xs.size(), g.ts.size());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
