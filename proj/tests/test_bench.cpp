#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "propinn/bench/experiment.hpp"
#include "propinn/bench/metrics.hpp"

using namespace propinn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("propinn_test_bench_" + name);
  fs::remove_all(p);
  return p;
}

/// Small and fast: 3x8 MLP, 11x11 collocation, 16x10 evaluation grid.
ExperimentConfig tiny(const std::string& name) {
  ExperimentConfig c;
  c.problem = "convection";
  c.model = "mlp";
  c.mlp.hidden_width = 8;
  c.mlp.depth = 3;
  c.collocation = CollocationSpec::grid(11, 11);
  c.iterations = 3;
  c.eval = {16, 10, 0};
  c.record_wall_time = false;
  c.output_dir = scratch(name).string();
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

TEST(Metrics, ExactPredictionIsZero) {
  const std::vector<double> u{0.5, -1.0, 2.0};
  const auto m = compute_metrics(u, u);
  EXPECT_EQ(m.rmae, 0.0);
  EXPECT_EQ(m.rel_l1, 0.0);
  EXPECT_EQ(m.rrmse, 0.0);
}

TEST(Metrics, DoubledPredictionHasUnitErrors) {
  const std::vector<double> u{0.5, -1.0, 2.0, 0.25}, p{1.0, -2.0, 4.0, 0.5};
  const auto m = compute_metrics(p, u);
  EXPECT_DOUBLE_EQ(m.rel_l1, 1.0);
  EXPECT_DOUBLE_EQ(m.rmae, 1.0);
  EXPECT_DOUBLE_EQ(m.rrmse, 1.0);
}

TEST(Metrics, ZeroPredictionHasUnitErrors) {
  const std::vector<double> u{0.3, -0.7, 1.1}, z(3, 0.0);
  const auto m = compute_metrics(z, u);
  EXPECT_DOUBLE_EQ(m.rel_l1, 1.0);
  EXPECT_DOUBLE_EQ(m.rrmse, 1.0);
}

TEST(Metrics, PrintedFormsTakeSquareRoots) {
  // |e| = (0.1, 0.3), |u| = (1, 1): L1 ratio 0.2; squared ratio 0.1 / 2.
  const std::vector<double> u{1.0, -1.0}, p{1.1, -1.3};
  const auto m = compute_metrics(p, u);
  EXPECT_NEAR(m.rel_l1, 0.2, 1e-15);
  EXPECT_NEAR(m.rmae, std::sqrt(0.2), 1e-15);
  EXPECT_NEAR(m.rrmse, std::sqrt(0.05), 1e-15);
  EXPECT_NEAR(m.l1_numerator, 0.4, 1e-15);
  EXPECT_EQ(m.points, 2u);
}

TEST(Metrics, InvariantUnderCommonScaling) {
  const std::vector<double> u{0.3, -0.7, 1.1, 0.05}, p{0.25, -0.6, 1.3, 0.0};
  const auto base = compute_metrics(p, u);
  for (double c : {1e-3, 0.5, 7.0, 1e4}) {
    std::vector<double> us(u), ps(p);
    for (auto& v : us) v *= c;
    for (auto& v : ps) v *= c;
    const auto m = compute_metrics(ps, us);
    EXPECT_NEAR(m.rmae, base.rmae, 1e-12 * base.rmae);
    EXPECT_NEAR(m.rrmse, base.rrmse, 1e-12 * base.rrmse);
  }
}

TEST(Metrics, DegenerateInputs) {
  const std::vector<double> z(4, 0.0), one(4, 1.0), three(3, 1.0);
  EXPECT_THROW(compute_metrics(one, z), DegenerateReference);
  EXPECT_THROW(compute_metrics(three, one), ConfigError);
  EXPECT_THROW(compute_metrics(std::vector<double>{}, std::vector<double>{}), ConfigError);
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

TEST(Config, ProfilesSetBaselineWidth) {
  EXPECT_EQ(from_json({{"profile", "desk"}}).mlp.hidden_width, 128);
  EXPECT_EQ(from_json({{"profile", "paper"}}).mlp.hidden_width, 512);
  EXPECT_EQ(from_json({{"profile", "paper"}}).mlp.depth, 4);
  EXPECT_EQ(from_json({{"profile", "paper"}, {"model", {{"mlp", {{"hidden_width", 64}}}}}}).mlp.hidden_width, 64);
  EXPECT_THROW(from_json({{"profile", "huge"}}), ConfigError);
}

TEST(Config, RoundTripsThroughJson) {
  ExperimentConfig c = tiny("roundtrip");
  c.model = "propinn";
  c.propinn.region_sizes = {0.01, 0.05, 0.13};
  c.weights = LossWeights{1.0, 10.0, 1.0};
  c.optimizer = OptimizerKind::adam;
  c.adam.lr = 3e-3;
  c.diagnostics.correlation_map = true;
  c.diagnostics.failure_threshold = 0.5;
  const auto j = to_json(c);
  const auto back = from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(content_hash(back), content_hash(c));
}

TEST(Config, HashIgnoresOutputDirectoryOnly) {
  ExperimentConfig a = tiny("hash"), b = a;
  b.output_dir = "/elsewhere";
  EXPECT_EQ(content_hash(a), content_hash(b));
  b.seeds.init = 9;
  EXPECT_NE(content_hash(a), content_hash(b));
}

TEST(Config, OverridesFollowPaths) {
  nlohmann::json j = {{"problem", "convection"}};
  apply_override(j, "problem=reaction");
  apply_override(j, "optimizer.iterations=7");
  apply_override(j, "model.propinn.region_sizes=[0.02,0.04,0.08]");
  apply_override(j, "diagnostics.positive_ratio=true");
  const auto c = from_json(j);
  EXPECT_EQ(c.problem, "reaction");
  EXPECT_EQ(c.iterations, 7);
  EXPECT_EQ(c.propinn.region_sizes, (std::vector<double>{0.02, 0.04, 0.08}));
  EXPECT_TRUE(c.diagnostics.positive_ratio);
  EXPECT_THROW(apply_override(j, "no_equals_sign"), ConfigError);
  EXPECT_THROW(apply_override(j, "a..b=1"), ConfigError);
}

TEST(Config, RejectsUnknownNames) {
  EXPECT_THROW(from_json({{"problme", "convection"}}), ConfigError);
  EXPECT_THROW(from_json({{"model", {{"kind", "mlp"}, {"widht", 3}}}}), ConfigError);
  EXPECT_THROW(from_json({{"optimizer", {{"kind", "sgd"}}}}), ConfigError);
  EXPECT_THROW(from_json({{"seeds", {{"init", "zero"}}}}), ConfigError);
  ExperimentConfig c;
  c.problem = "burgers";
  EXPECT_THROW(validate(c), ConfigError);
  c.problem = "convection";
  c.model = "kan";
  EXPECT_THROW(validate(c), ConfigError);
  EXPECT_THROW(run_experiment(c), ConfigError);
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

TEST(Run, WritesEveryArtifactAndReproduces) {
  ExperimentConfig c = tiny("run");
  c.diagnostics.correlation_map = true;
  c.diagnostics.map_points = 25;
  c.diagnostics.positive_ratio = true;
  c.diagnostics.ratio_points = 16;
  c.diagnostics.boost_check = true;
  c.diagnostics.boost_cases = 5;
  c.diagnostics.dynamics = true;
  c.diagnostics.dynamics_every = 1;
  c.diagnostics.dynamics_points = 9;
  const auto r = run_experiment(c);
  ASSERT_EQ(r.status, 0);
  const fs::path dir(c.output_dir);
  for (const char* f : {"config.json", "trace.csv", "metrics.json", "params.json", "solution.csv", "error_map.csv",
                        "correlation_map.csv", "failure_mask.csv", "diagnostics.json", "dynamics.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;

  std::vector<std::string> first;
  for (const char* f : {"trace.csv", "metrics.json", "solution.csv", "correlation_map.csv", "dynamics.csv"})
    first.push_back(slurp(dir / f));
  run_experiment(c);
  std::size_t k = 0;
  for (const char* f : {"trace.csv", "metrics.json", "solution.csv", "correlation_map.csv", "dynamics.csv"})
    EXPECT_EQ(slurp(dir / f), first[k++]) << f;

  const auto echo = read_json_file((dir / "config.json").string());
  EXPECT_EQ(echo.at("content_hash").get<std::string>(), content_hash(c));
  EXPECT_EQ(to_json(from_json(echo)), to_json(c));
}

TEST(Run, TraceHasOneRowPerIteration) {
  const ExperimentConfig c = tiny("trace");
  run_experiment(c);
  std::istringstream in(slurp(fs::path(c.output_dir) / "trace.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "iteration,total_loss,res_loss,ic_loss,bc_loss,rmae,rrmse,wall_ms");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, c.iterations + 1);
}

TEST(Run, ZeroIterationsReportsInitialModel) {
  ExperimentConfig c = tiny("zero");
  c.iterations = 0;
  const auto r = run_experiment(c);
  EXPECT_EQ(r.metrics.iterations, 0);
  const Mlp m(MlpConfig{2, 8, 3, 1});
  const auto grid = make_eval_grid(convection_problem(), 16, 10);
  const auto expect = evaluate_metrics(m, m.init_params(0).values, grid);
  EXPECT_EQ(r.metrics.rmae, expect.rmae);
  for (const char* f : {"config.json", "trace.csv", "metrics.json", "solution.csv", "error_map.csv"})
    EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / f)) << f;
}

TEST(Run, ErrorMapMeanMatchesL1Numerator) {
  const ExperimentConfig c = tiny("errmap");
  const auto r = run_experiment(c);
  std::istringstream in(slurp(fs::path(c.output_dir) / "error_map.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "x,t,error");
  std::vector<double> abs_err;
  while (std::getline(in, line)) abs_err.push_back(std::abs(std::stod(line.substr(line.rfind(',') + 1))));
  ASSERT_EQ(abs_err.size(), r.metrics.points);
  const double mean = pairwise_sum(abs_err) / static_cast<double>(abs_err.size());
  EXPECT_NEAR(mean, r.metrics.l1_numerator / static_cast<double>(r.metrics.points), 1e-15);
}

TEST(Run, ProPinnRunsAndDiagnosesSavedParams) {
  ExperimentConfig c = tiny("propinn");
  c.model = "propinn";
  c.iterations = 1;
  c.collocation = CollocationSpec::grid(6, 6);
  const auto r = run_experiment(c);
  ASSERT_EQ(r.status, 0);
  ExperimentConfig d = c;
  d.output_dir = (fs::path(c.output_dir) / "diag").string();
  d.diagnostics.positive_ratio = true;
  d.diagnostics.ratio_points = 4;
  const auto rep = diagnose(d, (fs::path(c.output_dir) / "params.json").string());
  ASSERT_TRUE(rep.positive_ratio.has_value());
  EXPECT_TRUE(fs::exists(fs::path(d.output_dir) / "diagnostics.json"));
}

// ---------------------------------------------------------------------------
// Repeat and sweep
// ---------------------------------------------------------------------------

TEST(Aggregate, MeanAndSampleStd) {
  const auto a = aggregate({1.0, 2.0, 4.0});
  EXPECT_DOUBLE_EQ(a.mean, 7.0 / 3.0);
  EXPECT_NEAR(a.std, 1.5275252316519465, 1e-15);
  EXPECT_EQ(aggregate({3.0}).std, 0.0);
}

TEST(Aggregate, PairedTTestMatchesReferenceValues) {
  const std::vector<double> a{0.1, 0.2, 0.15, 0.12}, b{0.3, 0.25, 0.4, 0.2};
  const auto t = paired_t_test(a, b);
  EXPECT_NEAR(t.t, -3.040026026493564, 1e-12);
  EXPECT_NEAR(t.p_value, 0.02793308220362531, 1e-12);
  EXPECT_THROW(paired_t_test(std::vector<double>{1.0}, std::vector<double>{2.0}), ConfigError);
}

TEST(Repeat, SingleRunHasZeroSpread) {
  const auto out = repeat(tiny("repeat1"), 1);
  EXPECT_EQ(out["rmae"]["std"].get<double>(), 0.0);
  EXPECT_EQ(out["runs"].size(), 1u);
}

TEST(Repeat, ThreeSeedsAverageAndCompare) {
  ExperimentConfig a = tiny("repeat3");
  a.iterations = 1;
  ExperimentConfig b = a;
  b.mlp.hidden_width = 4;
  const auto out = repeat(a, 3, b);
  const auto va = out["a"]["rel_l1"]["values"].get<std::vector<double>>();
  ASSERT_EQ(va.size(), 3u);
  EXPECT_NE(va[0], va[1]);
  EXPECT_DOUBLE_EQ(out["a"]["rel_l1"]["mean"].get<double>(), (va[0] + va[1] + va[2]) / 3.0);
  EXPECT_TRUE(out.contains("paired_t_test"));
  EXPECT_TRUE(fs::exists(fs::path(a.output_dir) / "aggregate.json"));
  EXPECT_TRUE(fs::exists(fs::path(a.output_dir) / "b" / "run_2" / "metrics.json"));
}

TEST(Sweep, OneDirectoryPerSetting) {
  ExperimentConfig c = tiny("sweep");
  c.model = "propinn";
  c.iterations = 0;
  c.collocation = CollocationSpec::grid(5, 5);
  const std::vector<nlohmann::json> values{{0.01, 0.05, 0.09}, {0.01, 0.05, 0.13}};
  const auto out = sweep(c, "model.propinn.region_sizes", values);
  ASSERT_EQ(out.size(), 2u);
  for (int i = 0; i < 2; ++i) {
    const fs::path d = fs::path(c.output_dir) / ("sweep_" + std::to_string(i));
    const auto echo = read_json_file((d / "config.json").string());
    EXPECT_EQ(echo["model"]["propinn"]["region_sizes"], values[static_cast<std::size_t>(i)]);
  }
}
