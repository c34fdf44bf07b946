#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "propinn/core/autodiff.hpp"
#include "propinn/models/feature_model.hpp"
#include "propinn/models/mlp.hpp"
#include "propinn/models/propinn.hpp"

using namespace propinn;
using propinn::testing::rel_error;

namespace {

std::vector<std::vector<std::vector<double>>> offsets_as_lists(const PerturbationBatch& b) {
  std::vector<std::vector<std::vector<double>>> out;
  for (const auto& o : b.offsets) {
    std::vector<std::vector<double>> scale;
    for (Eigen::Index i = 0; i < o.cols(); ++i) scale.push_back({o(0, i), o(1, i)});
    out.push_back(scale);
  }
  return out;
}

PerturbationBatch zero_offsets(const ProPinnConfig& cfg) {
  ProPinnConfig z = cfg.resolved();
  std::fill(z.region_sizes.begin(), z.region_sizes.end(), 0.0);
  return sample_perturbations(z, 1);
}

}  // namespace

TEST(MlpConfig, WideBaselineParameterCount) {
  MlpConfig c{2, 512, 4, 1};
  // 2*512+512 + 2*(512*512+512) + 512+1
  EXPECT_EQ(c.param_count(), 527361u);
  Mlp m(c);
  EXPECT_EQ(m.layout().total(), 527361u);
  EXPECT_TRUE(m.init_params(0).consistent());
}

TEST(MlpConfig, RejectsZeroDimensions) {
  EXPECT_THROW(Mlp(MlpConfig{2, 0, 4, 1}), ConfigError);
  EXPECT_THROW(Mlp(MlpConfig{2, 8, 0, 1}), ConfigError);
}

TEST(InitParams, DeterministicPerSeed) {
  Mlp m({2, 32, 4, 1});
  EXPECT_EQ(m.init_params(11).values, m.init_params(11).values);
  EXPECT_NE(m.init_params(11).values, m.init_params(12).values);
  ProPinn pp{ProPinnConfig{}};
  EXPECT_EQ(pp.init_params(3).values, pp.init_params(3).values);
}

TEST(InitParams, SeedZeroIsFiniteAndNonDegenerate) {
  Mlp m({2, 32, 4, 1});
  const auto p = m.init_params(0);
  EXPECT_TRUE(p.finite());
  const auto w = p.block("mlp.l1.weight");
  const double bound = std::sqrt(6.0 / 64.0);
  double max_abs = 0.0;
  for (double v : w) {
    EXPECT_LE(std::abs(v), bound);
    max_abs = std::max(max_abs, std::abs(v));
  }
  EXPECT_GT(max_abs, 0.5 * bound);
  for (double v : p.block("mlp.l1.bias")) EXPECT_EQ(v, 0.0);
}

TEST(Layout, ContiguousFromZero) {
  ProPinn pp{ProPinnConfig{}};
  std::size_t next = 0;
  for (const auto& e : pp.layout().entries()) {
    EXPECT_EQ(e.offset, next);
    next += e.size();
  }
  EXPECT_EQ(next, pp.layout().total());
  EXPECT_TRUE(pp.layout().valid());
}

TEST(Mlp, DepthOneIsAffine) {
  Mlp m({2, 99, 1, 1});
  const auto p = m.init_params(4);
  const std::vector<double> x{0.3, -0.8};
  EXPECT_DOUBLE_EQ(forward(m, p.values, x)(0), p.values[0] * x[0] + p.values[1] * x[1] + p.values[2]);
}

TEST(Mlp, MatchesIndependentImplementation) {
  Mlp m({2, 20, 4, 1});
  const auto p = m.init_params(9);
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> x{rng.uniform(-3, 3), rng.uniform(-3, 3)};
    const auto ref = propinn::testing::reference_mlp(p.values, m.config().widths(), x);
    EXPECT_NEAR(forward(m, p.values, x)(0), ref[0], 1e-13);
  }
}

TEST(Mlp, FiniteOnDomainCorners) {
  Mlp m({2, 64, 4, 1});
  const auto p = m.init_params(2);
  for (double a : {0.0, 2.0 * std::numbers::pi})
    for (double b : {0.0, 1.0}) {
      const auto j = input_jet(m, p.values, std::vector<double>{a, b})[0];
      EXPECT_TRUE(std::isfinite(j.value) && std::isfinite(j.d1[0]) && std::isfinite(j.d2[1]));
    }
}

TEST(Perturbations, ZeroRegionGivesZeroOffsets) {
  for (const auto& o : zero_offsets(ProPinnConfig{}).offsets) EXPECT_EQ(o.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Perturbations, DefaultCountsAndSupport) {
  ProPinnConfig c;
  const auto b = sample_perturbations(c, 77);
  ASSERT_EQ(b.offsets.size(), 3u);
  EXPECT_EQ(b.offsets[0].cols(), 9);
  EXPECT_EQ(b.offsets[1].cols(), 25);
  EXPECT_EQ(b.offsets[2].cols(), 49);
  ProPinnConfig big;
  big.perturb_counts = {100000, 1, 1};
  const auto d = sample_perturbations(big, 3);
  EXPECT_LE(d.offsets[0].cwiseAbs().maxCoeff(), big.region_sizes[0]);
}

TEST(Perturbations, MeanWithinThreeStandardErrors) {
  ProPinnConfig big;
  big.perturb_counts = {100000, 1, 1};
  const auto d = sample_perturbations(big, 8);
  const double R = big.region_sizes[0];
  const double se = R / std::sqrt(3.0) / std::sqrt(100000.0);
  for (int i = 0; i < 2; ++i) EXPECT_LT(std::abs(d.offsets[0].row(i).mean()), 3.0 * se);
}

TEST(Perturbations, RegenerableFromSeed) {
  const auto a = sample_perturbations(ProPinnConfig{}, 42);
  const auto b = sample_perturbations(ProPinnConfig{}, 42);
  for (std::size_t r = 0; r < a.offsets.size(); ++r) EXPECT_EQ(a.offsets[r], b.offsets[r]);
}

TEST(Perturbations, MismatchIsConfigError) {
  ProPinnConfig c;
  ProPinn m(c);
  ProPinnConfig other;
  other.perturb_counts = {1, 2, 3};
  EXPECT_THROW(m.set_perturbations(sample_perturbations(other, 0)), ConfigError);
}

TEST(ProPinnConfig, Validation) {
  ProPinnConfig c;
  c.region_sizes = {0.05, 0.01, 0.09};
  EXPECT_THROW(ProPinn{c}, ConfigError);
  c.region_sizes = {0.0, 0.05, 0.09};
  EXPECT_THROW(ProPinn{c}, ConfigError);
  ProPinnConfig k;
  k.perturb_counts = {9, 0, 49};
  EXPECT_THROW(ProPinn{k}, ConfigError);
}

TEST(ProPinn, ArchitectureShape) {
  ProPinn m{ProPinnConfig{}};
  const auto& L = m.layout();
  EXPECT_EQ(L.find("projector.in.l0.weight").shape, (std::vector<std::size_t>{8, 2}));
  EXPECT_EQ(L.find("projector.out.l0.weight").shape, (std::vector<std::size_t>{32, 8}));
  EXPECT_EQ(L.find("mixer.l0.weight").shape, (std::vector<std::size_t>{8, 4}));
  EXPECT_EQ(L.find("mixer.l1.weight").shape, (std::vector<std::size_t>{1, 8}));
  EXPECT_EQ(L.find("head.l0.weight").shape, (std::vector<std::size_t>{64, 32}));
  EXPECT_EQ(L.find("head.l1.weight").shape, (std::vector<std::size_t>{64, 64}));
  EXPECT_EQ(L.find("head.l2.weight").shape, (std::vector<std::size_t>{1, 64}));
}

TEST(ProPinn, MatchesPerPointReference) {
  ProPinnConfig c;
  ProPinn m(c, sample_perturbations(c, 13));
  const auto p = m.init_params(6);
  const auto offs = offsets_as_lists(m.perturbations());
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<double> x{rng.uniform(0, 6), rng.uniform(0, 1)};
    const auto ref = propinn::testing::reference_propinn(p.values, 2, 8, 32, 8, {32, 64, 64, 1}, offs, x);
    EXPECT_NEAR(forward(m, p.values, x)(0), ref[0], 1e-12);
  }
}

TEST(ProPinn, CollapsedRegionsEqualZeroPerturbationBaseline) {
  ProPinnConfig c;
  ProPinn m(c, zero_offsets(c));
  const auto p = m.init_params(1);
  const std::vector<double> x{0.7, 0.2};
  // Baseline: every region slot is the point representation itself.
  std::vector<std::vector<std::vector<double>>> single{{{0.0, 0.0}}, {{0.0, 0.0}}, {{0.0, 0.0}}};
  const auto ref = propinn::testing::reference_propinn(p.values, 2, 8, 32, 8, {32, 64, 64, 1}, single, x);
  EXPECT_NEAR(forward(m, p.values, x)(0), ref[0], 1e-13);
}

TEST(ProPinn, LinearProjectorPoolsAtMeanOffset) {
  ProPinnConfig c;
  c.activation = Activation::identity;
  ProPinn m(c, sample_perturbations(c, 5));
  const auto p = m.init_params(2);
  // With an affine projector the pooled region is P(x + mean delta), so the
  // whole model equals one with every offset replaced by the mean offset.
  PerturbationBatch mean_batch = m.perturbations();
  for (auto& o : mean_batch.offsets) {
    const Eigen::VectorXd mu = o.rowwise().mean();
    o.colwise() = mu;
  }
  ProPinn collapsed(c, mean_batch);
  const std::vector<double> x{1.1, 0.6};
  EXPECT_NEAR(forward(m, p.values, x)(0), forward(collapsed, p.values, x)(0), 1e-13);
}

TEST(ProPinn, PermutationInvariantWithinScale) {
  ProPinnConfig c;
  ProPinn m(c, sample_perturbations(c, 21));
  const auto p = m.init_params(3);
  PerturbationBatch perm = m.perturbations();
  perm.offsets[1] = perm.offsets[1].rowwise().reverse().eval();
  ProPinn mp(c, perm);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 5);
  EXPECT_EQ(forward_values(m, p.values, x), forward_values(mp, p.values, x));
}

TEST(ProPinn, MeanPoolingAgainstSummation) {
  // Pooling happens on the first projector layer's output; compare the pooled
  // slot with a straightforward sum over the perturbed hidden states.
  ProPinnConfig c;
  c.activation = Activation::tanh;
  ProPinn m(c, sample_perturbations(c, 4));
  const auto p = m.init_params(8);
  const std::vector<double> x{2.0, 0.5};
  const auto offs = offsets_as_lists(m.perturbations());
  double max_err = 0.0;
  for (std::size_t r = 0; r < offs.size(); ++r) {
    std::vector<double> acc(8, 0.0);
    for (const auto& d : offs[r]) {
      std::size_t o = 0;
      auto h = propinn::testing::affine(p.values, o, 2, 8, {x[0] + d[0], x[1] + d[1]});
      propinn::testing::tanh_inplace(h);
      for (int i = 0; i < 8; ++i) acc[i] += h[i];
    }
    // Batched projector followed by the library's sum-then-divide pooling.
    Eigen::MatrixXd xp(2, static_cast<Eigen::Index>(offs[r].size()));
    for (std::size_t i = 0; i < offs[r].size(); ++i) xp.col(i) << x[0] + offs[r][i][0], x[1] + offs[r][i][1];
    ParamLayout L;
    DenseStack proj({2, 8}, Activation::tanh, true, L, "projector.in");
    const JetBatch h = proj.forward(p.values, JetBatch::seed_inputs(xp, 0), nullptr);
    const Eigen::VectorXd pooled = h.value().rowwise().sum() / static_cast<double>(offs[r].size());
    for (int i = 0; i < 8; ++i)
      max_err = std::max(max_err, std::abs(pooled(i) - acc[i] / static_cast<double>(offs[r].size())));
  }
  EXPECT_LE(max_err, 1e-15);
}

TEST(ProPinn, DetachChangesGradients) {
  ProPinnConfig c;
  const auto batch = sample_perturbations(c, 9);
  ProPinn full(c, batch);
  ProPinnConfig d = c;
  d.detach_perturbation = true;
  ProPinn detached(d, batch);
  const auto p = full.init_params(1);
  const std::vector<double> x{0.5, 0.5};
  EXPECT_DOUBLE_EQ(forward(full, p.values, x)(0), forward(detached, p.values, x)(0));
  const auto gf = param_gradient(full, p.values, x).entries;
  const auto gd = param_gradient(detached, p.values, x).entries;
  EXPECT_GT((gf - gd).norm(), 1e-6 * gf.norm());
}

TEST(RegionLifted, ZeroOffsetsDoubleTheField) {
  Mlp base({2, 16, 3, 1});
  const auto p = base.init_params(2);
  auto lifted = region_lifted_model(base, Eigen::MatrixXd::Zero(2, 4));
  const std::vector<double> x{0.1, 0.9};
  EXPECT_NEAR(forward(lifted, p.values, x)(0), 2.0 * forward(base, p.values, x)(0), 1e-15);
}

TEST(RegionLifted, GradientIsPointPlusMeanOfPerturbed) {
  Mlp base({2, 16, 3, 1});
  const auto p = base.init_params(2);
  Eigen::MatrixXd off(2, 3);
  off << 0.01, -0.02, 0.005, 0.0, 0.015, -0.01;
  auto lifted = region_lifted_model(base, off);
  const std::vector<double> x{0.1, 0.9};
  Eigen::MatrixXd expect = param_gradient(base, p.values, x).entries;
  for (int i = 0; i < 3; ++i) {
    const std::vector<double> xi{x[0] + off(0, i), x[1] + off(1, i)};
    expect += param_gradient(base, p.values, xi).entries / 3.0;
  }
  EXPECT_LT(rel_error(param_gradient(lifted, p.values, x).entries, expect), 1e-14);
}
