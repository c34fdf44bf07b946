#pragma once

// Gradient correlation between nearby points and the stiffness coefficient it
// equals in the small-step limit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "propinn/core/autodiff.hpp"
#include "propinn/core/errors.hpp"
#include "propinn/core/parallel.hpp"
#include "propinn/models/feature_model.hpp"
#include "propinn/pde/problem.hpp"
#include "propinn/pde/reference_grid.hpp"

namespace propinn {

/// Frobenius norm of P(x) P(x')^T, the m x m contraction of the two
/// parameter gradients. For one output channel this is |<g_x, g_x'>|.
inline double correlation_of(const ParamGradient& a, const ParamGradient& b) {
  return (a.entries * b.entries.transpose()).norm();
}

/// Sum over channels of <g_j(x), g_j(x')>, the sign-carrying variant.
inline double signed_correlation_of(const ParamGradient& a, const ParamGradient& b) {
  return (a.entries.cwiseProduct(b.entries)).sum();
}

template <DifferentiableModel M>
double gradient_correlation(const M& model, std::span<const double> params, std::span<const double> x,
                            std::span<const double> x2) {
  return correlation_of(param_gradient(model, params, x), param_gradient(model, params, x2));
}

struct StiffnessEstimate {
  std::vector<double> x, x2;
  std::vector<double> lambdas;
  std::vector<double> values;  // D(lambda) per entry of `lambdas`
  double limit = 0.0;          // value at the smallest lambda
};

/// D(lambda) = ||u_theta(x') - u_{theta - lambda g_x}(x')|| / lambda. With
/// several output channels each channel takes its own step along its own
/// gradient and the norm runs over channels.
template <DifferentiableModel M>
StiffnessEstimate stiffness_estimate(const M& model, std::span<const double> params, std::span<const double> x,
                                     std::span<const double> x2, std::span<const double> lambdas) {
  if (lambdas.empty()) throw ConfigError("need at least one step size");
  for (std::size_t i = 0; i < lambdas.size(); ++i)
    if (!(lambdas[i] > 0.0) || (i > 0 && !(lambdas[i] < lambdas[i - 1])))
      throw ConfigError("step sizes must be positive and strictly decreasing");

  StiffnessEstimate est{{x.begin(), x.end()}, {x2.begin(), x2.end()}, {lambdas.begin(), lambdas.end()}, {}, 0.0};
  const ParamGradient g = param_gradient(model, params, x);
  const Eigen::VectorXd base = forward(model, params, x2);
  std::vector<double> shifted(params.begin(), params.end());
  for (double lambda : lambdas) {
    double sq = 0.0;
    for (int j = 0; j < model.output_dim(); ++j) {
      for (std::size_t k = 0; k < shifted.size(); ++k)
        shifted[k] = params[k] - lambda * g.entries(j, static_cast<Eigen::Index>(k));
      const double moved = forward(model, shifted, x2)(j);
      if (!std::isfinite(moved)) throw StepTooLarge("perturbed output is not finite at step " + fmt17(lambda));
      const double diff = base(j) - moved;
      sq += diff * diff;
    }
    est.values.push_back(std::sqrt(sq) / lambda);
  }
  est.limit = est.values.back();
  return est;
}

struct BoostCheck {
  double g_point = 0.0;
  double g_region = 0.0;
  double scale = 0.0;  // ||g_x|| * ||g_x'||
  bool assumption_ok = false;
  bool holds = false;
};

/// Compares G of the model with G of its region-lifted form
/// u(x) + mean_i u(x + delta_i). `assumption_ok` records whether every pair
/// among x, x' and their perturbed copies that lies within `radius` has a
/// nonnegative gradient inner product; only then is `holds` meaningful.
template <DifferentiableModel M>
BoostCheck boost_check(const M& model, std::span<const double> params, std::span<const double> x,
                       std::span<const double> x2, const Eigen::MatrixXd& offsets, double radius) {
  if (model.output_dim() != 1) throw ConfigError("boost check is defined for scalar models");
  if (offsets.rows() != static_cast<Eigen::Index>(x.size()) || offsets.cols() < 1)
    throw ConfigError("offsets must be input_dim x k with k >= 1");

  const Eigen::Index k = offsets.cols();
  const Eigen::Index d = offsets.rows();
  const Eigen::VectorXd xa = Eigen::Map<const Eigen::VectorXd>(x.data(), d);
  const Eigen::VectorXd xb = Eigen::Map<const Eigen::VectorXd>(x2.data(), d);
  std::vector<Eigen::VectorXd> pts{xa, xb};
  for (Eigen::Index i = 0; i < k; ++i) pts.push_back(xa + offsets.col(i));
  for (Eigen::Index i = 0; i < k; ++i) pts.push_back(xb + offsets.col(i));
  std::vector<Eigen::RowVectorXd> grads;
  for (const auto& p : pts) grads.push_back(param_gradient(model, params, std::span<const double>(p.data(), d)).entries.row(0));

  BoostCheck r;
  r.g_point = std::abs(grads[0].dot(grads[1]));
  r.scale = grads[0].norm() * grads[1].norm();
  r.g_region = gradient_correlation(region_lifted_model(model, offsets), params, x, x2);

  r.assumption_ok = true;
  for (std::size_t i = 0; i < pts.size() && r.assumption_ok; ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      if ((pts[i] - pts[j]).norm() <= radius && grads[i].dot(grads[j]) < 0.0) {
        r.assumption_ok = false;
        break;
      }
  r.holds = r.g_region >= r.g_point - 1e-12 * r.scale;
  return r;
}

struct CorrelationField {
  Eigen::MatrixXd points;  // input_dim x N
  std::vector<double> offset;
  std::vector<double> values;  // G per point, >= 0
  std::string model;
  std::string params_hash;

  double mean() const {
    return values.empty() ? 0.0 : pairwise_sum(values) / static_cast<double>(values.size());
  }
  double median() const {
    if (values.empty()) return 0.0;
    std::vector<double> v = values;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2) return *mid;
    return 0.5 * (*mid + *std::max_element(v.begin(), mid));
  }
  /// Default failure threshold: 1e-3 times the median field value.
  double default_threshold() const { return 1e-3 * median(); }
};

inline std::string params_hash(std::span<const double> params) {
  return "fnv1a64:" + hex64(fnv1a64(std::string_view(reinterpret_cast<const char*>(params.data()),
                                                     params.size() * sizeof(double))));
}

template <DifferentiableModel M>
CorrelationField correlation_map(const M& model, std::span<const double> params, const Eigen::MatrixXd& points,
                                 std::span<const double> offset, std::string model_name = "") {
  if (offset.size() != static_cast<std::size_t>(points.rows())) throw ConfigError("offset has wrong dimension");
  CorrelationField f{points, {offset.begin(), offset.end()}, std::vector<double>(static_cast<std::size_t>(points.cols())),
                     std::move(model_name), params_hash(params)};
  const Eigen::Map<const Eigen::VectorXd> off(offset.data(), points.rows());
  parallel_for(static_cast<std::size_t>(points.cols()), [&](std::size_t e) {
    const Eigen::VectorXd a = points.col(static_cast<Eigen::Index>(e));
    const Eigen::VectorXd b = a + off;
    f.values[e] = gradient_correlation(model, params, std::span<const double>(a.data(), a.size()),
                                       std::span<const double>(b.data(), b.size()));
  });
  return f;
}

/// x,t,G
inline void write_correlation_csv(std::ostream& os, const CorrelationField& f) {
  os << "x,t,G\n";
  for (Eigen::Index e = 0; e < f.points.cols(); ++e)
    os << fmt17(f.points(0, e)) << ',' << fmt17(f.points(1, e)) << ',' << fmt17(f.values[static_cast<std::size_t>(e)])
       << '\n';
}

/// x,t,failed(0|1) with failed = G < threshold.
inline void write_failure_mask_csv(std::ostream& os, const CorrelationField& f, double threshold) {
  os << "x,t,failed\n";
  for (Eigen::Index e = 0; e < f.points.cols(); ++e)
    os << fmt17(f.points(0, e)) << ',' << fmt17(f.points(1, e)) << ','
       << (f.values[static_cast<std::size_t>(e)] < threshold ? 1 : 0) << '\n';
}

/// n points on a tensor grid covering the domain, round(sqrt n) per axis.
inline Eigen::MatrixXd equispaced_points(const Domain& d, int n) {
  if (n < 1) throw ConfigError("need at least one point");
  if (n == 1) {
    Eigen::MatrixXd p(d.dims(), 1);
    for (int i = 0; i < d.dims(); ++i) p(i, 0) = 0.5 * (d.lo[i] + d.hi[i]);
    return p;
  }
  const int side = std::max(2, static_cast<int>(std::lround(std::sqrt(static_cast<double>(n)))));
  return tensor_grid(d, side, side);
}

/// Fraction of points whose signed gradient inner product with each of the
/// axis neighbours x +- distance * e_i is nonnegative.
template <DifferentiableModel M>
double positive_ratio(const M& model, std::span<const double> params, const Eigen::MatrixXd& points,
                      double distance) {
  if (points.cols() == 0) throw ConfigError("no points");
  if (!(distance >= 0.0)) throw ConfigError("neighbour distance must be >= 0");
  const Eigen::Index d = points.rows();
  std::vector<char> ok(static_cast<std::size_t>(points.cols()), 0);
  parallel_for(ok.size(), [&](std::size_t e) {
    const Eigen::VectorXd a = points.col(static_cast<Eigen::Index>(e));
    const ParamGradient ga = param_gradient(model, params, std::span<const double>(a.data(), d));
    bool good = true;
    for (Eigen::Index i = 0; i < d && good; ++i)
      for (double sgn : {1.0, -1.0}) {
        Eigen::VectorXd b = a;
        b(i) += sgn * distance;
        const ParamGradient gb = param_gradient(model, params, std::span<const double>(b.data(), d));
        if (signed_correlation_of(ga, gb) < 0.0) {
          good = false;
          break;
        }
        if (distance == 0.0) break;
      }
    ok[e] = good ? 1 : 0;
  });
  std::size_t count = 0;
  for (char c : ok) count += static_cast<std::size_t>(c);
  return static_cast<double>(count) / static_cast<double>(ok.size());
}

}  // namespace propinn
