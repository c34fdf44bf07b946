#pragma once

// Exact derivatives of model outputs: forward-mode jets over the (few) input
// coordinates, nested inside a reverse sweep over the (many) parameters.

#include <Eigen/Dense>
#include <concepts>
#include <span>
#include <vector>

#include "propinn/core/condition.hpp"
#include "propinn/core/errors.hpp"
#include "propinn/core/flat_params.hpp"
#include "propinn/core/jet.hpp"
#include "propinn/core/jet_batch.hpp"
#include "propinn/core/parallel.hpp"

namespace propinn {

/// A model maps a batch of points (input_dim x B) to output jets
/// (output_dim x comps*B) and can pull an adjoint on those jets back onto its
/// parameters. The tape carries whatever the reverse sweep needs.
template <class M>
concept DifferentiableModel = requires(const M& m, std::span<const double> p, const Eigen::MatrixXd& x,
                                       int order, typename M::Tape* tape, const typename M::Tape& ctape,
                                       const JetBatch& adj, std::span<double> g) {
  typename M::Tape;
  { m.input_dim() } -> std::convertible_to<int>;
  { m.output_dim() } -> std::convertible_to<int>;
  { m.layout() } -> std::convertible_to<const ParamLayout&>;
  { m.forward(p, x, order, tape) } -> std::same_as<JetBatch>;
  { m.backward(p, ctape, adj, g) };
};

/// Rows: output channels, columns: parameters.
struct ParamGradient {
  Eigen::MatrixXd entries;

  Eigen::Index rows() const { return entries.rows(); }
  Eigen::Index cols() const { return entries.cols(); }
};

namespace detail {

template <DifferentiableModel M>
void check_call(const M& model, std::span<const double> params, Eigen::Index x_rows) {
  if (x_rows != model.input_dim())
    throw ConfigError("point has " + std::to_string(x_rows) + " coordinates, model expects " +
                      std::to_string(model.input_dim()));
  if (params.size() != model.layout().total())
    throw ConfigError("parameter vector length does not match model layout");
}

/// Vectorized kernels peel unaligned heads with scalar code whose rounding
/// can differ from the packet path. Copying parameters and gradient buffers
/// to a fixed alignment keeps results independent of where the caller's
/// vectors happen to live.
using AlignedVector = std::vector<double, Eigen::aligned_allocator<double>>;

inline AlignedVector aligned_copy(std::span<const double> v) { return AlignedVector(v.begin(), v.end()); }

inline Eigen::MatrixXd as_column(std::span<const double> x) {
  return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

}  // namespace detail

/// Output values for a batch of points (output_dim x B).
template <DifferentiableModel M>
Eigen::MatrixXd forward_values(const M& model, std::span<const double> params, const Eigen::MatrixXd& x) {
  detail::check_call(model, params, x.rows());
  const auto p = detail::aligned_copy(params);
  return model.forward(p, x, 0, nullptr).value();
}

/// u(x) for a single point.
template <DifferentiableModel M>
Eigen::VectorXd forward(const M& model, std::span<const double> params, std::span<const double> x) {
  return forward_values(model, params, detail::as_column(x)).col(0);
}

/// Value, first and pure second input derivatives per output channel.
template <DifferentiableModel M>
std::vector<Jet2> input_jet(const M& model, std::span<const double> params, std::span<const double> x,
                            int order = 2) {
  detail::check_call(model, params, static_cast<Eigen::Index>(x.size()));
  const auto p = detail::aligned_copy(params);
  const JetBatch out = model.forward(p, detail::as_column(x), order, nullptr);
  std::vector<Jet2> jets(static_cast<std::size_t>(model.output_dim()));
  for (int j = 0; j < model.output_dim(); ++j) {
    auto& jet = jets[j];
    jet.dims = out.dims;
    jet.value = out.value()(j, 0);
    if (order >= 1)
      for (int i = 0; i < out.dims; ++i) jet.d1[i] = out.d1(i)(j, 0);
    if (order >= 2)
      for (int i = 0; i < out.dims; ++i) jet.d2[i] = out.d2(i)(j, 0);
  }
  return jets;
}

/// d u_j / d theta_k at x, one reverse sweep per output channel.
template <DifferentiableModel M>
ParamGradient param_gradient(const M& model, std::span<const double> params, std::span<const double> x) {
  detail::check_call(model, params, static_cast<Eigen::Index>(x.size()));
  const auto p = detail::aligned_copy(params);
  typename M::Tape tape;
  const JetBatch out = model.forward(p, detail::as_column(x), 0, &tape);
  ParamGradient g{Eigen::MatrixXd::Zero(model.output_dim(), static_cast<Eigen::Index>(params.size()))};
  detail::AlignedVector row(params.size());
  for (int j = 0; j < model.output_dim(); ++j) {
    JetBatch adj = out.zeros_like();
    adj.value()(j, 0) = 1.0;
    std::fill(row.begin(), row.end(), 0.0);
    model.backward(p, tape, adj, row);
    g.entries.row(j) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), g.cols());
  }
  return g;
}

/// One weighted penalty term of a composite loss: `weight` multiplies the
/// sum over entries of the squared residual norm, so a mean uses 1/n.
struct LossTermRef {
  const Condition* condition = nullptr;
  std::vector<const Eigen::MatrixXd*> points;  // one matrix per arity slot
  double weight = 1.0;

  Eigen::Index count() const { return points.empty() ? 0 : points.front()->cols(); }
};

struct LossValue {
  double total = 0.0;
  std::vector<double> terms;      // weighted value of each term
  std::vector<double> gradient;   // empty when not requested
};

/// Entries per reduction leaf. Fixed so that the summation tree (and hence
/// every bit of the result) is independent of the worker count.
inline constexpr Eigen::Index kReductionChunk = 512;

/// Entries per model call inside a leaf.
inline constexpr Eigen::Index kModelBatch = 64;

namespace detail {

template <int N, DifferentiableModel M>
double term_block(const M& model, std::span<const double> params, const LossTermRef& term,
                  Eigen::Index begin, Eigen::Index end, std::span<double> grad) {
  const Condition& cond = *term.condition;
  const int arity = cond.arity();
  const int m = model.output_dim();
  const int order = cond.order();
  const Eigen::Index n = end - begin;
  const bool want_grad = !grad.empty();

  std::vector<typename M::Tape> tapes(static_cast<std::size_t>(arity));
  std::vector<JetBatch> outs;
  std::vector<Eigen::MatrixXd> coords;
  for (int p = 0; p < arity; ++p) {
    coords.push_back(term.points[p]->middleCols(begin, n));
    outs.push_back(model.forward(params, coords.back(), order, want_grad ? &tapes[p] : nullptr));
  }
  const int dims = outs.front().dims;
  const int comps = outs.front().comps();

  std::vector<JetBatch> adjs;
  if (want_grad)
    for (int p = 0; p < arity; ++p) adjs.push_back(outs[p].zeros_like());

  using D = Dual<N>;
  std::vector<Jet<D>> jets(static_cast<std::size_t>(arity * m));
  std::vector<D> res(static_cast<std::size_t>(cond.components()));
  double sum = 0.0;
  for (Eigen::Index e = 0; e < n; ++e) {
    for (int p = 0; p < arity; ++p) {
      for (int j = 0; j < m; ++j) {
        Jet<D>& jet = jets[p * m + j];
        jet.dims = dims;
        const int base = (p * m + j) * comps;
        jet.value = D::seed(outs[p].value()(j, e), base);
        if (order >= 1)
          for (int i = 0; i < dims; ++i) jet.d1[i] = D::seed(outs[p].d1(i)(j, e), base + 1 + i);
        if (order >= 2)
          for (int i = 0; i < dims; ++i) jet.d2[i] = D::seed(outs[p].d2(i)(j, e), base + 1 + dims + i);
      }
    }
    const std::span<const double> x0(coords[0].data() + e * coords[0].rows(),
                                     static_cast<std::size_t>(coords[0].rows()));
    std::fill(res.begin(), res.end(), D{});
    cond(std::span<const Jet<D>>(jets), x0, std::span<D>(res));
    std::array<double, N> seed_adj{};
    for (const D& r : res) {
      sum += r.v * r.v;
      for (int s = 0; s < N; ++s) seed_adj[s] += 2.0 * term.weight * r.v * r.d[s];
    }
    if (!want_grad) continue;
    for (int p = 0; p < arity; ++p)
      for (int j = 0; j < m; ++j)
        for (int c = 0; c < comps; ++c) adjs[p].block(c)(j, e) = seed_adj[(p * m + j) * comps + c];
  }
  if (want_grad)
    for (int p = 0; p < arity; ++p) model.backward(params, tapes[p], adjs[p], grad);
  return term.weight * sum;
}

/// One reduction leaf, swept in sub-batches of kModelBatch entries so the
/// intermediate jets stay cache resident. The order of accumulation is fixed.
template <int N, DifferentiableModel M>
double term_chunk(const M& model, std::span<const double> params, const LossTermRef& term,
                  Eigen::Index begin, Eigen::Index end, std::span<double> grad) {
  double sum = 0.0;
  for (Eigen::Index b = begin; b < end; b += kModelBatch)
    sum += term_block<N>(model, params, term, b, std::min(end, b + kModelBatch), grad);
  return sum;
}

template <DifferentiableModel M>
double term_chunk_dispatch(const M& model, std::span<const double> params, const LossTermRef& term,
                           Eigen::Index begin, Eigen::Index end, std::span<double> grad) {
  const int seeds = term.condition->arity() * model.output_dim() *
                    JetBatch::comps_for(model.input_dim(), term.condition->order());
  if (seeds <= kDualSmall) return term_chunk<kDualSmall>(model, params, term, begin, end, grad);
  if (seeds <= kDualMedium) return term_chunk<kDualMedium>(model, params, term, begin, end, grad);
  if (seeds <= kDualLarge) return term_chunk<kDualLarge>(model, params, term, begin, end, grad);
  throw ConfigError("condition " + term.condition->name() + " couples too many jet components");
}

}  // namespace detail

/// Weighted sum of squared residuals over all terms and, optionally, its
/// exact parameter gradient. Work is split into fixed-size chunks that are
/// reduced over a fixed pairwise tree.
template <DifferentiableModel M>
LossValue evaluate_loss(const M& model, std::span<const double> params, const std::vector<LossTermRef>& terms,
                        bool with_gradient) {
  struct Task {
    std::size_t term;
    Eigen::Index begin, end;
  };
  std::vector<Task> tasks;
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const auto& term = terms[t];
    if (!term.condition || term.condition->empty()) throw ConfigError("loss term without condition");
    if (static_cast<int>(term.points.size()) != term.condition->arity())
      throw ConfigError(term.condition->name() + ": point sets do not match arity");
    for (const auto* pts : term.points) {
      detail::check_call(model, params, pts->rows());
      if (pts->cols() != term.count()) throw ConfigError(term.condition->name() + ": ragged point sets");
    }
    for (Eigen::Index b = 0; b < term.count(); b += kReductionChunk)
      tasks.push_back({t, b, std::min(term.count(), b + kReductionChunk)});
  }

  using detail::AlignedVector;
  const AlignedVector aligned = detail::aligned_copy(params);
  const std::span<const double> ps(aligned.data(), aligned.size());

  std::vector<double> partial(tasks.size(), 0.0);
  std::vector<AlignedVector> grads(with_gradient ? tasks.size() : 0);
  parallel_for(tasks.size(), [&](std::size_t i) {
    const Task& task = tasks[i];
    std::span<double> g;
    if (with_gradient) {
      grads[i].assign(params.size(), 0.0);
      g = grads[i];
    }
    partial[i] = detail::term_chunk_dispatch(model, ps, terms[task.term], task.begin, task.end, g);
  });

  LossValue out;
  out.terms.assign(terms.size(), 0.0);
  std::size_t i = 0;
  for (std::size_t t = 0; t < terms.size(); ++t) {
    std::size_t j = i;
    while (j < tasks.size() && tasks[j].term == t) ++j;
    out.terms[t] = pairwise_sum(std::span<const double>(partial).subspan(i, j - i));
    i = j;
  }
  for (double v : out.terms) out.total += v;
  if (with_gradient) {
    if (grads.empty()) {
      out.gradient.assign(params.size(), 0.0);
    } else {
      pairwise_reduce(grads);
      out.gradient.assign(grads.front().begin(), grads.front().end());
    }
  }
  return out;
}

/// Gradient over theta of (weight / n) * sum_i ||F(u_theta)(x_i)||^2 for one
/// residual operator; F may use first and second input derivatives.
template <DifferentiableModel M>
std::vector<double> param_gradient_of_residual_loss(const M& model, std::span<const double> params,
                                                    const Eigen::MatrixXd& points, const Condition& residual,
                                                    double weight = 1.0) {
  if (points.cols() == 0) throw ConfigError("empty collocation set");
  LossTermRef term{&residual, {&points}, weight / static_cast<double>(points.cols())};
  return evaluate_loss(model, params, {term}, true).gradient;
}

}  // namespace propinn
