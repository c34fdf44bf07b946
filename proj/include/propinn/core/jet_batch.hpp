#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "propinn/core/errors.hpp"
#include "propinn/core/flat_params.hpp"
#include "propinn/core/rng.hpp"

namespace propinn {

/// A batch of vector-valued jets. Storage is `width x (comps * batch)`:
/// component blocks are contiguous column ranges, ordered
/// value, d/dx_0 .. d/dx_{dims-1}, d2/dx_0^2 .. d2/dx_{dims-1}^2.
/// `order` selects how many of those blocks exist (0, 1 or 2).
struct JetBatch {
  int dims = 0;
  int order = 0;
  Eigen::Index batch = 0;
  Eigen::MatrixXd data;

  struct Uninitialized {};

  JetBatch() = default;
  JetBatch(Eigen::Index width, int dims_, int order_, Eigen::Index batch_)
      : dims(dims_), order(order_), batch(batch_),
        data(Eigen::MatrixXd::Zero(width, comps_for(dims_, order_) * batch_)) {}
  /// Storage left unset; every entry must be written before it is read.
  JetBatch(Eigen::Index width, int dims_, int order_, Eigen::Index batch_, Uninitialized)
      : dims(dims_), order(order_), batch(batch_), data(width, comps_for(dims_, order_) * batch_) {}

  static int comps_for(int dims, int order) { return 1 + dims * order; }

  int comps() const { return comps_for(dims, order); }
  Eigen::Index width() const { return data.rows(); }

  auto block(int c) { return data.middleCols(c * batch, batch); }
  auto block(int c) const { return data.middleCols(c * batch, batch); }
  auto value() { return block(0); }
  auto value() const { return block(0); }
  auto d1(int axis) { return block(1 + axis); }
  auto d1(int axis) const { return block(1 + axis); }
  auto d2(int axis) { return block(1 + dims + axis); }
  auto d2(int axis) const { return block(1 + dims + axis); }

  /// Same shape, all zero.
  JetBatch zeros_like() const { return JetBatch(width(), dims, order, batch); }
  JetBatch uninitialized_like() const { return JetBatch(width(), dims, order, batch, Uninitialized{}); }

  /// Input coordinates as jets: value = x, d/dx_i = e_i, second order zero.
  static JetBatch seed_inputs(const Eigen::MatrixXd& x, int order) {
    const int dims = static_cast<int>(x.rows());
    JetBatch j(x.rows(), dims, order, x.cols());
    j.value() = x;
    if (order >= 1)
      for (int i = 0; i < dims; ++i) j.d1(i).row(i).setOnes();
    return j;
  }
};

enum class Activation { tanh, identity, relu };

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "identity" || s == "linear") return Activation::identity;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation: " + s);
}

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
  }
  return "?";
}

namespace detail {

/// Elementwise tanh. Eigen maps double tanh onto the scalar libm call; this
/// goes through the packet exp instead, with the Cephes rational form for
/// |x| < 0.625 where 1 - 2/(e^{2|x|}+1) would cancel.
template <class Derived>
Eigen::ArrayXXd tanh_array(const Eigen::ArrayBase<Derived>& x) {
  constexpr double p0 = -9.64399179425052238628e-1, p1 = -9.92877231001918586564e1,
                   p2 = -1.61468768441708447952e3;
  constexpr double q0 = 1.12811678491632931402e2, q1 = 2.23548839060100448583e3, q2 = 4.84406305325125486048e3;
  const Eigen::ArrayXXd v = x;
  const Eigen::ArrayXXd z = v.square();
  Eigen::ArrayXXd out = v + v * z * (((p0 * z + p1) * z + p2) / (((z + q0) * z + q1) * z + q2));
  const Eigen::ArrayXXd e = (2.0 * v.abs()).exp();
  double* o = out.data();
  const double* pv = v.data();
  const double* pe = e.data();
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (!(std::abs(pv[i]) < 0.625)) o[i] = std::copysign(1.0 - 2.0 / (pe[i] + 1.0), pv[i]);
  return out;
}

/// Activation applied to a jet batch. For tanh, `y` receives tanh of the
/// value block so the reverse sweep does not recompute it.
inline JetBatch activate(Activation act, const JetBatch& in, Eigen::ArrayXXd* y_out = nullptr) {
  JetBatch out = in.uninitialized_like();
  switch (act) {
    case Activation::identity:
      out.data = in.data;
      return out;
    case Activation::relu:
      if (in.order > 0)
        throw UnsupportedPrimitive("relu is not twice differentiable; input jets unavailable");
      out.data = in.data.cwiseMax(0.0);
      return out;
    case Activation::tanh:
      break;
  }
  Eigen::ArrayXXd y = tanh_array(in.value().array());
  out.value() = y.matrix();
  if (in.order >= 1) {
    const Eigen::ArrayXXd s = 1.0 - y.square();
    for (int i = 0; i < in.dims; ++i) out.d1(i) = (s * in.d1(i).array()).matrix();
    if (in.order >= 2) {
      const Eigen::ArrayXXd s2 = -2.0 * y * s;
      for (int i = 0; i < in.dims; ++i)
        out.d2(i) = (s * in.d2(i).array() + s2 * in.d1(i).array().square()).matrix();
    }
  }
  if (y_out) *y_out = std::move(y);
  return out;
}

/// Reverse sweep through the activation applied to `in`; `y` is the tanh of
/// its value block as produced by `activate`.
inline JetBatch activate_adjoint(Activation act, const JetBatch& in, const Eigen::ArrayXXd& y,
                                 const JetBatch& out_adj) {
  JetBatch in_adj = in.uninitialized_like();
  switch (act) {
    case Activation::identity:
      in_adj.data = out_adj.data;
      return in_adj;
    case Activation::relu:
      in_adj.data = (in.data.array() > 0.0).select(out_adj.data, 0.0);
      return in_adj;
    case Activation::tanh:
      break;
  }
  const Eigen::ArrayXXd s = 1.0 - y.square();
  Eigen::ArrayXXd v_adj = out_adj.value().array() * s;
  if (in.order >= 1) {
    const Eigen::ArrayXXd s2 = -2.0 * y * s;
    for (int i = 0; i < in.dims; ++i) {
      const auto d1 = in.d1(i).array();
      const auto a1 = out_adj.d1(i).array();
      v_adj += a1 * s2 * d1;
      in_adj.d1(i) = (a1 * s).matrix();
    }
    if (in.order >= 2) {
      const Eigen::ArrayXXd s3 = -2.0 * s.square() + 4.0 * y.square() * s;
      for (int i = 0; i < in.dims; ++i) {
        const auto d1 = in.d1(i).array();
        const auto d2 = in.d2(i).array();
        const auto a2 = out_adj.d2(i).array();
        v_adj += a2 * (s2 * d2 + s3 * d1.square());
        in_adj.d1(i) += (2.0 * a2 * s2 * d1).matrix();
        in_adj.d2(i) = (a2 * s).matrix();
      }
    }
  }
  in_adj.value() = v_adj.matrix();
  return in_adj;
}

}  // namespace detail

/// Chain of affine layers with an activation between consecutive layers
/// (and optionally after the last one). Weights of layer k are stored as a
/// column-major `out x in` block followed by the bias.
class DenseStack {
 public:
  struct Tape {
    std::vector<JetBatch> inputs;  // input to each affine layer
    std::vector<JetBatch> pre;     // affine output fed to each activation
    std::vector<Eigen::ArrayXXd> act_value;  // tanh of each pre value block
  };

  DenseStack() = default;

  /// Registers the blocks in `layout` under `prefix.l<k>.{weight,bias}`.
  DenseStack(std::vector<std::size_t> widths, Activation act, bool activate_output,
             ParamLayout& layout, const std::string& prefix)
      : widths_(std::move(widths)), act_(act), activate_output_(activate_output) {
    if (widths_.size() < 2) throw ConfigError(prefix + ": need at least one layer");
    for (auto w : widths_)
      if (w == 0) throw ConfigError(prefix + ": layer widths must be >= 1");
    for (std::size_t k = 0; k + 1 < widths_.size(); ++k) {
      const auto p = prefix + ".l" + std::to_string(k);
      weight_off_.push_back(layout.append(p + ".weight", {widths_[k + 1], widths_[k]}));
      bias_off_.push_back(layout.append(p + ".bias", {widths_[k + 1]}));
    }
  }

  std::size_t layers() const { return weight_off_.size(); }
  std::size_t in_width() const { return widths_.front(); }
  std::size_t out_width() const { return widths_.back(); }
  const std::vector<std::size_t>& widths() const { return widths_; }
  Activation activation() const { return act_; }

  /// Uniform Glorot scaling per affine layer, zero biases.
  void init(std::span<double> params, Rng& rng) const {
    for (std::size_t k = 0; k < layers(); ++k) {
      const double fan_in = static_cast<double>(widths_[k]);
      const double fan_out = static_cast<double>(widths_[k + 1]);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      const std::size_t n = widths_[k] * widths_[k + 1];
      for (std::size_t i = 0; i < n; ++i) params[weight_off_[k] + i] = rng.uniform(-limit, limit);
      for (std::size_t i = 0; i < widths_[k + 1]; ++i) params[bias_off_[k] + i] = 0.0;
    }
  }

  Eigen::Map<const Eigen::MatrixXd> weight(std::span<const double> params, std::size_t k) const {
    return {params.data() + weight_off_[k], static_cast<Eigen::Index>(widths_[k + 1]),
            static_cast<Eigen::Index>(widths_[k])};
  }
  Eigen::Map<const Eigen::VectorXd> bias(std::span<const double> params, std::size_t k) const {
    return {params.data() + bias_off_[k], static_cast<Eigen::Index>(widths_[k + 1])};
  }
  std::size_t weight_offset(std::size_t k) const { return weight_off_[k]; }
  std::size_t bias_offset(std::size_t k) const { return bias_off_[k]; }

  JetBatch forward(std::span<const double> params, JetBatch in, Tape* tape) const {
    if (in.width() != static_cast<Eigen::Index>(in_width()))
      throw ConfigError("dense stack input width mismatch");
    if (tape) {
      tape->inputs.clear();
      tape->pre.clear();
      tape->act_value.clear();
    }
    JetBatch cur = std::move(in);
    for (std::size_t k = 0; k < layers(); ++k) {
      JetBatch next(static_cast<Eigen::Index>(widths_[k + 1]), cur.dims, cur.order, cur.batch,
                    JetBatch::Uninitialized{});
      next.data.noalias() = weight(params, k) * cur.data;
      next.value().colwise() += bias(params, k);
      if (tape) tape->inputs.push_back(std::move(cur));
      const bool act = k + 1 < layers() || activate_output_;
      if (act) {
        Eigen::ArrayXXd y;
        JetBatch post = detail::activate(act_, next, tape ? &y : nullptr);
        if (tape) {
          tape->pre.push_back(std::move(next));
          tape->act_value.push_back(std::move(y));
        }
        cur = std::move(post);
      } else {
        cur = std::move(next);
      }
    }
    return cur;
  }

  /// Accumulates parameter adjoints into `grad` and returns the adjoint of
  /// the stack input when `want_input_adjoint` is set.
  JetBatch backward(std::span<const double> params, const Tape& tape, JetBatch out_adj,
                    std::span<double> grad, bool want_input_adjoint) const {
    JetBatch adj = std::move(out_adj);
    for (std::size_t k = layers(); k-- > 0;) {
      const bool act = k + 1 < layers() || activate_output_;
      if (act) adj = detail::activate_adjoint(act_, tape.pre[k], tape.act_value[k], adj);
      const JetBatch& in = tape.inputs[k];
      Eigen::Map<Eigen::MatrixXd> gw(grad.data() + weight_off_[k],
                                     static_cast<Eigen::Index>(widths_[k + 1]),
                                     static_cast<Eigen::Index>(widths_[k]));
      Eigen::Map<Eigen::VectorXd> gb(grad.data() + bias_off_[k],
                                     static_cast<Eigen::Index>(widths_[k + 1]));
      gw.noalias() += adj.data * in.data.transpose();
      gb += adj.value().rowwise().sum();
      if (k > 0 || want_input_adjoint) {
        JetBatch prev = in.uninitialized_like();
        prev.data.noalias() = weight(params, k).transpose() * adj.data;
        adj = std::move(prev);
      }
    }
    return want_input_adjoint ? adj : JetBatch{};
  }

 private:
  std::vector<std::size_t> widths_;
  Activation act_ = Activation::tanh;
  bool activate_output_ = false;
  std::vector<std::size_t> weight_off_;
  std::vector<std::size_t> bias_off_;
};

}  // namespace propinn
