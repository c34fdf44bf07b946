#pragma once

#include <functional>
#include <span>
#include <vector>

#include "propinn/core/autodiff.hpp"
#include "propinn/core/jet.hpp"

namespace propinn {

/// Closed-form field over Taylor2 coordinates.
using ClosedForm = std::function<Taylor2(std::span<const Taylor2>)>;

/// Model linear in its parameters:
///   u_j(x) = offset_j(x) + sum_{k in channel j} theta_k * phi_k(x)
/// with closed-form features. Used for exact-solution and linear-in-theta
/// test models; jets come from Taylor sweeps, gradients are the features.
class FeatureModel {
 public:
  struct Feature {
    int channel = 0;
    ClosedForm phi;
  };
  struct Tape {
    Eigen::MatrixXd x;
  };

  FeatureModel(int input_dim, int output_dim, std::vector<Feature> features,
               std::vector<ClosedForm> offsets = {})
      : input_dim_(input_dim), output_dim_(output_dim), features_(std::move(features)),
        offsets_(std::move(offsets)) {
    if (input_dim_ < 1 || input_dim_ > kMaxInputDims || output_dim_ < 1)
      throw ConfigError("feature model dimensions out of range");
    for (const auto& f : features_)
      if (f.channel < 0 || f.channel >= output_dim_) throw ConfigError("feature channel out of range");
    if (!offsets_.empty() && static_cast<int>(offsets_.size()) != output_dim_)
      throw ConfigError("need one offset per output channel");
    if (!features_.empty()) layout_.append("theta", {features_.size()});
  }

  /// Single-channel field u = theta_0 * f(x), used with theta_0 = 1 to embed
  /// a closed-form solution as a model.
  static FeatureModel scalar(int input_dim, ClosedForm f) {
    return FeatureModel(input_dim, 1, {Feature{0, std::move(f)}});
  }

  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t feature_count() const { return features_.size(); }

  JetBatch forward(std::span<const double> params, const Eigen::MatrixXd& x, int order, Tape* tape) const {
    JetBatch out(output_dim_, input_dim_, order, x.cols());
    for (Eigen::Index e = 0; e < x.cols(); ++e) {
      const std::span<const double> pt(x.data() + e * x.rows(), static_cast<std::size_t>(x.rows()));
      for (std::size_t k = 0; k < features_.size(); ++k)
        add_jet(out, features_[k].channel, e, closed_form_jet(features_[k].phi, pt), params[k]);
      for (std::size_t j = 0; j < offsets_.size(); ++j)
        if (offsets_[j]) add_jet(out, static_cast<int>(j), e, closed_form_jet(offsets_[j], pt), 1.0);
    }
    if (tape) tape->x = x;
    return out;
  }

  void backward(std::span<const double>, const Tape& tape, const JetBatch& adj, std::span<double> grad) const {
    for (Eigen::Index e = 0; e < tape.x.cols(); ++e) {
      const std::span<const double> pt(tape.x.data() + e * tape.x.rows(), static_cast<std::size_t>(tape.x.rows()));
      for (std::size_t k = 0; k < features_.size(); ++k) {
        const Jet2 j = closed_form_jet(features_[k].phi, pt);
        const int ch = features_[k].channel;
        double g = adj.value()(ch, e) * j.value;
        if (adj.order >= 1)
          for (int i = 0; i < adj.dims; ++i) g += adj.d1(i)(ch, e) * j.d1[i];
        if (adj.order >= 2)
          for (int i = 0; i < adj.dims; ++i) g += adj.d2(i)(ch, e) * j.d2[i];
        grad[k] += g;
      }
    }
  }

 private:
  static void add_jet(JetBatch& out, int ch, Eigen::Index e, const Jet2& j, double scale) {
    out.value()(ch, e) += scale * j.value;
    if (out.order >= 1)
      for (int i = 0; i < out.dims; ++i) out.d1(i)(ch, e) += scale * j.d1[i];
    if (out.order >= 2)
      for (int i = 0; i < out.dims; ++i) out.d2(i)(ch, e) += scale * j.d2[i];
  }

  int input_dim_;
  int output_dim_;
  std::vector<Feature> features_;
  std::vector<ClosedForm> offsets_;
  ParamLayout layout_;
};

/// u(x) = sum_j c_j * base(x + s_j), sharing the base parameters.
template <DifferentiableModel Base>
class ShiftCombination {
 public:
  struct Tape {
    std::vector<typename Base::Tape> parts;
  };

  ShiftCombination(Base base, std::vector<double> coefficients, std::vector<Eigen::VectorXd> shifts)
      : base_(std::move(base)), coef_(std::move(coefficients)), shifts_(std::move(shifts)) {
    if (coef_.size() != shifts_.size() || coef_.empty()) throw ConfigError("one coefficient per shift required");
    for (const auto& s : shifts_)
      if (s.size() != base_.input_dim()) throw ConfigError("shift dimension mismatch");
  }

  int input_dim() const { return base_.input_dim(); }
  int output_dim() const { return base_.output_dim(); }
  const ParamLayout& layout() const { return base_.layout(); }
  const Base& base() const { return base_; }

  JetBatch forward(std::span<const double> params, const Eigen::MatrixXd& x, int order, Tape* tape) const {
    if (tape) tape->parts.assign(coef_.size(), typename Base::Tape{});
    JetBatch out;
    for (std::size_t j = 0; j < coef_.size(); ++j) {
      const Eigen::MatrixXd xs = x.colwise() + shifts_[j];
      JetBatch part = base_.forward(params, xs, order, tape ? &tape->parts[j] : nullptr);
      if (j == 0) {
        out = part.zeros_like();
      }
      out.data += coef_[j] * part.data;
    }
    return out;
  }

  void backward(std::span<const double> params, const Tape& tape, const JetBatch& adj, std::span<double> grad) const {
    for (std::size_t j = 0; j < coef_.size(); ++j) {
      JetBatch scaled = adj;
      scaled.data *= coef_[j];
      base_.backward(params, tape.parts[j], scaled, grad);
    }
  }

 private:
  Base base_;
  std::vector<double> coef_;
  std::vector<Eigen::VectorXd> shifts_;
};

/// u_region(x) = u(x) + (1/k) * sum_i u(x + delta_i), offsets as columns.
template <DifferentiableModel Base>
ShiftCombination<Base> region_lifted_model(Base base, const Eigen::MatrixXd& offsets) {
  const auto k = offsets.cols();
  std::vector<double> coef{1.0};
  std::vector<Eigen::VectorXd> shifts{Eigen::VectorXd::Zero(offsets.rows())};
  for (Eigen::Index i = 0; i < k; ++i) {
    coef.push_back(1.0 / static_cast<double>(k));
    shifts.push_back(offsets.col(i));
  }
  return ShiftCombination<Base>(std::move(base), std::move(coef), std::move(shifts));
}

}  // namespace propinn
