#pragma once

#include <span>
#include <vector>

#include "propinn/core/autodiff.hpp"
#include "propinn/core/flat_params.hpp"
#include "propinn/core/jet_batch.hpp"
#include "propinn/core/rng.hpp"

namespace propinn {

/// Vanilla PINN: `depth` affine layers, activation between them.
/// depth = 1 is a single affine map.
struct MlpConfig {
  int input_dim = 2;
  int hidden_width = 128;
  int depth = 4;
  int output_dim = 1;
  Activation activation = Activation::tanh;
  /// Fixed (non-trainable) multiplier on the network output.
  double output_scale = 1.0;

  void validate() const {
    if (input_dim < 1 || hidden_width < 1 || depth < 1 || output_dim < 1)
      throw ConfigError("MLP dimensions must all be >= 1");
    if (input_dim > kMaxInputDims) throw ConfigError("MLP input dimension too large");
  }

  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{static_cast<std::size_t>(input_dim)};
    for (int k = 1; k < depth; ++k) w.push_back(static_cast<std::size_t>(hidden_width));
    w.push_back(static_cast<std::size_t>(output_dim));
    return w;
  }

  /// Parameter count from the layer shapes.
  std::size_t param_count() const {
    const auto w = widths();
    std::size_t n = 0;
    for (std::size_t k = 0; k + 1 < w.size(); ++k) n += w[k] * w[k + 1] + w[k + 1];
    return n;
  }
};

class Mlp {
 public:
  using Tape = DenseStack::Tape;

  explicit Mlp(MlpConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    stack_ = DenseStack(cfg_.widths(), cfg_.activation, false, layout_, "mlp");
  }

  int input_dim() const { return cfg_.input_dim; }
  int output_dim() const { return cfg_.output_dim; }
  const ParamLayout& layout() const { return layout_; }
  const MlpConfig& config() const { return cfg_; }
  const DenseStack& stack() const { return stack_; }

  FlatParams init_params(std::uint64_t seed) const {
    FlatParams p{std::vector<double>(layout_.total()), layout_};
    Rng rng(derive_seed(seed, streams::kInit));
    stack_.init(p.values, rng);
    return p;
  }

  JetBatch forward(std::span<const double> params, const Eigen::MatrixXd& x, int order, Tape* tape) const {
    JetBatch out = stack_.forward(params, JetBatch::seed_inputs(x, order), tape);
    if (cfg_.output_scale != 1.0) out.data *= cfg_.output_scale;
    return out;
  }

  void backward(std::span<const double> params, const Tape& tape, const JetBatch& out_adj,
                std::span<double> grad) const {
    JetBatch adj = out_adj;
    if (cfg_.output_scale != 1.0) adj.data *= cfg_.output_scale;
    stack_.backward(params, tape, std::move(adj), grad, false);
  }

 private:
  MlpConfig cfg_;
  ParamLayout layout_;
  DenseStack stack_;
};

}  // namespace propinn
