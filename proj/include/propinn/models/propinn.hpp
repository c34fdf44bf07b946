#pragma once

// ProPINN: a shared projector applied to a point and to randomly perturbed
// copies of it in several nested regions, mean pooling per region, a small
// mixer across the region axis, and an output head.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "propinn/core/autodiff.hpp"
#include "propinn/core/flat_params.hpp"
#include "propinn/core/jet_batch.hpp"
#include "propinn/core/rng.hpp"

namespace propinn {

struct ProPinnConfig {
  int input_dim = 2;
  int d_model = 32;
  int num_scales = 3;
  std::vector<double> region_sizes{0.01, 0.05, 0.09};
  /// Empty means the default (2r+1)^input_dim for r = 1..num_scales.
  std::vector<int> perturb_counts;
  int projector_hidden = 8;
  int mixer_hidden = 8;
  int head_hidden = 64;
  int head_depth = 3;
  int output_dim = 1;
  Activation activation = Activation::tanh;
  /// Treat perturbed-point representations as constants (no gradient path
  /// to the parameters or the inputs).
  bool detach_perturbation = false;
  double output_scale = 1.0;

  static int default_count(int scale_index, int input_dim) {
    return static_cast<int>(std::lround(std::pow(2.0 * (scale_index + 1) + 1.0, input_dim)));
  }

  /// Copy with perturb_counts filled in.
  ProPinnConfig resolved() const {
    ProPinnConfig c = *this;
    if (c.perturb_counts.empty())
      for (int r = 0; r < c.num_scales; ++r) c.perturb_counts.push_back(default_count(r, c.input_dim));
    return c;
  }

  void validate() const {
    if (input_dim < 1 || input_dim > kMaxInputDims) throw ConfigError("ProPINN input dimension out of range");
    if (d_model < 1 || projector_hidden < 1 || mixer_hidden < 1 || head_hidden < 1 || head_depth < 1 ||
        output_dim < 1)
      throw ConfigError("ProPINN widths must all be >= 1");
    if (num_scales < 1) throw ConfigError("ProPINN needs at least one scale");
    if (static_cast<int>(region_sizes.size()) != num_scales)
      throw ConfigError("region_sizes must have num_scales entries");
    for (int r = 0; r < num_scales; ++r) {
      if (!(region_sizes[r] > 0.0)) throw ConfigError("region sizes must be positive");
      if (r > 0 && !(region_sizes[r] > region_sizes[r - 1]))
        throw ConfigError("region sizes must be strictly increasing");
    }
    if (!perturb_counts.empty()) {
      if (static_cast<int>(perturb_counts.size()) != num_scales)
        throw ConfigError("perturb_counts must have num_scales entries");
      for (int k : perturb_counts)
        if (k < 1) throw ConfigError("perturbation counts must be positive");
    }
  }
};

/// Offsets per scale, each `input_dim x k_r`, uniform on [-R_r, R_r]^(d+1).
struct PerturbationBatch {
  std::vector<Eigen::MatrixXd> offsets;
  std::uint64_t seed = 0;

  int total() const {
    int n = 0;
    for (const auto& o : offsets) n += static_cast<int>(o.cols());
    return n;
  }
};

/// Region bounds are taken from `cfg` without the positivity check so that
/// degenerate (zero-size) regions can be sampled.
inline PerturbationBatch sample_perturbations(const ProPinnConfig& config, std::uint64_t seed) {
  const ProPinnConfig cfg = config.resolved();
  PerturbationBatch batch;
  batch.seed = seed;
  Rng rng(seed);
  for (int r = 0; r < cfg.num_scales; ++r) {
    const double radius = cfg.region_sizes.at(r);
    Eigen::MatrixXd o(cfg.input_dim, cfg.perturb_counts.at(r));
    for (Eigen::Index i = 0; i < o.cols(); ++i)
      for (Eigen::Index d = 0; d < o.rows(); ++d) o(d, i) = (2.0 * rng.uniform() - 1.0) * radius;
    batch.offsets.push_back(std::move(o));
  }
  return batch;
}

/// Sorts each scale's offsets lexicographically. Pooling then sums them in an
/// order that does not depend on how the batch was listed, which makes the
/// model bitwise invariant to permutations within a scale.
inline void canonicalize(PerturbationBatch& batch) {
  for (auto& o : batch.offsets) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(o.cols()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
      for (Eigen::Index d = 0; d < o.rows(); ++d)
        if (o(d, a) != o(d, b)) return o(d, a) < o(d, b);
      return false;
    });
    Eigen::MatrixXd sorted(o.rows(), o.cols());
    for (Eigen::Index i = 0; i < o.cols(); ++i) sorted.col(i) = o.col(idx[static_cast<std::size_t>(i)]);
    o = std::move(sorted);
  }
}

class ProPinn {
 public:
  struct Tape {
    DenseStack::Tape projector_point;
    DenseStack::Tape projector_region;
    DenseStack::Tape projector_out;
    DenseStack::Tape mixer;
    DenseStack::Tape head;
    Eigen::Index batch = 0;
    int order = 0;
  };

  explicit ProPinn(ProPinnConfig cfg) : cfg_(cfg.resolved()) {
    cfg_.validate();
    const auto in = static_cast<std::size_t>(cfg_.input_dim);
    const auto hid = static_cast<std::size_t>(cfg_.projector_hidden);
    const auto dm = static_cast<std::size_t>(cfg_.d_model);
    projector_in_ = DenseStack({in, hid}, cfg_.activation, true, layout_, "projector.in");
    projector_out_ = DenseStack({hid, dm}, cfg_.activation, false, layout_, "projector.out");
    const auto slots = static_cast<std::size_t>(1 + cfg_.num_scales);
    mixer_ = DenseStack({slots, static_cast<std::size_t>(cfg_.mixer_hidden), 1}, cfg_.activation, false, layout_,
                        "mixer");
    std::vector<std::size_t> hw{dm};
    for (int k = 1; k < cfg_.head_depth; ++k) hw.push_back(static_cast<std::size_t>(cfg_.head_hidden));
    hw.push_back(static_cast<std::size_t>(cfg_.output_dim));
    head_ = DenseStack(hw, cfg_.activation, false, layout_, "head");
    perturbations_ = sample_perturbations(cfg_, 0);
    canonicalize(perturbations_);
  }

  ProPinn(ProPinnConfig cfg, PerturbationBatch perturbations) : ProPinn(std::move(cfg)) {
    set_perturbations(std::move(perturbations));
  }

  int input_dim() const { return cfg_.input_dim; }
  int output_dim() const { return cfg_.output_dim; }
  const ParamLayout& layout() const { return layout_; }
  const ProPinnConfig& config() const { return cfg_; }
  const PerturbationBatch& perturbations() const { return perturbations_; }
  const DenseStack& head() const { return head_; }

  void set_perturbations(PerturbationBatch p) {
    if (static_cast<int>(p.offsets.size()) != cfg_.num_scales)
      throw ConfigError("perturbation batch has wrong number of scales");
    for (int r = 0; r < cfg_.num_scales; ++r)
      if (p.offsets[r].rows() != cfg_.input_dim || p.offsets[r].cols() != cfg_.perturb_counts[r])
        throw ConfigError("perturbation batch does not match the configured scales");
    canonicalize(p);
    perturbations_ = std::move(p);
  }

  /// Same parameters layout, fresh perturbations drawn from `seed`.
  ProPinn resampled(std::uint64_t seed) const {
    ProPinn copy = *this;
    copy.perturbations_ = sample_perturbations(cfg_, seed);
    canonicalize(copy.perturbations_);
    return copy;
  }

  FlatParams init_params(std::uint64_t seed) const {
    FlatParams p{std::vector<double>(layout_.total()), layout_};
    Rng rng(derive_seed(seed, streams::kInit));
    projector_in_.init(p.values, rng);
    projector_out_.init(p.values, rng);
    mixer_.init(p.values, rng);
    head_.init(p.values, rng);
    return p;
  }

  JetBatch forward(std::span<const double> params, const Eigen::MatrixXd& x, int order, Tape* tape) const {
    const Eigen::Index B = x.cols();
    const int dims = cfg_.input_dim;
    const int S = cfg_.num_scales;
    const int K = perturbations_.total();

    // Shared first projector layer on the point and on every perturbed copy.
    JetBatch h_point = projector_in_.forward(params, JetBatch::seed_inputs(x, order),
                                             tape ? &tape->projector_point : nullptr);
    Eigen::MatrixXd xp(dims, static_cast<Eigen::Index>(K) * B);
    {
      Eigen::Index col = 0;
      for (const auto& off : perturbations_.offsets)
        for (Eigen::Index i = 0; i < off.cols(); ++i, col += B)
          xp.middleCols(col, B) = x.colwise() + off.col(i);
    }
    JetBatch h_pert = projector_in_.forward(params, JetBatch::seed_inputs(xp, order),
                                            tape ? &tape->projector_region : nullptr);

    // Slots: point, then the mean hidden state per region. The second
    // projector layer is affine, so it commutes with the mean.
    const int comps = h_point.comps();
    JetBatch slots(cfg_.projector_hidden, dims, order, (1 + S) * B, JetBatch::Uninitialized{});
    for (int c = 0; c < comps; ++c) {
      slots.block(c).leftCols(B) = h_point.block(c);
      if (cfg_.detach_perturbation && c > 0) {
        slots.block(c).rightCols(S * B).setZero();
        continue;
      }
      Eigen::Index first = 0;
      for (int r = 0; r < S; ++r) {
        const Eigen::Index k = perturbations_.offsets[r].cols();
        auto pooled = slots.block(c).middleCols((1 + r) * B, B);
        pooled.setZero();
        for (Eigen::Index i = 0; i < k; ++i) pooled += h_pert.block(c).middleCols((first + i) * B, B);
        pooled /= static_cast<double>(k);
        first += k;
      }
    }
    JetBatch z = projector_out_.forward(params, std::move(slots), tape ? &tape->projector_out : nullptr);

    // Mixer runs along the slot axis, shared across channels:
    // input width 1+S, batch d_model*B (channel fastest).
    const int dm = cfg_.d_model;
    JetBatch mix_in(1 + S, dims, order, static_cast<Eigen::Index>(dm) * B, JetBatch::Uninitialized{});
    for (int c = 0; c < comps; ++c)
      for (int s = 0; s <= S; ++s) {
        const double* src = z.data.data() + (static_cast<Eigen::Index>(c) * (1 + S) + s) * B * dm;
        mix_in.block(c).row(s) = Eigen::Map<const Eigen::RowVectorXd>(src, dm * B);
      }
    JetBatch mixed = mixer_.forward(params, std::move(mix_in), tape ? &tape->mixer : nullptr);
    JetBatch head_in(dm, dims, order, B, JetBatch::Uninitialized{});
    head_in.data = Eigen::Map<const Eigen::MatrixXd>(mixed.data.data(), dm, comps * B);

    JetBatch out = head_.forward(params, std::move(head_in), tape ? &tape->head : nullptr);
    if (cfg_.output_scale != 1.0) out.data *= cfg_.output_scale;
    if (tape) {
      tape->batch = B;
      tape->order = order;
    }
    return out;
  }

  void backward(std::span<const double> params, const Tape& tape, const JetBatch& out_adj,
                std::span<double> grad) const {
    const Eigen::Index B = tape.batch;
    const int S = cfg_.num_scales;
    const int dm = cfg_.d_model;
    JetBatch adj = out_adj;
    if (cfg_.output_scale != 1.0) adj.data *= cfg_.output_scale;
    const int comps = adj.comps();

    JetBatch head_in_adj = head_.backward(params, tape.head, std::move(adj), grad, true);
    JetBatch mixed_adj(1, head_in_adj.dims, head_in_adj.order, static_cast<Eigen::Index>(dm) * B,
                       JetBatch::Uninitialized{});
    mixed_adj.data = Eigen::Map<const Eigen::RowVectorXd>(head_in_adj.data.data(), head_in_adj.data.size());
    JetBatch mix_in_adj = mixer_.backward(params, tape.mixer, std::move(mixed_adj), grad, true);

    JetBatch z_adj(dm, head_in_adj.dims, head_in_adj.order, (1 + S) * B, JetBatch::Uninitialized{});
    for (int c = 0; c < comps; ++c)
      for (int s = 0; s <= S; ++s) {
        const Eigen::RowVectorXd row = mix_in_adj.block(c).row(s);
        z_adj.block(c).middleCols(s * B, B) = Eigen::Map<const Eigen::MatrixXd>(row.data(), dm, B);
      }
    if (cfg_.detach_perturbation)
      for (int c = 0; c < comps; ++c) z_adj.block(c).rightCols(S * B).setZero();

    JetBatch slots_adj = projector_out_.backward(params, tape.projector_out, std::move(z_adj), grad, true);

    JetBatch point_adj(cfg_.projector_hidden, slots_adj.dims, slots_adj.order, B, JetBatch::Uninitialized{});
    for (int c = 0; c < comps; ++c) point_adj.block(c) = slots_adj.block(c).leftCols(B);
    projector_in_.backward(params, tape.projector_point, std::move(point_adj), grad, false);

    if (cfg_.detach_perturbation) return;
    const int K = perturbations_.total();
    JetBatch pert_adj(cfg_.projector_hidden, slots_adj.dims, slots_adj.order, static_cast<Eigen::Index>(K) * B,
                      JetBatch::Uninitialized{});
    for (int c = 0; c < comps; ++c) {
      Eigen::Index first = 0;
      for (int r = 0; r < S; ++r) {
        const Eigen::Index k = perturbations_.offsets[r].cols();
        const Eigen::MatrixXd share = slots_adj.block(c).middleCols((1 + r) * B, B) / static_cast<double>(k);
        for (Eigen::Index i = 0; i < k; ++i) pert_adj.block(c).middleCols((first + i) * B, B) = share;
        first += k;
      }
    }
    projector_in_.backward(params, tape.projector_region, std::move(pert_adj), grad, false);
  }

 private:
  ProPinnConfig cfg_;
  ParamLayout layout_;
  DenseStack projector_in_;
  DenseStack projector_out_;
  DenseStack mixer_;
  DenseStack head_;
  PerturbationBatch perturbations_;
};

}  // namespace propinn
