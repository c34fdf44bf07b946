#pragma once

#include <functional>
#include <span>
#include <string>

#include "propinn/core/errors.hpp"
#include "propinn/core/jet.hpp"

namespace propinn {

/// Residual operator over jets. `jets` holds arity * m entries, point-major
/// (entry p * m + j is channel j at point p); `x` are the coordinates of the
/// first point; the operator writes `components` residual values to `out`.
template <class T>
using ConditionFn = std::function<void(std::span<const Jet<T>>, std::span<const double>, std::span<T>)>;

/// Dual widths a condition is instantiated for; the engine picks the
/// smallest one that fits arity * m * (1 + dims * order) seeds.
inline constexpr int kDualSmall = 8;
inline constexpr int kDualMedium = 16;
inline constexpr int kDualLarge = 64;

/// A squared-penalty term F, I or B evaluated on one or two points
/// (two for periodic pairings).
class Condition {
 public:
  Condition() = default;

  /// `f` must be a generic callable usable with double and Dual<N> scalars.
  template <class F>
  Condition(std::string name, int arity, int order, int components, F f)
      : name_(std::move(name)), arity_(arity), order_(order), components_(components),
        f_double_(f), f_small_(f), f_medium_(f), f_large_(f) {
    if (order_ < 0 || order_ > 2)
      throw UnsupportedOrder(name_ + ": input derivative order " + std::to_string(order_) +
                             " requested; at most 2 is supported");
    if (arity_ < 1 || arity_ > 2) throw ConfigError(name_ + ": arity must be 1 or 2");
    if (components_ < 1) throw ConfigError(name_ + ": needs at least one component");
  }

  const std::string& name() const { return name_; }
  int arity() const { return arity_; }
  int order() const { return order_; }
  int components() const { return components_; }
  bool empty() const { return !f_double_; }

  template <class T>
  void operator()(std::span<const Jet<T>> jets, std::span<const double> x, std::span<T> out) const {
    if constexpr (std::is_same_v<T, double>) f_double_(jets, x, out);
    else if constexpr (std::is_same_v<T, Dual<kDualSmall>>) f_small_(jets, x, out);
    else if constexpr (std::is_same_v<T, Dual<kDualMedium>>) f_medium_(jets, x, out);
    else f_large_(jets, x, out);
  }

 private:
  std::string name_;
  int arity_ = 1;
  int order_ = 0;
  int components_ = 1;
  ConditionFn<double> f_double_;
  ConditionFn<Dual<kDualSmall>> f_small_;
  ConditionFn<Dual<kDualMedium>> f_medium_;
  ConditionFn<Dual<kDualLarge>> f_large_;
};

}  // namespace propinn
