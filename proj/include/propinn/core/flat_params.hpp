#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "propinn/core/errors.hpp"

namespace propinn {

struct LayoutEntry {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;

  std::size_t size() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>{});
  }
};

/// Ordered map from model sub-components to contiguous index ranges.
class ParamLayout {
 public:
  /// Appends an entry right after the previous one and returns its offset.
  std::size_t append(std::string name, std::vector<std::size_t> shape) {
    LayoutEntry e{std::move(name), total_, std::move(shape)};
    total_ += e.size();
    entries_.push_back(std::move(e));
    return entries_.back().offset;
  }

  std::size_t total() const { return total_; }
  const std::vector<LayoutEntry>& entries() const { return entries_; }

  const LayoutEntry& find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return e;
    throw ConfigError("unknown parameter block: " + name);
  }

  /// Offsets start at 0, are contiguous and sum to total().
  bool valid() const {
    std::size_t next = 0;
    for (const auto& e : entries_) {
      if (e.offset != next) return false;
      next += e.size();
    }
    return next == total_;
  }

 private:
  std::vector<LayoutEntry> entries_;
  std::size_t total_ = 0;
};

/// The model parameter vector theta together with its layout.
struct FlatParams {
  std::vector<double> values;
  ParamLayout layout;

  std::size_t size() const { return values.size(); }
  std::span<const double> view() const { return values; }
  std::span<double> view() { return values; }

  std::span<const double> block(const std::string& name) const {
    const auto& e = layout.find(name);
    return std::span<const double>(values).subspan(e.offset, e.size());
  }
  std::span<double> block(const std::string& name) {
    const auto& e = layout.find(name);
    return std::span<double>(values).subspan(e.offset, e.size());
  }

  bool consistent() const { return layout.valid() && layout.total() == values.size(); }

  bool finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

}  // namespace propinn
