#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "propinn/core/errors.hpp"

namespace propinn {

/// 64-bit FNV-1a over raw bytes.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Shortest round-trip-safe decimal at 17 significant digits.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Scalar field sampled on a tensor grid; values are stored with x fastest
/// (index j_t * n_x + i_x).
struct ReferenceGrid {
  std::vector<double> xs;
  std::vector<double> ts;
  std::vector<double> values;
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t n_x() const { return xs.size(); }
  std::size_t n_t() const { return ts.size(); }
  double at_node(std::size_t ix, std::size_t jt) const { return values[jt * xs.size() + ix]; }
  double& at_node(std::size_t ix, std::size_t jt) { return values[jt * xs.size() + ix]; }

  /// Bilinear interpolation; points outside the grid are clamped onto it.
  double operator()(double x, double t) const {
    auto locate = [](const std::vector<double>& axis, double v, std::size_t& i, double& w) {
      if (v <= axis.front()) {
        i = 0;
        w = 0.0;
        return;
      }
      if (v >= axis.back()) {
        i = axis.size() - 2;
        w = 1.0;
        return;
      }
      i = static_cast<std::size_t>(std::upper_bound(axis.begin(), axis.end(), v) - axis.begin()) - 1;
      i = std::min(i, axis.size() - 2);
      w = (v - axis[i]) / (axis[i + 1] - axis[i]);
    };
    std::size_t i, j;
    double wx, wt;
    locate(xs, x, i, wx);
    locate(ts, t, j, wt);
    const double a = at_node(i, j), b = at_node(i + 1, j);
    const double c = at_node(i, j + 1), d = at_node(i + 1, j + 1);
    return (1 - wt) * ((1 - wx) * a + wx * b) + wt * ((1 - wx) * c + wx * d);
  }

  void validate() const {
    if (xs.size() < 2 || ts.size() < 2) throw ConfigError("reference grid needs at least 2 nodes per axis");
    if (values.size() != xs.size() * ts.size()) throw ConfigError("reference grid value count mismatch");
    for (std::size_t i = 1; i < xs.size(); ++i)
      if (!(xs[i] > xs[i - 1])) throw ConfigError("reference grid x axis not increasing");
    for (std::size_t i = 1; i < ts.size(); ++i)
      if (!(ts[i] > ts[i - 1])) throw ConfigError("reference grid t axis not increasing");
  }

  /// CSV body with header "x,t,u", rows ordered t-major, x fastest.
  std::string to_csv() const {
    std::string out = "x,t,u\n";
    out.reserve(values.size() * 64);
    for (std::size_t j = 0; j < ts.size(); ++j)
      for (std::size_t i = 0; i < xs.size(); ++i) {
        out += fmt17(xs[i]);
        out += ',';
        out += fmt17(ts[j]);
        out += ',';
        out += fmt17(at_node(i, j));
        out += '\n';
      }
    return out;
  }

  /// Writes `path` and the sidecar `path + ".json"` with shape, metadata and
  /// the content hash of the CSV bytes.
  void save(const std::string& path) const {
    validate();
    const std::string csv = to_csv();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path);
    f << csv;
    nlohmann::json side = metadata;
    side["shape"] = {{"n_x", xs.size()}, {"n_t", ts.size()}};
    side["columns"] = {"x", "t", "u"};
    side["content_hash"] = "fnv1a64:" + hex64(fnv1a64(csv));
    std::ofstream s(path + ".json", std::ios::binary);
    if (!s) throw ConfigError("cannot write " + path + ".json");
    s << side.dump(2) << '\n';
  }

  /// Reads a grid written by save(); verifies the sidecar hash when present.
  static ReferenceGrid load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string csv = ss.str();

    ReferenceGrid g;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    if (line != "x,t,u") throw ConfigError(path + ": expected header x,t,u");
    std::vector<double> x, t, u;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      double a, b, c;
      if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &a, &b, &c) != 3) throw ConfigError(path + ": bad row " + line);
      x.push_back(a);
      t.push_back(b);
      u.push_back(c);
    }
    if (x.empty()) throw ConfigError(path + ": no data");
    for (std::size_t i = 0; i < x.size() && t[i] == t[0]; ++i) g.xs.push_back(x[i]);
    for (std::size_t j = 0; j < t.size(); j += g.xs.size()) g.ts.push_back(t[j]);
    g.values = std::move(u);
    g.validate();

    std::ifstream s(path + ".json");
    if (s) {
      g.metadata = nlohmann::json::parse(s);
      const std::string expect = "fnv1a64:" + hex64(fnv1a64(csv));
      if (g.metadata.contains("content_hash") && g.metadata["content_hash"] != expect)
        throw ConfigError(path + ": content hash mismatch");
    }
    return g;
  }
};

}  // namespace propinn
