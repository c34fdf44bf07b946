#pragma once

#include <array>
#include <cmath>
#include <span>

namespace propinn {

inline constexpr int kMaxInputDims = 4;

/// Value plus pure first and second input derivatives of one output channel.
/// Mixed partials are not carried; no supported residual needs them.
template <class T>
struct Jet {
  T value{};
  std::array<T, kMaxInputDims> d1{};
  std::array<T, kMaxInputDims> d2{};
  int dims = 0;

  std::span<const T> grad() const { return {d1.data(), static_cast<std::size_t>(dims)}; }
  std::span<const T> curv() const { return {d2.data(), static_cast<std::size_t>(dims)}; }
};

using Jet2 = Jet<double>;

// ---------------------------------------------------------------------------
// Forward-mode dual number with N tangent slots. Residual operators are
// written once as templates and evaluated with Dual to obtain the adjoint of
// the squared residual with respect to every jet component.
// ---------------------------------------------------------------------------
template <int N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit lift of constants

  static Dual seed(double value, int slot) {
    Dual r(value);
    r.d[slot] = 1.0;
    return r;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int i = 0; i < N; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int i = 0; i < N; ++i) d[i] -= o.d[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (int i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
    v *= o.v;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.v;
    const double q = v * inv;
    for (int i = 0; i < N; ++i) d[i] = (d[i] - q * o.d[i]) * inv;
    v = q;
    return *this;
  }
};

template <int N> Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <int N> Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <int N> Dual<N> operator*(Dual<N> a, const Dual<N>& b) { return a *= b; }
template <int N> Dual<N> operator/(Dual<N> a, const Dual<N>& b) { return a /= b; }
template <int N> Dual<N> operator+(Dual<N> a, double b) { a.v += b; return a; }
template <int N> Dual<N> operator+(double b, Dual<N> a) { a.v += b; return a; }
template <int N> Dual<N> operator-(Dual<N> a, double b) { a.v -= b; return a; }
template <int N> Dual<N> operator-(double b, const Dual<N>& a) {
  Dual<N> r;
  r.v = b - a.v;
  for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
  return r;
}
template <int N> Dual<N> operator-(const Dual<N>& a) { return 0.0 - a; }
template <int N> Dual<N> operator*(Dual<N> a, double b) {
  a.v *= b;
  for (auto& x : a.d) x *= b;
  return a;
}
template <int N> Dual<N> operator*(double b, Dual<N> a) { return a * b; }
template <int N> Dual<N> operator/(Dual<N> a, double b) { return a * (1.0 / b); }

template <int N> Dual<N> apply_chain(const Dual<N>& a, double f, double df) {
  Dual<N> r(f);
  for (int i = 0; i < N; ++i) r.d[i] = df * a.d[i];
  return r;
}
template <int N> Dual<N> sin(const Dual<N>& a) { return apply_chain(a, std::sin(a.v), std::cos(a.v)); }
template <int N> Dual<N> cos(const Dual<N>& a) { return apply_chain(a, std::cos(a.v), -std::sin(a.v)); }
template <int N> Dual<N> exp(const Dual<N>& a) {
  const double e = std::exp(a.v);
  return apply_chain(a, e, e);
}

// ---------------------------------------------------------------------------
// Univariate truncated Taylor number (value, first, second derivative) used
// to differentiate closed-form fields exactly along one coordinate axis.
// ---------------------------------------------------------------------------
struct Taylor2 {
  double v = 0.0, d = 0.0, dd = 0.0;

  Taylor2() = default;
  Taylor2(double value) : v(value) {}  // NOLINT: implicit lift of constants
  Taylor2(double value, double first, double second) : v(value), d(first), dd(second) {}

  static Taylor2 variable(double value) { return {value, 1.0, 0.0}; }
};

inline Taylor2 operator+(const Taylor2& a, const Taylor2& b) { return {a.v + b.v, a.d + b.d, a.dd + b.dd}; }
inline Taylor2 operator-(const Taylor2& a, const Taylor2& b) { return {a.v - b.v, a.d - b.d, a.dd - b.dd}; }
inline Taylor2 operator-(const Taylor2& a) { return {-a.v, -a.d, -a.dd}; }
inline Taylor2 operator*(const Taylor2& a, const Taylor2& b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d, a.dd * b.v + 2.0 * a.d * b.d + a.v * b.dd};
}
inline Taylor2 operator/(const Taylor2& a, const Taylor2& b) {
  const double q = a.v / b.v;
  const double qd = (a.d - q * b.d) / b.v;
  const double qdd = (a.dd - 2.0 * qd * b.d - q * b.dd) / b.v;
  return {q, qd, qdd};
}
inline Taylor2 operator+(const Taylor2& a, double b) { return {a.v + b, a.d, a.dd}; }
inline Taylor2 operator+(double b, const Taylor2& a) { return a + b; }
inline Taylor2 operator-(const Taylor2& a, double b) { return {a.v - b, a.d, a.dd}; }
inline Taylor2 operator-(double b, const Taylor2& a) { return {b - a.v, -a.d, -a.dd}; }
inline Taylor2 operator*(const Taylor2& a, double b) { return {a.v * b, a.d * b, a.dd * b}; }
inline Taylor2 operator*(double b, const Taylor2& a) { return a * b; }
inline Taylor2 operator/(const Taylor2& a, double b) { return a * (1.0 / b); }

/// f(a) given f, f', f'' at a.v.
inline Taylor2 compose(const Taylor2& a, double f, double df, double ddf) {
  return {f, df * a.d, df * a.dd + ddf * a.d * a.d};
}
inline Taylor2 sin(const Taylor2& a) {
  const double s = std::sin(a.v), c = std::cos(a.v);
  return compose(a, s, c, -s);
}
inline Taylor2 cos(const Taylor2& a) {
  const double s = std::sin(a.v), c = std::cos(a.v);
  return compose(a, c, -s, -c);
}
inline Taylor2 exp(const Taylor2& a) {
  const double e = std::exp(a.v);
  return compose(a, e, e, e);
}
inline Taylor2 tanh(const Taylor2& a) {
  const double y = std::tanh(a.v);
  const double s = 1.0 - y * y;
  return compose(a, y, s, -2.0 * y * s);
}

using std::cos;
using std::exp;
using std::sin;
using std::tanh;

/// Exact jet of a closed-form field f(coords) at `x`, one Taylor sweep per
/// axis. `f` takes a span of Taylor2 coordinates and returns Taylor2.
template <class F>
Jet2 closed_form_jet(F&& f, std::span<const double> x) {
  Jet2 jet;
  jet.dims = static_cast<int>(x.size());
  std::array<Taylor2, kMaxInputDims> c{};
  for (int i = 0; i < jet.dims; ++i) c[i] = Taylor2(x[i]);
  const std::span<const Taylor2> cs(c.data(), x.size());
  jet.value = f(cs).v;
  for (int i = 0; i < jet.dims; ++i) {
    c[i] = Taylor2::variable(x[i]);
    const Taylor2 r = f(cs);
    jet.d1[i] = r.d;
    jet.d2[i] = r.dd;
    c[i] = Taylor2(x[i]);
  }
  return jet;
}

}  // namespace propinn
