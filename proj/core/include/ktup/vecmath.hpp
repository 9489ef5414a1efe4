#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace ktup {

// Parameters are stored as float32 rows; all arithmetic runs in double.

template <typename A, typename B>
inline double dot(std::span<const A> a, std::span<const B> b) {
  double s = 0.0;
  for (size_t k = 0; k < a.size(); ++k) s += static_cast<double>(a[k]) * static_cast<double>(b[k]);
  return s;
}

template <typename T>
inline double norm2(std::span<const T> a) {
  return std::sqrt(dot(a, a));
}

template <typename T>
inline double l1(std::span<const T> a) {
  double s = 0.0;
  for (size_t k = 0; k < a.size(); ++k) s += std::fabs(static_cast<double>(a[k]));
  return s;
}

// componentwise sign with sign(0) = 0 (L1 subgradient convention)
inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

template <typename T>
inline void axpy(double a, std::span<const T> x, std::span<double> y) {
  for (size_t k = 0; k < x.size(); ++k) y[k] += a * static_cast<double>(x[k]);
}

template <typename T>
inline void widen(std::span<const T> x, std::span<double> out) {
  for (size_t k = 0; k < x.size(); ++k) out[k] = static_cast<double>(x[k]);
}

// out = v - ((w.v)/(w.w)) w. Scale-invariant in w, so the output is
// orthogonal to w even when w is only approximately unit.
template <typename V, typename W>
inline void project_hyperplane(std::span<const V> v, std::span<const W> w, std::span<double> out) {
  double q = dot(w, w);
  double c = q > 0.0 ? dot(w, v) / q : 0.0;
  for (size_t k = 0; k < v.size(); ++k)
    out[k] = static_cast<double>(v[k]) - c * static_cast<double>(w[k]);
}

}  // namespace ktup
