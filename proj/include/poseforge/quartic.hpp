#pragma once

// Closed-form roots of real cubics and quartics.
//
// Quartics use Ferrari's method: depress, pick the largest real root of the
// resolvent cubic, split into two real quadratics. Fractional powers of
// complex numbers go through the polar form z^a = |z|^a (cos a*theta + i sin a*theta).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "poseforge/errors.hpp"

namespace poseforge {

using Complex = std::complex<double>;

inline Complex complex_pow(const Complex& z, double exponent) {
  const double r = std::abs(z);
  if (r == 0.0) return {0.0, 0.0};
  const double theta = std::atan2(z.imag(), z.real());
  const double rn = std::pow(r, exponent);
  return {rn * std::cos(exponent * theta), rn * std::sin(exponent * theta)};
}

inline Complex complex_sqrt(const Complex& z) { return complex_pow(z, 0.5); }

struct QuarticRoots {
  std::vector<double> real_roots;      // ascending
  int complex_pair_count = 0;
  std::vector<Complex> complex_roots;  // one per conjugate pair, imag > 0
};

namespace detail {

inline double eval_poly(const std::array<double, 5>& c, double x) {
  return (((c[0] * x + c[1]) * x + c[2]) * x + c[3]) * x + c[4];
}

inline double eval_poly_derivative(const std::array<double, 5>& c, double x) {
  return ((4.0 * c[0] * x + 3.0 * c[1]) * x + 2.0 * c[2]) * x + c[3];
}

// Newton steps that are kept only while they reduce |f|.
inline double polish_root(const std::array<double, 5>& c, double x, int steps) {
  double fx = eval_poly(c, x);
  for (int i = 0; i < steps; ++i) {
    const double d = eval_poly_derivative(c, x);
    if (d == 0.0 || !std::isfinite(d)) break;
    const double next = x - fx / d;
    const double f_next = eval_poly(c, next);
    if (!(std::abs(f_next) < std::abs(fx))) break;
    x = next;
    fx = f_next;
  }
  return x;
}

}  // namespace detail

/// Largest real root of x^3 + a x^2 + b x + c.
inline double largest_real_cubic_root(double a, double b, double c) {
  // Depressed cubic t^3 + p t + q with x = t - a/3.
  const double p = b - a * a / 3.0;
  const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const double shift = -a / 3.0;
  const double disc = q * q / 4.0 + p * p * p / 27.0;
  double root;
  if (disc > 0.0) {
    // One real root (Cardano).
    const double s = std::sqrt(disc);
    root = std::cbrt(-q / 2.0 + s) + std::cbrt(-q / 2.0 - s);
  } else if (p == 0.0) {
    root = 0.0;
  } else {
    // Three real roots (trigonometric form); the k = 0 branch is the largest.
    const double m = 2.0 * std::sqrt(-p / 3.0);
    const double arg = std::clamp(3.0 * q / (p * m), -1.0, 1.0);
    root = m * std::cos(std::acos(arg) / 3.0);
  }
  double x = root + shift;
  for (int i = 0; i < 3; ++i) {
    const double f = ((x + a) * x + b) * x + c;
    const double d = (3.0 * x + 2.0 * a) * x + b;
    if (d == 0.0) break;
    const double next = x - f / d;
    if (!(std::abs(((next + a) * next + b) * next + c) < std::abs(f))) break;
    x = next;
  }
  return x;
}

/// Roots of a x^4 + b x^3 + c x^2 + d x + e.
inline QuarticRoots quartic_roots(double a, double b, double c, double d, double e) {
  if (!(std::abs(a) > 1e-12)) {
    throw InvalidArgument("quartic leading coefficient is zero; reduce the degree");
  }
  const std::array<double, 5> coeffs{a, b, c, d, e};
  const double B = b / a, C = c / a, D = d / a, E = e / a;
  // Depressed quartic y^4 + p y^2 + q y + r with x = y - B/4.
  const double B2 = B * B;
  const double p = C - 3.0 * B2 / 8.0;
  const double q = D - B * C / 2.0 + B2 * B / 8.0;
  const double r = E - B * D / 4.0 + B2 * C / 16.0 - 3.0 * B2 * B2 / 256.0;
  const double shift = -B / 4.0;

  std::array<Complex, 4> y;
  // Resolvent 8m^3 + 8p m^2 + (2p^2 - 8r) m - q^2 = 0 always has a real root m >= 0.
  const double m = std::max(0.0, largest_real_cubic_root(p, (p * p - 4.0 * r) / 4.0, -q * q / 8.0));
  if (m <= 1e-14 * (1.0 + std::abs(p) + std::sqrt(std::abs(r)))) {
    // Biquadratic: z^2 + p z + r = 0 with z = y^2.
    const Complex sq = complex_sqrt(Complex(p * p - 4.0 * r, 0.0));
    const Complex z1 = (-p + sq) / 2.0, z2 = (-p - sq) / 2.0;
    const Complex s1 = complex_sqrt(z1), s2 = complex_sqrt(z2);
    y = {s1, -s1, s2, -s2};
  } else {
    const double w = std::sqrt(2.0 * m);
    // y^2 - w y + (p/2 + m + q/(2w)) = 0 and y^2 + w y + (p/2 + m - q/(2w)) = 0
    const double c1 = p / 2.0 + m + q / (2.0 * w);
    const double c2 = p / 2.0 + m - q / (2.0 * w);
    const Complex s1 = complex_sqrt(Complex(w * w - 4.0 * c1, 0.0));
    const Complex s2 = complex_sqrt(Complex(w * w - 4.0 * c2, 0.0));
    y = {(w + s1) / 2.0, (w - s1) / 2.0, (-w + s2) / 2.0, (-w - s2) / 2.0};
  }

  QuarticRoots out;
  for (const Complex& root : y) {
    const Complex x = root + shift;
    if (x.imag() == 0.0) {
      out.real_roots.push_back(detail::polish_root(coeffs, x.real(), 2));
    } else if (x.imag() > 0.0) {
      out.complex_roots.push_back(x);
    }
  }
  out.complex_pair_count = static_cast<int>(out.complex_roots.size());
  std::sort(out.real_roots.begin(), out.real_roots.end());
  return out;
}

}  // namespace poseforge
