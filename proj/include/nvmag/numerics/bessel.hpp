#pragma once
// Modified Bessel functions of the second kind, orders 0 and 1.
// Power series for x <= 2; Steed/Temme continued fraction above.

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace nvmag::numerics {

namespace detail {

// Returns {K0(x), K1(x)} for 0 < x <= 2 from the ascending series.
inline std::pair<double, double> bessel_k01_series(double x) {
  constexpr double euler = std::numbers::egamma;
  const double y = 0.25 * x * x;
  const double lg = std::log(0.5 * x);
  // I0, I1 and the harmonic-weighted sums share the same term recursion
  double t0 = 1.0;        // y^k / (k!)^2
  double t1 = 0.5 * x;    // (x/2) y^k / (k!(k+1)!)
  double i0 = t0, i1 = t1;
  double hk = 0.0;        // H_k
  double s0 = 0.0;        // sum t0 * H_k
  double s1 = t1 * (-2.0 * euler + 1.0);  // sum t1 * (psi(k+1)+psi(k+2)), k=0
  for (int k = 1; k < 60; ++k) {
    hk += 1.0 / k;
    t0 *= y / (double(k) * k);
    t1 *= y / (double(k) * (k + 1));
    i0 += t0;
    i1 += t1;
    s0 += t0 * hk;
    const double psi_sum = (hk - euler) + (hk + 1.0 / (k + 1) - euler);
    s1 += t1 * psi_sum;
    if (t0 < 1e-18 * i0 && t1 < 1e-18 * i1) break;
  }
  const double k0 = -(lg + euler) * i0 + s0;
  const double k1 = 1.0 / x + i1 * lg - 0.5 * s1;
  return {k0, k1};
}

// Steed's second continued fraction (order 0), valid for x >= 2.
inline std::pair<double, double> bessel_k01_cf(double x) {
  if (x > 700.0) return {0.0, 0.0};
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d, delh = d;
  double q1 = 0.0, q2 = 1.0;
  const double a1 = 0.25;
  double q = a1, c = a1;
  double a = -a1;
  double s = 1.0 + q * delh;
  for (int i = 1; i < 100000; ++i) {
    a -= 2 * i;
    c = -a * c / (i + 1.0);
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::abs(dels / s) < 1e-16) break;
  }
  h = a1 * h;
  const double k0 = std::sqrt(std::numbers::pi / (2.0 * x)) * std::exp(-x) / s;
  const double k1 = k0 * (x + 0.5 - h) / x;
  return {k0, k1};
}

}  // namespace detail

inline std::pair<double, double> bessel_k01(double x) {
  if (!(x > 0)) throw std::domain_error("bessel_k: argument must be positive");
  return x <= 2.0 ? detail::bessel_k01_series(x) : detail::bessel_k01_cf(x);
}

inline double bessel_k0(double x) { return bessel_k01(x).first; }
inline double bessel_k1(double x) { return bessel_k01(x).second; }

}  // namespace nvmag::numerics
