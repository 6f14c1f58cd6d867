#pragma once
// Axis-aligned rectangular panels and 1/(4 pi r) panel-pair integrals.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>

#include "quadrature.hpp"

namespace nvmag::numerics {

using Vec3 = Eigen::Vector3d;

// Rectangle lying in the plane {r[normal] = offset}; lo/hi bound the two
// in-plane axes (taken in increasing axis order).
struct Panel {
  int normal = 2;
  double offset = 0;
  std::array<double, 2> lo{0, 0}, hi{1, 1};

  std::array<int, 2> axes() const {
    if (normal == 0) return {1, 2};
    if (normal == 1) return {0, 2};
    return {0, 1};
  }
  double area() const { return (hi[0] - lo[0]) * (hi[1] - lo[1]); }
  Vec3 point(double u, double v) const {
    Vec3 r;
    auto [a, b] = axes();
    r[normal] = offset;
    r[a] = u;
    r[b] = v;
    return r;
  }
  void validate() const {
    if (normal < 0 || normal > 2 || !(hi[0] > lo[0]) || !(hi[1] > lo[1]))
      throw std::domain_error("Panel: empty or malformed bounds");
  }
};

namespace detail {
// Antiderivative in (X,Y) of 1/sqrt(X^2+Y^2+z^2).
inline double rect_potential_prim(double x, double y, double z) {
  const double r = std::sqrt(x * x + y * y + z * z);
  double v = 0;
  const double rx = std::hypot(x, z), ry = std::hypot(y, z);
  if (x != 0 && rx > 0) v += x * std::asinh(y / rx);
  if (y != 0 && ry > 0) v += y * std::asinh(x / ry);
  if (z != 0 && r > 0) v -= z * std::atan(x * y / (z * r));
  return v;
}
}  // namespace detail

// Integral over the panel of 1/|r - r'| dA' (no 1/4pi factor).
inline double rectangle_potential(const Panel& p, const Vec3& r) {
  auto [a, b] = p.axes();
  const double z = r[p.normal] - p.offset;
  const double x0 = p.lo[0] - r[a], x1 = p.hi[0] - r[a];
  const double y0 = p.lo[1] - r[b], y1 = p.hi[1] - r[b];
  using detail::rect_potential_prim;
  return rect_potential_prim(x1, y1, z) - rect_potential_prim(x0, y1, z) - rect_potential_prim(x1, y0, z) +
         rect_potential_prim(x0, y0, z);
}

// Normal component of the field integral: integral of (r-r')_n/|r-r'|^3 dA'.
inline double rectangle_solid_angle(const Panel& p, const Vec3& r) {
  auto [a, b] = p.axes();
  const double z = r[p.normal] - p.offset;
  if (z == 0) return 0.0;
  auto f = [z](double x, double y) { return std::atan(x * y / (z * std::sqrt(x * x + y * y + z * z))); };
  const double x0 = p.lo[0] - r[a], x1 = p.hi[0] - r[a];
  const double y0 = p.lo[1] - r[b], y1 = p.hi[1] - r[b];
  return f(x1, y1) - f(x0, y1) - f(x1, y0) + f(x0, y0);
}

using PanelDensity = std::function<double(const Vec3&)>;

// Integral of fA(r) fB(r') / (4 pi |r-r'|) over panel pairs. The inner
// integral is split as fB(c) * (analytic rectangle potential) plus a
// bounded remainder, c being the point of B closest to r.
inline QuadResult<double> coulomb_panel_quad(const Panel& A, const Panel& B, const PanelDensity& fA,
                                             const PanelDensity& fB, const QuadratureSpec& spec = {},
                                             bool fb_constant = false) {
  A.validate();
  B.validate();
  QuadratureSpec inner = spec;
  inner.rel_tol = spec.rel_tol * 0.1;
  auto [ba, bb] = B.axes();
  auto potential_at = [&](const Vec3& r) {
    Vec3 c = r;
    c[B.normal] = B.offset;
    c[ba] = std::clamp(c[ba], B.lo[0], B.hi[0]);
    c[bb] = std::clamp(c[bb], B.lo[1], B.hi[1]);
    const double fc = fB(c);
    double v = fc * rectangle_potential(B, r);
    if (!fb_constant) {
      auto row = [&](double u) {
        auto col = [&](double w) {
          const Vec3 rp = B.point(u, w);
          const double dist = (r - rp).norm();
          return dist > 0 ? (fB(rp) - fc) / dist : 0.0;
        };
        return integrate(col, B.lo[1], B.hi[1], inner, {c[bb]}).value;
      };
      v += integrate(row, B.lo[0], B.hi[0], inner, {c[ba]}).value;
    }
    return v;
  };
  auto [aa, ab] = A.axes();
  // Breakpoints where panel B's edges project onto A's axes.
  auto proj_breaks = [&](int axis) {
    std::vector<double> br;
    for (int k = 0; k < 2; ++k)
      if (B.axes()[k] == axis) {
        br.push_back(B.lo[k]);
        br.push_back(B.hi[k]);
      }
    if (B.normal == axis) br.push_back(B.offset);
    return br;
  };
  const auto br_a = proj_breaks(aa), br_b = proj_breaks(ab);
  double inner_err = 0;
  auto row = [&](double u) {
    auto col = [&](double w) {
      const Vec3 r = A.point(u, w);
      return fA(r) * potential_at(r);
    };
    auto res = integrate(col, A.lo[1], A.hi[1], inner, br_b);
    inner_err = std::max(inner_err, res.error);
    return res.value;
  };
  auto res = integrate(row, A.lo[0], A.hi[0], spec, br_a);
  const double scale = 1.0 / (4.0 * std::numbers::pi);
  return {res.value * scale, (res.error + inner_err * (A.hi[0] - A.lo[0])) * scale};
}

}  // namespace nvmag::numerics
