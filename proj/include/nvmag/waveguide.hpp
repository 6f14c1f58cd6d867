#pragma once
// Infinitely long rectangular waveguide, uniform transverse (0,0) band:
// dispersion, NV coupling g(rho,k) and magnon-mediated NV-NV coupling.
// Cross-section: x in [0,d] (thickness), y in [0,w] (width); z along the guide.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "constants.hpp"
#include "numerics.hpp"
#include "paraunitary.hpp"

namespace nvmag::waveguide {

using numerics::cd;
using numerics::QuadratureSpec;
using paraunitary::BogoliubovFactors;

struct WaveguideModel {
  double d = 20e-9;
  double w = 120e-9;
  MaterialParams material{};
  double h_ext = 0;               // mu0 H, tesla
  PhysicalConstants constants{};
  QuadratureSpec quad{1e-9, 1e-16, 4000};
  double k_floor = 1.0;           // rad/m

  void validate() const {
    if (!(d > 0) || !(w > 0) || d > w) throw std::domain_error("WaveguideModel: need 0 < d <= w");
    material.validate();
  }
  double omega_h() const { return constants.gamma * h_ext; }
  double omega_m() const { return constants.gamma * material.mu0_ms; }
  double omega_nv() const { return nv_transition_frequencies(h_ext, constants).first; }
};

struct DemagElements {
  double xx = 0, yy = 0, xy = 0, yx = 0;
};

namespace detail {

inline double kabs(const WaveguideModel& m, double k) { return std::max(std::abs(k), m.k_floor); }

// (2/(pi a b)) * int_0^a (a-u) [K0(k u) - K0(k sqrt(b^2+u^2))] du, the
// same-face minus opposite-face edge pair for faces separated by b.
inline double edge_pair(double a, double b, double k, QuadratureSpec q) {
  using numerics::bessel_k0;
  q.abs_tol = 1e-300;  // integrand scale is set by the geometry
  // u = s^2 removes the log singularity at u = 0
  auto f = [&](double s) {
    const double u = s * s;
    const double near = u > 0 ? bessel_k0(k * u) : 0.0;
    return 2.0 * s * (a - u) * (near - bessel_k0(k * std::sqrt(b * b + u * u)));
  };
  return 2.0 / (std::numbers::pi * a * b) * numerics::integrate(f, 0.0, std::sqrt(a), q).value;
}

}  // namespace detail

inline DemagElements demag_elements_00(const WaveguideModel& m, double k) {
  const double ka = detail::kabs(m, k);
  DemagElements e;
  e.xx = detail::edge_pair(m.w, m.d, ka, m.quad);
  e.yy = detail::edge_pair(m.d, m.w, ka, m.quad);
  // Off-diagonal elements cancel pairwise for the uniform mode of a
  // rectangle; see cross_element_00 for the explicit evaluation.
  return e;
}

// Direct evaluation of the x-face/y-face cross element.
inline double cross_element_00(const WaveguideModel& m, double k) {
  using numerics::bessel_k0;
  const double ka = detail::kabs(m, k);
  double total = 0;
  QuadratureSpec q = m.quad;
  q.rel_tol = 1e-8;
  q.abs_tol = 1e-12 * m.d * m.w;
  for (double x1 : {0.0, m.d})
    for (double y2 : {0.0, m.w}) {
      const double s = (x1 == 0 ? 1.0 : -1.0) * (y2 == 0 ? 1.0 : -1.0);
      auto outer = [&](double y1) {
        auto inner = [&](double x2) {
          const double r = std::hypot(x1 - x2, y1 - y2);
          return r > 0 ? bessel_k0(ka * r) : 0.0;
        };
        return numerics::integrate(inner, 0.0, m.d, q, {x1}).value;
      };
      total += s * numerics::integrate(outer, 0.0, m.w, q, {y2}).value;
    }
  return total / (2.0 * std::numbers::pi * m.d * m.w);
}

struct MatrixElements {
  double a_k = 0;
  cd b_k = 0;
};

inline MatrixElements matrix_elements_00(const WaveguideModel& m, double k) {
  const auto e = demag_elements_00(m, k);
  const double h00 = 0.5 * (e.xx + e.yy);
  const cd h01 = cd(0.5 * (e.xx - e.yy), -0.5 * (e.xy + e.yx));
  const double ka = detail::kabs(m, k);
  return {m.omega_h() + m.material.d_ex * ka * ka + m.omega_m() * h00, m.omega_m() * h01};
}

inline BogoliubovFactors band_point(const WaveguideModel& m, double k) {
  const auto me = matrix_elements_00(m, k);
  try {
    return paraunitary::bogoliubov_2x2(me.a_k, me.b_k);
  } catch (const paraunitary::InstabilityError&) {
    throw paraunitary::InstabilityError("waveguide: unstable band at k = " + std::to_string(k) + " rad/m");
  }
}

inline double band_frequency(const WaveguideModel& m, double k) { return band_point(m, k).omega; }

struct DispersionCurve {
  std::vector<double> k, omega, a_k;
  std::vector<cd> b_k;
  std::vector<BogoliubovFactors> factors;
  double omega_min = 0;
  double k_min = 0;
};

struct BandMinimum {
  double k_min = 0;
  double omega_min = 0;
};

// Golden-section refinement inside [lo, hi], closed by a 3-point parabola.
inline BandMinimum refine_minimum(const std::function<double(double)>& f, double lo, double hi, int iters = 60) {
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iters && (b - a) > 1e-10 * std::max(std::abs(b), 1.0); ++i) {
    if (fc < fd) {
      b = d; d = c; fd = fc;
      c = b - gr * (b - a); fc = f(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + gr * (b - a); fd = f(d);
    }
  }
  const double x1 = a, x2 = 0.5 * (a + b), x3 = b;
  const double f1 = f(x1), f2 = f(x2), f3 = f(x3);
  const double den = (x1 - x2) * (x1 - x3) * (x2 - x3);
  double xm = x2, fm = f2;
  if (den != 0) {
    const double pa = (x3 * (f2 - f1) + x2 * (f1 - f3) + x1 * (f3 - f2)) / den;
    const double pb = (x3 * x3 * (f1 - f2) + x2 * x2 * (f3 - f1) + x1 * x1 * (f2 - f3)) / den;
    if (pa > 0) {
      const double xv = -pb / (2 * pa);
      if (xv >= a && xv <= b) {
        const double fv = f(xv);
        if (fv <= fm) { xm = xv; fm = fv; }
      }
    }
  }
  return {xm, fm};
}

// Log-spaced scan of the band to bracket the minimum, then refinement.
inline BandMinimum band_minimum(const WaveguideModel& m, double k_hi = 0) {
  if (k_hi <= 0) k_hi = 0.5 * std::numbers::pi / m.d;
  const int n = 160;
  const double k_lo = 1e3;
  std::vector<double> ks(n), ws(n);
  for (int i = 0; i < n; ++i) {
    ks[i] = k_lo * std::pow(k_hi / k_lo, double(i) / (n - 1));
    ws[i] = band_frequency(m, ks[i]);
  }
  const auto it = std::min_element(ws.begin(), ws.end());
  const int i = static_cast<int>(it - ws.begin());
  if (i == 0) {
    const double w0 = band_frequency(m, m.k_floor);
    if (w0 <= ws[0]) return {0.0, w0};
  }
  const double lo = i == 0 ? m.k_floor : ks[i - 1];
  const double hi = i == n - 1 ? ks[n - 1] : ks[i + 1];
  return refine_minimum([&](double k) { return band_frequency(m, k); }, lo, hi);
}

inline DispersionCurve dispersion(const WaveguideModel& m, const std::vector<double>& k_grid) {
  m.validate();
  DispersionCurve c;
  c.k = k_grid;
  for (double k : k_grid) {
    const auto me = matrix_elements_00(m, k);
    BogoliubovFactors f;
    try {
      f = paraunitary::bogoliubov_2x2(me.a_k, me.b_k);
    } catch (const paraunitary::InstabilityError&) {
      throw paraunitary::InstabilityError("waveguide: unstable band at k = " + std::to_string(k) + " rad/m");
    }
    c.a_k.push_back(me.a_k);
    c.b_k.push_back(me.b_k);
    c.factors.push_back(f);
    c.omega.push_back(f.omega);
  }
  const auto bm = band_minimum(m);
  c.omega_min = bm.omega_min;
  c.k_min = bm.k_min;
  return c;
}

inline double detuning(const WaveguideModel& m) { return band_minimum(m).omega_min - m.omega_nv(); }

inline double find_field_for_detuning(WaveguideModel m, double delta_omega_target, double tol = two_pi * 1e3) {
  const double h_top = 0.999 * m.constants.d_nv / m.constants.gamma;
  auto resid = [&](double h) {
    m.h_ext = h;
    return detuning(m) - delta_omega_target;
  };
  double lo = 0, hi = 0;
  double r_lo = resid(0);
  if (r_lo > 0) throw std::domain_error("find_field_for_detuning: band already above target at zero field");
  const int scan = 40;
  for (int i = 1; i <= scan; ++i) {
    const double h = h_top * i / scan;
    const double r = resid(h);
    if (r >= 0) { hi = h; break; }
    lo = h;
    r_lo = r;
  }
  if (hi == 0) throw std::domain_error("find_field_for_detuning: no bracket below the NV level crossing");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r = resid(mid);
    if (std::abs(r) < tol) return mid;
    (r < 0 ? lo : hi) = mid;
    if (hi - lo < 1e-15) break;
  }
  return 0.5 * (lo + hi);
}

// ── NV coupling ──

struct GammaSet {
  double xx = 0, xy = 0, yx = 0, yy = 0;
  cd pp() const { return {xx - yy, xy + yx}; }
  cd pm() const { return {xx + yy, -(xy - yx)}; }
  cd mp() const { return {xx + yy, xy - yx}; }
  cd mm() const { return {xx - yy, -(xy + yx)}; }
};

inline bool inside_cross_section(const WaveguideModel& m, double x, double y) {
  return x >= 0 && x <= m.d && y >= 0 && y <= m.w;
}

inline GammaSet gamma_kernels(const WaveguideModel& m, double x, double y, double k) {
  using numerics::bessel_k1;
  const double ka = detail::kabs(m, k);
  QuadratureSpec q = m.quad;
  q.rel_tol = std::max(q.rel_tol, 1e-10);
  q.abs_tol = 1e-300;
  GammaSet g;
  // x-faces at x'=0 (+) and x'=d (-), running along y'
  for (double x0 : {0.0, m.d}) {
    const double s = x0 == 0 ? 1.0 : -1.0;
    auto fx = [&](double yp) {
      const double dx = x - x0, dy = y - yp, r = std::hypot(dx, dy);
      const double kern = ka * bessel_k1(ka * r) / (2.0 * std::numbers::pi * r);
      return Eigen::Vector2d(kern * dx, kern * dy);
    };
    auto v = numerics::integrate(fx, 0.0, m.w, q, {y}).value;
    g.xx -= s * v[0];
    g.yx -= s * v[1];
  }
  for (double y0 : {0.0, m.w}) {
    const double s = y0 == 0 ? 1.0 : -1.0;
    auto fy = [&](double xp) {
      const double dx = x - xp, dy = y - y0, r = std::hypot(dx, dy);
      const double kern = ka * bessel_k1(ka * r) / (2.0 * std::numbers::pi * r);
      return Eigen::Vector2d(kern * dx, kern * dy);
    };
    auto v = numerics::integrate(fy, 0.0, m.d, q, {x}).value;
    g.xy -= s * v[0];
    g.yy -= s * v[1];
  }
  return g;
}

inline cd coupling_from(const GammaSet& g, const BogoliubovFactors& f) {
  return 0.5 * g.pp() * f.lambda - 0.5 * g.pm() * std::conj(f.mu);
}

inline cd coupling_g(const WaveguideModel& m, double x, double y, double k) {
  if (inside_cross_section(m, x, y)) throw std::domain_error("coupling_g: NV position inside the magnet");
  return coupling_from(gamma_kernels(m, x, y, k), band_point(m, k));
}

// sqrt(omega_M omega_d) / sqrt(w/d^2), rad/s * m^(1/2)
inline double coupling_prefactor(const WaveguideModel& m) {
  const auto s = frequency_scales(m.material, m.d, m.w, std::nullopt, std::nullopt, m.constants);
  return std::sqrt(s.omega_m * s.omega_d * m.d * m.d / m.w);
}

struct CouplingProfile {
  double x = 0, y = 0;
  std::vector<double> k;        // quadrature nodes on k >= 0
  std::vector<double> weight;   // quadrature weights
  std::vector<cd> g;            // dimensionless coupling
  std::vector<double> omega;    // band frequency
  double omega_nv = 0;
  double omega_min = 0;
  double k_min = 0;
  double xi0 = 0;
  double prefactor_sq = 0;      // omega_M omega_d d^2 / w
};

struct KGridSpec {
  double delta_z_max = 2.5e-6;  // largest separation to resolve, m
  double density = 1.0;         // multiplies the point count
  int points_per_cell = 4;
};

// Composite Gauss grid on [k_floor, 3 k_min + 20/xi0] with cell widths
// giving >= 20 nodes per cosine period and per Lorentzian width.
inline CouplingProfile coupling_profile(const WaveguideModel& m, double x, double y, const KGridSpec& gs = {}) {
  m.validate();
  if (inside_cross_section(m, x, y)) throw std::domain_error("coupling_profile: NV position inside the magnet");
  CouplingProfile p;
  p.x = x;
  p.y = y;
  const auto bm = band_minimum(m);
  p.omega_min = bm.omega_min;
  p.k_min = bm.k_min;
  p.omega_nv = m.omega_nv();
  const double dw = p.omega_min - p.omega_nv;
  if (!(dw > 0)) throw std::domain_error("coupling_profile: band minimum not above the NV frequency");
  p.xi0 = std::sqrt(m.material.d_ex / dw);
  const double k_max = 3.0 * p.k_min + 20.0 / p.xi0;
  const double scale = std::min(two_pi / std::max(gs.delta_z_max, 1e-12), 1.0 / p.xi0);
  const double node_spacing = scale / (20.0 * gs.density);
  const int npc = gs.points_per_cell;
  const double cell = node_spacing * npc;
  const int ncell = std::max(8, static_cast<int>(std::ceil((k_max - m.k_floor) / cell)));
  const auto& gl = numerics::gauss_legendre(npc);
  const double h = (k_max - m.k_floor) / ncell;
  for (int c = 0; c < ncell; ++c) {
    const double a = m.k_floor + c * h;
    for (int j = 0; j < npc; ++j) {
      p.k.push_back(a + 0.5 * h * (gl.x[j] + 1.0));
      p.weight.push_back(0.5 * h * gl.w[j]);
    }
  }
  p.g.resize(p.k.size());
  p.omega.resize(p.k.size());
  for (std::size_t i = 0; i < p.k.size(); ++i) {
    const auto f = band_point(m, p.k[i]);
    p.omega[i] = f.omega;
    p.g[i] = coupling_from(gamma_kernels(m, x, y, p.k[i]), f);
  }
  const double pf = coupling_prefactor(m);
  p.prefactor_sq = pf * pf;
  return p;
}

struct EffectiveCoupling {
  double g_eff = 0;        // rad/s
  double validity = 0;     // squared norm of the first-order admixture
  bool validity_warning = false;
};

// (omega_M omega_d d^2/w) int dk/2pi |g|^2 e^{ik dz} / (omega_k - omega_nv),
// using evenness in k to fold onto k >= 0.
inline EffectiveCoupling effective_coupling(const CouplingProfile& p, double delta_z) {
  double s = 0, v = 0;
  for (std::size_t i = 0; i < p.k.size(); ++i) {
    const double g2 = std::norm(p.g[i]);
    const double den = p.omega[i] - p.omega_nv;
    s += p.weight[i] * g2 * std::cos(p.k[i] * delta_z) / den;
    v += p.weight[i] * g2 / (den * den);
  }
  EffectiveCoupling r;
  r.g_eff = p.prefactor_sq * 2.0 * s / two_pi;
  r.validity = p.prefactor_sq * 2.0 * v / two_pi;
  r.validity_warning = r.validity > 0.1;
  return r;
}

inline double perturbation_validity(const CouplingProfile& p) { return effective_coupling(p, 0.0).validity; }

inline EffectiveCoupling effective_coupling(WaveguideModel m, double x, double y, double delta_z, double delta_omega,
                                            const KGridSpec& gs = {}) {
  m.h_ext = find_field_for_detuning(m, delta_omega);
  KGridSpec g2 = gs;
  g2.delta_z_max = std::max(gs.delta_z_max, std::abs(delta_z));
  return effective_coupling(coupling_profile(m, x, y, g2), delta_z);
}

inline double analytic_geff(double g_kmin, double k_min, double delta_z, double delta_omega, const WaveguideModel& m) {
  const double xi0 = std::sqrt(m.material.d_ex / delta_omega);
  const auto s = frequency_scales(m.material, m.d, m.w, std::nullopt, xi0, m.constants);
  return s.omega_m * *s.omega_dbar / delta_omega * g_kmin * g_kmin * std::cos(k_min * delta_z) *
         std::exp(-std::abs(delta_z) / xi0);
}

struct EquivalentCooperativity {
  double g_bar = 0;  // rad/s
  double c_eq = 0;
};

inline EquivalentCooperativity equivalent_cooperativity(const WaveguideModel& m, double g_kmin, double omega_min,
                                                        double l, double alpha, double t2_star) {
  const auto s = frequency_scales(m.material, m.d, m.w, std::nullopt, std::nullopt, m.constants);
  EquivalentCooperativity e;
  e.g_bar = std::sqrt(s.omega_m * s.omega_d / (l * m.w / (m.d * m.d))) * std::abs(g_kmin);
  e.c_eq = e.g_bar * e.g_bar / (alpha * omega_min / t2_star);
  return e;
}

struct GateRates {
  double er = 0;   // s^-1
  double gdr = 0;
};

inline GateRates er_gdr(double g_eff, double t2_star) {
  const double er = 4.0 * std::abs(g_eff) / std::numbers::pi;
  return {er, er * t2_star};
}

}  // namespace nvmag::waveguide
