#pragma once
// Finite rectangular bar magnetized along z: demagnetizing field, (00p)
// standing-wave Hamiltonian, normal modes, NV couplings and decoherence.
// Bar occupies [0,d] x [0,w] x [0,l].

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "constants.hpp"
#include "numerics.hpp"
#include "paraunitary.hpp"

namespace nvmag::bar {

using numerics::cd;
using numerics::MatC;
using numerics::MatR;
using numerics::QuadratureSpec;
using numerics::Vec3;
using numerics::VecR;

inline constexpr double inv4pi = 0.25 / std::numbers::pi;

struct BarModel {
  double d = 5e-9;
  double w = 30e-9;
  double l = 3e-6;
  MaterialParams material{};
  double h_ext = 0;       // mu0 H, tesla
  int n_trunc = 40;
  PhysicalConstants constants{};
  QuadratureSpec quad{1e-8, 1e-18, 4000};

  void validate() const {
    if (!(d > 0) || !(w > 0) || !(l > 0)) throw std::domain_error("BarModel: nonpositive dimension");
    if (n_trunc < 1) throw std::domain_error("BarModel: n_trunc must be positive");
    material.validate();
  }
  bool elongation_warning() const { return l < 5 * std::max(d, w); }
  double kappa(int p) const { return p * std::numbers::pi / l; }
  double basis_norm(int p) const { return std::sqrt(2.0 / ((p == 0 ? 2.0 : 1.0) * l)); }
  double omega_m() const { return constants.gamma * material.mu0_ms; }
  double omega_h() const { return constants.gamma * h_ext; }
};

inline bool inside_bar(const BarModel& m, const Vec3& r) {
  return r[0] >= 0 && r[0] <= m.d && r[1] >= 0 && r[1] <= m.w && r[2] >= 0 && r[2] <= m.l;
}

inline double distance_to_bar(const BarModel& m, const Vec3& r) {
  const double dx = std::max({0.0, -r[0], r[0] - m.d});
  const double dy = std::max({0.0, -r[1], r[1] - m.w});
  const double dz = std::max({0.0, -r[2], r[2] - m.l});
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// ── Demagnetizing field ──

namespace detail {
inline numerics::Panel end_face(const BarModel& m, double z0) {
  numerics::Panel p;
  p.normal = 2;
  p.offset = z0;
  p.lo = {0, 0};
  p.hi = {m.d, m.w};
  return p;
}

// Integral over a rectangle at height z0 of the in-plane components of
// (r-r')/|r-r'|^3, closed form via the antiderivative -asinh.
inline std::pair<double, double> face_inplane_field(const BarModel& m, const Vec3& r, double z0) {
  const double h = r[2] - z0;
  auto prim_x = [&](double xp, double yp) {
    // d/dx' d/dy' of this equals -(x-x')/R^3
    const double X = r[0] - xp, Y = r[1] - yp;
    const double rho = std::hypot(X, h);
    return rho > 0 ? std::asinh(Y / rho) : 0.0;
  };
  auto prim_y = [&](double xp, double yp) {
    const double X = r[0] - xp, Y = r[1] - yp;
    const double rho = std::hypot(Y, h);
    return rho > 0 ? std::asinh(X / rho) : 0.0;
  };
  auto box = [&](auto&& f) { return f(m.d, m.w) - f(0, m.w) - f(m.d, 0) + f(0, 0); };
  return {-box(prim_x), -box(prim_y)};
}
}  // namespace detail

inline Vec3 nudge_off_boundary(const BarModel& m, Vec3 r) {
  const double eps = 1e-12 * m.l;
  const double ub[3] = {m.d, m.w, m.l};
  for (int i = 0; i < 3; ++i) {
    if (r[i] == 0) r[i] += eps;
    else if (r[i] == ub[i]) r[i] -= eps;
  }
  return r;
}

// z-component of the demagnetizing field divided by Ms.
inline double demag_field_z(const BarModel& m, Vec3 r) {
  r = nudge_off_boundary(m, r);
  const double top = numerics::rectangle_solid_angle(detail::end_face(m, m.l), r);
  const double bottom = numerics::rectangle_solid_angle(detail::end_face(m, 0.0), r);
  return inv4pi * (top - bottom);
}

// Full demagnetizing field divided by Ms (static part of the NV field).
inline Vec3 demag_field(const BarModel& m, Vec3 r) {
  r = nudge_off_boundary(m, r);
  const auto [tx, ty] = detail::face_inplane_field(m, r, m.l);
  const auto [bx, by] = detail::face_inplane_field(m, r, 0.0);
  return Vec3(inv4pi * (tx - bx), inv4pi * (ty - by), demag_field_z(m, r));
}

// Cross-section average of h^2-weighted pair integral
//   J(h) = int_A int_A h / (dx^2 + dy^2 + h^2)^{3/2}.
inline double cross_section_pair(double d, double w, double h) {
  if (h == 0) return 0.0;
  const double ah = std::abs(h);
  const double i00 = std::atan(d * w / (h * std::sqrt(d * d + w * w + h * h)));
  const double iv = h * (std::asinh(d / ah) - std::asinh(d / std::hypot(w, h)));
  const double iu = h * (std::asinh(w / ah) - std::asinh(w / std::hypot(d, h)));
  const double iuv = h * ((std::hypot(d, h) - ah) - (std::sqrt(d * d + w * w + h * h) - std::hypot(w, h)));
  return 4.0 * (d * w * i00 - d * iv - w * iu + iuv);
}

// Cross-section averaged demagnetizing field along the bar axis.
inline double demag_field_z_avg(const BarModel& m, double z) {
  return inv4pi / (m.d * m.w) * (cross_section_pair(m.d, m.w, z - m.l) - cross_section_pair(m.d, m.w, z));
}

// ── Hamiltonian assembly ──

namespace detail {

// int cos(a z + b) dz over [z0, z1]
inline double cos_integral(double a, double b, double z0, double z1) {
  if (std::abs(a) < 1e-300) return std::cos(b) * (z1 - z0);
  return (std::sin(a * z1 + b) - std::sin(a * z0 + b)) / a;
}

// Overlap C(v) = int cos(kp z) cos(kq (z - v)) dz over z, z-v in [0,l]
inline double cos_overlap(double kp, double kq, double v, double l) {
  const double z0 = std::max(0.0, v), z1 = std::min(l, l + v);
  if (z1 <= z0) return 0.0;
  return 0.5 * (cos_integral(kp + kq, -kq * v, z0, z1) + cos_integral(kp - kq, kq * v, z0, z1));
}

// Q_a(rho) = int_0^a (a-u) / sqrt(rho^2 + u^2) du
inline double strip_potential(double a, double rho) {
  if (rho == 0) return 0.0;  // only reached on the integrable log singularity
  return a * std::asinh(a / rho) - (std::hypot(rho, a) - rho);
}

}  // namespace detail

// Dimensionless (units of omega_M) geometric blocks, independent of field.
struct BarGeometry {
  MatR hxx, hyy, demag;   // demag = N_{pq} = -int Hd_z f_p f_q
  int modes() const { return static_cast<int>(hxx.rows()); }
};

inline BarGeometry assemble_geometry(const BarModel& m) {
  m.validate();
  const int n = m.n_trunc + 1;
  BarGeometry g;
  g.hxx = MatR::Zero(n, n);
  g.hyy = MatR::Zero(n, n);
  g.demag = MatR::Zero(n, n);
  const double d = m.d, w = m.w, l = m.l;
  QuadratureSpec q = m.quad;
  for (int p = 0; p < n; ++p)
    for (int r = p; r < n; ++r) {
      if ((p + r) % 2) continue;  // opposite parity about z = l/2
      const double kp = m.kappa(p), kr = m.kappa(r);
      const double cc = m.basis_norm(p) * m.basis_norm(r);
      // integrand in v over [0,l] of C(v)+C(-v) times strip-pair kernels;
      // v = s^2 on [0, w] tames the log singularity at v = 0
      auto kern = [&](double v) {
        const double c = detail::cos_overlap(kp, kr, v, l) + detail::cos_overlap(kp, kr, -v, l);
        const double kx = detail::strip_potential(w, v) - detail::strip_potential(w, std::hypot(v, d));
        const double ky = detail::strip_potential(d, v) - detail::strip_potential(d, std::hypot(v, w));
        return Eigen::Vector2d(c * kx, c * ky);
      };
      auto near = [&](double s) -> Eigen::Vector2d { return 2.0 * s * kern(s * s); };
      const double vs = std::min(4.0 * w, l);
      Eigen::Vector2d acc = numerics::integrate(near, 0.0, std::sqrt(vs), q).value;
      if (vs < l) {
        std::vector<double> br;
        const double period = std::numbers::pi / std::max(kp + kr, std::numbers::pi / l);
        for (double b = vs + period; b < l; b += period) br.push_back(b);
        acc += numerics::integrate(kern, vs, l, q, br).value;
      }
      // factor: cc/(dw) * 2 (face pairs) * 1/4pi * 2 (strip fold)
      const double pref = cc / (d * w) * 4.0 * inv4pi;
      g.hxx(p, r) = g.hxx(r, p) = pref * acc[0];
      g.hyy(p, r) = g.hyy(r, p) = pref * acc[1];
      auto dz = [&](double z) { return demag_field_z_avg(m, z) * std::cos(kp * z) * std::cos(kr * z); };
      std::vector<double> br{std::min(w, 0.5 * l), std::max(l - w, 0.5 * l), 0.5 * l};
      const double nval = -cc * numerics::integrate(dz, 0.0, l, q, br).value;
      g.demag(p, r) = g.demag(r, p) = nval;
    }
  return g;
}

inline paraunitary::QuadraticBosonForm assemble_bar_hamiltonian(const BarModel& m, const BarGeometry& g) {
  const int n = g.modes();
  const double wm = m.omega_m();
  MatC a = MatC::Zero(n, n), b = MatC::Zero(n, n);
  for (int p = 0; p < n; ++p)
    for (int r = 0; r < n; ++r) {
      const double diag = p == r ? (m.omega_h() + m.material.d_ex * m.kappa(p) * m.kappa(p)) / wm : 0.0;
      a(p, r) = wm * (diag - g.demag(p, r) + 0.5 * (g.hxx(p, r) + g.hyy(p, r)));
      b(p, r) = wm * 0.5 * (g.hxx(p, r) - g.hyy(p, r));
    }
  paraunitary::QuadraticBosonForm f{a, b, {}};
  f.labels.resize(n);
  for (int p = 0; p < n; ++p) f.labels[p] = p;
  return f;
}

inline paraunitary::QuadraticBosonForm assemble_bar_hamiltonian(const BarModel& m) {
  return assemble_bar_hamiltonian(m, assemble_geometry(m));
}

// ── Spectrum ──

struct BarSpectrum {
  VecR frequencies;                         // by label p, rad/s
  std::vector<int> column_of_label;         // normal-mode column for label p
  paraunitary::ParaunitaryDecomposition decomposition;
  double field = 0;

  int modes() const { return static_cast<int>(frequencies.size()); }
  double omega(int p) const { return frequencies[p]; }
  // Columns of T^{pp} and T^{np} reordered so column p is mode (00p)
  MatC tpp() const { return reorder(decomposition.tpp()); }
  MatC tnp() const { return reorder(decomposition.tnp()); }

 private:
  MatC reorder(const MatC& t) const {
    MatC out(t.rows(), t.cols());
    for (int p = 0; p < modes(); ++p) out.col(p) = t.col(column_of_label[p]);
    return out;
  }
};

// Greedy maximal-overlap assignment of normal modes to basis labels.
inline std::vector<int> assign_labels(const MatC& tpp) {
  const int n = static_cast<int>(tpp.cols());
  std::vector<std::tuple<double, int, int>> w;
  for (int j = 0; j < n; ++j)
    for (int q = 0; q < n; ++q) w.emplace_back(std::norm(tpp(q, j)), j, q);
  std::sort(w.begin(), w.end(), [](auto& a, auto& b) { return std::get<0>(a) > std::get<0>(b); });
  std::vector<int> col_of(n, -1), lab_of(n, -1);
  for (auto& [v, j, q] : w) {
    if (lab_of[j] >= 0 || col_of[q] >= 0) continue;
    lab_of[j] = q;
    col_of[q] = j;
  }
  return col_of;
}

inline BarSpectrum bar_spectrum(const BarModel& m, const BarGeometry& g) {
  BarSpectrum s;
  s.decomposition = paraunitary::colpa_diagonalize(assemble_bar_hamiltonian(m, g));
  s.column_of_label = assign_labels(s.decomposition.tpp());
  s.frequencies.resize(g.modes());
  for (int p = 0; p < g.modes(); ++p) s.frequencies[p] = s.decomposition.energies[s.column_of_label[p]];
  s.field = m.h_ext;
  return s;
}

inline BarSpectrum bar_spectrum(const BarModel& m) { return bar_spectrum(m, assemble_geometry(m)); }

inline double find_resonant_field(BarModel m, const BarGeometry& g, int p, double tol = two_pi * 1e4,
                                  double offset = 0.0) {
  if (p < 0 || p > m.n_trunc) throw std::out_of_range("find_resonant_field: mode index out of range");
  // residual omega_p(H) - omega_nv(H) - offset rises with H
  auto resid = [&](double h) {
    m.h_ext = h;
    return bar_spectrum(m, g).omega(p) - nv_transition_frequencies(h, m.constants).first - offset;
  };
  const double h_top = 0.999 * m.constants.d_nv / m.constants.gamma;
  double lo = 0, hi = -1;
  if (resid(0) > 0) throw std::domain_error("find_resonant_field: mode above NV transition at zero field");
  const int scan = 40;
  for (int i = 1; i <= scan; ++i) {
    const double h = h_top * i / scan;
    if (resid(h) >= 0) { hi = h; break; }
    lo = h;
  }
  if (hi < 0) throw std::domain_error("find_resonant_field: no crossing below the level anticrossing");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r = resid(mid);
    if (std::abs(r) < tol) return mid;
    (r < 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ── NV coupling ──

struct GammaBlock {
  VecR xx, xy, yx, yy;  // per basis index q
};

struct ZMeshSpec {
  int gauss_order = 8;
  double refine = 1.0;  // panel lengths divided by this
};

namespace detail {

// Graded z' panels: geometric growth from the NV's axial position, capped
// at min(w, pi/kappa_N)/4.
inline std::vector<double> z_panels(const BarModel& m, double z, double near_scale, const ZMeshSpec& ms) {
  const double cap = std::min(m.w, m.l / std::max(m.n_trunc, 1)) / (4.0 * ms.refine);
  const double first = std::min(cap, near_scale / (8.0 * ms.refine));
  std::vector<double> pts{std::clamp(z, 0.0, m.l)};
  auto grow = [&](double dir) {
    double pos = pts.front(), step = first;
    std::vector<double> out;
    while (true) {
      pos += dir * step;
      if ((dir > 0 && pos >= m.l) || (dir < 0 && pos <= 0)) break;
      out.push_back(pos);
      step = std::min(cap, step * 1.3);
    }
    return out;
  };
  auto up = grow(1.0), down = grow(-1.0);
  std::vector<double> all(down.rbegin(), down.rend());
  all.insert(all.begin(), 0.0);
  all.push_back(pts.front());
  all.insert(all.end(), up.begin(), up.end());
  all.push_back(m.l);
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end(), [](double a, double b) { return std::abs(a - b) < 1e-18; }),
            all.end());
  return all;
}

// Transverse integrals over t' in [t1,t2] of the dipolar kernel for a face
// with normal coordinate offset nn (observer minus face) and axial
// separation zz. Returns {normal component, transverse component}.
inline std::pair<double, double> face_line_kernel(double nn, double zz, double t1, double t2) {
  const double a2 = nn * nn + zz * zz;
  const double r1 = std::sqrt(a2 + t1 * t1), r2 = std::sqrt(a2 + t2 * t2);
  double normal;
  if (t1 * t2 > 0) {
    normal = -nn * (t2 * t2 - t1 * t1) / (r1 * r2 * (t2 * r1 + t1 * r2));
  } else {
    normal = a2 > 0 ? -nn * (t2 / r2 - t1 / r1) / a2 : 0.0;
  }
  const double trans = -(1.0 / r2 - 1.0 / r1);
  return {inv4pi * normal, inv4pi * trans};
}

}  // namespace detail

inline GammaBlock gamma_kernels(const BarModel& m, const Vec3& r, const ZMeshSpec& ms = {}) {
  if (inside_bar(m, r)) throw std::domain_error("bar coupling: NV position inside the bar");
  const int n = m.n_trunc + 1;
  GammaBlock g{VecR::Zero(n), VecR::Zero(n), VecR::Zero(n), VecR::Zero(n)};
  const double near = std::max(distance_to_bar(m, r), 1e-3 * std::min(m.d, m.w));
  const auto panels = detail::z_panels(m, r[2], near, ms);
  const auto& gl = numerics::gauss_legendre(ms.gauss_order);
  VecR cosv(n);
  for (std::size_t i = 0; i + 1 < panels.size(); ++i) {
    const double a = panels[i], b = panels[i + 1], h = 0.5 * (b - a);
    for (int j = 0; j < ms.gauss_order; ++j) {
      const double zp = a + h * (gl.x[j] + 1.0);
      const double wt = h * gl.w[j];
      const double zz = r[2] - zp;
      double kxx = 0, kyx = 0, kxy = 0, kyy = 0;
      // x-faces: x'=0 (+1), x'=d (-1); transverse coordinate y'
      for (int f = 0; f < 2; ++f) {
        const double x0 = f == 0 ? 0.0 : m.d, s = f == 0 ? 1.0 : -1.0;
        auto [kn, kt] = detail::face_line_kernel(r[0] - x0, zz, -r[1], m.w - r[1]);
        kxx += s * kn;
        kyx += s * kt;
      }
      for (int f = 0; f < 2; ++f) {
        const double y0 = f == 0 ? 0.0 : m.w, s = f == 0 ? 1.0 : -1.0;
        auto [kn, kt] = detail::face_line_kernel(r[1] - y0, zz, -r[0], m.d - r[0]);
        kyy += s * kn;
        kxy += s * kt;
      }
      // Chebyshev recursion for cos(q pi z'/l)
      const double th = std::numbers::pi * zp / m.l, c1 = std::cos(th);
      cosv[0] = 1.0;
      if (n > 1) cosv[1] = c1;
      for (int q = 2; q < n; ++q) cosv[q] = 2.0 * c1 * cosv[q - 1] - cosv[q - 2];
      g.xx += (wt * kxx) * cosv;
      g.yx += (wt * kyx) * cosv;
      g.xy += (wt * kxy) * cosv;
      g.yy += (wt * kyy) * cosv;
    }
  }
  // tilde-phi = sqrt(w l d) phi = sqrt(l) c_q cos(...) inside the bar
  for (int q = 0; q < n; ++q) {
    const double s = std::sqrt(m.l) * m.basis_norm(q);
    g.xx[q] *= s;
    g.xy[q] *= s;
    g.yx[q] *= s;
    g.yy[q] *= s;
  }
  return g;
}

struct BarCouplingSet {
  Vec3 position;
  numerics::VecC g_lower;   // rad/s per label p
  numerics::VecC g_upper;
};

inline double coupling_prefactor(const BarModel& m) {
  const auto s = frequency_scales(m.material, m.d, m.w, m.l, std::nullopt, m.constants);
  return std::sqrt(s.omega_m * *s.omega_dwl);
}

inline BarCouplingSet bar_coupling(const BarModel& m, const BarSpectrum& spec, const Vec3& r,
                                   const ZMeshSpec& ms = {}) {
  const auto gk = gamma_kernels(m, r, ms);
  const int n = spec.modes();
  numerics::VecC pp(n), pm(n), mp(n), mm(n);
  const cd I(0, 1);
  for (int q = 0; q < n; ++q) {
    pp[q] = gk.xx[q] - gk.yy[q] + I * (gk.xy[q] + gk.yx[q]);
    pm[q] = gk.xx[q] + gk.yy[q] - I * (gk.xy[q] - gk.yx[q]);
    mp[q] = gk.xx[q] + gk.yy[q] + I * (gk.xy[q] - gk.yx[q]);
    mm[q] = gk.xx[q] - gk.yy[q] - I * (gk.xy[q] + gk.yx[q]);
  }
  const MatC tpp = spec.tpp(), tnp = spec.tnp();
  const double pref = coupling_prefactor(m);
  BarCouplingSet c;
  c.position = r;
  c.g_lower = pref * 0.5 * (tpp.transpose() * pp + tnp.transpose() * pm);
  c.g_upper = pref * 0.5 * (tpp.transpose() * mp + tnp.transpose() * mm);
  return c;
}

// ── Figures of merit ──

inline double cooperativity(double g_mu, double omega_mu, double alpha, double t2_star) {
  return g_mu * g_mu / (alpha * omega_mu / t2_star);
}

struct DispersiveCoupling {
  cd g_eff;
  bool validity_warning = false;
};

inline DispersiveCoupling bar_geff(cd g1, cd g2, double delta_omega) {
  if (!(delta_omega != 0)) throw std::domain_error("bar_geff: zero detuning");
  DispersiveCoupling r;
  r.g_eff = g1 * std::conj(g2) / delta_omega;
  r.validity_warning = std::abs(g1 * g2) / (delta_omega * delta_omega) > 0.1;
  return r;
}

// ── Decoherence estimates ──

struct DephasingTimes {
  double tau2 = 0;      // Gaussian timescale, s
  double t2_star = 0;   // Lorentzian timescale, s
  double rate_gaussian = 0;
  double rate_lorentzian = 0;
  int modes_summed = 0;
  int modes_extrapolated = 0;
  bool truncation_warning = false;
};

inline DephasingTimes times_from_rates(double rg, double rl) {
  DephasingTimes t;
  t.rate_gaussian = rg;
  t.rate_lorentzian = rl;
  t.tau2 = rg > 0 ? 1.0 / rg : std::numeric_limits<double>::infinity();
  t.t2_star = rl > 0 ? 1.0 / rl : std::numeric_limits<double>::infinity();
  return t;
}

// Frequency of label p, beyond the truncation continued by
// omega_min + D_ex kappa_p^2.
inline double mode_frequency(const BarModel& m, const BarSpectrum& s, int p) {
  if (p < s.modes()) return s.omega(p);
  return s.frequencies.minCoeff() + m.material.d_ex * m.kappa(p) * m.kappa(p);
}

// End-face coefficient of the longitudinal field fluctuation, identical
// for all p > 0 (halved for p = 0).
inline double theta_diag(const BarModel& m, const Vec3& r, int p) {
  const double faces = numerics::rectangle_solid_angle(detail::end_face(m, 0.0), r) -
                       numerics::rectangle_solid_angle(detail::end_face(m, m.l), r);
  return (p == 0 ? 1.0 : 2.0) * inv4pi * faces;
}

inline DephasingTimes dephasing_higher_order(const BarModel& m, const BarSpectrum& s, const Vec3& r,
                                             double temperature, double alpha) {
  const double cutoff = 10.0 * m.constants.boltzmann_over_hbar * temperature;
  const auto sc = frequency_scales(m.material, m.d, m.w, m.l, std::nullopt, m.constants);
  const double wdwl = *sc.omega_dwl;
  double sg = 0, sl = 0;
  int count = 0, extra = 0;
  for (int p = 0; p < 100000; ++p) {
    const double om = mode_frequency(m, s, p);
    if (p >= s.modes() && om > cutoff) break;
    if (om > cutoff) continue;
    const double nb = thermal_occupation(om, temperature, m.constants);
    const double th = theta_diag(m, r, p);
    const double var = nb * (nb + 1);
    sg += th * th * var;
    sl += th * th * var / (2.0 * alpha * om);
    ++count;
    if (p >= s.modes()) ++extra;
  }
  auto t = times_from_rates(wdwl * std::sqrt(sg), wdwl * wdwl * sl);
  t.modes_summed = count;
  t.modes_extrapolated = extra;
  t.truncation_warning = extra > 0;
  return t;
}

inline DephasingTimes dephasing_stark(const BarCouplingSet& c, const BarSpectrum& s, double omega_nv,
                                      double temperature, double alpha, int resonant_p,
                                      const PhysicalConstants& k = {}) {
  double sg = 0, sl = 0;
  int count = 0;
  for (int p = 0; p < s.modes(); ++p) {
    if (p == resonant_p) continue;
    const double om = s.omega(p);
    const double shift = 2.0 * std::norm(c.g_lower[p]) / (omega_nv - om);
    const double nb = thermal_occupation(om, temperature, k);
    const double var = nb * (nb + 1);
    sg += shift * shift * var;
    sl += shift * shift * var / (2.0 * alpha * om);
    ++count;
  }
  auto t = times_from_rates(std::sqrt(sg), sl);
  t.modes_summed = count;
  return t;
}

enum class Transition { lower, upper };

struct T1Rates {
  double gamma_minus = 0;  // s^-1, emission
  double gamma_plus = 0;   // s^-1, absorption
};

inline T1Rates t1_decay_rates(const BarCouplingSet& c, const BarSpectrum& s, Transition tr, double h_ext,
                              double temperature, double alpha, int resonant_p, const PhysicalConstants& k = {}) {
  const auto [lo, up] = nv_transition_frequencies(h_ext, k);
  const double big = tr == Transition::lower ? lo : up;
  const auto& g = tr == Transition::lower ? c.g_lower : c.g_upper;
  T1Rates r;
  for (int p = 0; p < s.modes(); ++p) {
    if (tr == Transition::lower && p == resonant_p) continue;
    const double om = s.omega(p), kap = alpha * om;
    const double nb = thermal_occupation(om, temperature, k);
    const double lor = 2.0 * kap / ((big - om) * (big - om) + kap * kap);
    r.gamma_minus += std::norm(g[p]) * (nb + 1) * lor;
    r.gamma_plus += std::norm(g[p]) * nb * lor;
  }
  return r;
}

}  // namespace nvmag::bar
