#pragma once
// Physical constants, material defaults and derived frequency scales.
// Internal convention: angular frequencies in rad/s, SI lengths, hbar = 1
// except inside the dipolar scale constructors below.

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <utility>

namespace nvmag {

inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double hbar_si = 1.054571817e-34;   // J s
inline constexpr double kb_si = 1.380649e-23;        // J/K
inline constexpr double mu0_si = 1.25663706212e-6;   // T m/A

namespace units {
inline constexpr double hz_to_rad(double f) { return two_pi * f; }
inline constexpr double rad_to_hz(double w) { return w / two_pi; }
inline constexpr double mhz(double f) { return two_pi * f * 1e6; }
inline constexpr double ghz(double f) { return two_pi * f * 1e9; }
inline constexpr double khz(double f) { return two_pi * f * 1e3; }
inline constexpr double to_mhz(double w) { return w / (two_pi * 1e6); }
inline constexpr double to_ghz(double w) { return w / (two_pi * 1e9); }
inline constexpr double to_khz(double w) { return w / (two_pi * 1e3); }
inline constexpr double mt(double b) { return b * 1e-3; }
inline constexpr double to_mt(double b) { return b * 1e3; }
inline constexpr double nm(double x) { return x * 1e-9; }
inline constexpr double to_nm(double x) { return x * 1e9; }
inline constexpr double um(double x) { return x * 1e-6; }
inline constexpr double to_um(double x) { return x * 1e6; }
}  // namespace units

struct PhysicalConstants {
  double gamma = two_pi * 28e9;                 // rad s^-1 T^-1, |electron ratio|
  double boltzmann_over_hbar = kb_si / hbar_si;  // rad s^-1 K^-1
  double d_nv = two_pi * 2.877e9;               // rad/s
};

// The exchange stiffness is quoted as 5.39e-2 gamma mT um^2, i.e.
//   D_ex = 5.39e-2 * (2pi * 28e6 rad/s/mT) * 1 mT * 1e-12 m^2
//        = 2pi * 1.5092e-6 rad m^2/s  (about 9.48e-6 rad m^2/s).
inline constexpr double yig_d_ex = 5.39e-2 * (two_pi * 28e6) * 1e-12;

struct MaterialParams {
  double mu0_ms = 0.2458;    // T
  double d_ex = yig_d_ex;    // rad m^2/s
  double alpha = 1e-5;       // Gilbert damping

  void validate() const {
    if (!(mu0_ms > 0) || !(d_ex > 0) || !(alpha >= 0 && alpha < 1))
      throw std::domain_error("material parameters out of range");
  }
  // squared exchange length d_ex / (gamma mu0 Ms), m^2
  double exchange_length_sq(const PhysicalConstants& c = {}) const { return d_ex / (c.gamma * mu0_ms); }
};

struct FrequencyScales {
  double omega_m = 0;
  double omega_d = 0;
  std::optional<double> omega_dbar;
  std::optional<double> omega_dwl;
};

// mu0 gamma^2 hbar, the common numerator of the dipolar scales (m^3/s).
inline double dipolar_volume_rate(const PhysicalConstants& c = {}) { return mu0_si * c.gamma * c.gamma * hbar_si; }

inline FrequencyScales frequency_scales(const MaterialParams& mat, double d, double w,
                                        std::optional<double> l = std::nullopt,
                                        std::optional<double> xi0 = std::nullopt,
                                        const PhysicalConstants& c = {}) {
  if (!(d > 0) || !(w > 0)) throw std::domain_error("frequency_scales: nonpositive dimension");
  if (l && !(*l > 0)) throw std::domain_error("frequency_scales: nonpositive length");
  if (xi0 && !(*xi0 > 0)) throw std::domain_error("frequency_scales: nonpositive correlation length");
  const double k = dipolar_volume_rate(c);
  FrequencyScales s;
  s.omega_m = c.gamma * mat.mu0_ms;
  s.omega_d = k / (d * d * d);
  if (xi0) s.omega_dbar = k / (*xi0 * w * d);
  if (l) s.omega_dwl = k / (d * w * *l);
  return s;
}

// Lower (|0> <-> |-1>) and upper (|0> <-> |+1>) NV transition frequencies.
inline std::pair<double, double> nv_transition_frequencies(double h_ext, const PhysicalConstants& c = {}) {
  const double z = c.gamma * h_ext;
  if (!(z < c.d_nv) || !(h_ext >= 0)) throw std::domain_error("nv_transition_frequencies: field outside the lower-branch range");
  return {c.d_nv - z, c.d_nv + z};
}

inline double thermal_occupation(double omega, double temperature, const PhysicalConstants& c = {}) {
  if (temperature < 0) throw std::domain_error("thermal_occupation: negative temperature");
  if (temperature == 0) return 0.0;
  return 1.0 / std::expm1(omega / (c.boltzmann_over_hbar * temperature));
}

}  // namespace nvmag
