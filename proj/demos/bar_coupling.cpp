// Resonant field, mode frequency, NV coupling and dispersive NV-NV
// coupling for a 5 x 30 x 3000 nm bar.

#include <cmath>
#include <cstdio>

#include <nvmag/bar.hpp>
#include <nvmag/waveguide.hpp>

using namespace nvmag;

int main() {
  bar::BarModel m;
  const auto geo = bar::assemble_geometry(m);
  m.h_ext = bar::find_resonant_field(m, geo, 5);
  const auto spec = bar::bar_spectrum(m, geo);
  const numerics::Vec3 nv1(10e-9, 30e-9, 400e-9);
  const auto c = bar::bar_coupling(m, spec, nv1);
  std::printf("resonant field   %.4f mT\n", units::to_mt(m.h_ext));
  std::printf("mode p=5         %.6f GHz\n", units::to_ghz(spec.omega(5)));
  std::printf("|g| lower/upper  %.2f / %.2f kHz\n", units::to_khz(std::abs(c.g_lower[5])),
              units::to_khz(std::abs(c.g_upper[5])));
  std::printf("cooperativity    %.3g\n", bar::cooperativity(std::abs(c.g_lower[5]), spec.omega(5), 1e-5, 1e-3));

  std::printf("\n dz_um  geff_khz    gdr\n");
  m.h_ext = bar::find_resonant_field(m, geo, 5, two_pi * 1e4, units::mhz(3));
  const auto s3 = bar::bar_spectrum(m, geo);
  const double dw = s3.omega(5) - nv_transition_frequencies(m.h_ext, m.constants).first;
  const auto g1 = bar::bar_coupling(m, s3, nv1).g_lower[5];
  for (double dz = 0.2e-6; dz <= 2.4e-6; dz += 0.2e-6) {
    numerics::Vec3 r2 = nv1;
    r2[2] += dz;
    const double ge = std::abs(bar::bar_geff(g1, bar::bar_coupling(m, s3, r2).g_lower[5], dw).g_eff);
    std::printf("%6.1f  %8.2f  %6.1f\n", dz * 1e6, units::to_khz(ge), waveguide::er_gdr(ge, 1e-3).gdr);
  }
}
