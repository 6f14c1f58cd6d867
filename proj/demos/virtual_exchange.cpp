// Off-resonant virtual-magnon exchange between two NV centres at 70 mK:
// populations, entanglement and Bell-state fidelity over time.

#include <cstdio>

#include <nvmag/lindblad.hpp>

using namespace nvmag;

int main() {
  const auto m = lindblad::make_model(units::khz(517), units::ghz(2.78), 1e-5, 1e-3, 0.070);
  const auto run = lindblad::run_virtual_exchange(m, units::mhz(3), 4e-6, 80);
  const auto& tr = run.trace;
  std::printf("n_thermal %.4f, Fock cutoff %d\n\n", m.n_th, m.n_max);
  std::printf("  t_us    p1e    p2e  negativity  fidelity\n");
  for (std::size_t i = 0; i < tr.size(); i += 4)
    std::printf("%6.2f  %5.3f  %5.3f  %10.4f  %8.4f\n", tr.times[i] * 1e6, tr.p1e[i], tr.p2e[i],
                tr.negativity_norm[i], tr.fidelity[i]);
  std::printf("\npeak fidelity %.4f at %.3f us\n", run.peak.value, run.peak.time * 1e6);
}
