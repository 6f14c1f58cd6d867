#pragma once
// Two NV qubits and one damped bosonic mode: Lindblad propagation in
// coherence-order sectors, entanglement measures, the two entangling
// protocols, gate fidelity and small-damping limits.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "constants.hpp"
#include "numerics/linalg.hpp"

namespace nvmag::lindblad {

using numerics::cd;
using numerics::MatC;
using numerics::VecC;
using Mat4 = Eigen::Matrix4cd;
using Vec4 = Eigen::Vector4cd;

inline constexpr double pi = std::numbers::pi;

class PositivityError : public std::runtime_error {
 public:
  PositivityError(const std::string& what, double t, double eig)
      : std::runtime_error(what), time(t), eigenvalue(eig) {}
  double time, eigenvalue;
};

// Two-qubit basis index: 2*q1 + q2 with 0 = |g>, 1 = |e>
enum QubitBasis { gg = 0, ge = 1, eg = 2, ee = 3 };

// ── Model ──

struct OpenSystemModel {
  cd g1{0}, g2{0};          // rad/s
  double omega_m = 0;       // rad/s, mode frequency (thermal occupation, damping)
  double kappa = 0;         // rad/s
  double n_th = 0;
  double gamma2 = 0;        // s^-1
  double extra_dephasing = 0;
  double nv_decay = 0;       // s^-1, longitudinal emission, off by default
  double nv_excitation = 0;  // s^-1, longitudinal absorption
  int n_max = 12;

  static int min_cutoff(double n_th, double bound = 1e-6) {
    if (n_th <= 0) return 1;
    const double r = n_th / (1.0 + n_th);
    return std::max(1, static_cast<int>(std::ceil(std::log(bound) / std::log(r))) - 1);
  }
  double tail_bound() const {
    const double r = n_th / (1.0 + n_th);
    return std::pow(r, n_max + 1);
  }
  void validate() const {
    if (kappa < 0 || n_th < 0 || gamma2 < 0 || extra_dephasing < 0 || nv_decay < 0 || nv_excitation < 0)
      throw std::domain_error("OpenSystemModel: negative rate or occupation");
    if (n_max < 1) throw std::domain_error("OpenSystemModel: n_max must be >= 1");
    if (tail_bound() >= 1e-6) throw std::domain_error("OpenSystemModel: Fock cutoff too small for n_th");
  }
  int dim() const { return 4 * (n_max + 1); }
};

// Model at Fig. 5 style inputs; cutoff raised when the thermal tail demands it.
inline OpenSystemModel make_model(double g, double omega_m, double alpha, double t2_star, double temperature,
                                  int n_max = 12, const PhysicalConstants& k = {}) {
  OpenSystemModel m;
  m.g1 = g;
  m.g2 = -g;
  m.omega_m = omega_m;
  m.kappa = alpha * omega_m;
  m.n_th = thermal_occupation(omega_m, temperature, k);
  m.gamma2 = t2_star > 0 && std::isfinite(t2_star) ? 1.0 / t2_star : 0.0;
  m.n_max = std::max(n_max, OpenSystemModel::min_cutoff(m.n_th));
  return m;
}

struct Segment {
  double duration = 0;
  double det_nv1 = 0, det_nv2 = 0;  // qubit frequency minus frame, rad/s
  double det_mode = 0;              // mode frequency minus frame, rad/s
  bool on1 = true, on2 = true;
};

struct ProtocolSchedule {
  std::vector<Segment> segments;
  std::string frame;
  double total() const {
    double t = 0;
    for (auto& s : segments) t += s.duration;
    return t;
  }
};

// ── Operators and sectors ──

struct Operators {
  int nm, d;
  MatC a, s1, s2, z1, z2, num;
  std::vector<int> excitation;  // per basis state
};

inline int state_index(int q, int n, int nm) { return q * (nm + 1) + n; }

inline Operators make_operators(int n_max) {
  Operators o;
  o.nm = n_max;
  o.d = 4 * (n_max + 1);
  const int d = o.d;
  o.a = MatC::Zero(d, d);
  o.s1 = MatC::Zero(d, d);
  o.s2 = MatC::Zero(d, d);
  o.z1 = MatC::Zero(d, d);
  o.z2 = MatC::Zero(d, d);
  o.num = MatC::Zero(d, d);
  o.excitation.resize(d);
  for (int q = 0; q < 4; ++q)
    for (int n = 0; n <= n_max; ++n) {
      const int i = state_index(q, n, n_max);
      const int e1 = q >> 1, e2 = q & 1;
      o.excitation[i] = n + e1 + e2;
      if (n > 0) o.a(state_index(q, n - 1, n_max), i) = std::sqrt(double(n));
      if (e1) o.s1(state_index(q & 1, n, n_max), i) = 1;
      if (e2) o.s2(state_index(q & 2, n, n_max), i) = 1;
      o.z1(i, i) = e1 ? 1 : -1;
      o.z2(i, i) = e2 ? 1 : -1;
      o.num(i, i) = n;
    }
  return o;
}

// Matrix elements |r><c| with excitation difference equal to `order`.
struct Sector {
  int order = 0;
  std::vector<std::pair<int, int>> elems;
  std::vector<int> lookup;  // r*d + c -> position or -1
  int size() const { return static_cast<int>(elems.size()); }
};

inline Sector make_sector(const Operators& o, int order) {
  Sector s;
  s.order = order;
  s.lookup.assign(o.d * o.d, -1);
  for (int r = 0; r < o.d; ++r)
    for (int c = 0; c < o.d; ++c)
      if (o.excitation[r] - o.excitation[c] == order) {
        s.lookup[r * o.d + c] = s.size();
        s.elems.emplace_back(r, c);
      }
  return s;
}

inline Sector full_sector(const Operators& o) {
  Sector s;
  s.order = 0;
  s.lookup.assign(o.d * o.d, -1);
  for (int c = 0; c < o.d; ++c)
    for (int r = 0; r < o.d; ++r) {
      s.lookup[r * o.d + c] = s.size();
      s.elems.emplace_back(r, c);
    }
  return s;
}

inline MatC hamiltonian(const OpenSystemModel& m, const Operators& o, const Segment& seg) {
  MatC h = 0.5 * seg.det_nv1 * o.z1 + 0.5 * seg.det_nv2 * o.z2 + seg.det_mode * o.num;
  const MatC ad = o.a.adjoint();
  if (seg.on1) h += m.g1 * o.s1.adjoint() * o.a + std::conj(m.g1) * o.s1 * ad;
  if (seg.on2) h += m.g2 * o.s2.adjoint() * o.a + std::conj(m.g2) * o.s2 * ad;
  return h;
}

struct Dissipator {
  double rate;
  MatC op, op_dag_op;
};

inline std::vector<Dissipator> dissipators(const OpenSystemModel& m, const Operators& o) {
  std::vector<Dissipator> out;
  auto add = [&](double rate, const MatC& op) {
    if (rate > 0) out.push_back({rate, op, op.adjoint() * op});
  };
  add(2 * m.kappa * (1 + m.n_th), o.a);
  add(2 * m.kappa * m.n_th, o.a.adjoint());
  const double deph = 0.5 * (m.gamma2 + m.extra_dephasing);
  add(deph, o.z1);
  add(deph, o.z2);
  for (const MatC* s : {&o.s1, &o.s2}) {
    add(m.nv_decay, *s);
    add(m.nv_excitation, s->adjoint());
  }
  return out;
}

// Generator restricted to a sector, column k = L(|r_k><c_k|).
inline MatC build_generator(const OpenSystemModel& m, const Operators& o, const Segment& seg, const Sector& s) {
  m.validate();
  const MatC h = hamiltonian(m, o, seg);
  const auto ds = dissipators(m, o);
  const int n = s.size();
  const cd I(0, 1);
  MatC g = MatC::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    const auto [i, j] = s.elems[k];
    for (int p = 0; p < n; ++p) {
      const auto [r, c] = s.elems[p];
      cd v = 0;
      if (c == j) v += -I * h(r, i);
      if (r == i) v += I * h(j, c);
      for (const auto& dd : ds) {
        v += dd.rate * dd.op(r, i) * std::conj(dd.op(c, j));
        if (c == j) v -= 0.5 * dd.rate * dd.op_dag_op(r, i);
        if (r == i) v -= 0.5 * dd.rate * dd.op_dag_op(j, c);
      }
      g(p, k) = v;
    }
  }
  return g;
}

// Full vectorized generator (column-major vec); small cutoffs only.
inline MatC build_generator(const OpenSystemModel& m, const Segment& seg) {
  const auto o = make_operators(m.n_max);
  return build_generator(m, o, seg, full_sector(o));
}

inline VecC to_sector(const MatC& rho, const Sector& s) {
  VecC v(s.size());
  for (int k = 0; k < s.size(); ++k) v[k] = rho(s.elems[k].first, s.elems[k].second);
  return v;
}

inline void add_from_sector(MatC& rho, const VecC& v, const Sector& s) {
  for (int k = 0; k < s.size(); ++k) rho(s.elems[k].first, s.elems[k].second) += v[k];
}

inline MatC thermal_mode(int n_max, double n_th) {
  MatC r = MatC::Zero(n_max + 1, n_max + 1);
  double z = 0;
  for (int n = 0; n <= n_max; ++n) {
    const double p = n_th > 0 ? std::pow(n_th / (1 + n_th), n) / (1 + n_th) : (n == 0 ? 1.0 : 0.0);
    r(n, n) = p;
    z += p;
  }
  return r / z;
}

// qubit operator (4x4) tensor mode state
inline MatC product_state(const Mat4& q, const MatC& mode) {
  const int nm1 = static_cast<int>(mode.rows());
  MatC r = MatC::Zero(4 * nm1, 4 * nm1);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      if (q(a, b) != cd(0)) r.block(a * nm1, b * nm1, nm1, nm1) = q(a, b) * mode;
  return r;
}

inline Mat4 reduce_qubits(const MatC& rho, int n_max) {
  const int nm1 = n_max + 1;
  Mat4 r = Mat4::Zero();
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) r(a, b) = rho.block(a * nm1, b * nm1, nm1, nm1).trace();
  return r;
}

// ── Entanglement measures ──

inline Mat4 partial_transpose_second(const Mat4& r) {
  Mat4 t;
  for (int a1 = 0; a1 < 2; ++a1)
    for (int a2 = 0; a2 < 2; ++a2)
      for (int b1 = 0; b1 < 2; ++b1)
        for (int b2 = 0; b2 < 2; ++b2) t(2 * a1 + a2, 2 * b1 + b2) = r(2 * a1 + b2, 2 * b1 + a2);
  return t;
}

inline double negativity(const Mat4& rho) {
  Eigen::SelfAdjointEigenSolver<Mat4> es(partial_transpose_second(0.5 * (rho + rho.adjoint())),
                                         Eigen::EigenvaluesOnly);
  double s = 0;
  for (int i = 0; i < 4; ++i) s += std::max(0.0, -es.eigenvalues()[i]);
  return s;
}

inline double negativity_normalized(const Mat4& rho) { return negativity(rho) / 0.5; }

inline double chsh_measure(const Mat4& rho) {
  Eigen::Matrix2cd pauli[3];
  pauli[0] << 0, 1, 1, 0;
  pauli[1] << 0, cd(0, -1), cd(0, 1), 0;
  pauli[2] << 1, 0, 0, -1;
  Eigen::Matrix3d t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      Mat4 op;
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) op(a, b) = pauli[i](a >> 1, b >> 1) * pauli[j](a & 1, b & 1);
      t(i, j) = (rho * op).trace().real();
    }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(t.transpose() * t, Eigen::EigenvaluesOnly);
  const auto h = es.eigenvalues();  // ascending
  return h[1] + h[2];
}

inline double chsh_violation(const Mat4& rho) { return std::max(0.0, chsh_measure(rho) - 1.0); }

inline double fidelity_to_target(const Mat4& rho, const Vec4& psi) {
  return (psi.adjoint() * rho * psi)(0, 0).real();
}

// max over phi of <psi|rho|psi>, psi = (|ge> + e^{i phi}|eg>)/sqrt2
inline double fidelity_phase_max(const Mat4& rho) {
  return 0.5 * (rho(ge, ge).real() + rho(eg, eg).real()) + std::abs(rho(ge, eg));
}

inline Vec4 transduction_target(double phase) {
  Vec4 v = Vec4::Zero();
  v[ge] = 1 / std::sqrt(2.0);
  v[eg] = std::polar(1 / std::sqrt(2.0), -phase);
  return v;
}

inline Vec4 virtual_target() {
  Vec4 v = Vec4::Zero();
  v[ge] = 1 / std::sqrt(2.0);
  v[eg] = cd(0, -1 / std::sqrt(2.0));
  return v;
}

// ── Propagation ──

struct SimulationTrace {
  std::string frame;
  std::vector<double> times, p1e, p2e, n_mean, negativity_norm, chsh, fidelity, fidelity_phase_max;
  std::vector<double> trace_error, min_eigenvalue;
  std::vector<Mat4> states;

  void record(double t, const MatC& rho, int n_max, const Vec4& target) {
    const Mat4 r = reduce_qubits(rho, n_max);
    times.push_back(t);
    p1e.push_back((r(eg, eg) + r(ee, ee)).real());
    p2e.push_back((r(ge, ge) + r(ee, ee)).real());
    const int nm1 = n_max + 1;
    double nb = 0;
    for (int q = 0; q < 4; ++q)
      for (int n = 0; n <= n_max; ++n) nb += n * rho(q * nm1 + n, q * nm1 + n).real();
    n_mean.push_back(nb);
    negativity_norm.push_back(negativity_normalized(r));
    chsh.push_back(chsh_violation(r));
    fidelity.push_back(fidelity_to_target(r, target));
    fidelity_phase_max.push_back(lindblad::fidelity_phase_max(r));
    trace_error.push_back(std::abs(rho.trace() - cd(1)));
    Eigen::SelfAdjointEigenSolver<MatC> es(0.5 * (rho + rho.adjoint()), Eigen::EigenvaluesOnly);
    min_eigenvalue.push_back(es.eigenvalues()[0]);
    states.push_back(r);
    if (min_eigenvalue.back() < -1e-8) throw PositivityError("evolve: density matrix lost positivity", t, min_eigenvalue.back());
  }
  std::size_t size() const { return times.size(); }
};

// Sector-wise propagator with a cache keyed by step length.
class SectorPropagator {
 public:
  SectorPropagator(const OpenSystemModel& m, const Operators& o, const Segment& seg, const Sector& s)
      : gen_(build_generator(m, o, seg, s)) {}
  const MatC& step(double dt) {
    auto it = cache_.find(dt);
    if (it != cache_.end()) return it->second;
    if (cache_.size() > 64) cache_.clear();
    return cache_.emplace(dt, (gen_ * dt).exp()).first->second;
  }
  const MatC& generator() const { return gen_; }

 private:
  MatC gen_;
  std::map<double, MatC> cache_;
};

inline std::vector<int> sectors_present(const MatC& rho, const Operators& o) {
  std::vector<int> out;
  for (int q = -(o.nm + 2); q <= o.nm + 2; ++q) {
    bool any = false;
    for (int r = 0; r < o.d && !any; ++r)
      for (int c = 0; c < o.d && !any; ++c)
        if (o.excitation[r] - o.excitation[c] == q && std::abs(rho(r, c)) > 0) any = true;
    if (any) out.push_back(q);
  }
  return out;
}

// Propagate rho0 through the schedule, recording at each sample time.
inline SimulationTrace evolve(const OpenSystemModel& m, const MatC& rho0, const ProtocolSchedule& sched,
                              const std::vector<double>& sample_times, const Vec4& target) {
  m.validate();
  if (!std::is_sorted(sample_times.begin(), sample_times.end()))
    throw std::invalid_argument("evolve: sample times must be sorted");
  const auto o = make_operators(m.n_max);
  if (rho0.rows() != o.d) throw std::invalid_argument("evolve: initial state dimension mismatch");
  SimulationTrace tr;
  tr.frame = sched.frame;
  const auto orders = sectors_present(rho0, o);
  std::vector<Sector> secs;
  std::vector<VecC> vecs;
  for (int q : orders) {
    secs.push_back(make_sector(o, q));
    vecs.push_back(to_sector(rho0, secs.back()));
  }
  auto assemble = [&] {
    MatC r = MatC::Zero(o.d, o.d);
    for (std::size_t k = 0; k < secs.size(); ++k) add_from_sector(r, vecs[k], secs[k]);
    return r;
  };
  std::size_t next = 0;
  double t0 = 0;
  while (next < sample_times.size() && sample_times[next] <= 0) tr.record(sample_times[next++], assemble(), m.n_max, target);
  for (const auto& seg : sched.segments) {
    if (!(seg.duration > 0)) throw std::invalid_argument("evolve: segment duration must be positive");
    std::vector<SectorPropagator> props;
    for (auto& s : secs) props.emplace_back(m, o, seg, s);
    const double t1 = t0 + seg.duration;
    double tc = t0;
    auto advance = [&](double to) {
      const double dt = to - tc;
      if (dt <= 0) return;
      for (std::size_t k = 0; k < secs.size(); ++k) vecs[k] = props[k].step(dt) * vecs[k];
      tc = to;
    };
    while (next < sample_times.size() && sample_times[next] <= t1 * (1 + 1e-12)) {
      advance(std::min(sample_times[next], t1));
      tr.record(sample_times[next++], assemble(), m.n_max, target);
    }
    advance(t1);
    t0 = t1;
  }
  return tr;
}

// ── Peak detection ──

struct Peak {
  double time = 0, value = 0;
};

template <class F>
inline Peak refine_peak(F&& f, const std::vector<double>& ts, const std::vector<double>& vals) {
  if (ts.empty()) throw std::invalid_argument("refine_peak: empty grid");
  const auto it = std::max_element(vals.begin(), vals.end());
  const std::size_t k = it - vals.begin();
  Peak best{ts[k], vals[k]};
  if (ts.size() < 3) return best;
  double a = ts[k == 0 ? 0 : k - 1], b = ts[std::min(k + 1, ts.size() - 1)];
  const double gr = 0.5 * (std::sqrt(5.0) - 1);
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < 40 && (b - a) > 1e-6 * std::max(1e-12, std::abs(best.time)); ++i) {
    if (fc > fd) { b = d; d = c; fd = fc; c = b - gr * (b - a); fc = f(c); }
    else { a = c; c = d; fc = fd; d = a + gr * (b - a); fd = f(d); }
  }
  if (fc > best.value) best = {c, fc};
  if (fd > best.value) best = {d, fd};
  return best;
}

// ── Protocols ──

inline MatC initial_state(const OpenSystemModel& m, QubitBasis q = ge) {
  Mat4 p = Mat4::Zero();
  p(q, q) = 1;
  return product_state(p, thermal_mode(m.n_max, m.n_th));
}

inline double swap_time(const OpenSystemModel& m) { return pi / (2 * std::abs(m.g1)); }

inline ProtocolSchedule transduction_schedule(const OpenSystemModel& m, double tau_var, double delta_idle,
                                              bool simplified = false) {
  ProtocolSchedule s;
  s.frame = "mode";
  Segment a, b;
  a.duration = tau_var;
  b.duration = swap_time(m);
  if (simplified) {
    a.on1 = false;
    b.on2 = false;
  } else {
    a.det_nv1 = delta_idle;
    b.det_nv2 = -delta_idle;
  }
  if (tau_var > 0) s.segments.push_back(a);
  s.segments.push_back(b);
  return s;
}

struct TransductionSweep {
  SimulationTrace trace;  // times = total interaction time
  std::vector<double> tau_var;
  Peak peak, peak_phase_max;
};

// Final-state fidelity of the transduction protocol as a function of tau_var.
inline TransductionSweep run_transduction(const OpenSystemModel& m, const std::vector<double>& tau_grid,
                                          double delta_idle, bool simplified = false) {
  m.validate();
  const auto o = make_operators(m.n_max);
  const Sector s = make_sector(o, 0);
  const double tsw = swap_time(m);
  const auto seg1 = transduction_schedule(m, 1.0, delta_idle, simplified).segments[0];
  const auto seg2 = transduction_schedule(m, 1.0, delta_idle, simplified).segments[1];
  SectorPropagator p1(m, o, seg1, s), p2(m, o, seg2, s);
  const MatC& u2 = p2.step(tsw);
  const Vec4 target = transduction_target(simplified ? 0.0 : delta_idle * tsw);
  const VecC v0 = to_sector(initial_state(m), s);
  TransductionSweep out;
  out.trace.frame = "mode";
  VecC v = v0;
  double tc = 0;
  auto finish = [&](const VecC& vv) {
    MatC r = MatC::Zero(o.d, o.d);
    add_from_sector(r, u2 * vv, s);
    return r;
  };
  for (double tv : tau_grid) {
    if (tv < tc) throw std::invalid_argument("run_transduction: tau grid must be ascending");
    if (tv > tc) v = p1.step(tv - tc) * v;
    tc = tv;
    out.trace.record(tv + tsw, finish(v), m.n_max, target);
    out.tau_var.push_back(tv);
  }
  auto fid_at = [&](double tv, bool phase_max) {
    const VecC vv = p1.step(tv) * v0;
    const Mat4 r = reduce_qubits(finish(vv), m.n_max);
    return phase_max ? fidelity_phase_max(r) : fidelity_to_target(r, target);
  };
  out.peak = refine_peak([&](double t) { return fid_at(t, false); }, out.tau_var, out.trace.fidelity);
  out.peak_phase_max =
      refine_peak([&](double t) { return fid_at(t, true); }, out.tau_var, out.trace.fidelity_phase_max);
  out.peak.time += tsw;
  out.peak_phase_max.time += tsw;
  return out;
}

inline double transduction_fidelity(const OpenSystemModel& m, double tau_var, double delta_idle,
                                    bool simplified = false) {
  auto r = run_transduction(m, {tau_var}, delta_idle, simplified);
  return r.trace.fidelity.front();
}

// Bright-state return times of the closed off-resonant dynamics.
inline double return_period(double g, double delta_omega) {
  return 2 * pi / std::sqrt(delta_omega * delta_omega + 8 * g * g);
}

struct VirtualRun {
  SimulationTrace trace;
  Peak peak, peak_phase_max;
  double best_return_time = 0, best_return_fidelity = 0;
};

inline VirtualRun run_virtual_exchange(const OpenSystemModel& m, double delta_omega, double total_time,
                                       int samples = 600) {
  ProtocolSchedule sch;
  sch.frame = "nv";
  Segment seg;
  seg.duration = total_time;
  seg.det_mode = delta_omega;
  sch.segments.push_back(seg);
  std::vector<double> ts;
  for (int i = 0; i <= samples; ++i) ts.push_back(total_time * i / samples);
  const Vec4 target = virtual_target();
  VirtualRun out;
  out.trace = evolve(m, initial_state(m), sch, ts, target);
  const auto o = make_operators(m.n_max);
  const Sector s = make_sector(o, 0);
  SectorPropagator p(m, o, seg, s);
  const VecC v0 = to_sector(initial_state(m), s);
  auto state_at = [&](double t) {
    MatC r = MatC::Zero(o.d, o.d);
    add_from_sector(r, p.step(t) * v0, s);
    return reduce_qubits(r, m.n_max);
  };
  out.peak = refine_peak([&](double t) { return fidelity_to_target(state_at(t), target); }, ts, out.trace.fidelity);
  out.peak_phase_max =
      refine_peak([&](double t) { return fidelity_phase_max(state_at(t)); }, ts, out.trace.fidelity_phase_max);
  const double tr = return_period(std::abs(m.g1), delta_omega);
  const MatC& step = p.step(tr);
  VecC v = v0;
  for (int k = 1; k * tr <= total_time; ++k) {
    v = step * v;
    MatC r = MatC::Zero(o.d, o.d);
    add_from_sector(r, v, s);
    const double f = fidelity_to_target(reduce_qubits(r, m.n_max), target);
    if (f > out.best_return_fidelity) {
      out.best_return_fidelity = f;
      out.best_return_time = k * tr;
    }
  }
  return out;
}

// Peak fidelity over bright-state return times (off-resonant protocol).
inline Peak virtual_return_peak(const OpenSystemModel& m, double delta_omega, double max_time) {
  const auto o = make_operators(m.n_max);
  const Sector s = make_sector(o, 0);
  Segment seg;
  seg.det_mode = delta_omega;
  SectorPropagator p(m, o, seg, s);
  const double tr = return_period(std::abs(m.g1), delta_omega);
  const MatC step = p.step(tr);
  VecC v = to_sector(initial_state(m), s);
  const Vec4 target = virtual_target();
  Peak best;
  for (int k = 1; k * tr <= max_time; ++k) {
    v = step * v;
    MatC r = MatC::Zero(o.d, o.d);
    add_from_sector(r, v, s);
    const double f = fidelity_to_target(reduce_qubits(r, m.n_max), target);
    if (f > best.value) best = {k * tr, f};
  }
  return best;
}

// ── Average gate fidelity ──

inline Mat4 sqrt_iswap_gate() {
  Mat4 u = Mat4::Zero();
  const cd a(0.5, 0.5), b(0.5, -0.5);
  u(ee, ee) = cd(0, 1);
  u(eg, eg) = a;
  u(eg, ge) = b;
  u(ge, eg) = b;
  u(ge, ge) = a;
  u(gg, gg) = 1;
  return u;
}

struct GateFidelityCurve {
  std::vector<double> times, average_fidelity;
  double gate_time = 0;
  double at_gate_time = 0;
  Peak peak;
};

// Channel on the 16 operators |i><j| (mode thermal) reproduces the
// entanglement fidelity with a maximally entangled auxiliary pair.
inline GateFidelityCurve average_gate_fidelity(const OpenSystemModel& m, double delta_omega, double t_max = -1,
                                               int samples = 200) {
  m.validate();
  const double geff = std::abs(m.g1 * std::conj(m.g2)) / delta_omega;
  const double tg = pi / (4 * geff);
  if (t_max <= 0) t_max = 2 * tg;
  const auto o = make_operators(m.n_max);
  const MatC mode = thermal_mode(m.n_max, m.n_th);
  const Mat4 u = sqrt_iswap_gate();
  Segment seg;
  seg.det_mode = delta_omega;
  struct Block {
    Sector s;
    MatC gen;
    std::vector<std::pair<int, int>> inputs;
    MatC v0;
  };
  auto exc = [](int q) { return (q >> 1) + (q & 1); };
  std::map<int, Block> blocks;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) blocks[exc(i) - exc(j)].inputs.emplace_back(i, j);
  for (auto& [q, b] : blocks) {
    b.s = make_sector(o, q);
    b.gen = build_generator(m, o, seg, b.s);
    b.v0.resize(b.s.size(), b.inputs.size());
    for (std::size_t k = 0; k < b.inputs.size(); ++k) {
      Mat4 e = Mat4::Zero();
      e(b.inputs[k].first, b.inputs[k].second) = 1;
      b.v0.col(k) = to_sector(product_state(e, mode), b.s);
    }
  }
  auto fidelity_at = [&](double t) {
    cd fe = 0;
    for (auto& [q, b] : blocks) {
      const MatC v = (b.gen * t).exp() * b.v0;
      for (std::size_t k = 0; k < b.inputs.size(); ++k) {
        MatC r = MatC::Zero(o.d, o.d);
        add_from_sector(r, v.col(k), b.s);
        const Mat4 x = reduce_qubits(r, m.n_max);
        const auto [i, j] = b.inputs[k];
        fe += (u.adjoint() * x * u)(i, j);
      }
    }
    return (4.0 * fe.real() / 16.0 + 1.0) / 5.0;
  };
  GateFidelityCurve c;
  c.gate_time = tg;
  // stepping propagators for the grid
  const double dt = t_max / samples;
  std::map<int, MatC> steps, vs;
  for (auto& [q, b] : blocks) {
    steps[q] = (b.gen * dt).exp();
    vs[q] = b.v0;
  }
  for (int n = 0; n <= samples; ++n) {
    if (n > 0)
      for (auto& [q, b] : blocks) vs[q] = steps[q] * vs[q];
    cd fe = 0;
    for (auto& [q, b] : blocks)
      for (std::size_t k = 0; k < b.inputs.size(); ++k) {
        MatC r = MatC::Zero(o.d, o.d);
        add_from_sector(r, vs[q].col(k), b.s);
        const auto [i, j] = b.inputs[k];
        fe += (u.adjoint() * reduce_qubits(r, m.n_max) * u)(i, j);
      }
    c.times.push_back(n * dt);
    c.average_fidelity.push_back((4.0 * fe.real() / 16.0 + 1.0) / 5.0);
  }
  c.at_gate_time = fidelity_at(tg);
  c.peak = refine_peak(fidelity_at, c.times, c.average_fidelity);
  return c;
}

// ── Closed-form limits ──

inline double node_detuning(int n) { return 2 * std::sqrt(2.0) * (2 * n - 1) / std::sqrt(4.0 * n - 1); }

inline double onres_fidelity(double alpha_omega_over_g, double gamma2_over_g) {
  return 1 - (pi - 1) / 2 * alpha_omega_over_g - 15 * pi / 32 * gamma2_over_g;
}

inline double offres_fidelity(int n, double alpha_omega_over_g, double gamma2_over_g) {
  const double nn = n;
  const double ca = std::pow(4 * nn - 1, 1.5) * pi / (16 * std::sqrt(2.0) * nn * nn);
  const double poly = -3 + 24 * nn - 80 * nn * nn + 128 * nn * nn * nn + 256 * nn * nn * nn * nn;
  const double cg = std::sqrt(4 * nn - 1) * poly * pi / (1024 * std::sqrt(2.0) * std::pow(nn, 4));
  return 1 - ca * alpha_omega_over_g - cg * gamma2_over_g;
}

// Boundary slope at node n from the two linear expansions.
inline double node_boundary_slope(int n) {
  const double nn = n;
  const double ca = std::pow(4 * nn - 1, 1.5) * pi / (16 * std::sqrt(2.0) * nn * nn);
  const double poly = -3 + 24 * nn - 80 * nn * nn + 128 * nn * nn * nn + 256 * nn * nn * nn * nn;
  const double cg = std::sqrt(4 * nn - 1) * poly * pi / (1024 * std::sqrt(2.0) * std::pow(nn, 4));
  return (cg - 15 * pi / 32) / ((pi - 1) / 2 - ca);
}

inline double slope_asymptote(double delta_over_g) { return pi / (4 * (pi - 1)) * delta_over_g; }

inline double crossover_alpha(double delta_over_g, double omega_t2) {
  return delta_over_g / (4 * (1 - 1 / pi)) / omega_t2;
}

// ── Protocol phase diagram (T = 0, couplings switched on and off) ──

struct PhaseInputs {
  double g = 0, omega = 0, delta_omega = 0;
};

inline OpenSystemModel phase_model(const PhaseInputs& in, double alpha, double gamma2) {
  OpenSystemModel m;
  m.g1 = in.g;
  m.g2 = -in.g;
  m.omega_m = in.omega;
  m.kappa = alpha * in.omega;
  m.gamma2 = gamma2;
  m.n_max = 1;
  return m;
}

inline double phase_fid_onres(const PhaseInputs& in, double alpha, double gamma2) {
  const auto m = phase_model(in, alpha, gamma2);
  return transduction_fidelity(m, swap_time(m) / 2, 0.0, true);
}

inline double phase_fid_offres(const PhaseInputs& in, double alpha, double gamma2) {
  const auto m = phase_model(in, alpha, gamma2);
  const double geff = in.g * in.g / in.delta_omega;
  return virtual_return_peak(m, in.delta_omega, 2.0 * pi / (4 * geff)).value;
}

struct PhaseCell {
  double alpha, gamma2, fid_onres, fid_offres;
  int winner;  // +1 on-resonant, -1 off-resonant
};

inline std::vector<PhaseCell> protocol_phase_map(const PhaseInputs& in, const std::vector<double>& alphas,
                                                 const std::vector<double>& gamma2s) {
  std::vector<PhaseCell> out;
  for (double a : alphas)
    for (double g2 : gamma2s) {
      const double fo = phase_fid_onres(in, a, g2), ff = phase_fid_offres(in, a, g2);
      out.push_back({a, g2, fo, ff, fo >= ff ? 1 : -1});
    }
  return out;
}

// alpha at which both protocols reach equal peak fidelity (log bisection).
inline double crossover_alpha_numeric(const PhaseInputs& in, double gamma2, double lo = 1e-12, double hi = 1e-3) {
  auto diff = [&](double a) { return phase_fid_onres(in, a, gamma2) - phase_fid_offres(in, a, gamma2); };
  double fl = diff(lo), fh = diff(hi);
  if (fl < 0 || fh > 0) throw std::domain_error("crossover_alpha_numeric: no sign change in bracket");
  for (int i = 0; i < 60; ++i) {
    const double mid = std::sqrt(lo * hi);
    (diff(mid) > 0 ? lo : hi) = mid;
    if (hi / lo < 1 + 1e-6) break;
  }
  return std::sqrt(lo * hi);
}

struct BoundaryFit {
  double slope = 0, offset = 0;
  std::vector<double> x, y;  // gamma2/g, alpha*omega/g
};

inline BoundaryFit boundary_fit(const PhaseInputs& in, const std::vector<double>& gamma2_over_g) {
  BoundaryFit f;
  for (double x : gamma2_over_g) {
    const double a = crossover_alpha_numeric(in, x * in.g);
    f.x.push_back(x);
    f.y.push_back(a * in.omega / in.g);
  }
  const int n = static_cast<int>(f.x.size());
  if (n < 2) throw std::invalid_argument("boundary_fit: need at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    sx += f.x[i];
    sy += f.y[i];
    sxx += f.x[i] * f.x[i];
    sxy += f.x[i] * f.y[i];
  }
  f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  f.offset = (sy - f.slope * sx) / n;
  return f;
}

}  // namespace nvmag::lindblad
