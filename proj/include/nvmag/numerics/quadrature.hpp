#pragma once
// Adaptive Gauss-Kronrod (7/15) integration with global error control,
// fixed Gauss-Legendre rules, and a log-singular double-interval rule.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nvmag::numerics {

struct QuadratureSpec {
  double rel_tol = 1e-6;
  double abs_tol = 1e-14;
  int max_subdivisions = 2000;

  void validate() const {
    if (!(rel_tol > 0) || !(abs_tol > 0) || max_subdivisions < 1)
      throw std::domain_error("QuadratureSpec: tolerances must be positive");
  }
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double estimate, double error)
      : std::runtime_error(what), estimate_(estimate), error_(error) {}
  double estimate() const { return estimate_; }
  double error() const { return error_; }

 private:
  double estimate_, error_;
};

template <class V>
struct QuadResult {
  V value;
  double error;
};

namespace detail {

inline double magnitude(double v) { return std::abs(v); }
inline double magnitude(std::complex<double> v) { return std::abs(v); }
template <class Derived>
double magnitude(const Eigen::MatrixBase<Derived>& v) { return v.cwiseAbs().maxCoeff(); }

inline double first_component(double v) { return v; }
inline double first_component(std::complex<double> v) { return std::abs(v); }
template <class Derived>
double first_component(const Eigen::MatrixBase<Derived>& v) { return v.cwiseAbs().maxCoeff(); }

inline constexpr std::array<double, 8> kronrod_x = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr std::array<double, 8> kronrod_w = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> gauss7_w = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class F>
auto gk15(F& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  auto fc = f(c);
  using V = decltype(fc);
  V kron = fc * kronrod_w[7];
  V gauss = fc * gauss7_w[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = h * kronrod_x[j];
    V s = f(c - dx) + f(c + dx);
    kron = kron + s * kronrod_w[j];
    if (j % 2 == 1) gauss = gauss + s * gauss7_w[j / 2];
  }
  V k = kron * h;
  V g = gauss * h;
  const double err = magnitude(V(k - g));
  return std::pair<V, double>{k, err};
}

}  // namespace detail

// Adaptive bisection on the interval with the largest error until the
// summed error meets max(abs_tol, rel_tol*|I|). Breakpoints split the
// initial interval (useful for kinks and integrable singular points).
template <class F>
auto integrate(F&& f, double a, double b, const QuadratureSpec& spec = {},
               const std::vector<double>& breaks = {}) {
  using V = decltype(f(a));
  struct Seg {
    double a, b;
    V val;
    double err;
    bool operator<(const Seg& o) const { return err < o.err; }
  };
  std::vector<double> pts{a};
  for (double x : breaks)
    if ((x - a) * (x - b) < 0) pts.push_back(x);
  pts.push_back(b);
  if (a < b) std::sort(pts.begin(), pts.end());
  else std::sort(pts.begin(), pts.end(), std::greater<>());

  std::priority_queue<Seg> heap;
  V total{};
  bool first = true;
  double err_total = 0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    if (pts[i] == pts[i + 1]) continue;
    auto [v, e] = detail::gk15(f, pts[i], pts[i + 1]);
    heap.push({pts[i], pts[i + 1], v, e});
    total = first ? v : V(total + v);
    first = false;
    err_total += e;
  }
  if (first) {
    auto z = f(a);
    return QuadResult<V>{V(z * 0.0), 0.0};
  }
  int n = static_cast<int>(heap.size());
  auto target = [&] { return std::max(spec.abs_tol, spec.rel_tol * detail::magnitude(total)); };
  while (err_total > target() && n < spec.max_subdivisions) {
    Seg s = heap.top();
    heap.pop();
    const double m = 0.5 * (s.a + s.b);
    if (m == s.a || m == s.b) {  // interval exhausted at machine resolution
      heap.push({s.a, s.b, s.val, 0.0});
      err_total -= s.err;
      continue;
    }
    auto [v1, e1] = detail::gk15(f, s.a, m);
    auto [v2, e2] = detail::gk15(f, m, s.b);
    total = V(total - s.val + v1 + v2);
    err_total += e1 + e2 - s.err;
    heap.push({s.a, m, v1, e1});
    heap.push({m, s.b, v2, e2});
    ++n;
  }
  // resum to shed accumulated rounding from the running updates
  V sum = heap.top().val * 0.0;
  double esum = 0;
  while (!heap.empty()) {
    sum = V(sum + heap.top().val);
    esum += heap.top().err;
    heap.pop();
  }
  if (esum > std::max(spec.abs_tol, spec.rel_tol * detail::magnitude(sum)) * 1.0000001)
    throw ConvergenceError("integrate: subdivision budget exhausted", detail::first_component(sum), esum);
  return QuadResult<V>{sum, esum};
}

// Gauss-Legendre nodes and weights on [-1,1], cached per order.
struct GaussRule {
  std::vector<double> x, w;
};

inline const GaussRule& gauss_legendre(int n) {
  static std::map<int, GaussRule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  GaussRule r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0;
    for (int it2 = 0; it2 < 100; ++it2) {
      double p0 = 1, p1 = 0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1) * z * p1 - j * p2) / (j + 1);
      }
      dp = n * (z * p0 - p1) / (z * z - 1);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    r.x[i] = -z;
    r.x[n - 1 - i] = z;
    r.w[i] = r.w[n - 1 - i] = 2.0 / ((1 - z * z) * dp * dp);
  }
  return cache.emplace(n, std::move(r)).first->second;
}

// Double integral of f(s,t)*kernel(|s-t|) over [a0,a1]x[b0,b1] where the
// kernel may carry an integrable log singularity at s=t. The inner
// integral is split at s and mapped by t = s +- u^2 so the singular
// factor becomes u*log(u), which the Kronrod rule resolves quickly.
template <class F, class K>
QuadResult<double> log_singular_quad_1d(F&& f, K&& kernel, std::pair<double, double> ia,
                                        std::pair<double, double> ib, const QuadratureSpec& spec = {}) {
  QuadratureSpec inner = spec;
  inner.rel_tol = spec.rel_tol * 0.1;
  inner.abs_tol = spec.abs_tol * 0.1;
  const auto [b0, b1] = ib;
  double inner_err_max = 0;
  auto inner_fn = [&](double s) {
    double total = 0;
    auto mapped = [&](double u0, double u1, double sign) {
      if (u1 <= u0) return;
      auto g = [&](double u) { return 2.0 * u * f(s, s + sign * u * u) * kernel(u * u); };
      auto r = integrate(g, u0, u1, inner);
      total += r.value;
      inner_err_max = std::max(inner_err_max, r.error);
    };
    if (s <= b0) {
      mapped(std::sqrt(b0 - s), std::sqrt(b1 - s), 1.0);
    } else if (s >= b1) {
      mapped(std::sqrt(s - b1), std::sqrt(s - b0), -1.0);
    } else {
      mapped(0.0, std::sqrt(b1 - s), 1.0);
      mapped(0.0, std::sqrt(s - b0), -1.0);
    }
    return total;
  };
  // Disjoint intervals have a smooth inner integrand; integrate directly.
  const bool disjoint = ia.second <= b0 || ia.first >= b1;
  if (disjoint) {
    auto outer = [&](double s) {
      auto g = [&](double t) { return f(s, t) * kernel(std::abs(s - t)); };
      return integrate(g, b0, b1, inner).value;
    };
    return integrate(outer, ia.first, ia.second, spec);
  }
  std::vector<double> br;
  if (b0 > ia.first && b0 < ia.second) br.push_back(b0);
  if (b1 > ia.first && b1 < ia.second) br.push_back(b1);
  auto r = integrate(inner_fn, ia.first, ia.second, spec, br);
  r.error += inner_err_max * std::abs(ia.second - ia.first);
  return r;
}

}  // namespace nvmag::numerics
