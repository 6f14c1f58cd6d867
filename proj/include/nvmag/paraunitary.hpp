#pragma once
// Bogoliubov diagonalization of quadratic boson forms
//   H = 1/2 [a^dag, a] [[A, B], [B*, A*]] [a; a^dag].

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "numerics/linalg.hpp"

namespace nvmag::paraunitary {

using numerics::cd;
using numerics::MatC;
using numerics::VecR;

class InstabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegeneracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BogoliubovFactors {
  double omega = 0;
  double lambda = 1;
  cd mu = 0;
};

inline BogoliubovFactors bogoliubov_2x2(double a, cd b) {
  const double bb = std::abs(b);
  if (!(a > bb)) throw InstabilityError("bogoliubov_2x2: a <= |b| (mode softening)");
  BogoliubovFactors f;
  f.omega = std::sqrt((a - bb) * (a + bb));
  f.lambda = std::sqrt((a + f.omega) / (2 * f.omega));
  f.mu = bb > 0 ? (b / bb) * std::sqrt((a - f.omega) / (2 * f.omega)) : cd(0);
  return f;
}

struct QuadraticBosonForm {
  MatC a_block;
  MatC b_block;
  std::vector<int> labels;

  int modes() const { return static_cast<int>(a_block.rows()); }

  MatC full() const {
    const int m = modes();
    MatC h(2 * m, 2 * m);
    h << a_block, b_block, b_block.conjugate(), a_block.conjugate();
    return h;
  }

  void validate(double tol = 1e-12) const {
    if (a_block.rows() != a_block.cols() || b_block.rows() != a_block.rows() || b_block.cols() != a_block.cols())
      throw std::invalid_argument("QuadraticBosonForm: block shapes disagree");
    const double scale = std::max(a_block.norm(), 1e-300);
    if ((a_block - a_block.adjoint()).norm() > tol * scale)
      throw std::invalid_argument("QuadraticBosonForm: A not Hermitian");
    if ((b_block - b_block.transpose()).norm() > tol * scale)
      throw std::invalid_argument("QuadraticBosonForm: B not symmetric");
  }
};

inline MatC sigma3(int m) {
  MatC s = MatC::Identity(2 * m, 2 * m);
  s.bottomRightCorner(m, m) *= -1.0;
  return s;
}

struct ParaunitaryDecomposition {
  MatC t_matrix;            // 2M x 2M
  VecR energies;            // ascending, rad/s
  std::vector<int> labels;  // dominant basis index per normal mode
  double residual = 0;
  bool degenerate = false;

  int modes() const { return static_cast<int>(energies.size()); }
  MatC tpp() const { return t_matrix.topLeftCorner(modes(), modes()); }
  MatC tpn() const { return t_matrix.topRightCorner(modes(), modes()); }
  MatC tnp() const { return t_matrix.bottomLeftCorner(modes(), modes()); }
  MatC tnn() const { return t_matrix.bottomRightCorner(modes(), modes()); }
};

inline double symplectic_residual(const MatC& t) {
  const int m = static_cast<int>(t.rows()) / 2;
  const MatC s = sigma3(m);
  return (t.adjoint() * s * t - s).cwiseAbs().maxCoeff();
}

inline double diagonalization_residual(const MatC& t, const MatC& h, const VecR& e) {
  const int m = static_cast<int>(e.size());
  MatC d = MatC::Zero(2 * m, 2 * m);
  for (int i = 0; i < m; ++i) d(i, i) = d(i + m, i + m) = e[i];
  return (t.adjoint() * h * t - d).cwiseAbs().maxCoeff() / std::max(h.norm(), 1e-300);
}

inline ParaunitaryDecomposition colpa_diagonalize(const QuadraticBosonForm& form) {
  form.validate();
  const int m = form.modes();
  const MatC h = form.full();
  const double hn = h.norm();
  auto spec = numerics::eigh(h);
  if (spec.values[0] < 1e-10 * hn)
    throw InstabilityError("colpa_diagonalize: form not positive definite (min eigenvalue " +
                           std::to_string(spec.values[0]) + ")");
  MatC k;
  try {
    k = numerics::cholesky_hermitian(h, 1e-10);
  } catch (const numerics::FactorizationError& e) {
    throw InstabilityError(e.what());
  }
  const MatC s3 = sigma3(m);
  const MatC w = k * s3 * k.adjoint();
  auto ew = numerics::eigh(w);
  // positive half of the spectrum, ascending
  MatC up = ew.vectors.rightCols(m);
  VecR e = ew.values.tail(m);
  const MatC kinv = k.triangularView<Eigen::Upper>().solve(MatC::Identity(2 * m, 2 * m));
  MatC first = kinv * up;
  for (int j = 0; j < m; ++j) first.col(j) *= std::sqrt(e[j]);
  // phase: largest-magnitude entry of each column real positive
  for (int j = 0; j < m; ++j) {
    Eigen::Index imax;
    first.col(j).cwiseAbs().maxCoeff(&imax);
    const cd ph = first(imax, j) / std::abs(first(imax, j));
    first.col(j) *= std::conj(ph);
  }
  ParaunitaryDecomposition out;
  out.t_matrix.resize(2 * m, 2 * m);
  const MatC tpp = first.topRows(m), tnp = first.bottomRows(m);
  out.t_matrix << tpp, tnp.conjugate(), tnp, tpp.conjugate();
  out.energies = e;
  out.labels.resize(m);
  for (int j = 0; j < m; ++j) {
    Eigen::Index q;
    tpp.col(j).cwiseAbs().maxCoeff(&q);
    out.labels[j] = form.labels.empty() ? static_cast<int>(q) : form.labels[q];
  }
  const double mean = e.mean();
  for (int j = 0; j + 1 < m; ++j)
    if (e[j + 1] - e[j] < 1e-9 * mean) out.degenerate = true;
  out.residual = std::max(symplectic_residual(out.t_matrix), diagonalization_residual(out.t_matrix, h, e));
  return out;
}

struct PerturbationResult {
  VecR lambda1;     // first-order energy shifts (M entries)
  MatC t1;          // first-order correction to T
  MatC l_matrix;    // T1 = T0 L
};

// First-order update for H -> H + V, V given as a 2M x 2M form matrix.
inline PerturbationResult perturb_paraunitary(const ParaunitaryDecomposition& t0, const MatC& v,
                                              bool block_diagonal = false) {
  const int m = t0.modes();
  if (v.rows() != 2 * m || v.cols() != 2 * m) throw std::invalid_argument("perturb_paraunitary: shape mismatch");
  const double mean = t0.energies.mean();
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      if (std::abs(t0.energies[i] - t0.energies[j]) < 1e-6 * mean)
        throw DegeneracyError("perturb_paraunitary: degenerate levels need degenerate perturbation theory");
  const MatC vt = t0.t_matrix.adjoint() * v * t0.t_matrix;
  std::vector<double> s3l(2 * m);
  for (int i = 0; i < m; ++i) {
    s3l[i] = t0.energies[i];
    s3l[i + m] = -t0.energies[i];
  }
  MatC l = MatC::Zero(2 * m, 2 * m);
  for (int i = 0; i < 2 * m; ++i)
    for (int j = 0; j < 2 * m; ++j) {
      if (i == j) continue;
      if (block_diagonal && ((i < m) != (j < m))) continue;
      const double sign = i < m ? -1.0 : 1.0;
      l(i, j) = sign * vt(i, j) / (s3l[i] - s3l[j]);
    }
  PerturbationResult r;
  r.lambda1 = vt.diagonal().head(m).real();
  r.l_matrix = l;
  r.t1 = t0.t_matrix * l;
  return r;
}

}  // namespace nvmag::paraunitary
