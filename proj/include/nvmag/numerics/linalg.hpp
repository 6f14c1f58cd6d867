#pragma once
// Hermitian Cholesky factorization and eigendecomposition.

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace nvmag::numerics {

using cd = std::complex<double>;
using MatC = Eigen::MatrixXcd;
using VecC = Eigen::VectorXcd;
using MatR = Eigen::MatrixXd;
using VecR = Eigen::VectorXd;

class FactorizationError : public std::runtime_error {
 public:
  FactorizationError(const std::string& what, int pivot) : std::runtime_error(what), pivot_(pivot) {}
  int pivot() const { return pivot_; }

 private:
  int pivot_;
};

inline double hermitian_defect(const MatC& h) {
  const double n = h.norm();
  return n > 0 ? (h - h.adjoint()).norm() / n : 0.0;
}

// Upper-triangular K with H = K^dagger K.
inline MatC cholesky_hermitian(const MatC& h, double herm_tol = 1e-12) {
  if (h.rows() != h.cols()) throw std::invalid_argument("cholesky_hermitian: matrix not square");
  if (hermitian_defect(h) > herm_tol) throw std::invalid_argument("cholesky_hermitian: matrix not Hermitian");
  const int n = static_cast<int>(h.rows());
  MatC k = MatC::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    double d = h(j, j).real();
    for (int m = 0; m < j; ++m) d -= std::norm(k(m, j));
    if (!(d > 0))
      throw FactorizationError("cholesky_hermitian: not positive definite at pivot " + std::to_string(j), j);
    const double kj = std::sqrt(d);
    k(j, j) = kj;
    for (int i = j + 1; i < n; ++i) {
      cd s = h(j, i);
      for (int m = 0; m < j; ++m) s -= std::conj(k(m, j)) * k(m, i);
      k(j, i) = s / kj;
    }
  }
  return k;
}

struct EighResult {
  VecR values;    // ascending
  MatC vectors;   // columns orthonormal
};

inline EighResult eigh(const MatC& h) {
  if (h.rows() != h.cols()) throw std::invalid_argument("eigh: matrix not square");
  Eigen::SelfAdjointEigenSolver<MatC> es(0.5 * (h + h.adjoint()));
  if (es.info() != Eigen::Success) throw std::runtime_error("eigh: no convergence");
  return {es.eigenvalues(), es.eigenvectors()};
}

}  // namespace nvmag::numerics
