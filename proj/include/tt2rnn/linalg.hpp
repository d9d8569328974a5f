#pragma once

#include "tt2rnn/tensor.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <stdexcept>
#include <string>

namespace tt2rnn {

/// Raised when a factorization needed by the spectral step is too close to
/// rank-deficient to invert reliably.
class IllConditionedFactorization : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an iterative solver's objective keeps growing.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ThinSvd {
  Matrix U;
  Vector s;
  Matrix V;
};

inline ThinSvd thin_svd(const Matrix& m) {
  ThinSvd out;
  if (m.rows() == 0 || m.cols() == 0) {
    out.U = Matrix::Zero(m.rows(), 0);
    out.s = Vector::Zero(0);
    out.V = Matrix::Zero(m.cols(), 0);
    return out;
  }
  if (std::min(m.rows(), m.cols()) <= 48) {
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.U = svd.matrixU();
    out.s = svd.singularValues();
    out.V = svd.matrixV();
  } else {
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.U = svd.matrixU();
    out.s = svd.singularValues();
    out.V = svd.matrixV();
  }
  return out;
}

inline Vector singular_values(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) return Vector::Zero(0);
  if (std::min(m.rows(), m.cols()) <= 48) {
    return Eigen::JacobiSVD<Matrix>(m).singularValues();
  }
  return Eigen::BDCSVD<Matrix>(m).singularValues();
}

/// Number of singular values above rel_tol * sigma_max.
inline std::size_t numerical_rank(const Vector& s, double rel_tol) {
  if (s.size() == 0 || s[0] <= 0.0) return 0;
  const double cut = rel_tol * s[0];
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > cut) ++r;
  }
  return r;
}

inline std::size_t numerical_rank(const Matrix& m, double rel_tol) {
  return numerical_rank(singular_values(m), rel_tol);
}

/// Moore-Penrose pseudo-inverse; singular values below rel_cutoff * sigma_max
/// are treated as zero.
inline Matrix pinv(const Matrix& m, double rel_cutoff = 1e-10) {
  const ThinSvd svd = thin_svd(m);
  Matrix out = Matrix::Zero(m.cols(), m.rows());
  if (svd.s.size() == 0 || svd.s[0] <= 0.0) return out;
  const double cut = rel_cutoff * svd.s[0];
  for (Eigen::Index i = 0; i < svd.s.size(); ++i) {
    if (svd.s[i] > cut) {
      out.noalias() += (svd.V.col(i) / svd.s[i]) * svd.U.col(i).transpose();
    }
  }
  return out;
}

/// Best rank-r approximation (Eckart-Young) via truncated SVD.
inline Matrix truncate_rank(const Matrix& m, std::size_t r) {
  const ThinSvd svd = thin_svd(m);
  const auto k = static_cast<Eigen::Index>(
      std::min<std::size_t>(r, static_cast<std::size_t>(svd.s.size())));
  return svd.U.leftCols(k) * svd.s.head(k).asDiagonal() *
         svd.V.leftCols(k).transpose();
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
inline double max_eigenvalue_psd(const Matrix& g) {
  if (g.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
  return std::max(0.0, es.eigenvalues().maxCoeff());
}

/// Thin QR: m = Q R with Q having orthonormal columns, k = min(rows, cols).
struct ThinQr {
  Matrix Q;
  Matrix R;
};

inline ThinQr thin_qr(const Matrix& m) {
  const Eigen::Index k = std::min(m.rows(), m.cols());
  Eigen::HouseholderQR<Matrix> qr(m);
  ThinQr out;
  out.Q = qr.householderQ() * Matrix::Identity(m.rows(), k);
  out.R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  return out;
}

}  // namespace tt2rnn
