#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>

#include "ddbc/errors.hpp"

namespace ddbc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Relative tolerance used by all positive-(semi)definiteness decisions.
inline constexpr double kPsdTol = 1e-9;
// Relative tolerance of the PSD square root reconstruction S*S = M.
inline constexpr double kSqrtTol = 1e-9;
// Relative asymmetry tolerated before a matrix is rejected as non-symmetric.
inline constexpr double kSymTol = 1e-9;

// --- basic operators -------------------------------------------------------

// Kronecker product. Accepts any dense expressions; two vectors yield the
// stacked (u.size()*x.size()) column used throughout the bilinear regressors.
template <typename DerivedA, typename DerivedB>
MatrixXd kron(const Eigen::MatrixBase<DerivedA>& A_,
              const Eigen::MatrixBase<DerivedB>& B_) {
  const MatrixXd A = A_;
  const MatrixXd B = B_;
  MatrixXd out(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return out;
}

// He(A) := A + A^T.
inline MatrixXd he(const MatrixXd& A) { return A + A.transpose(); }

inline MatrixXd symmetrize(const MatrixXd& M) {
  return 0.5 * (M + M.transpose());
}

// Validates that M is symmetric up to kSymTol relative and returns the
// symmetrized copy used by all downstream spectral computations.
inline MatrixXd require_symmetric(const MatrixXd& M, const std::string& who) {
  if (M.rows() != M.cols())
    throw DimMismatchError(who + ": matrix is not square (" +
                           std::to_string(M.rows()) + "x" +
                           std::to_string(M.cols()) + ")");
  const double scale = 1.0 + M.cwiseAbs().maxCoeff();
  const double asym = (M - M.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymTol * scale)
    throw DimMismatchError(who + ": matrix is not symmetric (max asymmetry " +
                           std::to_string(asym) + ")");
  return symmetrize(M);
}

inline double spectral_norm(const MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<MatrixXd> svd(M);
  return svd.singularValues()(0);
}

// --- definiteness and PSD square root --------------------------------------

inline bool is_psd(const MatrixXd& M_in, bool strict = false) {
  const MatrixXd M = require_symmetric(M_in, "is_psd()");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(M, Eigen::EigenvaluesOnly);
  const VectorXd ev = es.eigenvalues();
  const double norm = std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
  const double tol = kPsdTol * (1.0 + norm);
  return strict ? ev(0) > tol : ev(0) >= -tol;
}

// Symmetric PSD square root via eigendecomposition. Eigenvalues in
// [-kPsdTol*||M||, 0) are clamped to 0 so that roundoff-negative inputs
// (e.g. a noise-residual Gram matrix) are accepted.
inline MatrixXd sqrtm_psd(const MatrixXd& M_in) {
  const MatrixXd M = require_symmetric(M_in, "sqrtm_psd()");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(M);
  VectorXd ev = es.eigenvalues();
  const double norm =
      std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
  const double clamp = kPsdTol * norm;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -clamp)
      throw NotPsdError("sqrtm_psd(): eigenvalue " + std::to_string(ev(i)) +
                        " below -" + std::to_string(clamp));
    if (ev(i) < 0.0) ev(i) = 0.0;
  }
  const MatrixXd S =
      es.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
      es.eigenvectors().transpose();
  return symmetrize(S);
}

// --- ellipsoid geometry -----------------------------------------------------

// sqrt(det(P)) for P > 0, computed as exp(0.5*sum(log eig)) to avoid
// under/overflow of the raw determinant.
inline double ellipsoid_volume_proxy(const MatrixXd& P_in) {
  const MatrixXd P = require_symmetric(P_in, "ellipsoid_volume_proxy()");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(P, Eigen::EigenvaluesOnly);
  const VectorXd ev = es.eigenvalues();
  const double tol = kPsdTol * (1.0 + std::abs(ev(ev.size() - 1)));
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) <= tol)
      throw NotPsdError("ellipsoid_volume_proxy(): shape not positive "
                        "definite (eigenvalue " + std::to_string(ev(i)) + ")");
    log_det += std::log(ev(i));
  }
  return std::exp(0.5 * log_det);
}

// 2*sqrt(lambda_max(P)) for P > 0.
inline double ellipsoid_diameter(const MatrixXd& P_in) {
  const MatrixXd P = require_symmetric(P_in, "ellipsoid_diameter()");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(P, Eigen::EigenvaluesOnly);
  const VectorXd ev = es.eigenvalues();
  const double tol = kPsdTol * (1.0 + std::abs(ev(ev.size() - 1)));
  if (ev(0) <= tol)
    throw NotPsdError("ellipsoid_diameter(): shape not positive definite "
                      "(eigenvalue " + std::to_string(ev(0)) + ")");
  return 2.0 * std::sqrt(ev(ev.size() - 1));
}

// Sub-level set {x : (x - center)' P^{-1} (x - center) <= level} of the
// quadratic V_P. `level` = 1 describes the full basin estimate; smaller
// levels describe inner target sets.
class Ellipsoid {
 public:
  Ellipsoid(VectorXd center, const MatrixXd& shape, double level = 1.0)
      : center_(std::move(center)),
        shape_(require_symmetric(shape, "Ellipsoid()")),
        level_(level) {
    if (shape_.rows() != center_.size())
      throw DimMismatchError("Ellipsoid(): center/shape dimension mismatch");
    if (!(level_ > 0.0))
      throw NotPsdError("Ellipsoid(): level must be positive");
    if (!is_psd(shape_, /*strict=*/true))
      throw NotPsdError("Ellipsoid(): shape must be positive definite");
    llt_.compute(shape_);
  }

  const VectorXd& center() const { return center_; }
  const MatrixXd& shape() const { return shape_; }
  double level() const { return level_; }

  // (x - center)' P^{-1} (x - center), evaluated through the Cholesky
  // factorization of P.
  double value(const VectorXd& x) const {
    if (x.size() != center_.size())
      throw DimMismatchError("Ellipsoid::value(): dimension mismatch");
    const VectorXd r = x - center_;
    return r.dot(llt_.solve(r));
  }

  bool contains(const VectorXd& x) const { return value(x) <= level_; }

  double volume_proxy() const { return ellipsoid_volume_proxy(shape_); }
  double diameter() const { return ellipsoid_diameter(shape_); }

 private:
  VectorXd center_;
  MatrixXd shape_;
  double level_;
  Eigen::LLT<MatrixXd> llt_;
};

}  // namespace ddbc
