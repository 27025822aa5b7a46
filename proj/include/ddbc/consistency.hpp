#pragma once

#include <cmath>
#include <string>

#include "ddbc/experiment.hpp"
#include "ddbc/rng.hpp"

namespace ddbc {

// Condition number of the data gram above which downstream certificates are
// numerically untrustworthy; flagged, not fatal.
inline constexpr double kCondWarn = 1e12;

// Gram matrices of the data equation: every system Z consistent with the
// measurements satisfies Cbold + Bbold' Z + Z' Bbold + Z' Abold Z <= 0.
struct DataGrams {
  MatrixXd Abold;  // W0 W0', (n+m+mn+1)^2, > 0 under full row rank
  MatrixXd Bbold;  // -W0 X1'
  MatrixXd Cbold;  // X1 X1' - noise_bound
};

inline DataGrams data_grams(const Dataset& ds) {
  const MatrixXd W0 = ds.W0();
  DataGrams g;
  g.Abold = symmetrize(W0 * W0.transpose());
  g.Bbold = -W0 * ds.X1.transpose();
  g.Cbold = symmetrize(ds.X1 * ds.X1.transpose() - ds.noise_bound);
  return g;
}

// Quadratic-form membership test that needs only the grams (works even when
// the ellipsoidal normal form cannot be assembled).
inline bool membership_form1(const DataGrams& g, const MatrixXd& Z) {
  if (Z.rows() != g.Abold.rows() || Z.cols() != g.Cbold.rows())
    throw DimMismatchError("membership_form1(): Z dimension mismatch");
  const MatrixXd M = symmetrize(g.Cbold + g.Bbold.transpose() * Z +
                                Z.transpose() * g.Bbold +
                                Z.transpose() * g.Abold * Z);
  return is_psd(MatrixXd(-M));
}

// The set of dynamics matrices Z' = [A B C d] consistent with one dataset:
// the matrix ellipsoid { zeta + Asqrt_inv * Upsilon * Qsqrt : ||Upsilon|| <= 1 }.
// Immutable after build; all queries are const.
class ConsistencySet {
 public:
  MatrixXd Abold;      // data gram, symmetric positive definite
  MatrixXd Bbold;
  MatrixXd Cbold;
  MatrixXd zeta;       // center, least-squares solution of W0' zeta = X1'
  MatrixXd Q;          // residual slack, symmetric PSD (clamped)
  MatrixXd Asqrt_inv;  // Abold^{-1/2}
  MatrixXd Qsqrt;      // Q^{1/2}
  int n = 0;
  int m = 0;
  double sigma_min = 0.0;  // smallest singular value of W0
  double sigma_max = 0.0;
  double cond = 0.0;       // condition number of Abold
  bool ill_conditioned = false;

  static ConsistencySet build(const Dataset& ds, double rank_tol = kRankTol) {
    const RankCheck rc = check_rank(ds, rank_tol);
    if (!rc.full_row_rank)
      throw RankDeficientError(
          "ConsistencySet::build(): data matrix W0 is not full row rank "
          "(sigma_min=" +
          std::to_string(rc.sigma_min) + ", sigma_max=" +
          std::to_string(rc.sigma_max) + ")");

    ConsistencySet cs;
    cs.n = ds.n();
    cs.m = ds.m();
    cs.sigma_min = rc.sigma_min;
    cs.sigma_max = rc.sigma_max;
    cs.cond = (rc.sigma_max / rc.sigma_min) * (rc.sigma_max / rc.sigma_min);
    cs.ill_conditioned = cs.cond > kCondWarn;

    const MatrixXd W0 = ds.W0();
    const DataGrams g = data_grams(ds);
    cs.Abold = g.Abold;
    cs.Bbold = g.Bbold;
    cs.Cbold = g.Cbold;

    // Inverse square root of the gram through the singular values of W0
    // itself (the symmetric eigendecomposition of Abold without squaring the
    // condition number).
    Eigen::JacobiSVD<MatrixXd> svd(W0, Eigen::ComputeThinU);
    const MatrixXd U = svd.matrixU();
    VectorXd sinv = svd.singularValues();
    for (Eigen::Index i = 0; i < sinv.size(); ++i) sinv(i) = 1.0 / sinv(i);
    cs.Asqrt_inv = symmetrize(U * sinv.asDiagonal() * U.transpose());

    // Center via least squares on W0' (QR), then the slack Q from the
    // residual: Q = noise_bound - R R' with R = X1 - zeta' W0.
    cs.zeta = W0.transpose().colPivHouseholderQr().solve(ds.X1.transpose());
    const MatrixXd R = ds.X1 - cs.zeta.transpose() * W0;
    const MatrixXd Qraw = symmetrize(ds.noise_bound - R * R.transpose());

    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Qraw);
    if (es.info() != Eigen::Success)
      throw SolverFailureError(
          "ConsistencySet::build(): eigensolver failed on Q");
    VectorXd lam = es.eigenvalues();
    const double scale = 1.0 + lam.cwiseAbs().maxCoeff();
    VectorXd lam_sqrt(lam.size());
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
      if (lam(i) < -kPsdTol * scale)
        throw NotPsdError(
            "ConsistencySet::build(): residual exceeds the noise bound "
            "(Q eigenvalue " +
            std::to_string(lam(i)) +
            "); the declared noise_bound is too small for this data");
      lam(i) = std::max(0.0, lam(i));
      lam_sqrt(i) = std::sqrt(lam(i));
    }
    cs.Q = symmetrize(es.eigenvectors() * lam.asDiagonal() *
                      es.eigenvectors().transpose());
    cs.Qsqrt = symmetrize(es.eigenvectors() * lam_sqrt.asDiagonal() *
                          es.eigenvectors().transpose());
    return cs;
  }

  // Ellipsoidal (normal-form) membership: (Z - zeta)' Abold (Z - zeta) <= Q.
  bool membership(const MatrixXd& Z) const {
    if (Z.rows() != zeta.rows() || Z.cols() != zeta.cols())
      throw DimMismatchError(
          "ConsistencySet::membership(): Z dimension mismatch");
    const MatrixXd D = Z - zeta;
    return is_psd(symmetrize(Q - D.transpose() * Abold * D));
  }

  // Z(Upsilon) = zeta + Asqrt_inv * Upsilon * Qsqrt, the exact parametrization
  // of the set over the spectral-norm unit ball.
  MatrixXd sample(const MatrixXd& upsilon) const {
    if (upsilon.rows() != zeta.rows() || upsilon.cols() != zeta.cols())
      throw DimMismatchError(
          "ConsistencySet::sample(): Upsilon dimension mismatch");
    const double nrm = spectral_norm(upsilon);
    if (nrm > 1.0 + 1e-12)
      throw UpsilonTooLargeError("ConsistencySet::sample(): ||Upsilon|| = " +
                                 std::to_string(nrm) + " > 1");
    return zeta + Asqrt_inv * upsilon * Qsqrt;
  }

  // Operator-norm bound valid for every member:
  // ||Z|| <= ||zeta|| + sigma_min(W0)^{-1} ||Qsqrt||.
  double norm_bound() const {
    return spectral_norm(zeta) + spectral_norm(Qsqrt) / sigma_min;
  }
};

// Gaussian-entry matrix normalized in spectral norm: exactly 1 on the
// boundary, or shrunk by rho ~ U[0,1] in the interior.
inline MatrixXd random_upsilon(int rows, int cols, Rng& rng,
                               bool boundary = false) {
  MatrixXd Y = rng.gaussian_matrix(rows, cols);
  double nrm = spectral_norm(Y);
  while (nrm < 1e-12) {  // astronomically unlikely; regenerate for safety
    Y = rng.gaussian_matrix(rows, cols);
    nrm = spectral_norm(Y);
  }
  const double target = boundary ? 1.0 : rng.uniform();
  return Y * (target / nrm);
}

inline json consistency_to_json(const ConsistencySet& cs) {
  return json{{"zeta", matrix_to_json(cs.zeta)},
              {"Q", matrix_to_json(cs.Q)},
              {"Abold", matrix_to_json(cs.Abold)},
              {"sigma_min", cs.sigma_min},
              {"sigma_max", cs.sigma_max},
              {"ill_conditioned", cs.ill_conditioned}};
}

}  // namespace ddbc
