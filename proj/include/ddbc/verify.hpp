#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "ddbc/consistency.hpp"
#include "ddbc/model.hpp"
#include "ddbc/simulate.hpp"
#include "ddbc/synthesis.hpp"

namespace ddbc {

// Convergence radius for reach checks: conv_tol = kConvTolCoeff (1 + |xbar|).
inline constexpr double kConvTolCoeff = 1e-3;
// Relative slack on the annulus decrease threshold and the stay condition.
inline constexpr double kCertSlack = 1e-6;
// At most this many violations are stored verbatim (the count stays exact).
inline constexpr int kMaxStoredViolations = 1000;

// One sampled (dynamics, state) pair whose Lyapunov rate broke the
// certificate threshold. Indices reproduce the draw for a fixed seed.
struct Violation {
  int dyn_index = 0;
  int state_index = 0;
  double rate = 0.0;
  VectorXd xt;
};

// Aggregated result of the sampled certificate and closed-loop checks. These
// are necessary-condition tests only: a pass does not re-prove the
// certificate, a violation disproves it.
struct VerificationReport {
  int n_dynamics_samples = 0;
  int n_state_samples = 0;
  // Most positive Lyapunov rate found (-inf sentinel when nothing sampled).
  double worst_decrease = -std::numeric_limits<double>::infinity();
  // A sampled rate above this threshold is a violation.
  double threshold = 0.0;
  std::vector<Violation> violations;
  int total_violations = 0;
  int trajectories_converged = 0;
  int trajectories_total = 0;
  std::vector<double> final_errors;

  bool certificate_ok() const { return total_violations == 0; }
  bool trajectories_ok() const {
    return trajectories_converged == trajectories_total;
  }
  bool passed() const { return certificate_ok() && trajectories_ok(); }
};

namespace detail {

// Uniform draw on the basin ellipsoid {x : x' P^{-1} x <= 1} via the sphere.
inline VectorXd uniform_in_basin(const MatrixXd& Psqrt, Rng& rng) {
  return Psqrt * rng.uniform_ball(static_cast<int>(Psqrt.rows()), 1.0);
}

// Uniform draw on the annulus {eta < x' P^{-1} x <= 1} by rejection; the
// accepted fraction is 1 - eta^{n/2}, which is essentially 1 for the levels
// used here.
inline VectorXd uniform_on_annulus(const MatrixXd& Psqrt, double eta,
                                   Rng& rng) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const VectorXd u = rng.uniform_ball(static_cast<int>(Psqrt.rows()), 1.0);
    const double level = u.squaredNorm();  // V of Psqrt u in the P metric
    if (level > eta && level <= 1.0) return Psqrt * u;
  }
  throw ValidationError(
      "uniform_on_annulus(): rejection sampling failed; eta too close to 1");
}

}  // namespace detail

// Samples dynamics members Z of the consistency set (every fourth draw on
// the set boundary) and states in the certified region, and evaluates the
// exact Lyapunov rate the design's program certifies:
//   stabilize_ct : d/dt x' P^{-1} x  restricted to the drive term Z' mu x
//   stabilize_dt : V(Z' mu x) - V(x)
//   setpoint_ct  : full rate including the equilibrium offset Z' nu_bar,
//                  on the annulus, against the threshold -eps (1 - slack).
// The known-equilibrium programs certify the drive term only: with noisy
// data every non-true member carries a nonzero offset, which is the object
// of the setpoint program instead.
inline VerificationReport check_certificate(const ControllerDesign& design,
                                            const ConsistencySet& cs,
                                            int n_dyn, int n_state,
                                            std::uint64_t seed) {
  if (n_dyn < 0 || n_state < 0)
    throw BadRangeError("check_certificate(): negative sample counts");
  if (design.xbar.size() != cs.n || design.ubar.size() != cs.m)
    throw DimMismatchError("check_certificate(): design/set dimension "
                           "mismatch");

  VerificationReport rep;
  rep.n_dynamics_samples = n_dyn;
  rep.n_state_samples = n_state;
  const bool annulus = design.program_id == ProgramId::kSetpointCt;
  rep.threshold = annulus ? -design.eps * (1.0 - kCertSlack) : 0.0;

  const MatrixXd Psqrt = sqrtm_psd(design.P);
  Eigen::LLT<MatrixXd> llt(symmetrize(design.P));
  if (llt.info() != Eigen::Success)
    throw NotPsdError("check_certificate(): P is not positive definite");
  const ControlLaw law = design.law();
  const VectorXd nu = nu_bar(design.xbar, design.ubar);

  Rng rng(seed);
  for (int i = 0; i < n_dyn; ++i) {
    const MatrixXd Z = cs.sample(random_upsilon(
        static_cast<int>(cs.zeta.rows()), cs.n, rng, i % 4 == 0));
    for (int k = 0; k < n_state; ++k) {
      const VectorXd xt = annulus
                              ? detail::uniform_on_annulus(Psqrt, design.eta,
                                                           rng)
                              : detail::uniform_in_basin(Psqrt, rng);
      const MatrixXd mu = mu_matrix(law, xt);
      const VectorXd drive = Z.transpose() * (mu * xt);
      double rate;
      if (design.program_id == ProgramId::kStabilizeDt) {
        rate = drive.dot(llt.solve(drive)) - xt.dot(llt.solve(xt));
      } else if (annulus) {
        const VectorXd flow = drive + Z.transpose() * nu;
        rate = 2.0 * xt.dot(llt.solve(flow));
      } else {
        rate = 2.0 * xt.dot(llt.solve(drive));
      }
      rep.worst_decrease = std::max(rep.worst_decrease, rate);
      const bool violated = annulus ? rate > rep.threshold : rate >= 0.0;
      if (violated) {
        ++rep.total_violations;
        if (static_cast<int>(rep.violations.size()) < kMaxStoredViolations)
          rep.violations.push_back({i, k, rate, xt});
      }
    }
  }
  return rep;
}

// Simulates the true closed loop from initial states on the basin boundary
// and checks the design's reach claim: convergence to within
// conv_tol = kConvTolCoeff (1 + |xbar|) of the setpoint for the
// known-equilibrium programs, or enter-and-stay in the inner level set
// {V <= eta} for the setpoint program. `horizon` is in time units for
// continuous designs and steps for discrete ones.
inline VerificationReport check_reach_and_stay(const ControllerDesign& design,
                                               const BilinearSystem& sys,
                                               int n_trials, double horizon,
                                               std::uint64_t seed,
                                               double h = kDefaultRk4Step) {
  if (n_trials < 0)
    throw BadRangeError("check_reach_and_stay(): negative trial count");
  if (sys.n != design.xbar.size() || sys.m != design.ubar.size())
    throw DimMismatchError("check_reach_and_stay(): design/system dimension "
                           "mismatch");
  const bool annulus = design.program_id == ProgramId::kSetpointCt;
  if ((design.program_id != ProgramId::kStabilizeDt) !=
      (sys.domain == TimeDomain::kContinuous))
    throw ValidationError("check_reach_and_stay(): design domain does not "
                          "match the system domain");

  VerificationReport rep;
  rep.trajectories_total = n_trials;
  const MatrixXd Psqrt = sqrtm_psd(design.P);
  Eigen::LLT<MatrixXd> llt(symmetrize(design.P));
  if (llt.info() != Eigen::Success)
    throw NotPsdError("check_reach_and_stay(): P is not positive definite");
  const ControlLaw law = design.law();
  const double conv_tol = kConvTolCoeff * (1.0 + design.xbar.norm());
  const double stay_level = design.eta * (1.0 + kCertSlack);

  Rng rng(seed);
  for (int trial = 0; trial < n_trials; ++trial) {
    const VectorXd x0 =
        design.xbar + Psqrt * rng.unit_sphere(static_cast<int>(sys.n));
    const Trajectory traj =
        sys.domain == TimeDomain::kContinuous
            ? simulate_closed_loop_ct(sys, law, x0, horizon, h)
            : simulate_closed_loop_dt(sys, law, x0,
                                      std::max(1, static_cast<int>(
                                                      std::llround(horizon))));
    bool converged = false;
    double final_error = std::numeric_limits<double>::infinity();
    if (!traj.diverged) {
      if (annulus) {
        // Must enter {V <= eta} and never exit afterwards.
        bool entered = false, exited_after = false;
        for (Eigen::Index c = 0; c < traj.states.cols(); ++c) {
          const VectorXd xt = traj.states.col(c) - design.xbar;
          const double level = xt.dot(llt.solve(xt));
          if (level <= design.eta) entered = true;
          else if (entered && level > stay_level) exited_after = true;
        }
        const VectorXd xt_end = traj.final_state() - design.xbar;
        const double level_end = xt_end.dot(llt.solve(xt_end));
        final_error =
            std::max(0.0, std::sqrt(level_end) - std::sqrt(design.eta));
        converged = entered && !exited_after;
      } else {
        final_error = (traj.final_state() - design.xbar).norm();
        converged = final_error <= conv_tol;
      }
    }
    rep.trajectories_converged += converged ? 1 : 0;
    rep.final_errors.push_back(final_error);
  }
  return rep;
}

// Witness of the impossibility of exact regulation on a set of positive
// size: places the top eigendirection of Q at the largest component of
// zbar = Abold^{-1/2} nu_bar, giving a boundary member Z whose equilibrium
// offset Z' nu_bar is provably nonzero for at least one sign choice.
struct RegulationWitness {
  MatrixXd Z;
  VectorXd residual;  // Z' nu_bar, nonzero
};

inline RegulationWitness regulation_offset_witness(const ConsistencySet& cs,
                                        const VectorXd& xbar,
                                        const VectorXd& ubar) {
  if (xbar.size() != cs.n || ubar.size() != cs.m)
    throw DimMismatchError("regulation_offset_witness(): setpoint dimension mismatch");
  if (cs.Q.cwiseAbs().maxCoeff() == 0.0)
    throw QZeroError("regulation_offset_witness(): the consistency set is a singleton "
                     "(Q = 0); exact regulation may be possible");

  const VectorXd nu = nu_bar(xbar, ubar);
  const VectorXd zbar = cs.Asqrt_inv * nu;
  Eigen::Index imax = 0;
  zbar.cwiseAbs().maxCoeff(&imax);

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cs.Q);
  if (es.info() != Eigen::Success)
    throw SolverFailureError("regulation_offset_witness(): eigensolver failed");
  const Eigen::Index top = cs.Q.rows() - 1;  // eigenvalues ascending
  const double lam1 = es.eigenvalues()(top);
  const VectorXd t1 = es.eigenvectors().col(top);

  const VectorXd base = cs.zeta.transpose() * nu;
  const VectorXd bump = zbar(imax) * std::sqrt(lam1) * t1;
  const double sign =
      (base + bump).norm() >= (base - bump).norm() ? 1.0 : -1.0;

  MatrixXd upsilon = MatrixXd::Zero(cs.zeta.rows(), cs.n);
  upsilon.row(imax) = sign * t1.transpose();
  RegulationWitness w;
  w.Z = cs.sample(upsilon);
  w.residual = w.Z.transpose() * nu;
  return w;
}

// ---- serialization ----------------------------------------------------------

inline json report_to_json(const VerificationReport& r) {
  // JSON has no literal for infinities; non-finite sentinels (empty report,
  // diverged trial) are emitted as strings.
  const auto num_or_string = [](double v) {
    return std::isfinite(v) ? json(v)
                            : json(v > 0 ? "inf" : "-inf");
  };
  json viols = json::array();
  for (const auto& v : r.violations)
    viols.push_back(json{{"dyn_index", v.dyn_index},
                         {"state_index", v.state_index},
                         {"rate", v.rate},
                         {"xt", vector_to_json(v.xt)}});
  json finals = json::array();
  for (double e : r.final_errors) finals.push_back(num_or_string(e));
  return json{
      {"note",
       "sampled necessary-condition check only; a pass does not re-prove "
       "the certificate"},
      {"n_dynamics_samples", r.n_dynamics_samples},
      {"n_state_samples", r.n_state_samples},
      {"worst_decrease", num_or_string(r.worst_decrease)},
      {"threshold", r.threshold},
      {"total_violations", r.total_violations},
      {"violations", viols},
      {"trajectories_converged", r.trajectories_converged},
      {"trajectories_total", r.trajectories_total},
      {"final_errors", finals},
      {"passed", r.passed()}};
}

inline void save_report(const VerificationReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_report(): cannot open " + path);
  out << report_to_json(r).dump(2) << "\n";
}

}  // namespace ddbc
