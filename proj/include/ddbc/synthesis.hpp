#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ddbc/consistency.hpp"
#include "ddbc/model.hpp"
#include "ddbc/sdp.hpp"

namespace ddbc {

// Floor and cap on the certificate shape P (kPMin I <= P <= kPCap I); the cap
// keeps the barrier from drifting along unbounded feasible directions.
inline constexpr double kPMin = 1e-6;
inline constexpr double kPCap = 1e5;
// Strict inequalities are enforced as <= -margin with margin scaled to the
// set center.
inline constexpr double kStrictMarginCoeff = 1e-8;
// Relative residual allowed when recovering the gain K from K P = Y.
inline constexpr double kGainResidualTol = 1e-8;

// Which semidefinite program produced a controller design.
enum class ProgramId { kStabilizeCt, kStabilizeDt, kSetpointCt };

inline const char* to_string(ProgramId p) {
  switch (p) {
    case ProgramId::kStabilizeCt: return "stabilize_ct";
    case ProgramId::kStabilizeDt: return "stabilize_dt";
    case ProgramId::kSetpointCt: return "setpoint_ct";
  }
  return "unknown";
}

inline ProgramId program_id_from_string(const std::string& s) {
  if (s == "stabilize_ct") return ProgramId::kStabilizeCt;
  if (s == "stabilize_dt") return ProgramId::kStabilizeDt;
  if (s == "setpoint_ct") return ProgramId::kSetpointCt;
  throw ValidationError("program_id_from_string(): unknown id " + s);
}

// Size proxy used to rank feasible designs along a grid search. Both are
// monotone in the basin ellipsoid {x : x' P^{-1} x <= 1}.
enum class DesignObjective { kVolume, kDiameter };

inline const char* to_string(DesignObjective o) {
  return o == DesignObjective::kVolume ? "volume" : "diameter";
}

inline DesignObjective objective_from_string(const std::string& s) {
  if (s == "volume") return DesignObjective::kVolume;
  if (s == "diameter") return DesignObjective::kDiameter;
  throw ValidationError("objective_from_string(): unknown objective " + s);
}

// A controller u = K (x - xbar) + ubar together with the Lyapunov certificate
// P and every scalar the producing program fixed or solved for. Scalars not
// used by a program keep their neutral defaults.
struct ControllerDesign {
  ProgramId program_id = ProgramId::kStabilizeCt;
  MatrixXd K;      // m x n
  MatrixXd P;      // n x n, symmetric positive definite
  VectorXd xbar;   // n
  VectorXd ubar;   // m (best estimate when the true value is unknown)
  double gamma = 0.0;      // equilibrium-offset bound (setpoint program)
  double eta = 1.0;        // inner level of the practical-stability annulus
  double eps = 0.0;        // decrease rate required on the annulus
  double lambda = 0.0;     // fixed bilinearity multiplier at the solved point
  double Lambda = 0.0;     // solved S-procedure multiplier
  double s = 0.0;          // fixed decrease shift (setpoint program)
  double tau_gamma = 0.0;  // solved offset multiplier (setpoint program)
  double tau_eta = 0.0;    // recovered annulus multiplier (setpoint program)
  double sigma = 0.0;      // scaling from the equilibrium-input program
  double objective = 0.0;  // value of the ranking objective
  double volume = 0.0;     // sqrt(det P)
  double diameter = 0.0;   // 2 sqrt(lambda_max(P))
  // True when s + tau_eta < 0, i.e. the recovered multipliers leave no
  // decrease budget strictly inside the annulus; the certificate then only
  // guarantees the boundary behaviour.
  bool decrease_budget_warning = false;

  ControlLaw law() const { return ControlLaw{K, xbar, ubar}; }
};

// One evaluated point of a grid search (s is NaN for the pure stabilization
// programs, which search over lambda only).
struct GridPoint {
  double lambda = 0.0;
  double s = std::numeric_limits<double>::quiet_NaN();
  bool feasible = false;
  double volume = std::numeric_limits<double>::quiet_NaN();
  double diameter = std::numeric_limits<double>::quiet_NaN();
  double margin = std::numeric_limits<double>::quiet_NaN();
  double worst_ratio = std::numeric_limits<double>::quiet_NaN();
};

struct LineSearchResult {
  ControllerDesign design;
  std::vector<GridPoint> report;
};

// Every grid point was rejected; carries the per-point report so callers can
// still persist the margins.
class AllInfeasibleError : public SolverFailureError {
 public:
  AllInfeasibleError(const std::string& msg, std::vector<GridPoint> rep)
      : SolverFailureError(msg), report(std::move(rep)) {}
  std::vector<GridPoint> report;
};

// Result of the equilibrium-input program: the input ubar whose worst-case
// steady-state offset over the consistency set is bounded by gamma.
struct SetpointInputResult {
  double gamma = 0.0;
  VectorXd ubar;
  double sigma = 0.0;
  // A-priori bound gamma <= norm_bound()^2 (|xbar|^2 + 1) valid at ubar = 0;
  // the optimizer can only improve on it.
  double guaranteed_bound = 0.0;
};

// ---- grid construction ------------------------------------------------------

inline std::vector<double> linspace_grid(double lo, double hi, int count) {
  if (count < 1 || !std::isfinite(lo) || !std::isfinite(hi) || lo > hi)
    throw BadRangeError("linspace_grid(): need finite lo <= hi and count >= 1");
  std::vector<double> out;
  out.reserve(static_cast<size_t>(count));
  if (count == 1) {
    out.push_back(lo);
    return out;
  }
  for (int i = 0; i < count; ++i)
    out.push_back(lo + (hi - lo) * static_cast<double>(i) /
                           static_cast<double>(count - 1));
  return out;
}

// Positive multiplier grid: linspace with every value <= 0 dropped.
inline std::vector<double> lambda_grid(double lo, double hi, int count) {
  std::vector<double> out;
  for (double v : linspace_grid(lo, hi, count))
    if (v > 0.0) out.push_back(v);
  return out;
}

// ---- program builders -------------------------------------------------------

// A declared semidefinite program together with its variable handles. The
// assembled main LMI is kept so callers can re-evaluate it at explicit
// variable values (structural tests, diagnostics).
struct SynthesisProgram {
  SdpProblem prob;
  LinExpr decrease_block;
  int P = -1;
  int Y = -1;
  int Lambda = -1;
  int tau_gamma = -1;  // setpoint program only
  int n = 0;
  int m = 0;
};

namespace detail {

// Expression with a single scalar-variable term  var * M.
inline LinExpr scaled_scalar(int var, const MatrixXd& M) {
  LinExpr e = LinExpr::zero(M.rows(), M.cols());
  e.scals.push_back({var, M});
  return e;
}

// Closed-loop data regressor G(P, Y) = [P; Y; (I_m kron xbar) Y +
// (ubar kron I_n) P; 0] stacked to the consistency-set row convention.
inline LinExpr g_expr(const SdpProblem& prob, int P, int Y,
                      const VectorXd& xbar, const VectorXd& ubar) {
  const int n = static_cast<int>(xbar.size());
  const int m = static_cast<int>(ubar.size());
  const LinExpr Pe = prob.var_expr(P);
  const LinExpr Ye = prob.var_expr(Y);
  const MatrixXd Im = MatrixXd::Identity(m, m);
  const MatrixXd In = MatrixXd::Identity(n, n);
  const LinExpr bilin =
      lmul(kron(Im, MatrixXd(xbar)), Ye) + lmul(kron(MatrixXd(ubar), In), Pe);
  return vstack({Pe, Ye, bilin, LinExpr::zero(1, n)});
}

// State-coupled regressor H(P) = [0; 0; I_m kron P; 0].
inline LinExpr h_expr(const SdpProblem& prob, int P, int n, int m) {
  return vstack({LinExpr::zero(n, m * n), LinExpr::zero(m, m * n),
                 kron_identity(m, prob.var_expr(P)),
                 LinExpr::zero(1, m * n)});
}

inline void check_setpoint_dims(const ConsistencySet& cs,
                                const VectorXd& xbar, const VectorXd& ubar,
                                const std::string& who) {
  if (xbar.size() != cs.n || ubar.size() != cs.m)
    throw DimMismatchError(who + "(): setpoint dimensions (" +
                           std::to_string(xbar.size()) + ", " +
                           std::to_string(ubar.size()) +
                           ") do not match the data (" + std::to_string(cs.n) +
                           ", " + std::to_string(cs.m) + ")");
}

inline double strict_margin(const ConsistencySet& cs) {
  return kStrictMarginCoeff * (1.0 + spectral_norm(cs.zeta));
}

inline void add_shape_bounds(SdpProblem& prob, int P, int n) {
  const LinExpr Pe = prob.var_expr(P);
  prob.add_lmi("shape_floor",
               LinExpr::constant(kPMin * MatrixXd::Identity(n, n)) - Pe);
  prob.add_lmi("shape_cap",
               Pe - LinExpr::constant(kPCap * MatrixXd::Identity(n, n)));
}

}  // namespace detail

// Continuous-time stabilization around a known equilibrium (xbar, ubar):
// feasibility in (P, Y, Lambda) of the robust Lyapunov-decrease LMI at a
// fixed bilinearity multiplier lambda > 0. Strict inequalities carry an
// explicit margin so acceptance is checkable on the raw blocks.
inline SynthesisProgram build_stabilize_ct(const ConsistencySet& cs,
                                           const VectorXd& xbar,
                                           const VectorXd& ubar,
                                           double lambda) {
  if (!(lambda > 0.0))
    throw BadRangeError("build_stabilize_ct(): lambda must be positive, got " +
                        std::to_string(lambda));
  detail::check_setpoint_dims(cs, xbar, ubar, "build_stabilize_ct");
  const int n = cs.n, m = cs.m;
  const int nw = static_cast<int>(cs.zeta.rows());

  SynthesisProgram sp;
  sp.n = n;
  sp.m = m;
  sp.P = sp.prob.add_symmetric("P", n, 1.0);
  sp.Y = sp.prob.add_rectangular("Y", m, n);
  sp.Lambda = sp.prob.add_scalar("Lambda", 1.0);

  const LinExpr Pe = sp.prob.var_expr(sp.P);
  const LinExpr Ye = sp.prob.var_expr(sp.Y);
  const LinExpr G = detail::g_expr(sp.prob, sp.P, sp.Y, xbar, ubar);
  const LinExpr H = detail::h_expr(sp.prob, sp.P, n, m);

  BlockGrid grid({n, m * n, m, nw, n});
  grid.set(0, 0, he(rmul(transpose(G), cs.zeta)));
  grid.set(1, 0, rmul(transpose(H), cs.zeta));
  grid.set(1, 1, -lambda * kron_identity(m, Pe));
  grid.set(2, 0, lambda * Ye);
  grid.set(2, 2,
           LinExpr::constant(-lambda * MatrixXd::Identity(m, m)));
  grid.set(3, 0, lmul(cs.Asqrt_inv, G));
  grid.set(3, 1, lmul(cs.Asqrt_inv, H));
  grid.set(3, 3,
           detail::scaled_scalar(sp.Lambda, -MatrixXd::Identity(nw, nw)));
  grid.set(4, 0, detail::scaled_scalar(sp.Lambda, cs.Qsqrt));
  grid.set(4, 4,
           detail::scaled_scalar(sp.Lambda, -MatrixXd::Identity(n, n)));

  const double delta = detail::strict_margin(cs);
  const Eigen::Index total = grid.size();
  sp.decrease_block =
      grid.assemble() +
      LinExpr::constant(delta * MatrixXd::Identity(total, total));
  sp.prob.add_lmi("decrease", sp.decrease_block);
  detail::add_shape_bounds(sp.prob, sp.P, n);
  return sp;
}

// Discrete-time counterpart: one extra state row carries the one-step value
// P in the Schur form, the rest of the structure is shared.
inline SynthesisProgram build_stabilize_dt(const ConsistencySet& cs,
                                           const VectorXd& xbar,
                                           const VectorXd& ubar,
                                           double lambda) {
  if (!(lambda > 0.0))
    throw BadRangeError("build_stabilize_dt(): lambda must be positive, got " +
                        std::to_string(lambda));
  detail::check_setpoint_dims(cs, xbar, ubar, "build_stabilize_dt");
  const int n = cs.n, m = cs.m;
  const int nw = static_cast<int>(cs.zeta.rows());

  SynthesisProgram sp;
  sp.n = n;
  sp.m = m;
  sp.P = sp.prob.add_symmetric("P", n, 1.0);
  sp.Y = sp.prob.add_rectangular("Y", m, n);
  sp.Lambda = sp.prob.add_scalar("Lambda", 1.0);

  const LinExpr Pe = sp.prob.var_expr(sp.P);
  const LinExpr Ye = sp.prob.var_expr(sp.Y);
  const LinExpr G = detail::g_expr(sp.prob, sp.P, sp.Y, xbar, ubar);
  const LinExpr H = detail::h_expr(sp.prob, sp.P, n, m);

  BlockGrid grid({n, n, m * n, m, nw, n});
  grid.set(0, 0, -1.0 * Pe);
  grid.set(1, 0, lmul(MatrixXd(cs.zeta.transpose()), G));
  grid.set(1, 1, -1.0 * Pe);
  grid.set(2, 1, rmul(transpose(H), cs.zeta));
  grid.set(2, 2, -lambda * kron_identity(m, Pe));
  grid.set(3, 0, lambda * Ye);
  grid.set(3, 3,
           LinExpr::constant(-lambda * MatrixXd::Identity(m, m)));
  grid.set(4, 0, lmul(cs.Asqrt_inv, G));
  grid.set(4, 2, lmul(cs.Asqrt_inv, H));
  grid.set(4, 4,
           detail::scaled_scalar(sp.Lambda, -MatrixXd::Identity(nw, nw)));
  grid.set(5, 1, detail::scaled_scalar(sp.Lambda, cs.Qsqrt));
  grid.set(5, 5,
           detail::scaled_scalar(sp.Lambda, -MatrixXd::Identity(n, n)));

  const double delta = detail::strict_margin(cs);
  const Eigen::Index total = grid.size();
  sp.decrease_block =
      grid.assemble() +
      LinExpr::constant(delta * MatrixXd::Identity(total, total));
  sp.prob.add_lmi("decrease", sp.decrease_block);
  detail::add_shape_bounds(sp.prob, sp.P, n);
  return sp;
}

// Continuous-time practical stabilization when the equilibrium input is only
// known up to the offset bound |Z' nu_bar|^2 <= gamma: for fixed (lambda, s)
// the LMI in (P, Y, Lambda, tau_gamma) certifies V-decrease at rate eps on
// the annulus {eta < x~' P^{-1} x~ <= 1}. Nonstrict program; the decrease
// budgets eps + s + tau_gamma gamma <= 0 and eps + s eta + tau_gamma
// gamma <= 0 are added as scalar blocks.
inline SynthesisProgram build_setpoint_ct(const ConsistencySet& cs,
                                          const VectorXd& xbar,
                                          const VectorXd& ubar, double gamma,
                                          double eta, double eps,
                                          double lambda, double s) {
  if (!(eta > 0.0) || !(eta < 1.0))
    throw BadEtaError("build_setpoint_ct(): eta must lie in (0, 1), got " +
                      std::to_string(eta));
  if (!(lambda > 0.0))
    throw BadRangeError("build_setpoint_ct(): lambda must be positive, got " +
                        std::to_string(lambda));
  if (!(gamma > 0.0))
    throw BadRangeError(
        "build_setpoint_ct(): gamma must be positive (with a known "
        "equilibrium input use the stabilization program), got " +
        std::to_string(gamma));
  if (!(eps > 0.0))
    throw BadRangeError("build_setpoint_ct(): eps must be positive, got " +
                        std::to_string(eps));
  const double s_max = -eps / eta;
  if (s > s_max + 1e-9 * (1.0 + std::abs(s_max)))
    throw BadSError("build_setpoint_ct(): s = " + std::to_string(s) +
                    " exceeds the admissible bound -eps/eta = " +
                    std::to_string(s_max));
  detail::check_setpoint_dims(cs, xbar, ubar, "build_setpoint_ct");
  const int n = cs.n, m = cs.m;
  const int nw = static_cast<int>(cs.zeta.rows());

  SynthesisProgram sp;
  sp.n = n;
  sp.m = m;
  sp.P = sp.prob.add_symmetric("P", n, 1.0);
  sp.Y = sp.prob.add_rectangular("Y", m, n);
  sp.Lambda = sp.prob.add_scalar("Lambda", 1.0);
  sp.tau_gamma = sp.prob.add_scalar("tau_gamma", 1.0);

  const LinExpr Pe = sp.prob.var_expr(sp.P);
  const LinExpr Ye = sp.prob.var_expr(sp.Y);
  const LinExpr G = detail::g_expr(sp.prob, sp.P, sp.Y, xbar, ubar);
  const LinExpr H = detail::h_expr(sp.prob, sp.P, n, m);

  BlockGrid grid({n, n, m * n, m, nw, n});
  grid.set(0, 0, he(rmul(transpose(G), cs.zeta)) + (-s) * Pe);
  grid.set(1, 0, LinExpr::constant(MatrixXd::Identity(n, n)));
  grid.set(1, 1,
           detail::scaled_scalar(sp.tau_gamma,
                                 -gamma * MatrixXd::Identity(n, n)));
  grid.set(2, 0, rmul(transpose(H), cs.zeta));
  grid.set(2, 2, -lambda * kron_identity(m, Pe));
  grid.set(3, 0, lambda * Ye);
  grid.set(3, 3,
           LinExpr::constant(-lambda * MatrixXd::Identity(m, m)));
  grid.set(4, 0, lmul(cs.Asqrt_inv, G));
  grid.set(4, 2, lmul(cs.Asqrt_inv, H));
  grid.set(4, 4,
           detail::scaled_scalar(sp.Lambda, -MatrixXd::Identity(nw, nw)));
  grid.set(5, 0, detail::scaled_scalar(sp.Lambda, cs.Qsqrt));
  grid.set(5, 5,
           detail::scaled_scalar(sp.Lambda, -MatrixXd::Identity(n, n)));
  sp.decrease_block = grid.assemble();
  sp.prob.add_lmi("decrease", sp.decrease_block);

  // eps + s + tau_gamma gamma <= 0 (outer boundary decrease budget).
  sp.prob.add_lmi("budget_outer",
                  LinExpr::constant(MatrixXd::Constant(1, 1, eps + s)) +
                      detail::scaled_scalar(
                          sp.tau_gamma, MatrixXd::Constant(1, 1, gamma)));
  // eps + s eta + tau_gamma gamma <= 0 (inner boundary decrease budget).
  sp.prob.add_lmi("budget_inner",
                  LinExpr::constant(MatrixXd::Constant(1, 1, eps + s * eta)) +
                      detail::scaled_scalar(
                          sp.tau_gamma, MatrixXd::Constant(1, 1, gamma)));
  // tau_gamma >= 0.
  sp.prob.add_lmi("offset_multiplier_sign",
                  detail::scaled_scalar(sp.tau_gamma,
                                        -MatrixXd::Identity(1, 1)));
  detail::add_shape_bounds(sp.prob, sp.P, n);
  return sp;
}

// ---- design extraction ------------------------------------------------------

// Recovers K from K P = Y with an explicit residual gate.
inline MatrixXd gain_from(const MatrixXd& P, const MatrixXd& Y) {
  if (P.rows() != P.cols() || Y.cols() != P.rows())
    throw DimMismatchError("gain_from(): incompatible shapes");
  Eigen::LLT<MatrixXd> llt(symmetrize(P));
  if (llt.info() != Eigen::Success)
    throw SolverFailureError("gain_from(): P is not positive definite");
  const MatrixXd K = llt.solve(Y.transpose()).transpose();
  const double residual = (K * P - Y).norm();
  if (residual > kGainResidualTol * std::max(Y.norm(), 1e-12))
    throw SolverFailureError("gain_from(): residual " +
                             std::to_string(residual) +
                             " exceeds the relative gate");
  return K;
}

namespace detail {

inline double objective_of(DesignObjective o, double volume,
                           double diameter) {
  return o == DesignObjective::kVolume ? volume : diameter;
}

// Strict deterministic ordering of feasible grid points: larger objective,
// then smaller lambda, then smaller |s|.
inline bool better_point(double obj_a, double lam_a, double s_a,
                         double obj_b, double lam_b, double s_b) {
  if (obj_a != obj_b) return obj_a > obj_b;
  if (lam_a != lam_b) return lam_a < lam_b;
  return std::abs(s_a) < std::abs(s_b);
}

}  // namespace detail

// ---- grid line searches -----------------------------------------------------

// Sweeps the bilinearity multiplier over a grid for the known-equilibrium
// stabilization programs and returns the accepted design with the largest
// basin objective; every evaluated point lands in the report.
inline LineSearchResult line_search_stabilize(
    const ConsistencySet& cs, const VectorXd& xbar, const VectorXd& ubar,
    TimeDomain domain, const std::vector<double>& lambdas,
    DesignObjective objective = DesignObjective::kVolume) {
  std::vector<GridPoint> report;
  bool have_best = false;
  GridPoint best;
  SdpSolution best_sol;

  for (double lambda : lambdas) {
    if (!(lambda > 0.0)) continue;
    SynthesisProgram sp =
        domain == TimeDomain::kContinuous
            ? build_stabilize_ct(cs, xbar, ubar, lambda)
            : build_stabilize_dt(cs, xbar, ubar, lambda);
    const SdpSolution sol = sp.prob.solve();

    GridPoint pt;
    pt.lambda = lambda;
    pt.feasible = sol.accepted();
    pt.margin = sol.phase1_margin;
    pt.worst_ratio = sol.worst_raw_ratio;
    if (pt.feasible) {
      const MatrixXd& P = sol.matrix("P");
      pt.volume = ellipsoid_volume_proxy(P);
      pt.diameter = ellipsoid_diameter(P);
      const double obj =
          detail::objective_of(objective, pt.volume, pt.diameter);
      const double best_obj =
          have_best ? detail::objective_of(objective, best.volume,
                                           best.diameter)
                    : 0.0;
      if (!have_best ||
          detail::better_point(obj, pt.lambda, 0.0, best_obj, best.lambda,
                               0.0)) {
        have_best = true;
        best = pt;
        best_sol = sol;
      }
    }
    report.push_back(pt);
  }

  if (report.empty())
    throw BadRangeError(
        "line_search_stabilize(): the multiplier grid has no positive "
        "entries");
  if (!have_best)
    throw AllInfeasibleError(
        "line_search_stabilize(): no multiplier in the grid produced an "
        "accepted design",
        report);

  LineSearchResult out;
  out.report = std::move(report);
  ControllerDesign& d = out.design;
  d.program_id = domain == TimeDomain::kContinuous
                     ? ProgramId::kStabilizeCt
                     : ProgramId::kStabilizeDt;
  d.P = best_sol.matrix("P");
  d.K = gain_from(d.P, best_sol.matrix("Y"));
  d.xbar = xbar;
  d.ubar = ubar;
  d.lambda = best.lambda;
  d.Lambda = best_sol.scalar("Lambda");
  d.volume = best.volume;
  d.diameter = best.diameter;
  d.objective = detail::objective_of(objective, best.volume, best.diameter);
  return out;
}

// Sweeps (lambda, s) for the unknown-equilibrium setpoint program. Grid
// entries with lambda <= 0 or s above -eps/eta are dropped up front; an
// empty admissible s set is a BadSError before any solve.
inline LineSearchResult line_search_setpoint(
    const ConsistencySet& cs, const VectorXd& xbar, const VectorXd& ubar,
    double gamma, double eta, double eps,
    const std::vector<double>& lambdas, const std::vector<double>& s_values,
    DesignObjective objective = DesignObjective::kVolume) {
  if (!(eta > 0.0) || !(eta < 1.0))
    throw BadEtaError("line_search_setpoint(): eta must lie in (0, 1), got " +
                      std::to_string(eta));
  if (!(eps > 0.0))
    throw BadRangeError("line_search_setpoint(): eps must be positive");
  const double s_max = -eps / eta;
  std::vector<double> admissible_s;
  for (double s : s_values)
    if (s <= s_max + 1e-9 * (1.0 + std::abs(s_max)))
      admissible_s.push_back(s);
  if (admissible_s.empty())
    throw BadSError(
        "line_search_setpoint(): every s in the grid exceeds -eps/eta = " +
        std::to_string(s_max));

  std::vector<GridPoint> report;
  bool have_best = false;
  GridPoint best;
  SdpSolution best_sol;

  for (double lambda : lambdas) {
    if (!(lambda > 0.0)) continue;
    for (double s : admissible_s) {
      SynthesisProgram sp =
          build_setpoint_ct(cs, xbar, ubar, gamma, eta, eps, lambda, s);
      const SdpSolution sol = sp.prob.solve();

      GridPoint pt;
      pt.lambda = lambda;
      pt.s = s;
      pt.feasible = sol.accepted();
      pt.margin = sol.phase1_margin;
      pt.worst_ratio = sol.worst_raw_ratio;
      if (pt.feasible) {
        const MatrixXd& P = sol.matrix("P");
        pt.volume = ellipsoid_volume_proxy(P);
        pt.diameter = ellipsoid_diameter(P);
        const double obj =
            detail::objective_of(objective, pt.volume, pt.diameter);
        const double best_obj =
            have_best ? detail::objective_of(objective, best.volume,
                                             best.diameter)
                      : 0.0;
        if (!have_best ||
            detail::better_point(obj, pt.lambda, pt.s, best_obj, best.lambda,
                                 best.s)) {
          have_best = true;
          best = pt;
          best_sol = sol;
        }
      }
      report.push_back(pt);
    }
  }

  if (report.empty())
    throw BadRangeError(
        "line_search_setpoint(): the multiplier grid has no positive "
        "entries");
  if (!have_best)
    throw AllInfeasibleError(
        "line_search_setpoint(): no (lambda, s) pair in the grid produced an "
        "accepted design",
        report);

  LineSearchResult out;
  out.report = std::move(report);
  ControllerDesign& d = out.design;
  d.program_id = ProgramId::kSetpointCt;
  d.P = best_sol.matrix("P");
  d.K = gain_from(d.P, best_sol.matrix("Y"));
  d.xbar = xbar;
  d.ubar = ubar;
  d.gamma = gamma;
  d.eta = eta;
  d.eps = eps;
  d.lambda = best.lambda;
  d.Lambda = best_sol.scalar("Lambda");
  d.s = best.s;
  d.tau_gamma = best_sol.scalar("tau_gamma");
  d.tau_eta = (eps + best.s + d.tau_gamma * gamma) / (eta - 1.0);
  d.decrease_budget_warning = (best.s + d.tau_eta < 0.0);
  d.volume = best.volume;
  d.diameter = best.diameter;
  d.objective = detail::objective_of(objective, best.volume, best.diameter);
  return out;
}

// ---- equilibrium-input program ----------------------------------------------

namespace detail {

// Inner solve at fixed sigma: minimize gamma over (gamma, ubar) subject to
// the offset-bound LMI. Returns nullopt when the point is rejected.
inline std::optional<SetpointInputResult> setpoint_input_at(
    const ConsistencySet& cs, const VectorXd& xbar, double sigma) {
  const int n = cs.n, m = cs.m;
  const int nw = static_cast<int>(cs.zeta.rows());

  SdpProblem prob;
  const int g = prob.add_scalar("gamma", 1.0);
  const int u = prob.add_rectangular("ubar", m, 1);
  const LinExpr ue = prob.var_expr(u);
  const MatrixXd Im = MatrixXd::Identity(m, m);
  const LinExpr nue = vstack(
      {LinExpr::constant(MatrixXd(xbar)), ue,
       lmul(kron(Im, MatrixXd(xbar)), ue),
       LinExpr::constant(MatrixXd::Ones(1, 1))});

  BlockGrid grid({n, 1, nw, n});
  grid.set(0, 0, scaled_scalar(g, -MatrixXd::Identity(n, n)));
  grid.set(1, 0, rmul(transpose(nue), cs.zeta));
  grid.set(1, 1, LinExpr::constant(-MatrixXd::Identity(1, 1)));
  grid.set(2, 1, lmul(cs.Asqrt_inv, nue));
  grid.set(2, 2,
           LinExpr::constant(-sigma * MatrixXd::Identity(nw, nw)));
  grid.set(3, 0, LinExpr::constant(sigma * cs.Qsqrt));
  grid.set(3, 3, LinExpr::constant(-sigma * MatrixXd::Identity(n, n)));
  prob.add_lmi("offset_bound", grid.assemble());
  prob.minimize(g);

  const SdpSolution sol = prob.solve();
  if (!sol.accepted()) return std::nullopt;
  SetpointInputResult r;
  r.gamma = sol.scalar("gamma");
  r.ubar = sol.matrix("ubar").col(0);
  r.sigma = sigma;
  return r;
}

}  // namespace detail

// Picks the input whose worst-case equilibrium offset over the consistency
// set is smallest: golden-section search on log10(sigma) of the inner
// minimal gamma. Requires a set of positive size (QZeroError otherwise).
inline SetpointInputResult solve_setpoint_input(const ConsistencySet& cs,
                                                const VectorXd& xbar,
                                                double log_sigma_lo = -8.0,
                                                double log_sigma_hi = 8.0,
                                                int iterations = 40) {
  if (xbar.size() != cs.n)
    throw DimMismatchError("solve_setpoint_input(): xbar dimension mismatch");
  if (cs.Q.cwiseAbs().maxCoeff() == 0.0)
    throw QZeroError(
        "solve_setpoint_input(): the consistency set is a singleton (Q = 0); "
        "the offset bound degenerates");
  if (!(log_sigma_lo < log_sigma_hi) || iterations < 1)
    throw BadRangeError("solve_setpoint_input(): bad search interval");

  std::optional<SetpointInputResult> best;
  const auto eval = [&](double log_sigma) {
    const auto r = detail::setpoint_input_at(cs, xbar, std::pow(10.0,
                                                                log_sigma));
    if (!r) return std::numeric_limits<double>::infinity();
    if (!best || r->gamma < best->gamma) best = r;
    return r->gamma;
  };

  // Coarse scan first: small sigma is always rejected (the residual row
  // needs sigma >= |Abold^{-1/2} nu_bar|^2), so a blind golden section could
  // bracket an all-infeasible subinterval. The scan localizes the feasible
  // basin, the golden section refines it.
  const int kScan = 17;
  double best_log = log_sigma_lo;
  double best_scan = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kScan; ++i) {
    const double l = log_sigma_lo + (log_sigma_hi - log_sigma_lo) *
                                        static_cast<double>(i) /
                                        static_cast<double>(kScan - 1);
    const double f = eval(l);
    if (f < best_scan) {
      best_scan = f;
      best_log = l;
    }
  }
  const double step = (log_sigma_hi - log_sigma_lo) /
                      static_cast<double>(kScan - 1);
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = std::max(log_sigma_lo, best_log - step);
  double hi = std::min(log_sigma_hi, best_log + step);
  double c = hi - gr * (hi - lo);
  double d = lo + gr * (hi - lo);
  double fc = eval(c), fd = eval(d);
  for (int it = 0; it < iterations; ++it) {
    if (fc <= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - gr * (hi - lo);
      fc = eval(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + gr * (hi - lo);
      fd = eval(d);
    }
  }
  if (!best)
    throw SolverFailureError(
        "solve_setpoint_input(): no sigma in the search interval produced an "
        "accepted solution");
  const double zbar = cs.norm_bound();
  best->guaranteed_bound = zbar * zbar * (xbar.squaredNorm() + 1.0);
  return *best;
}

// ---- serialization ----------------------------------------------------------

inline json controller_to_json(const ControllerDesign& d) {
  return json{{"program_id", to_string(d.program_id)},
              {"K", matrix_to_json(d.K)},
              {"P", matrix_to_json(d.P)},
              {"xbar", vector_to_json(d.xbar)},
              {"ubar", vector_to_json(d.ubar)},
              {"gamma", d.gamma},
              {"eta", d.eta},
              {"eps", d.eps},
              {"lambda", d.lambda},
              {"Lambda", d.Lambda},
              {"s", d.s},
              {"tau_gamma", d.tau_gamma},
              {"tau_eta", d.tau_eta},
              {"sigma", d.sigma},
              {"objective", d.objective},
              {"volume", d.volume},
              {"diameter", d.diameter},
              {"decrease_budget_warning", d.decrease_budget_warning}};
}

inline ControllerDesign controller_from_json(const json& j) {
  ControllerDesign d;
  d.program_id = program_id_from_string(j.at("program_id").get<std::string>());
  d.K = matrix_from_json(j.at("K"), "controller_from_json(K)");
  d.P = matrix_from_json(j.at("P"), "controller_from_json(P)");
  d.xbar = vector_from_json(j.at("xbar"), "controller_from_json(xbar)");
  d.ubar = vector_from_json(j.at("ubar"), "controller_from_json(ubar)");
  d.gamma = j.at("gamma").get<double>();
  d.eta = j.at("eta").get<double>();
  d.eps = j.at("eps").get<double>();
  d.lambda = j.at("lambda").get<double>();
  d.Lambda = j.at("Lambda").get<double>();
  d.s = j.at("s").get<double>();
  d.tau_gamma = j.at("tau_gamma").get<double>();
  d.tau_eta = j.at("tau_eta").get<double>();
  d.sigma = j.at("sigma").get<double>();
  d.objective = j.at("objective").get<double>();
  d.volume = j.at("volume").get<double>();
  d.diameter = j.at("diameter").get<double>();
  d.decrease_budget_warning =
      j.value("decrease_budget_warning", false);
  if (d.K.rows() != d.ubar.size() || d.K.cols() != d.xbar.size() ||
      d.P.rows() != d.xbar.size() || d.P.cols() != d.xbar.size())
    throw DimMismatchError("controller_from_json(): inconsistent shapes");
  return d;
}

inline void save_controller(const ControllerDesign& d,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("save_controller(): cannot open " + path);
  out << controller_to_json(d).dump(2) << "\n";
}

inline ControllerDesign load_controller(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("load_controller(): cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DimMismatchError(std::string("load_controller(): parse error: ") +
                           e.what());
  }
  return controller_from_json(j);
}

inline std::string report_csv(const std::vector<GridPoint>& report) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "lambda,s,feasible,volume,diameter\n";
  for (const auto& p : report)
    os << p.lambda << "," << p.s << "," << (p.feasible ? 1 : 0) << ","
       << p.volume << "," << p.diameter << "\n";
  return os.str();
}

inline void save_report_csv(const std::vector<GridPoint>& report,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("save_report_csv(): cannot open " + path);
  out << report_csv(report);
}

}  // namespace ddbc
