#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <optional>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "ddbc/errors.hpp"
#include "ddbc/matrix_utils.hpp"

namespace ddbc {

using nlohmann::json;

enum class TimeDomain { kContinuous, kDiscrete };

// Equilibrium-residual tolerance for setpoint validation, relative to the
// setpoint magnitude.
inline constexpr double kEqTolCoeff = 1e-6;

// Ground-truth plant x^o = A x + B u + C (u kron x) + d, where x^o is the
// state derivative (continuous time) or the successor state (discrete time).
// Used for simulation, data generation and oracles only — synthesis never
// reads these matrices.
struct BilinearSystem {
  MatrixXd A;  // n x n
  MatrixXd B;  // n x m
  MatrixXd C;  // n x (m*n)
  VectorXd d;  // n
  int n = 0;
  int m = 0;
  TimeDomain domain = TimeDomain::kContinuous;

  static BilinearSystem validated(MatrixXd A, MatrixXd B, MatrixXd C,
                                  VectorXd d, TimeDomain domain) {
    BilinearSystem sys;
    sys.n = static_cast<int>(A.rows());
    sys.m = static_cast<int>(B.cols());
    if (A.cols() != sys.n || B.rows() != sys.n || C.rows() != sys.n ||
        C.cols() != static_cast<Eigen::Index>(sys.m) * sys.n ||
        d.size() != sys.n)
      throw DimMismatchError(
          "BilinearSystem::validated(): inconsistent matrix dimensions");
    sys.A = std::move(A);
    sys.B = std::move(B);
    sys.C = std::move(C);
    sys.d = std::move(d);
    sys.domain = domain;
    return sys;
  }
};

// Value of the vector field / successor map at (x, u).
inline VectorXd eval_dynamics(const BilinearSystem& sys, const VectorXd& x,
                              const VectorXd& u) {
  if (x.size() != sys.n || u.size() != sys.m)
    throw DimMismatchError("eval_dynamics(): state/input dimension mismatch");
  return sys.A * x + sys.B * u + sys.C * kron(u, x) + sys.d;
}

// Affine state feedback u = K (x - xbar) + ubar.
struct ControlLaw {
  MatrixXd K;      // m x n
  VectorXd xbar;   // n
  VectorXd ubar;   // m

  VectorXd input_for(const VectorXd& x) const {
    if (x.size() != xbar.size())
      throw DimMismatchError("ControlLaw::input_for(): dimension mismatch");
    return K * (x - xbar) + ubar;
  }
};

inline VectorXd closed_loop_field(const BilinearSystem& sys,
                                  const ControlLaw& law, const VectorXd& x) {
  return eval_dynamics(sys, x, law.input_for(x));
}

// Stacked regressor nu_bar(ubar, xbar) = [xbar; ubar; (I_m kron xbar) ubar; 1]
// — the constant part of the closed loop in error coordinates.
inline VectorXd nu_bar(const VectorXd& xbar, const VectorXd& ubar) {
  const int n = static_cast<int>(xbar.size());
  const int m = static_cast<int>(ubar.size());
  VectorXd nu(n + m + m * n + 1);
  nu.head(n) = xbar;
  nu.segment(n, m) = ubar;
  nu.segment(n + m, m * n) = kron(ubar, xbar);
  nu(n + m + m * n) = 1.0;
  return nu;
}

// State-dependent regressor mu(K, xt) = [I; K; (I_m kron xbar) K +
// (ubar kron I_n) + (I_m kron xt) K; 0] such that the closed loop in error
// coordinates xt = x - xbar is Z' (mu(K, xt) xt + nu_bar).
inline MatrixXd mu_matrix(const ControlLaw& law, const VectorXd& xt) {
  const int n = static_cast<int>(law.xbar.size());
  const int m = static_cast<int>(law.ubar.size());
  if (xt.size() != n)
    throw DimMismatchError("mu_matrix(): error-state dimension mismatch");
  MatrixXd mu = MatrixXd::Zero(n + m + m * n + 1, n);
  mu.topRows(n) = MatrixXd::Identity(n, n);
  mu.middleRows(n, m) = law.K;
  const MatrixXd Im = MatrixXd::Identity(m, m);
  const MatrixXd In = MatrixXd::Identity(n, n);
  mu.middleRows(n + m, m * n) =
      kron(Im, MatrixXd(law.xbar)) * law.K + kron(MatrixXd(law.ubar), In) +
      kron(Im, MatrixXd(xt)) * law.K;
  return mu;
}

// Stacked true parameters Z*' = [A B C d] (n x (n+m+mn+1)).
inline MatrixXd true_parameter_row(const BilinearSystem& sys) {
  MatrixXd Zt(sys.n, sys.n + sys.m + sys.m * sys.n + 1);
  Zt << sys.A, sys.B, sys.C, sys.d;
  return Zt;
}

struct MuNuParts {
  VectorXd drive;   // Z*' mu(K, xt) xt     (vanishes at x = xbar)
  VectorXd offset;  // Z*' nu_bar(ubar, xbar) (vanishes at exact equilibrium)
};

// Splits the closed-loop map into the homogeneous drive and the constant
// offset; drive + offset equals closed_loop_field(x) in continuous time and
// the successor state in discrete time.
inline MuNuParts mu_nu_decompose(const BilinearSystem& sys,
                                 const ControlLaw& law, const VectorXd& x) {
  const VectorXd xt = x - law.xbar;
  const MatrixXd Zt = true_parameter_row(sys);
  MuNuParts parts;
  parts.drive = Zt * (mu_matrix(law, xt) * xt);
  parts.offset = Zt * nu_bar(law.xbar, law.ubar);
  return parts;
}

// Least-squares equilibrium input for a target state: solves
// (B + C (I_m kron xbar)) u = r with r the domain-appropriate right side.
struct EquilibriumInput {
  VectorXd ubar;
  double residual = 0.0;
  bool underdetermined = false;
};

inline EquilibriumInput equilibrium_input(const BilinearSystem& sys,
                                          const VectorXd& xbar) {
  if (xbar.size() != sys.n)
    throw DimMismatchError("equilibrium_input(): dimension mismatch");
  const MatrixXd M =
      sys.B + sys.C * kron(MatrixXd::Identity(sys.m, sys.m), MatrixXd(xbar));
  VectorXd r = -sys.A * xbar - sys.d;
  if (sys.domain == TimeDomain::kDiscrete) r += xbar;
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(M);
  EquilibriumInput out;
  out.ubar = cod.solve(r);
  out.residual = (M * out.ubar - r).norm();
  out.underdetermined = cod.rank() < sys.m;
  return out;
}

// Target state with (optionally) the input that holds it.
struct Setpoint {
  VectorXd xbar;
  std::optional<VectorXd> ubar;

  // Validates the equilibrium residual of (xbar, ubar) when ubar is present.
  void validate(const BilinearSystem& sys) const {
    if (!ubar) return;
    VectorXd f = eval_dynamics(sys, xbar, *ubar);
    if (sys.domain == TimeDomain::kDiscrete) f -= xbar;
    const double tol = kEqTolCoeff * (1.0 + xbar.norm());
    if (f.norm() > tol)
      throw ValidationError("Setpoint::validate(): equilibrium residual " +
                            std::to_string(f.norm()) + " exceeds " +
                            std::to_string(tol));
  }
};

// --- converter benchmark preset ---------------------------------------------

// Fifth-order averaged DC-DC converter whose duty cycle enters bilinearly.
inline BilinearSystem cuk_system() {
  MatrixXd A(5, 5);
  A << -1, -1, 0, 0, 0,
      0.01, 0, 0, 0, 0,
      0, 0, -0.5, 0, -1,
      0, 0, 0, -150, 10,
      0, 0, 0.1, -0.1, 0;
  MatrixXd B = MatrixXd::Zero(5, 1);
  MatrixXd C(5, 5);
  C << 0, 1, 0, 0, 0,
      -0.01, 0, -0.01, 0, 0,
      0, 1, 0, 0, 0,
      0, 0, 0, 0, 0,
      0, 0, 0, 0, 0;
  VectorXd d(5);
  d << 30, 0, 0, 0, 0;
  return BilinearSystem::validated(A, B, C, d, TimeDomain::kContinuous);
}

// Pinned duty cycle of the converter operating point.
inline constexpr double kCukUbar = 0.527480;

// Exact equilibrium state for the pinned duty cycle: with m = 1 the field is
// (A + ubar*C) x + B ubar + d, so xbar solves a linear system. The result
// rounds to the 2-decimal operating point (2.23, 58.76, 2.00, 2.00, 30.00).
inline Setpoint cuk_setpoint() {
  const BilinearSystem sys = cuk_system();
  VectorXd ubar(1);
  ubar << kCukUbar;
  const MatrixXd M = sys.A + kCukUbar * sys.C;
  const VectorXd xbar = M.partialPivLu().solve(-(sys.B * ubar + sys.d));
  Setpoint sp;
  sp.xbar = xbar;
  sp.ubar = ubar;
  return sp;
}

// --- JSON persistence --------------------------------------------------------

inline json matrix_to_json(const MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline json vector_to_json(const VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline MatrixXd matrix_from_json(const json& j, const std::string& who) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw DimMismatchError(who + ": expected a nested array");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j.front().size());
  MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols)
      throw DimMismatchError(who + ": ragged rows");
    for (Eigen::Index jj = 0; jj < cols; ++jj)
      M(i, jj) = j[i][jj].get<double>();
  }
  return M;
}

inline VectorXd vector_from_json(const json& j, const std::string& who) {
  if (!j.is_array()) throw DimMismatchError(who + ": expected an array");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

inline json system_to_json(const BilinearSystem& sys) {
  return json{{"n", sys.n},
              {"m", sys.m},
              {"domain", sys.domain == TimeDomain::kContinuous ? "continuous"
                                                               : "discrete"},
              {"A", matrix_to_json(sys.A)},
              {"B", matrix_to_json(sys.B)},
              {"C", matrix_to_json(sys.C)},
              {"d", vector_to_json(sys.d)}};
}

inline BilinearSystem system_from_json(const json& j) {
  const std::string domain = j.at("domain").get<std::string>();
  if (domain != "continuous" && domain != "discrete")
    throw DimMismatchError("system_from_json(): unknown domain '" + domain +
                           "'");
  BilinearSystem sys = BilinearSystem::validated(
      matrix_from_json(j.at("A"), "system_from_json(A)"),
      matrix_from_json(j.at("B"), "system_from_json(B)"),
      matrix_from_json(j.at("C"), "system_from_json(C)"),
      vector_from_json(j.at("d"), "system_from_json(d)"),
      domain == "continuous" ? TimeDomain::kContinuous
                             : TimeDomain::kDiscrete);
  if (j.contains("n") && j.at("n").get<int>() != sys.n)
    throw DimMismatchError("system_from_json(): n field mismatch");
  if (j.contains("m") && j.at("m").get<int>() != sys.m)
    throw DimMismatchError("system_from_json(): m field mismatch");
  return sys;
}

inline void save_system(const BilinearSystem& sys, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_system(): cannot open " + path);
  out << system_to_json(sys).dump(2) << "\n";
}

// Loads a model file, or the named preset ("cuk").
inline BilinearSystem load_system(const std::string& path_or_preset) {
  if (path_or_preset == "cuk") return cuk_system();
  std::ifstream in(path_or_preset);
  if (!in)
    throw std::runtime_error("load_system(): cannot open " + path_or_preset);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DimMismatchError(std::string("load_system(): parse error: ") +
                           e.what());
  }
  return system_from_json(j);
}

}  // namespace ddbc
