#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ddbc/matrix_utils.hpp"

namespace ddbc {

// A returned point is accepted only if every LMI block evaluates within
// kFeasTolCoeff * (1 + ||block||) of the PSD cone boundary — independent of
// any internal solver status.
inline constexpr double kFeasTolCoeff = 1e-7;
// Hard box on every scalar decision component.
inline constexpr double kVarBoxLimit = 1e8;

enum class SdpStatus { kOptimal, kFeasible, kInfeasible, kNumerical };

inline const char* to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::kOptimal: return "optimal";
    case SdpStatus::kFeasible: return "feasible";
    case SdpStatus::kInfeasible: return "infeasible";
    case SdpStatus::kNumerical: return "numerical";
  }
  return "unknown";
}

// Matrix-valued expression affine in the declared decision variables:
//   E(v) = C0 + sum_terms scale * L * V^(T) * R + sum_terms v_scalar * M.
class LinExpr {
 public:
  struct MatTerm {
    int var = -1;
    bool transposed = false;
    double scale = 1.0;
    MatrixXd L, R;
  };
  struct ScalTerm {
    int var = -1;
    MatrixXd M;
  };

  Eigen::Index rows = 0, cols = 0;
  MatrixXd C0;
  std::vector<MatTerm> mats;
  std::vector<ScalTerm> scals;

  static LinExpr constant(const MatrixXd& M) {
    LinExpr e;
    e.rows = M.rows();
    e.cols = M.cols();
    e.C0 = M;
    return e;
  }

  static LinExpr zero(Eigen::Index rows, Eigen::Index cols) {
    return constant(MatrixXd::Zero(rows, cols));
  }
};

inline LinExpr operator+(const LinExpr& a, const LinExpr& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw DimMismatchError("LinExpr::operator+(): shape mismatch");
  LinExpr e = a;
  e.C0 += b.C0;
  e.mats.insert(e.mats.end(), b.mats.begin(), b.mats.end());
  e.scals.insert(e.scals.end(), b.scals.begin(), b.scals.end());
  return e;
}

inline LinExpr operator*(double c, const LinExpr& a) {
  LinExpr e = a;
  e.C0 *= c;
  for (auto& t : e.mats) t.scale *= c;
  for (auto& t : e.scals) t.M *= c;
  return e;
}

inline LinExpr operator-(const LinExpr& a) { return -1.0 * a; }
inline LinExpr operator-(const LinExpr& a, const LinExpr& b) {
  return a + (-1.0 * b);
}

inline LinExpr transpose(const LinExpr& a) {
  LinExpr e;
  e.rows = a.cols;
  e.cols = a.rows;
  e.C0 = a.C0.transpose();
  for (const auto& t : a.mats) {
    LinExpr::MatTerm nt;
    nt.var = t.var;
    nt.transposed = !t.transposed;
    nt.scale = t.scale;
    nt.L = t.R.transpose();
    nt.R = t.L.transpose();
    e.mats.push_back(std::move(nt));
  }
  for (const auto& t : a.scals)
    e.scals.push_back({t.var, MatrixXd(t.M.transpose())});
  return e;
}

inline LinExpr lmul(const MatrixXd& M, const LinExpr& a) {
  if (M.cols() != a.rows)
    throw DimMismatchError("LinExpr::lmul(): shape mismatch");
  LinExpr e = a;
  e.rows = M.rows();
  e.C0 = M * a.C0;
  for (auto& t : e.mats) t.L = M * t.L;
  for (auto& t : e.scals) t.M = M * t.M;
  return e;
}

inline LinExpr rmul(const LinExpr& a, const MatrixXd& M) {
  if (a.cols != M.rows())
    throw DimMismatchError("LinExpr::rmul(): shape mismatch");
  LinExpr e = a;
  e.cols = M.cols();
  e.C0 = a.C0 * M;
  for (auto& t : e.mats) t.R = t.R * M;
  for (auto& t : e.scals) t.M = t.M * M;
  return e;
}

inline LinExpr he(const LinExpr& a) {
  if (a.rows != a.cols) throw DimMismatchError("LinExpr::he(): not square");
  return a + transpose(a);
}

inline LinExpr vstack(const std::vector<LinExpr>& parts) {
  if (parts.empty()) throw DimMismatchError("vstack(): empty");
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (p.cols != parts.front().cols)
      throw DimMismatchError("vstack(): column mismatch");
    total += p.rows;
  }
  LinExpr e = LinExpr::zero(total, parts.front().cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    MatrixXd inj = MatrixXd::Zero(total, p.rows);
    inj.middleRows(at, p.rows) = MatrixXd::Identity(p.rows, p.rows);
    e = e + lmul(inj, p);
    at += p.rows;
  }
  return e;
}

// I_m kron E for a square expression E (block-diagonal replication).
inline LinExpr kron_identity(int m, const LinExpr& a) {
  if (a.rows != a.cols)
    throw DimMismatchError("kron_identity(): expression not square");
  const Eigen::Index n = a.rows;
  LinExpr e = LinExpr::zero(m * n, m * n);
  for (int i = 0; i < m; ++i) {
    MatrixXd S = MatrixXd::Zero(m * n, n);
    S.middleRows(i * n, n) = MatrixXd::Identity(n, n);
    e = e + lmul(S, rmul(a, MatrixXd(S.transpose())));
  }
  return e;
}

// Lower-triangle cell layout of a symmetric block LMI; assemble() mirrors
// off-diagonal cells and symmetrizes the diagonal.
class BlockGrid {
 public:
  explicit BlockGrid(std::vector<Eigen::Index> row_dims)
      : dims_(std::move(row_dims)) {
    offsets_.resize(dims_.size(), 0);
    for (size_t i = 1; i < dims_.size(); ++i)
      offsets_[i] = offsets_[i - 1] + dims_[i - 1];
    total_ = offsets_.back() + dims_.back();
  }

  void set(int i, int j, const LinExpr& e) {
    if (i < 0 || j < 0 || i >= static_cast<int>(dims_.size()) || j > i)
      throw DimMismatchError("BlockGrid::set(): need lower-triangle cell");
    if (e.rows != dims_[i] || e.cols != dims_[j])
      throw DimMismatchError("BlockGrid::set(): cell shape mismatch at (" +
                             std::to_string(i) + "," + std::to_string(j) +
                             ")");
    cells_[{i, j}] = e;
  }

  LinExpr assemble() const {
    LinExpr e = LinExpr::zero(total_, total_);
    for (const auto& [key, cell] : cells_) {
      const auto [i, j] = key;
      MatrixXd inj_i = MatrixXd::Zero(total_, dims_[i]);
      inj_i.middleRows(offsets_[i], dims_[i]) =
          MatrixXd::Identity(dims_[i], dims_[i]);
      MatrixXd inj_j = MatrixXd::Zero(total_, dims_[j]);
      inj_j.middleRows(offsets_[j], dims_[j]) =
          MatrixXd::Identity(dims_[j], dims_[j]);
      if (i == j) {
        e = e + 0.5 * (lmul(inj_i, rmul(cell, MatrixXd(inj_j.transpose()))) +
                       lmul(inj_j, rmul(transpose(cell),
                                        MatrixXd(inj_i.transpose()))));
      } else {
        e = e + lmul(inj_i, rmul(cell, MatrixXd(inj_j.transpose()))) +
            lmul(inj_j, rmul(transpose(cell), MatrixXd(inj_i.transpose())));
      }
    }
    return e;
  }

  Eigen::Index size() const { return total_; }

 private:
  std::vector<Eigen::Index> dims_;
  std::vector<Eigen::Index> offsets_;
  Eigen::Index total_ = 0;
  std::map<std::pair<int, int>, LinExpr> cells_;
};

struct SolveOptions {
  double gap_tol = 1e-9;
  double t_factor = 8.0;
  int max_outer = 48;
  int max_newton = 64;
  double feas_tol_coeff = kFeasTolCoeff;
  double box_limit = kVarBoxLimit;
};

struct SdpSolution {
  SdpStatus status = SdpStatus::kNumerical;
  std::map<std::string, MatrixXd> values;
  double objective = std::numeric_limits<double>::quiet_NaN();
  // Margin of the relaxed phase-I program in equilibrated coordinates
  // (negative = strictly feasible interior found).
  double phase1_margin = std::numeric_limits<double>::quiet_NaN();
  // Worst lambda_max(block)/tol(block) over the raw, unscaled LMIs.
  double worst_raw_ratio = std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, double> block_lmax;
  std::map<std::string, double> block_tol;
  int newton_iterations = 0;

  const MatrixXd& matrix(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end())
      throw std::runtime_error("SdpSolution::matrix(): unknown variable " +
                               name);
    return it->second;
  }
  double scalar(const std::string& name) const {
    const MatrixXd& M = matrix(name);
    if (M.size() != 1)
      throw std::runtime_error("SdpSolution::scalar(): " + name +
                               " is not scalar");
    return M(0, 0);
  }
  bool accepted() const {
    return status == SdpStatus::kOptimal || status == SdpStatus::kFeasible;
  }
};

// Semidefinite feasibility/minimization problems over symmetric, rectangular
// and scalar matrix variables, every constraint an LMI block E(v) <= 0.
// Interior-point solve: phase I minimizes a uniform slack margin, phase II
// (only when an objective is set) follows the central path from the interior
// point. Deterministic; acceptance is decided by raw-block re-verification.
class SdpProblem {
 public:
  enum class VarShape { kScalar, kSymmetric, kRectangular };

  int add_symmetric(const std::string& name, int n, double init_diag = 1.0) {
    return add_var(name, VarShape::kSymmetric, n, n,
                   MatrixXd(init_diag * MatrixXd::Identity(n, n)));
  }

  int add_rectangular(const std::string& name, int rows, int cols) {
    return add_var(name, VarShape::kRectangular, rows, cols,
                   MatrixXd::Zero(rows, cols));
  }

  int add_scalar(const std::string& name, double init) {
    return add_var(name, VarShape::kScalar, 1, 1,
                   MatrixXd(MatrixXd::Constant(1, 1, init)));
  }

  void set_initial(int var, const MatrixXd& value) {
    if (value.rows() != vars_[var].rows || value.cols() != vars_[var].cols)
      throw DimMismatchError("SdpProblem::set_initial(): shape mismatch");
    vars_[var].init = value;
  }

  // Affine expression equal to the variable itself.
  LinExpr var_expr(int var) const {
    const VarInfo& v = vars_.at(var);
    LinExpr e = LinExpr::zero(v.rows, v.cols);
    if (v.shape == VarShape::kScalar) {
      e.scals.push_back({var, MatrixXd::Identity(1, 1)});
    } else {
      LinExpr::MatTerm t;
      t.var = var;
      t.L = MatrixXd::Identity(v.rows, v.rows);
      t.R = MatrixXd::Identity(v.cols, v.cols);
      e.mats.push_back(std::move(t));
    }
    return e;
  }

  // Registers the LMI constraint E(v) <= 0 (PSD order).
  void add_lmi(const std::string& name, const LinExpr& e) {
    if (e.rows != e.cols)
      throw DimMismatchError("SdpProblem::add_lmi(): block not square");
    blocks_.push_back({name, e});
  }

  void minimize(int scalar_var) {
    if (vars_.at(scalar_var).shape != VarShape::kScalar)
      throw DimMismatchError("SdpProblem::minimize(): objective must be a "
                             "declared scalar variable");
    objective_var_ = scalar_var;
  }

  // Evaluates an expression at given variable values (testing/verification).
  MatrixXd evaluate(const LinExpr& e,
                    const std::map<std::string, MatrixXd>& values) const {
    MatrixXd out = e.C0;
    for (const auto& t : e.mats) {
      const MatrixXd& V = values.at(vars_[t.var].name);
      out += t.scale * t.L * (t.transposed ? V.transpose() : MatrixXd(V)) *
             t.R;
    }
    for (const auto& t : e.scals)
      out += values.at(vars_[t.var].name)(0, 0) * t.M;
    return out;
  }

  SdpSolution solve(const SolveOptions& opt = SolveOptions()) const {
    try {
      return solve_impl(opt);
    } catch (const std::exception&) {
      SdpSolution sol;
      sol.status = SdpStatus::kNumerical;
      return sol;
    }
  }

 private:
  struct VarInfo {
    std::string name;
    VarShape shape;
    int rows = 0, cols = 0;
    int offset = 0;  // first flat component
    int count = 0;
    MatrixXd init;
  };

  struct Block {
    std::string name;
    LinExpr expr;
  };

  // Flat form of one block: F0 + sum_j v_j F_j <= 0 with sparse j support.
  struct Flat {
    std::string name;
    Eigen::Index size = 0;
    MatrixXd F0;
    std::vector<std::pair<int, MatrixXd>> FJ;
    bool relax = true;  // participates in the phase-I margin
  };

  int add_var(const std::string& name, VarShape shape, int rows, int cols,
              MatrixXd init) {
    for (const auto& v : vars_)
      if (v.name == name)
        throw std::runtime_error("SdpProblem::add_var(): duplicate name " +
                                 name);
    VarInfo v;
    v.name = name;
    v.shape = shape;
    v.rows = rows;
    v.cols = cols;
    v.offset = total_;
    v.count = shape == VarShape::kScalar
                  ? 1
                  : (shape == VarShape::kSymmetric ? rows * (rows + 1) / 2
                                                   : rows * cols);
    v.init = std::move(init);
    total_ += v.count;
    vars_.push_back(std::move(v));
    return static_cast<int>(vars_.size()) - 1;
  }

  // Basis matrix of flat component s of a variable.
  MatrixXd basis(const VarInfo& v, int s) const {
    MatrixXd B = MatrixXd::Zero(v.rows, v.cols);
    if (v.shape == VarShape::kScalar) {
      B(0, 0) = 1.0;
    } else if (v.shape == VarShape::kSymmetric) {
      int k = 0;
      for (int i = 0; i < v.rows; ++i)
        for (int j = 0; j <= i; ++j, ++k)
          if (k == s) {
            B(i, j) = 1.0;
            B(j, i) = 1.0;
            return B;
          }
      throw std::runtime_error("SdpProblem::basis(): bad component");
    } else {
      B(s / v.cols, s % v.cols) = 1.0;
    }
    return B;
  }

  VectorXd pack(const VarInfo& v, const MatrixXd& M) const {
    VectorXd out(v.count);
    if (v.shape == VarShape::kScalar) {
      out(0) = M(0, 0);
    } else if (v.shape == VarShape::kSymmetric) {
      int k = 0;
      for (int i = 0; i < v.rows; ++i)
        for (int j = 0; j <= i; ++j, ++k) out(k) = M(i, j);
    } else {
      for (int i = 0; i < v.rows; ++i)
        for (int j = 0; j < v.cols; ++j) out(i * v.cols + j) = M(i, j);
    }
    return out;
  }

  MatrixXd unpack(const VarInfo& v, const VectorXd& flat) const {
    MatrixXd M = MatrixXd::Zero(v.rows, v.cols);
    if (v.shape == VarShape::kScalar) {
      M(0, 0) = flat(v.offset);
    } else if (v.shape == VarShape::kSymmetric) {
      int k = 0;
      for (int i = 0; i < v.rows; ++i)
        for (int j = 0; j <= i; ++j, ++k) {
          M(i, j) = flat(v.offset + k);
          M(j, i) = flat(v.offset + k);
        }
    } else {
      for (int i = 0; i < v.rows; ++i)
        for (int j = 0; j < v.cols; ++j)
          M(i, j) = flat(v.offset + i * v.cols + j);
    }
    return M;
  }

  Flat flatten(const Block& b) const {
    Flat f;
    f.name = b.name;
    f.size = b.expr.rows;
    f.F0 = symmetrize(b.expr.C0);
    std::map<int, MatrixXd> acc;
    for (const auto& t : b.expr.mats) {
      const VarInfo& v = vars_[t.var];
      for (int s = 0; s < v.count; ++s) {
        const MatrixXd B = basis(v, s);
        const MatrixXd contrib =
            t.scale * t.L * (t.transposed ? B.transpose() : MatrixXd(B)) *
            t.R;
        auto [it, fresh] =
            acc.try_emplace(v.offset + s, MatrixXd::Zero(f.size, f.size));
        it->second += contrib;
      }
    }
    for (const auto& t : b.expr.scals) {
      const VarInfo& v = vars_[t.var];
      auto [it, fresh] =
          acc.try_emplace(v.offset, MatrixXd::Zero(f.size, f.size));
      it->second += t.M;
    }
    for (auto& [j, Fj] : acc) {
      Fj = symmetrize(Fj);
      if (Fj.cwiseAbs().maxCoeff() > 0.0) f.FJ.emplace_back(j, Fj);
    }
    return f;
  }

  // Barrier-method centering of min t*c'x + sum_k -logdet(-(F0_k + sum x F))
  // over strictly feasible x. Returns false only on a hard stall.
  static bool newton_center(const std::vector<Flat>& flats,
                            const VectorXd& c, double t, VectorXd& x,
                            int max_newton, int* iterations) {
    const int d = static_cast<int>(x.size());
    const auto slacks_of = [&](const VectorXd& z, std::vector<MatrixXd>* S) {
      S->clear();
      S->reserve(flats.size());
      for (const auto& f : flats) {
        MatrixXd A = f.F0;
        for (const auto& [j, Fj] : f.FJ) A += z(j) * Fj;
        S->push_back(MatrixXd(-A));
      }
    };
    const auto barrier_value = [&](const std::vector<MatrixXd>& S,
                                   double* val) {
      double phi = 0.0;
      for (const auto& Sk : S) {
        Eigen::LLT<MatrixXd> llt(Sk);
        if (llt.info() != Eigen::Success) return false;
        const auto& L = llt.matrixLLT();
        for (Eigen::Index i = 0; i < L.rows(); ++i) {
          if (!(L(i, i) > 0.0)) return false;
          phi -= 2.0 * std::log(L(i, i));
        }
      }
      *val = phi;
      return true;
    };

    std::vector<MatrixXd> S;
    for (int it = 0; it < max_newton; ++it) {
      if (iterations) ++(*iterations);
      slacks_of(x, &S);
      double phi0 = 0.0;
      if (!barrier_value(S, &phi0)) return false;  // lost the interior
      phi0 += t * c.dot(x);

      VectorXd g = t * c;
      MatrixXd H = MatrixXd::Zero(d, d);
      for (size_t k = 0; k < flats.size(); ++k) {
        Eigen::LLT<MatrixXd> llt(S[k]);
        if (llt.info() != Eigen::Success) return false;
        const Eigen::Index p = S[k].rows();
        const MatrixXd Sinv =
            llt.solve(MatrixXd::Identity(p, p));
        std::vector<std::pair<int, MatrixXd>> T;
        T.reserve(flats[k].FJ.size());
        for (const auto& [j, Fj] : flats[k].FJ) {
          T.emplace_back(j, MatrixXd(Sinv * Fj));
          g(j) += T.back().second.trace();
        }
        for (size_t a = 0; a < T.size(); ++a)
          for (size_t b = a; b < T.size(); ++b) {
            const double h =
                (T[a].second.array() * T[b].second.transpose().array()).sum();
            H(T[a].first, T[b].first) += h;
            if (T[a].first != T[b].first) H(T[b].first, T[a].first) += h;
          }
      }
      if (!g.allFinite() || !H.allFinite()) return false;

      const double damp = 1e-12 * (1.0 + H.trace() / d);
      VectorXd dx = (H + damp * MatrixXd::Identity(d, d))
                        .ldlt()
                        .solve(VectorXd(-g));
      if (!dx.allFinite()) return false;
      const double decrement = -g.dot(dx);
      if (decrement / 2.0 < 1e-11) return true;  // centered

      double beta = 1.0;
      bool stepped = false;
      for (int ls = 0; ls < 60; ++ls) {
        const VectorXd xn = x + beta * dx;
        std::vector<MatrixXd> Sn;
        slacks_of(xn, &Sn);
        double phin = 0.0;
        if (barrier_value(Sn, &phin)) {
          phin += t * c.dot(xn);
          if (phin <= phi0 - 0.25 * beta * decrement + 1e-14 * std::abs(phi0)) {
            x = xn;
            stepped = true;
            break;
          }
        }
        beta *= 0.5;
      }
      if (!stepped) return true;  // cannot improve further at this t
    }
    return true;
  }

  SdpSolution solve_impl(const SolveOptions& opt) const {
    SdpSolution sol;
    if (vars_.empty() || blocks_.empty())
      throw std::runtime_error("SdpProblem::solve(): empty problem");

    // Raw flats of the builder blocks (acceptance semantics), then boxes.
    std::vector<Flat> raw;
    raw.reserve(blocks_.size());
    for (const auto& b : blocks_) raw.push_back(flatten(b));

    const int N = total_;
    std::vector<Flat> boxes;
    for (const auto& v : vars_)
      for (int s = 0; s < v.count; ++s) {
        const int j = v.offset + s;
        Flat up;
        up.name = "box+:" + v.name;
        up.size = 1;
        up.F0 = MatrixXd::Constant(1, 1, -opt.box_limit);
        up.FJ.emplace_back(j, MatrixXd::Constant(1, 1, 1.0));
        up.relax = false;
        Flat dn = up;
        dn.name = "box-:" + v.name;
        dn.FJ[0].second(0, 0) = -1.0;
        boxes.push_back(std::move(up));
        boxes.push_back(std::move(dn));
      }

    // Equilibration: block scales from the raw data, then per-component
    // scales from the scaled coefficients (boxes excluded from the stats).
    std::vector<double> beta(raw.size());
    for (size_t k = 0; k < raw.size(); ++k) {
      double mx = raw[k].F0.cwiseAbs().maxCoeff();
      for (const auto& [j, Fj] : raw[k].FJ)
        mx = std::max(mx, Fj.cwiseAbs().maxCoeff());
      beta[k] = 1.0 / std::max(1.0, mx);
    }
    VectorXd alpha = VectorXd::Ones(N);
    for (int j = 0; j < N; ++j) {
      double mx = 0.0;
      for (size_t k = 0; k < raw.size(); ++k)
        for (const auto& [jj, Fj] : raw[k].FJ)
          if (jj == j) mx = std::max(mx, beta[k] * Fj.cwiseAbs().maxCoeff());
      if (mx > 0.0)
        alpha(j) = std::clamp(1.0 / mx, 1e-6, 1e6);
    }

    const auto scaled_of = [&](const Flat& f, double b) {
      Flat g;
      g.name = f.name;
      g.size = f.size;
      g.relax = f.relax;
      g.F0 = b * f.F0;
      for (const auto& [j, Fj] : f.FJ)
        g.FJ.emplace_back(j, MatrixXd(b * alpha(j) * Fj));
      return g;
    };
    std::vector<Flat> scaled;
    for (size_t k = 0; k < raw.size(); ++k)
      scaled.push_back(scaled_of(raw[k], beta[k]));
    for (const auto& f : boxes)
      scaled.push_back(scaled_of(f, 1.0 / opt.box_limit));

    // Initial point in scaled coordinates.
    VectorXd w0(N);
    for (const auto& v : vars_) {
      const VectorXd vi = pack(v, v.init);
      for (int s = 0; s < v.count; ++s)
        w0(v.offset + s) = vi(s) / alpha(v.offset + s);
    }

    // ---- phase I: minimize the uniform margin s over relaxed blocks ----
    std::vector<Flat> ph1 = scaled;
    double worst0 = -std::numeric_limits<double>::infinity();
    for (auto& f : ph1) {
      if (!f.relax) continue;
      MatrixXd A = f.F0;
      for (const auto& [j, Fj] : f.FJ) A += w0(j) * Fj;
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(A));
      worst0 = std::max(worst0, es.eigenvalues().maxCoeff());
      f.FJ.emplace_back(N, MatrixXd(-MatrixXd::Identity(f.size, f.size)));
    }
    VectorXd x1(N + 1);
    x1.head(N) = w0;
    x1(N) = worst0 + 1.0;

    double total_size = 0.0;
    for (const auto& f : ph1) total_size += static_cast<double>(f.size);

    VectorXd c1 = VectorXd::Zero(N + 1);
    c1(N) = 1.0;
    double t = std::max(1e-3, 1.0 / (1.0 + std::abs(x1(N))));
    for (int outer = 0; outer < opt.max_outer; ++outer) {
      if (!newton_center(ph1, c1, t, x1, opt.max_newton,
                         &sol.newton_iterations))
        break;
      if (total_size / t < opt.gap_tol) break;
      t *= opt.t_factor;
    }
    sol.phase1_margin = x1(N);
    VectorXd w = x1.head(N);

    // ---- phase II: minimize the objective from the interior point ----
    bool phase2_ran = false;
    if (objective_var_ >= 0 && sol.phase1_margin < 0.0) {
      VectorXd c2 = VectorXd::Zero(N);
      c2(vars_[objective_var_].offset) =
          alpha(vars_[objective_var_].offset);
      // The strict margin guarantees interior feasibility of the original
      // scaled blocks at w.
      VectorXd x2 = w;
      double t2 = std::max(1e-3, 1.0 / (1.0 + std::abs(c2.dot(x2))));
      double total2 = 0.0;
      for (const auto& f : scaled) total2 += static_cast<double>(f.size);
      for (int outer = 0; outer < opt.max_outer; ++outer) {
        if (!newton_center(scaled, c2, t2, x2, opt.max_newton,
                           &sol.newton_iterations))
          break;
        if (total2 / t2 < opt.gap_tol) break;
        t2 *= opt.t_factor;
      }
      w = x2;
      phase2_ran = true;
    }

    // ---- raw re-verification: the acceptance semantics ----
    VectorXd v(N);
    for (int j = 0; j < N; ++j) v(j) = alpha(j) * w(j);
    if (!v.allFinite()) {
      sol.status = SdpStatus::kNumerical;
      return sol;
    }
    for (const auto& var : vars_)
      sol.values[var.name] = unpack(var, v);

    double worst_ratio = -std::numeric_limits<double>::infinity();
    bool all_ok = true;
    for (const auto& f : raw) {
      MatrixXd A = f.F0;
      for (const auto& [j, Fj] : f.FJ) A += v(j) * Fj;
      A = symmetrize(A);
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(A);
      const double lmax = es.eigenvalues().maxCoeff();
      const double tol = opt.feas_tol_coeff * (1.0 + spectral_norm(A));
      sol.block_lmax[f.name] = lmax;
      sol.block_tol[f.name] = tol;
      worst_ratio = std::max(worst_ratio, lmax / tol);
      all_ok = all_ok && lmax <= tol;
    }
    sol.worst_raw_ratio = worst_ratio;

    if (objective_var_ >= 0)
      sol.objective = sol.values[vars_[objective_var_].name](0, 0);

    // Accept only with a strictly interior phase-I margin AND every raw
    // block inside its tolerance; the norm-relative tolerance alone can be
    // inflated by large feasible directions, so it is necessary, not
    // sufficient.
    if (!all_ok || !(sol.phase1_margin < 0.0)) {
      sol.status = SdpStatus::kInfeasible;
    } else if (phase2_ran) {
      sol.status = SdpStatus::kOptimal;
    } else {
      sol.status = SdpStatus::kFeasible;
    }
    return sol;
  }

  std::vector<VarInfo> vars_;
  std::vector<Block> blocks_;
  int total_ = 0;
  int objective_var_ = -1;
};

}  // namespace ddbc
