#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <utility>

#include "ddbc/model.hpp"
#include "ddbc/rng.hpp"
#include "ddbc/simulate.hpp"

namespace ddbc {

// Relative singular-value threshold of the excitation rank test.
inline constexpr double kRankTol = 1e-8;
// Safety factor of the per-column noise radius (strictly inside the energy
// ball so membership survives roundoff).
inline constexpr double kNoiseMargin = 0.99;

// One open-loop experiment: states, inputs, bilinear regressors and measured
// state images, plus the noise energy bound the measurements are certified
// against. The stacked regressor matrix W0 = [X0; U0; S0; O0] is what every
// downstream program consumes.
struct Dataset {
  MatrixXd X1;           // n x T measured state derivative / successor
  MatrixXd X0;           // n x T sampled states
  MatrixXd U0;           // m x T applied inputs
  MatrixXd S0;           // (m*n) x T bilinear regressors kron(u_i, x_i)
  MatrixXd noise_bound;  // n x n PSD energy bound on E0 E0'
  int T = 0;

  int n() const { return static_cast<int>(X0.rows()); }
  int m() const { return static_cast<int>(U0.rows()); }

  MatrixXd W0() const {
    MatrixXd W(n() + m() + m() * n() + 1, T);
    W.topRows(n()) = X0;
    W.middleRows(n(), m()) = U0;
    W.middleRows(n() + m(), m() * n()) = S0;
    W.bottomRows(1) = MatrixXd::Ones(1, T);
    return W;
  }

  // Enforces the structural invariants: consistent column counts, S0 columns
  // equal to kron(U0 col, X0 col), PSD noise bound.
  static Dataset validated(MatrixXd X1, MatrixXd X0, MatrixXd U0, MatrixXd S0,
                           MatrixXd noise_bound) {
    Dataset ds;
    ds.T = static_cast<int>(X0.cols());
    const int n = static_cast<int>(X0.rows());
    const int m = static_cast<int>(U0.rows());
    if (X1.rows() != n || X1.cols() != ds.T || U0.cols() != ds.T ||
        S0.rows() != static_cast<Eigen::Index>(m) * n || S0.cols() != ds.T ||
        noise_bound.rows() != n || noise_bound.cols() != n)
      throw DimMismatchError("Dataset::validated(): inconsistent dimensions");
    double worst = 0.0;
    for (int i = 0; i < ds.T; ++i) {
      const VectorXd recon = kron(VectorXd(U0.col(i)), VectorXd(X0.col(i)));
      worst = std::max(worst, (recon - S0.col(i)).cwiseAbs().maxCoeff());
    }
    if (worst > 1e-12 * (1.0 + S0.cwiseAbs().maxCoeff()))
      throw ValidationError(
          "Dataset::validated(): S0 columns do not match kron(U0, X0) "
          "(max deviation " +
          std::to_string(worst) + ")");
    if (!is_psd(require_symmetric(noise_bound, "Dataset::validated()")))
      throw NotPsdError("Dataset::validated(): noise bound is not PSD");
    ds.X1 = std::move(X1);
    ds.X0 = std::move(X0);
    ds.U0 = std::move(U0);
    ds.S0 = std::move(S0);
    ds.noise_bound = std::move(noise_bound);
    return ds;
  }
};

struct NoiseRealization {
  MatrixXd E0;     // n x T injected samples
  MatrixXd bound;  // n x n energy bound the realization is certified against
};

enum class InputKind { kUniformIid };

// I.i.d. uniform excitation per channel in [lo, hi]; lo == hi yields the
// constant signal (degenerate range is allowed).
inline MatrixXd generate_input(InputKind kind, int m, int T, double lo,
                               double hi, Rng& rng) {
  (void)kind;  // single excitation family
  if (T < 1) throw BadRangeError("generate_input(): T must be >= 1");
  if (!(std::isfinite(lo) && std::isfinite(hi)))
    throw BadRangeError("generate_input(): range must be finite");
  if (lo > hi) throw BadRangeError("generate_input(): lo > hi");
  MatrixXd U(m, T);
  for (int j = 0; j < T; ++j)
    for (int i = 0; i < m; ++i) U(i, j) = rng.uniform(lo, hi);
  return U;
}

// Noise columns drawn uniformly in the ball of radius
// margin * sqrt(lambda_min(noise_bound) / T), so E0 E0' <= (sum |e_i|^2) I <=
// noise_bound holds by construction for every realization.
inline NoiseRealization generate_noise(const MatrixXd& noise_bound, int T,
                                       Rng& rng) {
  const MatrixXd Xi = require_symmetric(noise_bound, "generate_noise()");
  if (!is_psd(Xi)) throw NotPsdError("generate_noise(): bound is not PSD");
  const int n = static_cast<int>(Xi.rows());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(Xi);
  const double lmin = std::max(0.0, es.eigenvalues().minCoeff());
  const double radius = kNoiseMargin * std::sqrt(lmin / std::max(1, T));
  NoiseRealization noise;
  noise.bound = Xi;
  noise.E0.resize(n, T);
  for (int j = 0; j < T; ++j) noise.E0.col(j) = rng.uniform_ball(n, radius);
  return noise;
}

struct CollectResult {
  Dataset dataset;
  Trajectory trajectory;  // raw open-loop run behind the samples
};

// Runs the open-loop experiment and assembles the data matrices. Continuous
// time integrates the plant with the current noise column added to the vector
// field (zero-order hold) and records X1 columns as the noisy derivative at
// each sampling instant; discrete time applies one noisy step per sample.
// Either way X1 = A X0 + B U0 + C S0 + d O0 + E0 holds exactly.
inline CollectResult collect(const BilinearSystem& sys, const MatrixXd& input,
                             const NoiseRealization& noise, const VectorXd& x0,
                             double dt) {
  const int T = static_cast<int>(input.cols());
  if (input.rows() != sys.m || noise.E0.rows() != sys.n ||
      noise.E0.cols() != T || x0.size() != sys.n ||
      noise.bound.rows() != sys.n || noise.bound.cols() != sys.n)
    throw DimMismatchError("collect(): dimension mismatch");

  CollectResult out;
  if (sys.domain == TimeDomain::kContinuous) {
    out.trajectory =
        simulate_open_loop_ct(sys, input, dt, x0, kDefaultRk4Step, &noise.E0);
  } else {
    out.trajectory = simulate_open_loop_dt(sys, input, x0, &noise.E0);
  }
  if (out.trajectory.diverged)
    throw NonFiniteError("collect(): trajectory diverged during collection");

  MatrixXd X0(sys.n, T), X1(sys.n, T), S0(sys.m * sys.n, T);
  for (int i = 0; i < T; ++i) {
    const VectorXd x = out.trajectory.states.col(i);
    const VectorXd u = input.col(i);
    X0.col(i) = x;
    S0.col(i) = kron(u, x);
    if (sys.domain == TimeDomain::kContinuous) {
      X1.col(i) = eval_dynamics(sys, x, u) + noise.E0.col(i);
    } else {
      X1.col(i) = out.trajectory.states.col(i + 1);  // already includes noise
    }
  }
  out.dataset = Dataset::validated(std::move(X1), std::move(X0),
                                   MatrixXd(input), std::move(S0),
                                   noise.bound);
  return out;
}

struct RankCheck {
  bool full_row_rank = false;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
};

// Excitation test: W0 must have full row rank, judged by
// sigma_min > rank_tol * sigma_max.
inline RankCheck check_rank(const Dataset& ds, double rank_tol = kRankTol) {
  const MatrixXd W0 = ds.W0();
  RankCheck rc;
  if (W0.cols() < W0.rows()) {
    Eigen::JacobiSVD<MatrixXd> svd(W0);
    rc.sigma_max = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
    rc.sigma_min = 0.0;  // fewer columns than rows: rank-deficient always
    rc.full_row_rank = false;
    return rc;
  }
  Eigen::JacobiSVD<MatrixXd> svd(W0);
  const VectorXd s = svd.singularValues();
  rc.sigma_max = s(0);
  rc.sigma_min = s(s.size() - 1);
  rc.full_row_rank = rc.sigma_min > rank_tol * rc.sigma_max;
  return rc;
}

// --- persistence -------------------------------------------------------------

inline json dataset_to_json(const Dataset& ds) {
  return json{{"T", ds.T},
              {"noise_bound", matrix_to_json(ds.noise_bound)},
              {"X1", matrix_to_json(ds.X1)},
              {"X0", matrix_to_json(ds.X0)},
              {"U0", matrix_to_json(ds.U0)},
              {"S0", matrix_to_json(ds.S0)}};
}

inline Dataset dataset_from_json(const json& j) {
  Dataset ds = Dataset::validated(
      matrix_from_json(j.at("X1"), "dataset_from_json(X1)"),
      matrix_from_json(j.at("X0"), "dataset_from_json(X0)"),
      matrix_from_json(j.at("U0"), "dataset_from_json(U0)"),
      matrix_from_json(j.at("S0"), "dataset_from_json(S0)"),
      matrix_from_json(j.at("noise_bound"), "dataset_from_json(noise_bound)"));
  if (j.contains("T") && j.at("T").get<int>() != ds.T)
    throw DimMismatchError("dataset_from_json(): T field mismatch");
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset(): cannot open " + path);
  out << dataset_to_json(ds).dump(2) << "\n";
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset(): cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DimMismatchError(std::string("load_dataset(): parse error: ") +
                           e.what());
  }
  return dataset_from_json(j);
}

}  // namespace ddbc
