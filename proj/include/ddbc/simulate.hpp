#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <functional>
#include <string>

#include "ddbc/model.hpp"

namespace ddbc {

// Fixed integrator step for continuous-time simulation.
inline constexpr double kDefaultRk4Step = 1e-3;
// A trajectory is flagged divergent once |x| exceeds this guard.
inline constexpr double kDivergenceGuard = 1e9;

// Sampled states/inputs of one simulation run. `states` has one column per
// recorded time (including t = 0); `inputs` has one column per applied input.
struct Trajectory {
  VectorXd times;
  MatrixXd states;
  MatrixXd inputs;
  bool diverged = false;
  int steps_completed = 0;

  VectorXd final_state() const { return states.col(states.cols() - 1); }
};

namespace detail {

inline bool state_ok(const VectorXd& x) {
  return x.allFinite() && x.norm() <= kDivergenceGuard;
}

// One classical Runge-Kutta step of the field f.
inline VectorXd rk4_step(const std::function<VectorXd(const VectorXd&)>& f,
                         const VectorXd& x, double h) {
  const VectorXd k1 = f(x);
  const VectorXd k2 = f(x + 0.5 * h * k1);
  const VectorXd k3 = f(x + 0.5 * h * k2);
  const VectorXd k4 = f(x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

// Closed-loop continuous-time simulation with fixed-step RK4; records every
// integrator step. Divergence is reported in the trajectory, not thrown.
inline Trajectory simulate_closed_loop_ct(const BilinearSystem& sys,
                                          const ControlLaw& law,
                                          const VectorXd& x0, double t_end,
                                          double h = kDefaultRk4Step) {
  if (!(h > 0.0))
    throw BadRangeError("simulate_closed_loop_ct(): step must be positive");
  const int steps = static_cast<int>(std::llround(t_end / h));
  Trajectory traj;
  traj.times.resize(steps + 1);
  traj.states.resize(sys.n, steps + 1);
  traj.inputs.resize(sys.m, steps + 1);
  VectorXd x = x0;
  const auto field = [&](const VectorXd& z) {
    return closed_loop_field(sys, law, z);
  };
  for (int k = 0; k <= steps; ++k) {
    traj.times(k) = k * h;
    traj.states.col(k) = x;
    traj.inputs.col(k) = law.input_for(x);
    traj.steps_completed = k;
    if (k == steps) break;
    x = detail::rk4_step(field, x, h);
    if (!detail::state_ok(x)) {
      traj.diverged = true;
      traj.times.conservativeResize(k + 1);
      traj.states.conservativeResize(Eigen::NoChange, k + 1);
      traj.inputs.conservativeResize(Eigen::NoChange, k + 1);
      break;
    }
  }
  return traj;
}

// Closed-loop discrete-time simulation (exact iteration of the map).
inline Trajectory simulate_closed_loop_dt(const BilinearSystem& sys,
                                          const ControlLaw& law,
                                          const VectorXd& x0, int steps) {
  Trajectory traj;
  traj.times.resize(steps + 1);
  traj.states.resize(sys.n, steps + 1);
  traj.inputs.resize(sys.m, steps + 1);
  VectorXd x = x0;
  for (int k = 0; k <= steps; ++k) {
    traj.times(k) = k;
    traj.states.col(k) = x;
    traj.inputs.col(k) = law.input_for(x);
    traj.steps_completed = k;
    if (k == steps) break;
    x = eval_dynamics(sys, x, law.input_for(x));
    if (!detail::state_ok(x)) {
      traj.diverged = true;
      traj.times.conservativeResize(k + 1);
      traj.states.conservativeResize(Eigen::NoChange, k + 1);
      traj.inputs.conservativeResize(Eigen::NoChange, k + 1);
      break;
    }
  }
  return traj;
}

// Open-loop continuous-time simulation under zero-order-hold inputs (one
// column of `inputs` per sampling period `dt`), optionally with a per-period
// disturbance column added to the vector field (also zero-order hold).
// Records the state at the T+1 sampling instants.
inline Trajectory simulate_open_loop_ct(const BilinearSystem& sys,
                                        const MatrixXd& inputs, double dt,
                                        const VectorXd& x0,
                                        double h = kDefaultRk4Step,
                                        const MatrixXd* disturbance = nullptr) {
  if (!(dt > 0.0))
    throw BadRangeError("simulate_open_loop_ct(): dt must be positive");
  if (inputs.rows() != sys.m)
    throw DimMismatchError("simulate_open_loop_ct(): input rows != m");
  const int T = static_cast<int>(inputs.cols());
  const double step = std::min(h, dt);
  const int sub = std::max(1, static_cast<int>(std::llround(dt / step)));
  const double hs = dt / sub;
  Trajectory traj;
  traj.times.resize(T + 1);
  traj.states.resize(sys.n, T + 1);
  traj.inputs.resize(sys.m, T);
  VectorXd x = x0;
  for (int i = 0; i <= T; ++i) {
    traj.times(i) = i * dt;
    traj.states.col(i) = x;
    traj.steps_completed = i;
    if (i == T) break;
    const VectorXd u = inputs.col(i);
    traj.inputs.col(i) = u;
    VectorXd e = VectorXd::Zero(sys.n);
    if (disturbance != nullptr) e = disturbance->col(i);
    const auto field = [&](const VectorXd& z) {
      return VectorXd(eval_dynamics(sys, z, u) + e);
    };
    for (int s = 0; s < sub; ++s) {
      x = detail::rk4_step(field, x, hs);
      if (!detail::state_ok(x)) {
        traj.diverged = true;
        traj.times.conservativeResize(i + 1);
        traj.states.conservativeResize(Eigen::NoChange, i + 1);
        traj.inputs.conservativeResize(Eigen::NoChange, i);
        return traj;
      }
    }
  }
  return traj;
}

// Open-loop discrete-time simulation: one map application per input column,
// optionally with an additive disturbance column per step.
inline Trajectory simulate_open_loop_dt(const BilinearSystem& sys,
                                        const MatrixXd& inputs,
                                        const VectorXd& x0,
                                        const MatrixXd* disturbance = nullptr) {
  if (inputs.rows() != sys.m)
    throw DimMismatchError("simulate_open_loop_dt(): input rows != m");
  const int T = static_cast<int>(inputs.cols());
  Trajectory traj;
  traj.times.resize(T + 1);
  traj.states.resize(sys.n, T + 1);
  traj.inputs.resize(sys.m, T);
  VectorXd x = x0;
  for (int i = 0; i <= T; ++i) {
    traj.times(i) = i;
    traj.states.col(i) = x;
    traj.steps_completed = i;
    if (i == T) break;
    traj.inputs.col(i) = inputs.col(i);
    x = eval_dynamics(sys, x, inputs.col(i));
    if (disturbance != nullptr) x += disturbance->col(i);
    if (!detail::state_ok(x)) {
      traj.diverged = true;
      traj.times.conservativeResize(i + 1);
      traj.states.conservativeResize(Eigen::NoChange, i + 1);
      traj.inputs.conservativeResize(Eigen::NoChange, i);
      break;
    }
  }
  return traj;
}

// CSV dump with header t, x1..xn, u1..um; one row per recorded time.
inline void write_trajectory_csv(const Trajectory& traj,
                                 const std::string& path) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("write_trajectory_csv(): cannot open " + path);
  const Eigen::Index n = traj.states.rows();
  const Eigen::Index m = traj.inputs.rows();
  out << "t";
  for (Eigen::Index i = 0; i < n; ++i) out << ",x" << (i + 1);
  for (Eigen::Index i = 0; i < m; ++i) out << ",u" << (i + 1);
  out << "\n";
  out.precision(17);
  for (Eigen::Index k = 0; k < traj.times.size(); ++k) {
    out << traj.times(k);
    for (Eigen::Index i = 0; i < n; ++i) out << "," << traj.states(i, k);
    for (Eigen::Index i = 0; i < m; ++i)
      out << "," << (k < traj.inputs.cols() ? traj.inputs(i, k) : 0.0);
    out << "\n";
  }
}

}  // namespace ddbc
