// Command-line front end for the data-driven bilinear setpoint-control
// pipeline: collect noisy open-loop data, synthesize certified controllers
// via SDP line searches, spot-check designs by sampling, and reproduce the
// DC-DC converter case study end to end.
//
// Exit codes: 0 ok, 2 invalid data/parameters, 3 synthesis infeasible,
// 4 file I/O or parse failure, 5 verification found violations.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ddbc/consistency.hpp"
#include "ddbc/experiment.hpp"
#include "ddbc/model.hpp"
#include "ddbc/simulate.hpp"
#include "ddbc/synthesis.hpp"
#include "ddbc/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitIo = 4;
constexpr int kExitViolations = 5;

// Failure already mapped to a process exit code.
struct CliFailure {
  int code;
  std::string message;
};

// Runs a file load/store step; any failure inside is an I/O-or-parse error.
template <typename F>
auto io_step(F&& f, const std::string& what) -> decltype(f()) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw CliFailure{kExitIo, what + ": " + e.what()};
  }
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

// "lo:hi:count" grid description.
struct GridSpec {
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;
  bool set = false;
};

GridSpec parse_grid(const std::string& text, const std::string& flag) {
  GridSpec g;
  char tail = '\0';
  if (std::sscanf(text.c_str(), "%lf:%lf:%d%c", &g.lo, &g.hi, &g.count,
                  &tail) != 3)
    throw CliFailure{kExitInvalid,
                     flag + ": expected lo:hi:count, got '" + text + "'"};
  g.set = true;
  return g;
}

// A scalar b means the energy bound b*I on E0 E0'; anything else is a path
// to a JSON file holding the full n x n bound matrix.
ddbc::MatrixXd resolve_noise_bound(const std::string& text, int n) {
  try {
    std::size_t used = 0;
    const double b = std::stod(text, &used);
    if (used == text.size()) {
      if (b < 0.0)
        throw CliFailure{kExitInvalid,
                         "--noise-bound: scalar bound must be >= 0"};
      return b * ddbc::MatrixXd::Identity(n, n);
    }
  } catch (const CliFailure&) {
    throw;
  } catch (const std::exception&) {
    // not a scalar: fall through to the file path branch
  }
  return io_step(
      [&] {
        std::ifstream in(text);
        if (!in)
          throw std::runtime_error("cannot open " + text);
        ddbc::json j;
        in >> j;
        return ddbc::matrix_from_json(j, "--noise-bound");
      },
      "--noise-bound");
}

std::filesystem::path make_out_dir(const std::string& out) {
  const std::filesystem::path dir(out.empty() ? "." : out);
  try {
    std::filesystem::create_directories(dir);
  } catch (const std::exception& e) {
    throw CliFailure{kExitIo, "--out: " + std::string(e.what())};
  }
  return dir;
}

ddbc::DesignObjective parse_objective(const std::string& name) {
  if (name == "volume") return ddbc::DesignObjective::kVolume;
  if (name == "diameter") return ddbc::DesignObjective::kDiameter;
  throw CliFailure{kExitInvalid,
                   "--objective: expected volume or diameter, got '" + name +
                       "'"};
}

// ---- shared option bundle ---------------------------------------------------

struct Options {
  std::string preset;
  std::string model_path;
  std::string dataset_path;
  std::string controller_path;
  int T = 50;
  std::string noise_bound = "1e-4";
  double dt = 0.1;
  std::vector<double> x0;
  std::vector<double> xbar;
  std::vector<double> ubar;
  double input_lo = 0.0;
  double input_hi = 1.0;
  std::string mode;
  std::string lambda_grid_text;
  std::string s_grid_text;
  double eta = 0.1;
  double eps = 1e-3;
  std::string objective = "volume";
  int samples = 200;
  int trials = 10;
  double horizon = 50.0;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

ddbc::BilinearSystem resolve_system(const Options& opt) {
  const std::string source = !opt.preset.empty() ? opt.preset : opt.model_path;
  if (source.empty())
    throw CliFailure{kExitInvalid, "either --preset or --model is required"};
  return io_step([&] { return ddbc::load_system(source); },
                 "loading model '" + source + "'");
}

// ---- collect ----------------------------------------------------------------

// Runs the open-loop experiment and writes dataset.json + trajectory.csv.
// Returns the rank verdict so callers can decide whether to proceed.
ddbc::RankCheck run_collect_stage(const ddbc::BilinearSystem& sys,
                                  const Options& opt, std::uint64_t seed,
                                  const std::filesystem::path& dir,
                                  const std::string& traj_name) {
  ddbc::VectorXd x0;
  if (!opt.x0.empty()) {
    x0 = to_vector(opt.x0);
  } else if (opt.preset == "cuk") {
    x0 = ddbc::cuk_setpoint().xbar;  // anchor the experiment at the target
  } else {
    x0 = ddbc::VectorXd::Zero(sys.n);
  }
  if (x0.size() != sys.n)
    throw CliFailure{kExitInvalid, "--x0: expected " + std::to_string(sys.n) +
                                       " entries, got " +
                                       std::to_string(x0.size())};
  if (opt.input_hi < opt.input_lo)
    throw CliFailure{kExitInvalid, "--input-hi must be >= --input-lo"};

  const ddbc::MatrixXd bound = resolve_noise_bound(opt.noise_bound, sys.n);
  ddbc::Rng rng(seed);
  const ddbc::MatrixXd input = ddbc::generate_input(
      ddbc::InputKind::kUniformIid, sys.m, opt.T, opt.input_lo, opt.input_hi,
      rng);
  const ddbc::NoiseRealization noise = ddbc::generate_noise(bound, opt.T, rng);
  const ddbc::CollectResult cr =
      ddbc::collect(sys, input, noise, x0, opt.dt);

  io_step([&] { ddbc::save_dataset(cr.dataset, (dir / "dataset.json").string());
                return 0; },
          "writing dataset.json");
  io_step([&] { ddbc::write_trajectory_csv(cr.trajectory,
                                           (dir / traj_name).string());
                return 0; },
          "writing " + traj_name);

  const ddbc::RankCheck rc = ddbc::check_rank(cr.dataset);
  std::printf("[collect] T=%d seed=%llu sigma_min(W0)=%.6e rank=%s\n", opt.T,
              static_cast<unsigned long long>(seed), rc.sigma_min,
              rc.full_row_rank ? "full" : "DEFICIENT");
  return rc;
}

int cmd_collect(const Options& opt) {
  const ddbc::BilinearSystem sys = resolve_system(opt);
  const std::filesystem::path dir = make_out_dir(opt.out);
  const std::uint64_t seed = ddbc::resolve_seed(opt.seed, 0);
  const ddbc::RankCheck rc =
      run_collect_stage(sys, opt, seed, dir, "trajectory.csv");
  if (!rc.full_row_rank) {
    std::fprintf(stderr,
                 "[collect] excitation test failed: W0 is rank-deficient "
                 "(increase T or input richness)\n");
    return kExitInvalid;
  }
  return kExitOk;
}

// ---- synthesize -------------------------------------------------------------

std::vector<double> resolve_lambda_grid(const Options& opt, bool setpoint) {
  GridSpec g;
  if (!opt.lambda_grid_text.empty())
    g = parse_grid(opt.lambda_grid_text, "--lambda-grid");
  else
    g = setpoint ? GridSpec{0.6, 1.5, 10, true} : GridSpec{0.0, 5.0, 50, true};
  return ddbc::lambda_grid(g.lo, g.hi, g.count);
}

std::vector<double> resolve_s_grid(const Options& opt) {
  GridSpec g;
  if (!opt.s_grid_text.empty())
    g = parse_grid(opt.s_grid_text, "--s-grid");
  else
    g = GridSpec{-0.05, -opt.eps / opt.eta, 20, true};
  return ddbc::linspace_grid(g.lo, g.hi, g.count);
}

int cmd_synthesize(const Options& opt) {
  if (opt.mode != "known-ubar-ct" && opt.mode != "known-ubar-dt" &&
      opt.mode != "unknown-ubar-ct")
    throw CliFailure{kExitInvalid,
                     "--mode: expected known-ubar-ct, known-ubar-dt or "
                     "unknown-ubar-ct, got '" +
                         opt.mode + "'"};
  const ddbc::Dataset ds = io_step(
      [&] { return ddbc::load_dataset(opt.dataset_path); },
      "loading dataset '" + opt.dataset_path + "'");
  const ddbc::ConsistencySet cs = ddbc::ConsistencySet::build(ds);
  if (opt.xbar.empty())
    throw CliFailure{kExitInvalid, "--xbar is required for synthesize"};
  const ddbc::VectorXd xbar = to_vector(opt.xbar);
  const ddbc::DesignObjective objective = parse_objective(opt.objective);
  const std::filesystem::path dir = make_out_dir(opt.out);
  const bool setpoint_mode = opt.mode == "unknown-ubar-ct";
  const std::vector<double> lambdas = resolve_lambda_grid(opt, setpoint_mode);

  auto finish = [&](const ddbc::LineSearchResult& res, double sigma) {
    ddbc::ControllerDesign design = res.design;
    design.sigma = sigma;
    io_step([&] { ddbc::save_controller(design,
                                        (dir / "controller.json").string());
                  return 0; },
            "writing controller.json");
    io_step([&] { ddbc::save_report_csv(res.report,
                                        (dir / "report.csv").string());
                  return 0; },
            "writing report.csv");
    int feasible = 0;
    for (const auto& pt : res.report) feasible += pt.feasible ? 1 : 0;
    std::printf(
        "[synthesize %s] feasible %d/%zu; selected lambda=%.6g s=%.6g "
        "volume=%.6e diameter=%.6e\n",
        opt.mode.c_str(), feasible, res.report.size(), design.lambda,
        design.s, design.volume, design.diameter);
    if (design.decrease_budget_warning)
      std::fprintf(stderr,
                   "[synthesize] warning: decrease budget s + tau_eta < 0; "
                   "certified decrease rate is weaker than -eps\n");
    return kExitOk;
  };
  auto infeasible = [&](const ddbc::AllInfeasibleError& e) {
    io_step([&] { ddbc::save_report_csv(e.report,
                                        (dir / "report.csv").string());
                  return 0; },
            "writing report.csv");
    std::fprintf(stderr, "[synthesize %s] %s\n", opt.mode.c_str(), e.what());
    return kExitInfeasible;
  };

  if (!setpoint_mode) {
    if (opt.ubar.empty())
      throw CliFailure{kExitInvalid,
                       "--ubar is required for the known-ubar modes"};
    const ddbc::TimeDomain domain = opt.mode == "known-ubar-ct"
                                        ? ddbc::TimeDomain::kContinuous
                                        : ddbc::TimeDomain::kDiscrete;
    try {
      return finish(ddbc::line_search_stabilize(cs, xbar, to_vector(opt.ubar),
                                                domain, lambdas, objective),
                    0.0);
    } catch (const ddbc::AllInfeasibleError& e) {
      return infeasible(e);
    }
  }

  const ddbc::SetpointInputResult in = ddbc::solve_setpoint_input(cs, xbar);
  std::printf("[input-design] gamma=%.6e ubar=%.6f sigma=%.6e\n", in.gamma,
              in.ubar(0), in.sigma);
  const std::vector<double> s_values = resolve_s_grid(opt);
  try {
    return finish(ddbc::line_search_setpoint(cs, xbar, in.ubar, in.gamma,
                                             opt.eta, opt.eps, lambdas,
                                             s_values, objective),
                  in.sigma);
  } catch (const ddbc::AllInfeasibleError& e) {
    return infeasible(e);
  }
}

// ---- verify -------------------------------------------------------------------

int cmd_verify(const Options& opt) {
  const ddbc::ControllerDesign design = io_step(
      [&] { return ddbc::load_controller(opt.controller_path); },
      "loading controller '" + opt.controller_path + "'");
  const ddbc::Dataset ds = io_step(
      [&] { return ddbc::load_dataset(opt.dataset_path); },
      "loading dataset '" + opt.dataset_path + "'");
  const ddbc::ConsistencySet cs = ddbc::ConsistencySet::build(ds);
  const std::filesystem::path dir = make_out_dir(opt.out);
  const std::uint64_t seed = ddbc::resolve_seed(opt.seed, 0);

  ddbc::VerificationReport report =
      ddbc::check_certificate(design, cs, opt.samples, opt.samples, seed);
  std::printf("[verify] certificate: %d x %d samples, worst rate %.6e "
              "(threshold %.6e), violations %d\n",
              report.n_dynamics_samples, report.n_state_samples,
              report.worst_decrease, report.threshold,
              report.total_violations);

  if (!opt.preset.empty() || !opt.model_path.empty()) {
    const ddbc::BilinearSystem sys = resolve_system(opt);
    const ddbc::VerificationReport traj = ddbc::check_reach_and_stay(
        design, sys, opt.trials, opt.horizon, seed + 1);
    report.trajectories_converged = traj.trajectories_converged;
    report.trajectories_total = traj.trajectories_total;
    report.final_errors = traj.final_errors;
    std::printf("[verify] closed loop: %d/%d trajectories converged\n",
                report.trajectories_converged, report.trajectories_total);
  }

  io_step([&] { ddbc::save_report(report,
                                  (dir / "verification.json").string());
                return 0; },
          "writing verification.json");
  if (!report.passed()) {
    std::fprintf(stderr, "[verify] FAILED: sampled checks found violations\n");
    return kExitViolations;
  }
  return kExitOk;
}

// ---- reproduce-cuk -------------------------------------------------------------

// One synthesized branch of the case study, recorded for the summary.
struct BranchOutcome {
  std::string status = "skipped";
  int feasible = 0;
  int total = 0;
  std::optional<ddbc::ControllerDesign> design;
  bool verify_passed = false;
  int verify_violations = 0;
  int verify_converged = 0;
};

ddbc::json branch_to_json(const BranchOutcome& b, bool setpoint) {
  ddbc::json j{{"status", b.status},
               {"feasible_points", b.feasible},
               {"grid_points", b.total}};
  if (b.design) {
    j["selected_lambda"] = b.design->lambda;
    if (setpoint) j["selected_s"] = b.design->s;
    j["volume"] = b.design->volume;
    j["diameter"] = b.design->diameter;
    j["verification_passed"] = b.verify_passed;
    j["verification_violations"] = b.verify_violations;
    j["trajectories_converged"] = b.verify_converged;
  } else {
    j["selected_lambda"] = nullptr;
    if (setpoint) j["selected_s"] = nullptr;
    j["volume"] = nullptr;
    j["diameter"] = nullptr;
  }
  return j;
}

int cmd_reproduce_cuk(const Options& opt) {
  const std::filesystem::path dir = make_out_dir(opt.out);
  const std::uint64_t seed = ddbc::resolve_seed(opt.seed, 7);
  const ddbc::BilinearSystem sys = ddbc::cuk_system();
  const ddbc::Setpoint target = ddbc::cuk_setpoint();
  const ddbc::VectorXd xbar = target.xbar;

  // Stage 1: the open-loop experiment (input and state of fig_data.csv).
  Options collect_opt = opt;
  collect_opt.preset = "cuk";
  collect_opt.T = 50;
  collect_opt.noise_bound = "1e-4";
  collect_opt.dt = 0.1;
  collect_opt.input_lo = 0.0;
  collect_opt.input_hi = 1.0;
  collect_opt.x0.clear();
  const ddbc::RankCheck rc =
      run_collect_stage(sys, collect_opt, seed, dir, "fig_data.csv");
  if (!rc.full_row_rank) {
    std::fprintf(stderr, "[reproduce-cuk] collected data is rank-deficient\n");
    return kExitInvalid;
  }
  const ddbc::Dataset ds = io_step(
      [&] { return ddbc::load_dataset((dir / "dataset.json").string()); },
      "re-loading dataset.json");
  const ddbc::ConsistencySet cs = ddbc::ConsistencySet::build(ds);

  // Stage 2: equilibrium-input design plus its impossibility witness.
  const ddbc::SetpointInputResult in = ddbc::solve_setpoint_input(cs, xbar);
  std::printf("[input-design] gamma=%.6e ubar=%.6f sigma=%.6e\n", in.gamma,
              in.ubar(0), in.sigma);
  const ddbc::RegulationWitness witness =
      ddbc::regulation_offset_witness(cs, xbar, in.ubar);
  std::printf("[witness] |Z' nu|=%.6e (|.|^2 <= gamma: %s)\n",
              witness.residual.norm(),
              witness.residual.squaredNorm() <= in.gamma * (1.0 + 1e-6)
                  ? "yes"
                  : "no");

  // Shared verification + closed-loop plotting for a synthesized branch.
  auto verify_branch = [&](BranchOutcome& b, const std::string& tag) {
    const ddbc::ControllerDesign& design = *b.design;
    io_step([&] { ddbc::save_controller(
                      design, (dir / ("controller_" + tag + ".json")).string());
                  return 0; },
            "writing controller_" + tag + ".json");
    ddbc::VerificationReport report = ddbc::check_certificate(
        design, cs, opt.samples, opt.samples, seed + 11);
    const ddbc::VerificationReport traj = ddbc::check_reach_and_stay(
        design, sys, opt.trials, opt.horizon, seed + 12);
    report.trajectories_converged = traj.trajectories_converged;
    report.trajectories_total = traj.trajectories_total;
    report.final_errors = traj.final_errors;
    io_step([&] { ddbc::save_report(
                      report, (dir / ("verification_" + tag + ".json"))
                                  .string());
                  return 0; },
            "writing verification_" + tag + ".json");
    b.verify_passed = report.passed();
    b.verify_violations = report.total_violations;
    b.verify_converged = report.trajectories_converged;

    ddbc::Rng traj_rng(seed + 13);
    const ddbc::VectorXd x0 =
        xbar + ddbc::sqrtm_psd(design.P) * traj_rng.unit_sphere(sys.n);
    const ddbc::Trajectory closed = ddbc::simulate_closed_loop_ct(
        sys, design.law(), x0, opt.horizon);
    io_step([&] { ddbc::write_trajectory_csv(
                      closed,
                      (dir / ("fig_closedloop_" + tag + ".csv")).string());
                  return 0; },
            "writing fig_closedloop_" + tag + ".csv");
    std::printf("[%s] verification %s; %d/%d trajectories converged\n",
                tag.c_str(), b.verify_passed ? "passed" : "FAILED",
                report.trajectories_converged, report.trajectories_total);
  };

  // Stage 3a: known equilibrium input, continuous time.
  BranchOutcome known;
  {
    GridSpec g = opt.lambda_grid_text.empty()
                     ? GridSpec{0.0, 5.0, 50, true}
                     : parse_grid(opt.lambda_grid_text, "--lambda-grid");
    const std::vector<double> lambdas = ddbc::lambda_grid(g.lo, g.hi, g.count);
    const ddbc::VectorXd ubar_known =
        ddbc::VectorXd::Constant(1, ddbc::kCukUbar);
    try {
      const ddbc::LineSearchResult res = ddbc::line_search_stabilize(
          cs, xbar, ubar_known, ddbc::TimeDomain::kContinuous, lambdas,
          parse_objective(opt.objective));
      known.design = res.design;
      known.status = "feasible";
      known.total = static_cast<int>(res.report.size());
      for (const auto& pt : res.report) known.feasible += pt.feasible ? 1 : 0;
      io_step([&] { ddbc::save_report_csv(
                        res.report, (dir / "fig_lambda_search.csv").string());
                    return 0; },
              "writing fig_lambda_search.csv");
      std::printf("[known-ubar-ct] feasible %d/%d; selected lambda=%.6g\n",
                  known.feasible, known.total, known.design->lambda);
      verify_branch(known, "known");
    } catch (const ddbc::AllInfeasibleError& e) {
      known.status = "infeasible";
      known.total = static_cast<int>(e.report.size());
      io_step([&] { ddbc::save_report_csv(
                        e.report, (dir / "fig_lambda_search.csv").string());
                    return 0; },
              "writing fig_lambda_search.csv");
      std::fprintf(stderr, "[known-ubar-ct] all %d grid points infeasible\n",
                   known.total);
    }
  }

  // Stage 3b: unknown equilibrium input (setpoint program), continuous time.
  BranchOutcome unknown;
  {
    GridSpec lg = opt.lambda_grid_text.empty()
                      ? GridSpec{0.6, 1.5, 10, true}
                      : parse_grid(opt.lambda_grid_text, "--lambda-grid");
    GridSpec sg = opt.s_grid_text.empty()
                      ? GridSpec{-0.05, -opt.eps / opt.eta, 20, true}
                      : parse_grid(opt.s_grid_text, "--s-grid");
    const std::vector<double> lambdas =
        ddbc::lambda_grid(lg.lo, lg.hi, lg.count);
    const std::vector<double> s_values =
        ddbc::linspace_grid(sg.lo, sg.hi, sg.count);
    try {
      const ddbc::LineSearchResult res = ddbc::line_search_setpoint(
          cs, xbar, in.ubar, in.gamma, opt.eta, opt.eps, lambdas, s_values,
          parse_objective(opt.objective));
      unknown.design = res.design;
      unknown.design->sigma = in.sigma;
      unknown.status = "feasible";
      unknown.total = static_cast<int>(res.report.size());
      for (const auto& pt : res.report)
        unknown.feasible += pt.feasible ? 1 : 0;
      io_step([&] { ddbc::save_report_csv(
                        res.report,
                        (dir / "fig_lambda_s_search.csv").string());
                    return 0; },
              "writing fig_lambda_s_search.csv");
      std::printf(
          "[unknown-ubar-ct] feasible %d/%d; selected lambda=%.6g s=%.6g\n",
          unknown.feasible, unknown.total, unknown.design->lambda,
          unknown.design->s);
      verify_branch(unknown, "unknown");
    } catch (const ddbc::AllInfeasibleError& e) {
      unknown.status = "infeasible";
      unknown.total = static_cast<int>(e.report.size());
      io_step([&] { ddbc::save_report_csv(
                        e.report, (dir / "fig_lambda_s_search.csv").string());
                    return 0; },
              "writing fig_lambda_s_search.csv");
      std::fprintf(stderr,
                   "[unknown-ubar-ct] all %d grid points infeasible\n",
                   unknown.total);
    }
  }

  // Stage 4: the machine-readable summary.
  ddbc::json summary{
      {"seed", seed},
      {"sigma_min_W0", rc.sigma_min},
      {"gamma", in.gamma},
      {"ubar_designed", in.ubar(0)},
      {"ubar_known", ddbc::kCukUbar},
      {"sigma", in.sigma},
      {"witness_residual_norm", witness.residual.norm()},
      {"known_ubar_ct", branch_to_json(known, false)},
      {"unknown_ubar_ct", branch_to_json(unknown, true)},
  };
  io_step([&] { std::ofstream out(dir / "summary.json");
                if (!out) throw std::runtime_error("cannot open summary.json");
                out << summary.dump(2) << "\n";
                return 0; },
          "writing summary.json");
  std::printf("[reproduce-cuk] summary written to %s\n",
              (dir / "summary.json").string().c_str());

  if (known.status == "infeasible" || unknown.status == "infeasible")
    return kExitInfeasible;
  if ((known.design && !known.verify_passed) ||
      (unknown.design && !unknown.verify_passed))
    return kExitViolations;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Data-driven setpoint control of bilinear systems from noisy data: "
      "collect / synthesize / verify / reproduce-cuk. The BILIN_SEED "
      "environment variable overrides --seed."};
  app.require_subcommand(1);
  Options opt;

  CLI::App* collect =
      app.add_subcommand("collect", "run an open-loop experiment and save "
                                    "the dataset");
  collect->add_option("--preset", opt.preset, "built-in model name (cuk)");
  collect->add_option("--model", opt.model_path, "model JSON file");
  collect->add_option("--T", opt.T, "number of samples")->check(
      CLI::PositiveNumber);
  collect->add_option("--noise-bound", opt.noise_bound,
                      "scalar b for bound b*I on E0 E0', or matrix JSON path");
  collect->add_option("--dt", opt.dt, "sampling interval (continuous time)");
  collect->add_option("--x0", opt.x0, "initial state (comma list); default: "
                                      "setpoint for cuk, zero otherwise")
      ->delimiter(',');
  collect->add_option("--input-lo", opt.input_lo, "input range lower end");
  collect->add_option("--input-hi", opt.input_hi, "input range upper end");
  collect->add_option("--seed", opt.seed, "RNG seed");
  collect->add_option("--out", opt.out, "output directory");

  CLI::App* synth = app.add_subcommand(
      "synthesize", "solve the SDP line search on a saved dataset");
  synth->add_option("--dataset", opt.dataset_path, "dataset JSON file")
      ->required();
  synth->add_option("--mode", opt.mode,
                    "known-ubar-ct | known-ubar-dt | unknown-ubar-ct")
      ->required();
  synth->add_option("--xbar", opt.xbar, "target state (comma list)")
      ->delimiter(',');
  synth->add_option("--ubar", opt.ubar,
                    "equilibrium input (comma list, known modes)")
      ->delimiter(',');
  synth->add_option("--lambda-grid", opt.lambda_grid_text,
                    "lo:hi:count (default 0:5:50, or 0.6:1.5:10 for "
                    "unknown-ubar-ct)");
  synth->add_option("--s-grid", opt.s_grid_text,
                    "lo:hi:count (default -0.05:-eps/eta:20)");
  synth->add_option("--eta", opt.eta, "inner level set (0,1)");
  synth->add_option("--eps", opt.eps, "certified decrease rate > 0");
  synth->add_option("--objective", opt.objective, "volume | diameter");
  synth->add_option("--out", opt.out, "output directory");

  CLI::App* verify = app.add_subcommand(
      "verify", "sampled certificate and closed-loop spot checks");
  verify->add_option("--controller", opt.controller_path,
                     "controller JSON file")
      ->required();
  verify->add_option("--dataset", opt.dataset_path, "dataset JSON file")
      ->required();
  verify->add_option("--preset", opt.preset,
                     "built-in model for closed-loop simulation");
  verify->add_option("--model", opt.model_path,
                     "model JSON file for closed-loop simulation");
  verify->add_option("--samples", opt.samples,
                     "dynamics/state sample count for the certificate");
  verify->add_option("--trials", opt.trials, "closed-loop trajectory count");
  verify->add_option("--horizon", opt.horizon,
                     "simulation horizon (time or steps)");
  verify->add_option("--seed", opt.seed, "RNG seed");
  verify->add_option("--out", opt.out, "output directory");

  CLI::App* repro = app.add_subcommand(
      "reproduce-cuk", "end-to-end converter case study with figure CSVs");
  repro->add_option("--seed", opt.seed, "RNG seed (default 7)");
  repro->add_option("--lambda-grid", opt.lambda_grid_text,
                    "override the default multiplier grid");
  repro->add_option("--s-grid", opt.s_grid_text,
                    "override the default s grid");
  repro->add_option("--eta", opt.eta, "inner level set (0,1)");
  repro->add_option("--eps", opt.eps, "certified decrease rate > 0");
  repro->add_option("--objective", opt.objective, "volume | diameter");
  repro->add_option("--samples", opt.samples,
                    "certificate sample count per design");
  repro->add_option("--trials", opt.trials, "closed-loop trajectory count");
  repro->add_option("--horizon", opt.horizon, "closed-loop horizon");
  repro->add_option("--out", opt.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (collect->parsed()) return cmd_collect(opt);
    if (synth->parsed()) return cmd_synthesize(opt);
    if (verify->parsed()) return cmd_verify(opt);
    if (repro->parsed()) return cmd_reproduce_cuk(opt);
    return kExitInvalid;
  } catch (const CliFailure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return f.code;
  } catch (const ddbc::AllInfeasibleError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInfeasible;
  } catch (const ddbc::SolverFailureError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInfeasible;
  } catch (const std::exception& e) {
    // Remaining library errors signal invalid data or parameters.
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvalid;
  }
}
