#pragma once

#include "psc/baselines.hpp"
#include "psc/build_id.hpp"
#include "psc/certificate.hpp"
#include "psc/csv.hpp"
#include "psc/estimators.hpp"
#include "psc/field.hpp"
#include "psc/rl.hpp"
#include "psc/scenario.hpp"
#include "psc/system.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace psc {

enum class ControllerKind { proposed, stocbf, prsbc, cvar, nominal };

inline const char* controller_name(ControllerKind k) {
  switch (k) {
    case ControllerKind::proposed: return "proposed";
    case ControllerKind::stocbf: return "stocbf";
    case ControllerKind::prsbc: return "prsbc";
    case ControllerKind::cvar: return "cvar";
    default: return "nominal";
  }
}

inline ControllerKind controller_from_name(const std::string& s) {
  if (s == "proposed") return ControllerKind::proposed;
  if (s == "stocbf") return ControllerKind::stocbf;
  if (s == "prsbc") return ControllerKind::prsbc;
  if (s == "cvar") return ControllerKind::cvar;
  if (s == "nominal") return ControllerKind::nominal;
  throw ConfigError("experiments: unknown controller '" + s + "'");
}

inline const std::vector<ControllerKind>& all_controllers() {
  static const std::vector<ControllerKind> kinds{
      ControllerKind::proposed, ControllerKind::stocbf, ControllerKind::prsbc,
      ControllerKind::cvar, ControllerKind::nominal};
  return kinds;
}

// Tabulates the safe probability on the scenario grid under its reference
// policy.  Node i draws from stream (seed, i), so the table is identical
// for any job count.
inline SafeProbField tabulate_scenario_field(const Scenario& sc,
                                             int jobs = 1) {
  const SdeSystem sys = sc.make_system();
  const BarrierSpec spec = sc.make_barrier();
  const Policy ref = sc.estimation.reference == "nominal" ? sc.make_nominal()
                                                          : zero_policy(1);
  const long samples = sc.estimation.samples;
  const double dt = sc.run.dt;
  NodeEstimator node = [sys, spec, ref, samples,
                        dt](const AugmentedState& z, std::uint64_t seed) {
    return mc_probability(sys, spec, ref, z, samples, dt, seed);
  };
  SafeProbField field =
      tabulate_field(sc.axes(), sc.estimation.interp, spec, vec1(sc.run.x0),
                     node, sc.estimation.seed, jobs);
  field.provenance.algorithm = sc.estimation.algorithm;
  field.provenance.samples = samples;
  field.provenance.seed = sc.estimation.seed;
  field.provenance.reference = sc.estimation.reference;
  return field;
}

// Per-step ensemble summaries over a batch of closed-loop trajectories.
// mean_f averages the certificate value at the hull-clamped state; the
// safe fraction counts paths that have never left the safe set.
struct TrajectoryStats {
  std::vector<double> t;
  std::vector<double> mean_f;
  std::vector<double> mean_x;
  std::vector<double> std_x;
  std::vector<double> safe_frac;
  int n_traj = 0;
};

namespace detail {

// One closed-loop batch.  Trajectory i draws its path noise from stream
// (seed, i) and is written into row i, so the aggregation below does not
// depend on how trajectories are spread over threads.
template <typename Control>
inline TrajectoryStats run_batch(const Scenario& sc, const BarrierSpec& spec,
                                 const SafeProbField& field,
                                 const Control& control, int n_traj,
                                 std::uint64_t seed, int jobs) {
  const SdeSystem sys = sc.make_system();
  const int steps = static_cast<int>(std::llround(sc.run.t_max / sc.run.dt));
  if (steps < 1) throw ConfigError("experiments: t_max shorter than one step");
  const double dt = sc.run.dt;
  const double lo = field.axes()[0].lo;
  const double hi = field.axes()[0].hi();

  TrajectoryStats out;
  out.n_traj = n_traj;
  if (n_traj == 0) return out;

  Eigen::MatrixXd f_val(n_traj, steps + 1);
  Eigen::MatrixXd x_val(n_traj, steps + 1);
  Eigen::MatrixXd alive(n_traj, steps + 1);

  auto one = [&](int i) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> gauss(0.0, std::sqrt(dt));
    Vec x = vec1(sc.run.x0);
    bool ok = true;
    for (int k = 0; k <= steps; ++k) {
      const double xc = std::clamp(x[0], lo, hi);
      f_val(i, k) = field.query(vec1(xc)).value;
      x_val(i, k) = x[0];
      ok = ok && spec.phi(x) >= spec.ell0;
      alive(i, k) = ok ? 1.0 : 0.0;
      if (k == steps) break;
      const Vec u = control(x, xc, i, k);
      x = em_step(sys, x, u, dt, vec1(gauss(rng)), k);
    }
  };

  jobs = std::max(1, jobs);
  if (jobs == 1 || n_traj < 2 * jobs) {
    for (int i = 0; i < n_traj; ++i) one(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w)
      pool.emplace_back([&, w] {
        for (int i = w; i < n_traj; i += jobs) one(i);
      });
    for (auto& th : pool) th.join();
  }

  out.t.resize(steps + 1);
  out.mean_f.resize(steps + 1);
  out.mean_x.resize(steps + 1);
  out.std_x.resize(steps + 1);
  out.safe_frac.resize(steps + 1);
  for (int k = 0; k <= steps; ++k) {
    out.t[k] = k * dt;
    out.mean_f[k] = f_val.col(k).mean();
    out.mean_x[k] = x_val.col(k).mean();
    const double var =
        (x_val.col(k).array() - out.mean_x[k]).square().mean();
    out.std_x[k] = std::sqrt(var);
    out.safe_frac[k] = alive.col(k).mean();
  }
  return out;
}

}  // namespace detail

// Runs each controller at its least safe admissible setting: equality on
// its own condition, the tail condition met exactly for the CVaR rule.
// A dead gradient falls back to zero control for the step.
inline TrajectoryStats run_worst_case(const Scenario& sc,
                                      const SafeProbField& field,
                                      ControllerKind kind, int n_traj,
                                      std::uint64_t seed, int jobs = 1) {
  const SdeSystem sys = sc.make_system();
  const BarrierSpec spec = sc.make_barrier();
  const CertificateParams prm = sc.certificate;
  const BaselineParams bprm = sc.baselines;
  const Policy nom = sc.make_nominal();
  const int steps = static_cast<int>(std::llround(sc.run.t_max / sc.run.dt));
  const double dt = sc.run.dt;

  auto control = [&, kind](const Vec& x, double xc, int i, int k) -> Vec {
    switch (kind) {
      case ControllerKind::proposed:
        try {
          return worst_case_control(field, sys, spec, prm,
                                    augment(spec, vec1(xc), 0.0));
        } catch (const DegenerateGradient&) {
          return vec1(0.0);
        }
      case ControllerKind::stocbf:
        try {
          return equality_control(stocbf_constraint(sys, spec, bprm, x),
                                  bprm.grad_tol);
        } catch (const DegenerateGradient&) {
          return vec1(0.0);
        }
      case ControllerKind::prsbc:
        try {
          return equality_control(prsbc_constraint(sys, spec, bprm, x, dt),
                                  bprm.grad_tol);
        } catch (const DegenerateGradient&) {
          return vec1(0.0);
        }
      case ControllerKind::cvar:
        try {
          return cvar_equality_control(
              sys, spec, bprm, x, dt,
              derive_stream(seed, 0x100000 + static_cast<std::uint64_t>(i) *
                                                 steps +
                                       static_cast<std::uint64_t>(k)));
        } catch (const CvarInfeasible&) {
          return vec1(0.0);
        }
      default:
        return nom(x);
    }
  };
  return detail::run_batch(sc, spec, field, control, n_traj, seed, jobs);
}

// Runs the nominal controller through each safety filter; the nominal
// passes untouched when its condition already holds.
inline TrajectoryStats run_switching(const Scenario& sc,
                                     const SafeProbField& field,
                                     ControllerKind kind, int n_traj,
                                     std::uint64_t seed, int jobs = 1) {
  const SdeSystem sys = sc.make_system();
  const BarrierSpec spec = sc.make_barrier();
  const CertificateParams prm = sc.certificate;
  const BaselineParams bprm = sc.baselines;
  const Policy nom = sc.make_nominal();
  const int steps = static_cast<int>(std::llround(sc.run.t_max / sc.run.dt));
  const double dt = sc.run.dt;

  auto control = [&, kind](const Vec& x, double xc, int i, int k) -> Vec {
    switch (kind) {
      case ControllerKind::proposed:
        return additive_filter(nom, field, sys, spec, prm,
                               augment(spec, vec1(xc), 0.0))
            .u;
      case ControllerKind::stocbf:
        return stocbf_filter(nom, sys, spec, bprm, x).u;
      case ControllerKind::prsbc:
        return prsbc_filter(nom, sys, spec, bprm, x, dt).u;
      case ControllerKind::cvar:
        try {
          return cvar_filter(
              nom, sys, spec, bprm, x, dt,
              derive_stream(seed, 0x100000 + static_cast<std::uint64_t>(i) *
                                                 steps +
                                       static_cast<std::uint64_t>(k)));
        } catch (const CvarInfeasible&) {
          return nom(x);
        }
      default:
        return nom(x);
    }
  };
  return detail::run_batch(sc, spec, field, control, n_traj, seed, jobs);
}

inline PgResult run_pg(const Scenario& sc, bool filtered, std::uint64_t seed) {
  if (!sc.has_chain)
    throw ConfigError("experiments: scenario has no chain section");
  return train_pg(sc.chain, filtered ? sc.filter : identity_filter(), sc.pg,
                  seed);
}

inline QResult run_q(const Scenario& sc, bool filtered, std::uint64_t seed) {
  if (!sc.has_chain)
    throw ConfigError("experiments: scenario has no chain section");
  return train_q(sc.chain, filtered ? sc.filter : identity_filter(),
                 sc.qlearn, seed);
}

// Every figure file carries the scenario name, master seed and build tag
// so a plot traces back to the exact stream and binary that made it.

inline void write_trajectory_csv(const std::string& path,
                                 const Scenario& sc, ControllerKind kind,
                                 const TrajectoryStats& ts,
                                 std::uint64_t seed) {
  CsvWriter csv(path, {"t", "mean_f", "mean_x", "std_x", "safe_frac",
                       "controller", "scenario", "seed", "build"});
  for (std::size_t k = 0; k < ts.t.size(); ++k)
    csv.row({csv_num(ts.t[k]), csv_num(ts.mean_f[k]), csv_num(ts.mean_x[k]),
             csv_num(ts.std_x[k]), csv_num(ts.safe_frac[k]),
             controller_name(kind), sc.name, std::to_string(seed), kBuildId});
}

inline void write_pg_csv(const std::string& path, const Scenario& sc,
                         const PgResult& res, const SafetyFilterG& g,
                         std::uint64_t seed) {
  CsvWriter csv(path, {"iter", "mean_return", "filter", "scenario", "seed",
                       "build"});
  for (std::size_t i = 0; i < res.mean_return.size(); ++i)
    csv.row({std::to_string(i + 1), csv_num(res.mean_return[i]),
             g.serialize(), sc.name, std::to_string(seed), kBuildId});
}

inline void write_q_csv(const std::string& path, const Scenario& sc,
                        const QResult& res, const SafetyFilterG& g,
                        std::uint64_t seed) {
  CsvWriter csv(path, {"x", "q_minus", "q_zero", "q_plus", "filter",
                       "scenario", "seed", "build"});
  for (int x = 0; x < res.table.q.rows(); ++x)
    csv.row({std::to_string(x), csv_num(res.table.q(x, 0)),
             csv_num(res.table.q(x, 1)), csv_num(res.table.q(x, 2)),
             g.serialize(), sc.name, std::to_string(seed), kBuildId});
}

}  // namespace psc
