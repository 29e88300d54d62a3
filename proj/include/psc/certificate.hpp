#pragma once

#include "psc/core.hpp"
#include "psc/field.hpp"
#include "psc/system.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace psc {

enum class InfeasiblePolicy { hold_nominal, max_ascent, raise_error };

struct CertificateParams {
  double alpha_gain = 1.0;  // alpha(y) = alpha_gain * y
  double epsilon = 0.1;     // tolerated unsafe probability
  double grad_tol = 1e-8;
  InfeasiblePolicy infeasibility = InfeasiblePolicy::hold_nominal;

  void validate() const {
    if (!(alpha_gain > 0.0))
      throw ConfigError("certificate: alpha gain must be positive");
    if (!(epsilon > 0.0 && epsilon < 1.0))
      throw ConfigError("certificate: epsilon must lie in (0,1)");
  }
};

// The per-state half-space {u : a.u >= b} keeping the safe-probability
// drift admissible, with diagnostics for logging.
struct LinearConstraint {
  Vec a;
  double b = 0.0;
  double F = 0.0;      // field value at the queried state
  double drift = 0.0;  // control-independent generator part
  double gnorm = 0.0;  // |a|
  bool satisfied(const Vec& u, double tol = 0.0) const {
    return a.dot(u) >= b - tol;
  }
};

struct FilterDecision {
  Vec u;
  double kappa = 0.0;
  bool active = false;        // a correction was applied
  bool feasible = true;       // false when |a| ~ 0 with the bound violated
  double exposed_risk = 0.0;  // b - a.u_nominal in the infeasible case
  LinearConstraint constraint;
};

namespace detail {

// Augmented dynamics over (T, L, phi, x): drift, control gain and noise
// gain of the lifted diffusion the field is a function of.
struct AugmentedDynamics {
  Vec f_tilde;
  Mat g_tilde;
  Mat sigma_tilde;
};

inline AugmentedDynamics augmented_dynamics(const SdeSystem& sys,
                                            const BarrierSpec& spec,
                                            const AugmentedState& z) {
  const int n = sys.n;
  AugmentedDynamics d;
  const Vec fx = sys.f(z.x);
  const Mat gx = sys.g(z.x);
  const Mat sx = sys.sigma(z.x);
  const Vec gp = spec.grad_phi(z.x);
  d.f_tilde.resize(3 + n);
  d.f_tilde[0] = spec.f_T();
  d.f_tilde[1] = spec.margin_rate(z.L);
  d.f_tilde[2] = phi_drift(sys, spec, z.x);
  d.f_tilde.tail(n) = fx;
  d.g_tilde = Mat::Zero(3 + n, sys.m);
  d.g_tilde.row(2) = gp.transpose() * gx;
  d.g_tilde.bottomRows(n) = gx;
  d.sigma_tilde = Mat::Zero(3 + n, sys.xi);
  d.sigma_tilde.row(2) = gp.transpose() * sx;
  d.sigma_tilde.bottomRows(n) = sx;
  return d;
}

}  // namespace detail

// Generator of the lifted diffusion applied to the field: the expected
// instantaneous rate of change of F under control u.
inline double d_f(const SafeProbField& field, const SdeSystem& sys,
                  const BarrierSpec& spec, const AugmentedState& z,
                  const Vec& u) {
  const auto q = field.query_z(z);
  const auto dyn = detail::augmented_dynamics(sys, spec, z);
  const Mat ss = dyn.sigma_tilde * dyn.sigma_tilde.transpose();
  return q.grad.dot(dyn.f_tilde) + (q.grad.transpose() * dyn.g_tilde).dot(u) +
         0.5 * (ss.array() * q.hess.array()).sum();
}

// Affine form of the admissibility condition
//   d_f(z, u) >= -alpha (F(z) - (1 - epsilon))
// as a.u >= b, so the control-dependent part sits alone on the left.
inline LinearConstraint safety_constraint(const SafeProbField& field,
                                          const SdeSystem& sys,
                                          const BarrierSpec& spec,
                                          const CertificateParams& prm,
                                          const AugmentedState& z) {
  prm.validate();
  const auto q = field.query_z(z);
  const auto dyn = detail::augmented_dynamics(sys, spec, z);
  const Mat ss = dyn.sigma_tilde * dyn.sigma_tilde.transpose();
  LinearConstraint c;
  c.a = (q.grad.transpose() * dyn.g_tilde).transpose();
  c.drift = q.grad.dot(dyn.f_tilde) + 0.5 * (ss.array() * q.hess.array()).sum();
  c.F = q.value;
  c.b = -prm.alpha_gain * (q.value - (1.0 - prm.epsilon)) - c.drift;
  c.gnorm = c.a.norm();
  return c;
}

// Smallest non-negative multiple of a' added to u0 that satisfies the
// constraint; the infeasible branch (degenerate a with the bound violated)
// is resolved by the caller via the policy in `prm`.
inline FilterDecision project_onto_constraint(const Vec& u0,
                                              const LinearConstraint& c,
                                              const CertificateParams& prm) {
  FilterDecision d;
  d.constraint = c;
  d.u = u0;
  const double slack = c.a.dot(u0) - c.b;
  if (slack >= 0.0) return d;
  if (c.gnorm > prm.grad_tol) {
    d.kappa = -slack / c.a.squaredNorm();
    d.u = u0 + d.kappa * c.a;
    d.active = true;
    return d;
  }
  d.feasible = false;
  d.exposed_risk = -slack;
  return d;
}

// Projection in the metric of a positive-definite weight H: the correction
// direction tilts to H^-1 a and kappa becomes the exact multiplier.
inline FilterDecision project_onto_constraint(const Vec& u0,
                                              const LinearConstraint& c,
                                              const CertificateParams& prm,
                                              const Mat& H) {
  if (H.rows() != u0.size() || H.cols() != u0.size())
    throw ConfigError("qp filter: weight must be m x m");
  Eigen::LLT<Mat> llt(H);
  if (llt.info() != Eigen::Success)
    throw ConfigError("qp filter: weight must be positive definite");
  FilterDecision d;
  d.constraint = c;
  d.u = u0;
  const double slack = c.a.dot(u0) - c.b;
  if (slack >= 0.0) return d;
  if (c.gnorm > prm.grad_tol) {
    const Vec hinv_a = llt.solve(c.a);
    d.kappa = -slack / c.a.dot(hinv_a);
    d.u = u0 + d.kappa * hinv_a;
    d.active = true;
    return d;
  }
  d.feasible = false;
  d.exposed_risk = -slack;
  return d;
}

namespace detail {

inline void resolve_infeasible(FilterDecision& d, const Vec& u0,
                               const SdeSystem& sys, const BarrierSpec& spec,
                               const CertificateParams& prm,
                               const AugmentedState& z) {
  switch (prm.infeasibility) {
    case InfeasiblePolicy::raise_error:
      throw InfeasibleConstraint(d.exposed_risk);
    case InfeasiblePolicy::max_ascent: {
      // The field offers no direction; climb the raw barrier instead.
      const Vec dir =
          (spec.grad_phi(z.x).transpose() * sys.g(z.x)).transpose();
      if (dir.norm() > prm.grad_tol) {
        d.u = u0 + dir / dir.norm();
        d.active = true;
      }
      return;
    }
    default:
      return;  // hold the nominal
  }
}

}  // namespace detail

// Nominal control plus the smallest correction along a' that restores
// admissibility.
inline FilterDecision additive_filter(const Policy& nominal,
                                      const SafeProbField& field,
                                      const SdeSystem& sys,
                                      const BarrierSpec& spec,
                                      const CertificateParams& prm,
                                      const AugmentedState& z) {
  const Vec u0 = nominal(z.x);
  const LinearConstraint c = safety_constraint(field, sys, spec, prm, z);
  FilterDecision d = project_onto_constraint(u0, c, prm);
  if (!d.feasible) detail::resolve_infeasible(d, u0, sys, spec, prm, z);
  return d;
}

// Projection of the nominal onto the half-space in the metric induced by a
// positive-definite weight H (empty H means identity, which reduces to the
// additive form).
inline FilterDecision qp_filter(const Policy& nominal,
                                const SafeProbField& field,
                                const SdeSystem& sys, const BarrierSpec& spec,
                                const CertificateParams& prm,
                                const AugmentedState& z, const Mat& H = Mat()) {
  const Vec u0 = nominal(z.x);
  const LinearConstraint c = safety_constraint(field, sys, spec, prm, z);
  FilterDecision d = H.size() == 0
                         ? project_onto_constraint(u0, c, prm)
                         : project_onto_constraint(u0, c, prm, H);
  if (!d.feasible) detail::resolve_infeasible(d, u0, sys, spec, prm, z);
  return d;
}

using StageCost = std::function<double(const Vec& x_next_mean, const Vec& u)>;

struct MpcConfig {
  double u_lo = -10.0;
  double u_hi = 10.0;
  int candidates = 41;  // per input dimension
  double dt = 0.1;
  int horizon = 1;  // longer lookahead is an extension point, not supported
};

// One-step lookahead over a candidate grid restricted to the admissible
// half-space; the cost sees the Euler-step mean of the next state.
inline FilterDecision mpc_filter(const StageCost& cost,
                                 const SafeProbField& field,
                                 const SdeSystem& sys, const BarrierSpec& spec,
                                 const CertificateParams& prm,
                                 const AugmentedState& z,
                                 const MpcConfig& mpc = {}) {
  if (mpc.horizon != 1)
    throw ConfigError("mpc filter: only one-step lookahead is supported");
  if (mpc.candidates < 2 || !(mpc.u_hi > mpc.u_lo))
    throw ConfigError("mpc filter: bad candidate grid");
  const LinearConstraint c = safety_constraint(field, sys, spec, prm, z);
  const int m = sys.m;

  FilterDecision d;
  d.constraint = c;
  d.u = Vec::Zero(m);

  bool apply_constraint = true;
  if (c.gnorm <= prm.grad_tol && !c.satisfied(Vec::Zero(m))) {
    // constraint is u-independent and violated; no grid point can help
    d.feasible = false;
    d.exposed_risk = c.b;
    switch (prm.infeasibility) {
      case InfeasiblePolicy::raise_error:
        throw InfeasibleConstraint(c.b);
      case InfeasiblePolicy::max_ascent: {
        const Vec dir =
            (spec.grad_phi(z.x).transpose() * sys.g(z.x)).transpose();
        if (dir.norm() > prm.grad_tol) {
          d.u = dir / dir.norm();
          d.active = true;
          return d;
        }
        apply_constraint = false;  // nothing to climb; best effort on cost
        break;
      }
      default:
        apply_constraint = false;  // optimize the cost, bound dropped
    }
  }

  const Vec fx = sys.f(z.x);
  const Mat gx = sys.g(z.x);
  auto evaluate = [&](const Vec& lo, const Vec& hi, Vec& best,
                      double& best_cost) {
    long total = 1;
    for (int j = 0; j < m; ++j) total *= mpc.candidates;
    for (long s = 0; s < total; ++s) {
      long rem = s;
      Vec u(m);
      for (int j = 0; j < m; ++j) {
        const int k = static_cast<int>(rem % mpc.candidates);
        rem /= mpc.candidates;
        u[j] = lo[j] + (hi[j] - lo[j]) * k / (mpc.candidates - 1);
      }
      if (apply_constraint && !c.satisfied(u)) continue;
      const Vec x_next = z.x + (fx + gx * u) * mpc.dt;
      const double j_val = cost(x_next, u);
      if (!best.size() || j_val < best_cost) {
        best = u;
        best_cost = j_val;
      }
    }
  };

  Vec best;
  double best_cost = 0.0;
  evaluate(Vec::Constant(m, mpc.u_lo), Vec::Constant(m, mpc.u_hi), best,
           best_cost);
  if (!best.size() && c.gnorm > prm.grad_tol) {
    // grid missed the half-space entirely: recenter once on the point of
    // the boundary hyperplane nearest the origin
    const Vec anchor = (c.b / c.a.squaredNorm()) * c.a;
    const Vec span = Vec::Constant(m, (mpc.u_hi - mpc.u_lo) * 0.5);
    evaluate(anchor - span, anchor + span, best, best_cost);
  }
  if (!best.size()) throw EmptyCandidateSet();
  d.u = best;
  d.active = true;  // the grid re-decides every step
  return d;
}

// Control meeting the admissibility bound with equality at minimum norm,
// the stress-test policy that rides the constraint boundary.
inline Vec worst_case_control(const SafeProbField& field, const SdeSystem& sys,
                              const BarrierSpec& spec,
                              const CertificateParams& prm,
                              const AugmentedState& z) {
  const LinearConstraint c = safety_constraint(field, sys, spec, prm, z);
  if (c.gnorm <= prm.grad_tol) throw DegenerateGradient(c.gnorm);
  return (c.b / c.a.squaredNorm()) * c.a;
}

}  // namespace psc
