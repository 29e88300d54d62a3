#pragma once

#include "psc/certificate.hpp"
#include "psc/core.hpp"
#include "psc/normal.hpp"
#include "psc/system.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace psc {

// How the chance-constraint tightening treats the noise intensity: `rate`
// applies the quantile to the unit-time intensity |grad_phi' sigma|, while
// `per_step` divides by sqrt(dt) so the bound covers a single Euler
// increment.  The per-step reading makes the tightening so strong at
// dt = 0.1 that the equality controller floats well above every other
// condition; rate is the default.
enum class PrsbcScaling { rate, per_step };

struct BaselineParams {
  double eta = 1.0;            // barrier contraction gain
  double epsilon_prsbc = 0.1;  // chance-constraint violation budget
  double gamma_cvar = 0.65;    // tail-mean contraction factor
  double beta_cvar = 0.1;      // tail fraction averaged by CVaR
  int cvar_samples = 1000;     // one-step successors per CVaR evaluation
  PrsbcScaling prsbc_scaling = PrsbcScaling::rate;
  double grad_tol = 1e-8;  // below this the correction direction is dead

  void validate() const {
    if (!(eta > 0.0)) throw ConfigError("baselines: eta must be positive");
    if (!(epsilon_prsbc > 0.0 && epsilon_prsbc < 1.0))
      throw ConfigError("baselines: prsbc epsilon must lie in (0,1)");
    if (!(gamma_cvar > 0.0 && gamma_cvar < 1.0))
      throw ConfigError("baselines: cvar gamma must lie in (0,1)");
    if (!(beta_cvar > 0.0 && beta_cvar < 1.0))
      throw ConfigError("baselines: cvar beta must lie in (0,1)");
    if (cvar_samples < 100)
      throw ConfigError("baselines: cvar needs at least 100 samples");
  }
};

// Barrier-contraction condition  D_phi(x, u) >= -eta phi(x)  as a.u >= b.
// The diagnostics slots mirror the certificate constraint so logs line up:
// F carries phi(x) and drift the control-free generator part.
inline LinearConstraint stocbf_constraint(const SdeSystem& sys,
                                          const BarrierSpec& spec,
                                          const BaselineParams& prm,
                                          const Vec& x) {
  prm.validate();
  LinearConstraint c;
  c.a = (spec.grad_phi(x).transpose() * sys.g(x)).transpose();
  c.drift = phi_drift(sys, spec, x);
  c.F = spec.phi(x);
  c.b = -prm.eta * c.F - c.drift;
  c.gnorm = c.a.norm();
  return c;
}

// Chance-constrained variant: the one-step increment of phi is Gaussian
// with mean (drift + a.u) dt and deviation |grad_phi' sigma| sqrt(dt), so
// holding the contraction with probability 1 - epsilon costs the
// (1 - epsilon)-quantile of the noise term on top of the mean condition.
inline LinearConstraint prsbc_constraint(const SdeSystem& sys,
                                         const BarrierSpec& spec,
                                         const BaselineParams& prm,
                                         const Vec& x, double dt) {
  if (!(dt > 0.0)) throw ConfigError("baselines: dt must be positive");
  LinearConstraint c = stocbf_constraint(sys, spec, prm, x);
  const double intensity =
      (spec.grad_phi(x).transpose() * sys.sigma(x)).norm();
  const double q = normal_quantile(1.0 - prm.epsilon_prsbc);
  const double scale =
      prm.prsbc_scaling == PrsbcScaling::per_step ? 1.0 / std::sqrt(dt) : 1.0;
  c.b += q * intensity * scale;
  return c;
}

namespace detail {

inline CertificateParams projection_shim(double grad_tol) {
  CertificateParams shim;
  shim.grad_tol = grad_tol;
  return shim;
}

}  // namespace detail

inline FilterDecision stocbf_filter(const Policy& nominal,
                                    const SdeSystem& sys,
                                    const BarrierSpec& spec,
                                    const BaselineParams& prm, const Vec& x) {
  return project_onto_constraint(nominal(x), stocbf_constraint(sys, spec, prm, x),
                                 detail::projection_shim(prm.grad_tol));
}

inline FilterDecision prsbc_filter(const Policy& nominal, const SdeSystem& sys,
                                   const BarrierSpec& spec,
                                   const BaselineParams& prm, const Vec& x,
                                   double dt) {
  return project_onto_constraint(nominal(x),
                                 prsbc_constraint(sys, spec, prm, x, dt),
                                 detail::projection_shim(prm.grad_tol));
}

// Control that meets an affine condition with equality: the riskiest
// admissible choice, used by the worst-case comparison runs.
inline Vec equality_control(const LinearConstraint& c, double grad_tol = 1e-8) {
  if (!(c.gnorm > grad_tol)) throw DegenerateGradient(c.gnorm);
  return (c.b / c.a.squaredNorm()) * c.a;
}

// Mean of the worst beta fraction, Rockafellar-Uryasev sample form: with
// y sorted ascending and k = ceil(beta n), the tail mean is the k-th value
// minus the averaged shortfall below it.  Exact for fractional beta n.
inline double empirical_cvar(std::vector<double>& ys, double beta) {
  if (ys.empty()) throw ConfigError("cvar: empty sample");
  if (!(beta > 0.0 && beta <= 1.0))
    throw ConfigError("cvar: beta must lie in (0,1]");
  std::sort(ys.begin(), ys.end());
  const double n = static_cast<double>(ys.size());
  const std::size_t k = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(beta * n - 1e-12)), 1, ys.size());
  const double var = ys[k - 1];
  double shortfall = 0.0;
  for (std::size_t i = 0; i + 1 < k; ++i) shortfall += var - ys[i];
  return var - shortfall / (beta * n);
}

namespace detail {

// One batch of standard normal increments shared by every candidate
// control in a CVaR search, so the empirical tail is a smooth function
// of u and bisection is meaningful.  Plain MatrixXd: the sample count
// exceeds the small-state cap baked into Mat.
inline Eigen::MatrixXd cvar_noise(int samples, int xi, std::uint64_t seed) {
  auto rng = make_rng(seed, 0x6376);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd w(samples, xi);
  for (int i = 0; i < samples; ++i)
    for (int j = 0; j < xi; ++j) w(i, j) = gauss(rng);
  return w;
}

inline double cvar_of_control(const SdeSystem& sys, const BarrierSpec& spec,
                              const BaselineParams& prm, const Vec& x,
                              const Vec& u, double dt,
                              const Eigen::MatrixXd& w) {
  const Vec base = x + (sys.f(x) + sys.g(x) * u) * dt;
  const Mat spread = sys.sigma(x) * std::sqrt(dt);
  std::vector<double> ys(static_cast<std::size_t>(w.rows()));
  for (int i = 0; i < w.rows(); ++i)
    ys[static_cast<std::size_t>(i)] =
        spec.phi(base + spread * w.row(i).transpose());
  return empirical_cvar(ys, prm.beta_cvar);
}

// Expands [0, hi] along dir until the tail bound is met; returns false if
// the cap is reached without success.
inline bool bracket_cvar(const SdeSystem& sys, const BarrierSpec& spec,
                         const BaselineParams& prm, const Vec& x,
                         const Vec& u0, const Vec& dir, double dt,
                         const Eigen::MatrixXd& w, double bound, double& hi) {
  hi = 1.0;
  for (int it = 0; it < 24; ++it) {
    if (cvar_of_control(sys, spec, prm, x, u0 + hi * dir, dt, w) >= bound)
      return true;
    hi *= 2.0;
  }
  return false;
}

}  // namespace detail

// Smallest correction along the barrier direction whose empirical tail
// mean of phi after one step meets  CVaR_beta >= gamma phi(x).  The
// nominal action passes through untouched when it already complies.
inline Vec cvar_filter(const Policy& nominal, const SdeSystem& sys,
                       const BarrierSpec& spec, const BaselineParams& prm,
                       const Vec& x, double dt, std::uint64_t seed) {
  prm.validate();
  if (!(dt > 0.0)) throw ConfigError("baselines: dt must be positive");
  const Eigen::MatrixXd w = detail::cvar_noise(prm.cvar_samples, sys.xi, seed);
  const double bound = prm.gamma_cvar * spec.phi(x);
  const Vec u0 = nominal(x);
  if (detail::cvar_of_control(sys, spec, prm, x, u0, dt, w) >= bound) return u0;
  Vec dir = (spec.grad_phi(x).transpose() * sys.g(x)).transpose();
  if (dir.norm() <= prm.grad_tol) throw CvarInfeasible();
  dir /= dir.norm();
  double hi;
  if (!detail::bracket_cvar(sys, spec, prm, x, u0, dir, dt, w, bound, hi))
    throw CvarInfeasible();
  double lo = hi > 1.0 ? hi / 2.0 : 0.0;
  while (hi - lo > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    if (detail::cvar_of_control(sys, spec, prm, x, u0 + mid * dir, dt, w) >=
        bound)
      hi = mid;
    else
      lo = mid;
  }
  return u0 + hi * dir;
}

// Control meeting the tail condition with equality within 1e-4, the CVaR
// analogue of equality_control.  Monotone bisection along the barrier
// direction; a coarse scan restores a bracket if the doubling search
// lands on a non-monotone stretch.
inline Vec cvar_equality_control(const SdeSystem& sys, const BarrierSpec& spec,
                                 const BaselineParams& prm, const Vec& x,
                                 double dt, std::uint64_t seed) {
  prm.validate();
  if (!(dt > 0.0)) throw ConfigError("baselines: dt must be positive");
  const Eigen::MatrixXd w = detail::cvar_noise(prm.cvar_samples, sys.xi, seed);
  const double bound = prm.gamma_cvar * spec.phi(x);
  Vec dir = (spec.grad_phi(x).transpose() * sys.g(x)).transpose();
  if (dir.norm() <= prm.grad_tol) throw CvarInfeasible();
  dir /= dir.norm();
  auto excess = [&](double s) {
    return detail::cvar_of_control(sys, spec, prm, x, Vec(s * dir), dt, w) -
           bound;
  };
  double lo = 0.0, hi = 0.0;
  double span = 1.0;
  bool bracketed = false;
  for (int it = 0; it < 24 && !bracketed; ++it, span *= 2.0) {
    if (excess(-span) * excess(span) <= 0.0) {
      lo = -span;
      hi = span;
      bracketed = true;
    }
  }
  if (!bracketed) {
    // scan for a sign change; the affine systems never get here
    const int pts = 257;
    double prev_s = -span, prev_e = excess(prev_s);
    for (int i = 1; i < pts && !bracketed; ++i) {
      const double s = -span + 2.0 * span * i / (pts - 1);
      const double e = excess(s);
      if (prev_e * e <= 0.0) {
        lo = prev_s;
        hi = s;
        bracketed = true;
      }
      prev_s = s;
      prev_e = e;
    }
    if (!bracketed) throw CvarInfeasible();
  }
  if (excess(lo) > 0.0) std::swap(lo, hi);  // keep excess(lo) <= 0 <= excess(hi)
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double e = excess(mid);
    if (std::abs(e) <= 1e-4) return Vec(mid * dir);
    if (e < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return Vec(0.5 * (lo + hi) * dir);
}

}  // namespace psc
