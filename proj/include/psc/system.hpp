#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "psc/core.hpp"

namespace psc {

// Controlled diffusion dX = (f(X) + g(X) U) dt + sigma(X) dW with
// state dim n, control dim m, noise dim xi.
struct SdeSystem {
  int n = 1, m = 1, xi = 1;
  std::function<Vec(const Vec&)> f;      // drift, n
  std::function<Mat(const Vec&)> g;      // control gain, n x m
  std::function<Mat(const Vec&)> sigma;  // noise gain, n x xi

  void validate(const Vec& probe) const {
    if (!f || !g || !sigma) throw ConfigError("system callables not set");
    if (probe.size() != n) throw ConfigError("probe state has wrong dimension");
    const Vec fv = f(probe);
    const Mat gv = g(probe);
    const Mat sv = sigma(probe);
    if (fv.size() != n) throw ConfigError("f(x) must have dimension n");
    if (gv.rows() != n || gv.cols() != m) throw ConfigError("g(x) must be n x m");
    if (sv.rows() != n || sv.cols() != xi) throw ConfigError("sigma(x) must be n x xi");
  }
};

// Scalar system from scalar callables; the common case throughout.
inline SdeSystem scalar_system(std::function<double(double)> f,
                               std::function<double(double)> g,
                               std::function<double(double)> sigma) {
  SdeSystem sys;
  sys.f = [f = std::move(f)](const Vec& x) { return vec1(f(x[0])); };
  sys.g = [g = std::move(g)](const Vec& x) { return mat1(g(x[0])); };
  sys.sigma = [sigma = std::move(sigma)](const Vec& x) { return mat1(sigma(x[0])); };
  return sys;
}

enum class SafetyObjective {
  stay_nominal = 1,    // remain in the safe set under the current policy
  stay_supremum = 2,   // remain in the safe set under the best policy
  reach_nominal = 3,   // enter the safe set under the current policy
  reach_supremum = 4,  // enter the safe set under the best policy
};

inline bool is_stay(SafetyObjective o) {
  return o == SafetyObjective::stay_nominal || o == SafetyObjective::stay_supremum;
}

// fixed: safety is judged over a window of constant length H ahead of the
// current time, so the outlook T stays at H and dT/dt = 0.
// receding: only the remaining time of a single window [0, H] counts, so
// T = H - t and dT/dt = -1.
enum class HorizonMode { fixed, receding };

// Safe set C(L) = { x : phi(x) >= L } with margin dynamics dL/dt = f_ell(L).
struct BarrierSpec {
  std::function<double(const Vec&)> phi;
  std::function<Vec(const Vec&)> grad_phi;
  std::function<Mat(const Vec&)> hess_phi;
  std::function<double(double)> f_ell;  // margin rate; null means constant margin
  double ell0 = 0.0;
  double horizon = 10.0;  // H
  HorizonMode horizon_mode = HorizonMode::fixed;
  SafetyObjective objective = SafetyObjective::stay_nominal;

  double f_T() const { return horizon_mode == HorizonMode::fixed ? 0.0 : -1.0; }

  double margin_rate(double ell) const { return f_ell ? f_ell(ell) : 0.0; }

  // Margin level after t time units (RK4; exact for the common f_ell == 0).
  double margin_at(double t) const {
    if (!f_ell) return ell0;
    int steps = std::max(1, static_cast<int>(std::ceil(t / 0.01)));
    double h = t / steps, ell = ell0;
    for (int i = 0; i < steps; ++i) {
      double k1 = f_ell(ell);
      double k2 = f_ell(ell + 0.5 * h * k1);
      double k3 = f_ell(ell + 0.5 * h * k2);
      double k4 = f_ell(ell + h * k3);
      ell += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return ell;
  }

  // Derivative callables must be consistent with phi itself.
  void validate(const Vec& probe) const {
    if (!phi || !grad_phi || !hess_phi)
      throw ConfigError("barrier callables not set");
    if (horizon <= 0) throw ConfigError("barrier horizon must be positive");
    const double h = 1e-5;
    const int n = static_cast<int>(probe.size());
    const Vec grad = grad_phi(probe);
    if (grad.size() != n) throw ConfigError("grad_phi has wrong dimension");
    for (int i = 0; i < n; ++i) {
      Vec xp = probe, xm = probe;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (phi(xp) - phi(xm)) / (2 * h);
      const double scale = std::max({1.0, std::fabs(fd), std::fabs(grad[i])});
      if (std::fabs(fd - grad[i]) > 1e-4 * scale)
        throw ConfigError("grad_phi disagrees with finite differences of phi");
    }
  }
};

// Barrier phi(x) = x[0] - level with constant margin; covers both example
// systems and the defaults in the shipped scenarios.
inline BarrierSpec offset_barrier(double level) {
  BarrierSpec spec;
  spec.phi = [level](const Vec& x) { return x[0] - level; };
  spec.grad_phi = [](const Vec& x) {
    Vec g = Vec::Zero(x.size());
    g[0] = 1.0;
    return g;
  };
  spec.hess_phi = [](const Vec& x) {
    return Mat::Zero(x.size(), x.size()).eval();
  };
  return spec;
}

// Augmented coordinates (T, L, phi(x), x) used by the certificate algebra.
struct AugmentedState {
  double T = 0.0;
  double L = 0.0;
  double phi_val = 0.0;
  Vec x;

  Vec z() const {
    Vec out(x.size() + 3);
    out[0] = T;
    out[1] = L;
    out[2] = phi_val;
    out.tail(x.size()) = x;
    return out;
  }
};

inline AugmentedState augment(const BarrierSpec& spec, const Vec& x,
                              double t_elapsed) {
  AugmentedState s;
  if (spec.horizon_mode == HorizonMode::fixed) {
    s.T = spec.horizon;
  } else {
    if (t_elapsed > spec.horizon * (1 + 1e-12))
      throw HorizonExhausted(t_elapsed, spec.horizon);
    s.T = spec.horizon - t_elapsed;
  }
  s.L = spec.margin_at(t_elapsed);
  s.phi_val = spec.phi(x);
  s.x = x;
  return s;
}

// Drift of phi(X_t) along the uncontrolled part of the dynamics:
// grad(phi).f + 1/2 tr(sigma sigma' hess(phi)).
inline double phi_drift(const SdeSystem& sys, const BarrierSpec& spec,
                        const Vec& x) {
  const Vec grad = spec.grad_phi(x);
  const Mat sig = sys.sigma(x);
  const Mat hess = spec.hess_phi(x);
  return grad.dot(sys.f(x)) + 0.5 * (sig * sig.transpose() * hess).trace();
}

struct Trajectory {
  double dt = 0.0;
  std::vector<Vec> states;    // length steps+1
  std::vector<Vec> controls;  // length steps
  std::vector<Vec> noise;     // Brownian increments, length steps

  int steps() const { return static_cast<int>(controls.size()); }

  void validate() const {
    if (states.size() != controls.size() + 1 || states.size() != noise.size() + 1)
      throw ConfigError("trajectory arrays out of step");
  }
};

namespace detail {
inline void check_finite(const Vec& v, const char* component, int step) {
  if (!v.allFinite()) throw NumericalDivergence(component, step);
}
inline void check_finite(const Mat& m, const char* component, int step) {
  if (!m.allFinite()) throw NumericalDivergence(component, step);
}
}  // namespace detail

// One Euler-Maruyama step x + (f + g u) dt + sigma dW.
inline Vec em_step(const SdeSystem& sys, const Vec& x, const Vec& u, double dt,
                   const Vec& dW, int step = 0) {
  const Vec fv = sys.f(x);
  detail::check_finite(fv, "drift f", step);
  const Mat gv = sys.g(x);
  detail::check_finite(gv, "control gain g", step);
  const Mat sv = sys.sigma(x);
  detail::check_finite(sv, "noise gain sigma", step);
  Vec next = x + (fv + gv * u) * dt + sv * dW;
  detail::check_finite(next, "state", step);
  return next;
}

using Policy = std::function<Vec(const Vec&)>;

inline Policy zero_policy(int m) {
  return [m](const Vec&) { return Vec::Zero(m).eval(); };
}

// Simulate `steps` EM steps under `policy`, recording states, controls and
// noise increments so paths can be replayed or reweighted exactly.
inline Trajectory simulate(const SdeSystem& sys, const Policy& policy,
                           const Vec& x0, double dt, int steps,
                           std::mt19937_64& rng) {
  Trajectory tr;
  tr.dt = dt;
  tr.states.reserve(steps + 1);
  tr.controls.reserve(steps);
  tr.noise.reserve(steps);
  tr.states.push_back(x0);
  std::normal_distribution<double> gauss(0.0, std::sqrt(dt));
  Vec x = x0;
  for (int k = 0; k < steps; ++k) {
    const Vec u = policy(x);
    Vec dW(sys.xi);
    for (int j = 0; j < sys.xi; ++j) dW[j] = gauss(rng);
    x = em_step(sys, x, u, dt, dW, k);
    tr.controls.push_back(u);
    tr.noise.push_back(dW);
    tr.states.push_back(x);
  }
  return tr;
}

inline Trajectory simulate(const SdeSystem& sys, const Policy& policy,
                           const Vec& x0, double dt, int steps,
                           std::uint64_t master_seed, std::uint64_t index) {
  auto rng = make_rng(master_seed, index);
  return simulate(sys, policy, x0, dt, steps, rng);
}

}  // namespace psc
