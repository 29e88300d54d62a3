#pragma once

#include "psc/core.hpp"
#include "psc/field.hpp"
#include "psc/system.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

namespace psc {

struct EstimateResult {
  double estimate = 0.0;
  double stderr_ = 0.0;
  long n = 0;
  double ess = 0.0;    // effective sample size, == n for plain Monte Carlo
  long divergent = 0;  // paths counted unsafe after numerical blowup
  long clamped = 0;    // 1 when the raw mean fell outside [0,1]
  double raw = 0.0;    // mean before clamping
};

struct ImportanceConfig {
  double log_weight_cap = 50.0;
  // The reweighting exponent is sum_k theta.dW - 0.5|theta|^2 dt.  Some
  // derivations carry the quadratic term with a plus sign; this toggle
  // reproduces that variant for comparison runs.
  bool positive_quadratic = false;
};

namespace detail {

// L_k on the step grid, starting from the queried margin (not ell0).
inline std::vector<double> margin_path(const BarrierSpec& spec, double L0,
                                       double dt, int steps) {
  std::vector<double> out(static_cast<std::size_t>(steps) + 1, L0);
  if (!spec.f_ell) return out;
  const int sub = std::max(1, static_cast<int>(std::ceil(dt / 0.01)));
  const double h = dt / sub;
  double ell = L0;
  for (int k = 0; k < steps; ++k) {
    for (int s = 0; s < sub; ++s) {
      const double k1 = spec.f_ell(ell);
      const double k2 = spec.f_ell(ell + 0.5 * h * k1);
      const double k3 = spec.f_ell(ell + 0.5 * h * k2);
      const double k4 = spec.f_ell(ell + h * k3);
      ell += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    out[static_cast<std::size_t>(k) + 1] = ell;
  }
  return out;
}

inline void check_estimate_inputs(const BarrierSpec& spec,
                                  const AugmentedState& z0, long n_sample,
                                  double dt) {
  if (!spec.phi) throw ConfigError("estimate: barrier phi not set");
  if (spec.objective == SafetyObjective::stay_supremum ||
      spec.objective == SafetyObjective::reach_supremum)
    throw ConfigError(
        "estimate: supremum objectives need the dynamic-programming fit");
  if (n_sample < 1) throw ConfigError("estimate: need at least one sample");
  if (!(dt > 0.0)) throw ConfigError("estimate: dt must be positive");
  if (z0.T < 0.0) throw ConfigError("estimate: negative outlook horizon");
}

}  // namespace detail

// Fraction of closed-loop paths satisfying the safety event.  Stay
// objectives require phi(x_k) >= L_k at every step including k = 0; reach
// objectives require it at some step.  Divergent paths count as unsafe.
inline EstimateResult mc_probability(const SdeSystem& sys,
                                     const BarrierSpec& spec,
                                     const Policy& nominal,
                                     const AugmentedState& z0, long n_sample,
                                     double dt, std::uint64_t seed) {
  detail::check_estimate_inputs(spec, z0, n_sample, dt);
  const int steps = static_cast<int>(std::llround(z0.T / dt));
  const auto margins = detail::margin_path(spec, z0.L, dt, steps);
  const bool stay = is_stay(spec.objective);

  EstimateResult out;
  out.n = n_sample;
  double sum = 0.0;
  for (long i = 0; i < n_sample; ++i) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> gauss(0.0, std::sqrt(dt));
    Vec x = z0.x;
    const bool safe_now = spec.phi(x) >= margins[0];
    if (stay ? !safe_now : safe_now) {
      sum += stay ? 0.0 : 1.0;
      continue;
    }
    // stay: currently safe, fail on first exit; reach: currently outside,
    // succeed on first entry.
    bool s = stay;
    for (int k = 1; k <= steps; ++k) {
      const Vec u = nominal(x);
      Vec dW(sys.xi);
      for (int j = 0; j < sys.xi; ++j) dW[j] = gauss(rng);
      try {
        x = em_step(sys, x, u, dt, dW, k);
      } catch (const NumericalDivergence&) {
        ++out.divergent;
        s = false;
        break;
      }
      const bool in_set = spec.phi(x) >= margins[static_cast<std::size_t>(k)];
      if (stay && !in_set) {
        s = false;
        break;
      }
      if (!stay && in_set) {
        s = true;
        break;
      }
    }
    sum += s ? 1.0 : 0.0;
  }
  const double p = sum / static_cast<double>(n_sample);
  out.raw = p;
  out.estimate = p;
  out.ess = static_cast<double>(n_sample);
  if (n_sample > 1)
    out.stderr_ = std::sqrt(p * (1.0 - p) / static_cast<double>(n_sample - 1));
  return out;
}

// Estimates the safe probability of policy `target` from paths sampled
// under `sampling`, reweighting each path by the likelihood ratio between
// the controlled path measures.  Weight accumulation stops at the step
// that decides the indicator; the remaining factors have unit conditional
// mean, so the estimate is unchanged and its variance only shrinks.
inline EstimateResult is_probability(const SdeSystem& sys,
                                     const BarrierSpec& spec,
                                     const Policy& target,
                                     const Policy& sampling,
                                     const AugmentedState& z0, long n_sample,
                                     double dt, std::uint64_t seed,
                                     const ImportanceConfig& cfg = {}) {
  detail::check_estimate_inputs(spec, z0, n_sample, dt);
  if (sys.m != sys.xi || sys.n != sys.xi)
    throw ConfigError(
        "importance sampling assumes the control and noise channels "
        "coincide (square g and sigma of equal shape)");
  const int steps = static_cast<int>(std::llround(z0.T / dt));
  const auto margins = detail::margin_path(spec, z0.L, dt, steps);
  const bool stay = is_stay(spec.objective);
  const double half = cfg.positive_quadratic ? 0.5 : -0.5;

  EstimateResult out;
  out.n = n_sample;
  double sum = 0.0, sum_sq = 0.0, wsum = 0.0, wsq = 0.0;
  for (long i = 0; i < n_sample; ++i) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> gauss(0.0, std::sqrt(dt));
    Vec x = z0.x;
    double log_w = 0.0;
    bool s;
    const bool safe_now = spec.phi(x) >= margins[0];
    if (stay ? !safe_now : safe_now) {
      s = !stay;
    } else {
      s = stay;
      for (int k = 1; k <= steps; ++k) {
        const Vec u_s = sampling(x);
        const Vec du = target(x) - u_s;
        Vec dW(sys.xi);
        for (int j = 0; j < sys.xi; ++j) dW[j] = gauss(rng);
        if (!du.isZero(0.0)) {
          const Vec theta = sys.sigma(x).partialPivLu().solve(sys.g(x) * du);
          log_w += theta.dot(dW) + half * theta.squaredNorm() * dt;
          if (!std::isfinite(log_w))
            throw NumericalDivergence("importance weight", k);
          if (log_w > cfg.log_weight_cap)
            throw WeightOverflow(log_w, cfg.log_weight_cap);
        }
        try {
          x = em_step(sys, x, u_s, dt, dW, k);
        } catch (const NumericalDivergence&) {
          ++out.divergent;
          s = false;
          break;
        }
        const bool in_set = spec.phi(x) >= margins[static_cast<std::size_t>(k)];
        if (stay && !in_set) {
          s = false;
          break;
        }
        if (!stay && in_set) {
          s = true;
          break;
        }
      }
    }
    const double w = std::exp(log_w);
    const double sw = s ? w : 0.0;
    sum += sw;
    sum_sq += sw * sw;
    wsum += w;
    wsq += w * w;
  }
  const double nd = static_cast<double>(n_sample);
  out.raw = sum / nd;
  out.estimate = std::clamp(out.raw, 0.0, 1.0);
  out.clamped = out.estimate != out.raw ? 1 : 0;
  out.ess = wsq > 0.0 ? wsum * wsum / wsq : 0.0;
  if (n_sample > 1) {
    const double var = (sum_sq - nd * out.raw * out.raw) / (nd - 1.0);
    out.stderr_ = std::sqrt(std::max(0.0, var) / nd);
  }
  return out;
}

using NodeEstimator =
    std::function<EstimateResult(const AugmentedState& z, std::uint64_t seed)>;

// Runs `node` at every grid point of (axes), filling a field.  Node z is
// assembled from the scenario defaults (T = horizon, L = ell0, x = x_base)
// with axis coordinates substituted, and phi re-evaluated from x; a phi
// axis is rejected since phi cannot be inverted to pick a simulation
// start.  Per-node seeds derive from (seed, node index), so results do not
// depend on the job count.
inline SafeProbField tabulate_field(const std::vector<Axis>& axes,
                                    InterpOrder order, const BarrierSpec& spec,
                                    const Vec& x_base, const NodeEstimator& node,
                                    std::uint64_t seed, int jobs = 1) {
  if (!spec.phi) throw ConfigError("tabulate: barrier phi not set");
  for (const auto& ax : axes)
    if (ax.kind == AxisKind::barrier)
      throw ConfigError("tabulate: grid the state, not the barrier value");
  SafeProbField field(axes, order);
  field.provenance.seed = seed;
  const std::size_t n_nodes = field.size();

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_nodes) return;
      const Vec p = field.node_point(i);
      try {
        AugmentedState z;
        z.T = spec.horizon;
        z.L = spec.ell0;
        z.x = x_base;
        for (int a = 0; a < field.rank(); ++a) {
          switch (axes[static_cast<std::size_t>(a)].kind) {
            case AxisKind::horizon:
              z.T = p[a];
              break;
            case AxisKind::margin:
              z.L = p[a];
              break;
            default:
              z.x[axes[static_cast<std::size_t>(a)].index] = p[a];
          }
        }
        z.phi_val = spec.phi(z.x);
        const EstimateResult r = node(z, derive_stream(seed, i));
        field.set_node(i, r.estimate, r.stderr_);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) {
          std::ostringstream msg;
          msg << "node (";
          for (int a = 0; a < field.rank(); ++a)
            msg << (a ? ", " : "") << p[a];
          msg << "): " << e.what();
          first_error = std::make_exception_ptr(Error(msg.str()));
        }
      }
    }
  };

  jobs = std::max(1, jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  // Sanity flag: more remaining time cannot make a stay objective safer or
  // a reach objective less safe.  Checked against adjacent nodes along the
  // horizon axis with a 3-sigma noise allowance.
  int t_axis = -1;
  for (std::size_t a = 0; a < axes.size(); ++a)
    if (axes[a].kind == AxisKind::horizon) t_axis = static_cast<int>(a);
  if (t_axis >= 0) {
    std::size_t stride = 1;
    for (std::size_t a = axes.size() - 1; static_cast<int>(a) > t_axis; --a)
      stride *= static_cast<std::size_t>(axes[a].count);
    const bool stay = is_stay(spec.objective);
    bool ok = true;
    for (std::size_t i = 0; i < n_nodes && ok; ++i) {
      const int ti = static_cast<int>(i / stride) % axes[static_cast<std::size_t>(t_axis)].count;
      if (ti + 1 >= axes[static_cast<std::size_t>(t_axis)].count) continue;
      const std::size_t j = i + stride;
      const double slack =
          3.0 * (field.node_stderr(i) + field.node_stderr(j)) + 1e-12;
      const double lo_t = field.node_value(i), hi_t = field.node_value(j);
      if (stay ? hi_t > lo_t + slack : hi_t < lo_t - slack) ok = false;
    }
    field.provenance.monotone_in_horizon = ok;
  }
  return field;
}

}  // namespace psc
