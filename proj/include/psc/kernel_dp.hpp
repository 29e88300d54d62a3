#pragma once

#include "psc/core.hpp"
#include "psc/normal.hpp"
#include "psc/simplex.hpp"
#include "psc/system.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace psc {

// One-step discrete-time control system with enumerable successor
// distributions, which is what the value recursion integrates against.
// `states` empty means continuous state, sampled uniformly over the box.
struct DiscreteSystem {
  int n = 1;
  std::vector<Vec> controls;
  std::function<std::vector<std::pair<Vec, double>>(const Vec&, const Vec&)> step;
  std::vector<Vec> states;
};

// Weighted sum of per-dimension product Gaussians; the fit target of the
// per-step linear program.
struct KernelModel {
  Eigen::MatrixXd centers;     // M x d
  Eigen::MatrixXd bandwidths;  // M x d, variance per dimension
  Eigen::VectorXd weights;     // M

  int size() const { return static_cast<int>(weights.size()); }

  double basis(int i, const Vec& x) const {
    double v = 1.0;
    for (int j = 0; j < centers.cols(); ++j) {
      const double nu = bandwidths(i, j);
      const double d = x[j] - centers(i, j);
      v *= std::exp(-0.5 * d * d / nu) / std::sqrt(2.0 * M_PI * nu);
    }
    return v;
  }

  // integral of basis i over the box, the objective weight of the fit
  double basis_mass(int i, const Vec& lo, const Vec& hi) const {
    double v = 1.0;
    for (int j = 0; j < centers.cols(); ++j) {
      const double s = std::sqrt(bandwidths(i, j));
      v *= normal_cdf((hi[j] - centers(i, j)) / s) -
           normal_cdf((lo[j] - centers(i, j)) / s);
    }
    return v;
  }

  double raw_eval(const Vec& x) const {
    double v = 0.0;
    for (int i = 0; i < size(); ++i) v += weights[i] * basis(i, x);
    return v;
  }

  double eval(const Vec& x) const { return std::clamp(raw_eval(x), 0.0, 1.0); }
};

struct DpConfig {
  int kernels = 100;       // M
  long samples = 1000;     // constraint sites per step
  double weight_box = 100.0;
  double bandwidth_lo = 0.01;  // fraction of squared box extent
  double bandwidth_hi = 1.0;
  int collocation = 64;    // extra nonnegativity sites (continuous case)
  double lp_tol = 1e-8;
};

// Kernel fits for every step of the backward recursion; index k counts
// elapsed steps, so k == steps is the terminal set indicator.
struct DpSolution {
  int steps = 0;
  std::function<double(const Vec&)> phi;
  double ell = 0.0;
  std::vector<KernelModel> models;

  bool in_set(const Vec& x) const { return phi(x) >= ell; }

  double value(int k, const Vec& x) const {
    if (k >= steps) return in_set(x) ? 1.0 : 0.0;
    return models[static_cast<std::size_t>(k)].eval(x);
  }
};

// Backward value recursion for the best-case stay/reach probability over a
// finite control set, each stage fitted by a one-sided LP: minimize the
// fitted mass subject to model(site) >= Bellman target at sampled sites.
// Targets take the best control per site, tightening the upper fit.
inline DpSolution dp_reach_avoid(const DiscreteSystem& dsys,
                                 const BarrierSpec& spec, const Vec& lo,
                                 const Vec& hi, int steps, const DpConfig& cfg,
                                 std::uint64_t seed) {
  if (spec.objective != SafetyObjective::stay_supremum &&
      spec.objective != SafetyObjective::reach_supremum)
    throw ConfigError("value recursion covers the supremum objectives only");
  if (!spec.phi) throw ConfigError("value recursion: barrier phi not set");
  if (spec.f_ell)
    throw ConfigError("value recursion assumes a constant margin level");
  if (!dsys.step || dsys.controls.empty())
    throw ConfigError("value recursion: discrete system incomplete");
  if (steps < 1) throw ConfigError("value recursion: need at least one step");
  if (static_cast<int>(lo.size()) != dsys.n ||
      static_cast<int>(hi.size()) != dsys.n)
    throw ConfigError("value recursion: box dimension mismatch");
  for (int j = 0; j < dsys.n; ++j)
    if (!(hi[j] > lo[j]))
      throw ConfigError("value recursion: empty box extent");
  if (cfg.kernels < 1 || cfg.samples < 1)
    throw ConfigError("value recursion: kernel and sample counts must be positive");

  const bool stay = spec.objective == SafetyObjective::stay_supremum;
  const bool finite = !dsys.states.empty();
  const int d = dsys.n;
  const int m_kernels = cfg.kernels;

  DpSolution sol;
  sol.steps = steps;
  sol.phi = spec.phi;
  sol.ell = spec.ell0;
  sol.models.resize(static_cast<std::size_t>(steps));

  for (int k = steps - 1; k >= 0; --k) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(k));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Constraint sites.  On a finite state list duplicates carry no new
    // information, so tally which states were drawn instead.
    std::vector<Vec> sites;
    if (finite) {
      std::vector<char> seen(dsys.states.size(), 0);
      for (long s = 0; s < cfg.samples; ++s)
        seen[static_cast<std::size_t>(rng() % dsys.states.size())] = 1;
      for (std::size_t i = 0; i < dsys.states.size(); ++i)
        if (seen[i]) sites.push_back(dsys.states[i]);
    } else {
      for (long s = 0; s < cfg.samples; ++s) {
        Vec x(d);
        for (int j = 0; j < d; ++j) x[j] = lo[j] + (hi[j] - lo[j]) * unit(rng);
        sites.push_back(std::move(x));
      }
    }

    std::vector<double> targets(sites.size());
    for (std::size_t s = 0; s < sites.size(); ++s) {
      const Vec& x = sites[s];
      const bool inside = sol.in_set(x);
      double best = 0.0;
      if (stay ? inside : !inside) {
        for (const Vec& u : dsys.controls) {
          double e = 0.0;
          for (const auto& [y, p] : dsys.step(x, u)) e += p * sol.value(k + 1, y);
          best = std::max(best, e);
        }
      }
      const double t = stay ? (inside ? best : 0.0) : (inside ? 1.0 : best);
      targets[s] = std::clamp(t, 0.0, 1.0);
    }

    KernelModel model;
    model.centers.resize(m_kernels, d);
    model.bandwidths.resize(m_kernels, d);
    for (int i = 0; i < m_kernels; ++i) {
      if (finite) {
        const Vec& c = dsys.states[static_cast<std::size_t>(rng() % dsys.states.size())];
        for (int j = 0; j < d; ++j) model.centers(i, j) = c[j];
      } else {
        for (int j = 0; j < d; ++j)
          model.centers(i, j) = lo[j] + (hi[j] - lo[j]) * unit(rng);
      }
      for (int j = 0; j < d; ++j) {
        const double e2 = (hi[j] - lo[j]) * (hi[j] - lo[j]);
        const double llo = std::log(cfg.bandwidth_lo * e2);
        const double lhi = std::log(cfg.bandwidth_hi * e2);
        model.bandwidths(i, j) = std::exp(llo + (lhi - llo) * unit(rng));
      }
    }

    // Nonnegativity sites keep the fit from dipping below zero where no
    // target constrains it; the weight box bounds the null space of the
    // site Gram matrix so the minimization cannot run away.
    std::vector<Vec> colloc;
    if (finite) {
      colloc = dsys.states;
    } else {
      for (int s = 0; s < cfg.collocation; ++s) {
        Vec x(d);
        for (int j = 0; j < d; ++j) x[j] = lo[j] + (hi[j] - lo[j]) * unit(rng);
        colloc.push_back(std::move(x));
      }
    }

    const int ns = static_cast<int>(sites.size());
    const int nc = static_cast<int>(colloc.size());
    const int rows = ns + nc + 2 * m_kernels;
    const int cols = 2 * m_kernels;  // weights split into w+ - w-
    LpProblem lp;
    lp.c.resize(cols);
    lp.A = Eigen::MatrixXd::Zero(rows, cols);
    lp.b = Eigen::VectorXd::Zero(rows);
    lp.rel.assign(static_cast<std::size_t>(rows), Rel::ge);
    for (int i = 0; i < m_kernels; ++i) {
      const double mass = model.basis_mass(i, lo, hi);
      lp.c[i] = mass;
      lp.c[m_kernels + i] = -mass;
    }
    for (int s = 0; s < ns; ++s) {
      for (int i = 0; i < m_kernels; ++i) {
        const double v = model.basis(i, sites[static_cast<std::size_t>(s)]);
        lp.A(s, i) = v;
        lp.A(s, m_kernels + i) = -v;
      }
      lp.b[s] = targets[static_cast<std::size_t>(s)];
    }
    for (int s = 0; s < nc; ++s) {
      for (int i = 0; i < m_kernels; ++i) {
        const double v = model.basis(i, colloc[static_cast<std::size_t>(s)]);
        lp.A(ns + s, i) = v;
        lp.A(ns + s, m_kernels + i) = -v;
      }
    }
    for (int i = 0; i < cols; ++i) {
      lp.A(ns + nc + i, i) = 1.0;
      lp.b[ns + nc + i] = cfg.weight_box;
      lp.rel[static_cast<std::size_t>(ns + nc + i)] = Rel::le;
    }

    const LpSolution fit = solve_lp(lp, cfg.lp_tol);
    model.weights.resize(m_kernels);
    for (int i = 0; i < m_kernels; ++i)
      model.weights[i] = fit.x[i] - fit.x[m_kernels + i];
    sol.models[static_cast<std::size_t>(k)] = std::move(model);
  }
  return sol;
}

// The integer chain used by the reinforcement-learning scenario:
// x' = clamp(x + u + w) on {0..x_max}, w = +-1 with probability p each.
inline DiscreteSystem chain_system(int x_max = 10, double p = 0.08) {
  DiscreteSystem dsys;
  dsys.n = 1;
  for (int u = -1; u <= 1; ++u) dsys.controls.push_back(vec1(u));
  for (int x = 0; x <= x_max; ++x) dsys.states.push_back(vec1(x));
  dsys.step = [x_max, p](const Vec& x, const Vec& u) {
    auto clampi = [x_max](double v) {
      return std::clamp(v, 0.0, static_cast<double>(x_max));
    };
    const double base = x[0] + u[0];
    return std::vector<std::pair<Vec, double>>{
        {vec1(clampi(base - 1.0)), p},
        {vec1(clampi(base)), 1.0 - 2.0 * p},
        {vec1(clampi(base + 1.0)), p}};
  };
  return dsys;
}

}  // namespace psc
