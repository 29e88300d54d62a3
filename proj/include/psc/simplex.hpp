#pragma once

#include "psc/core.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <utility>
#include <vector>

namespace psc {

enum class Rel { le, eq, ge };

// min c.x  subject to  A x (rel) b  componentwise and  x >= 0.
// Free variables must be split by the caller.
struct LpProblem {
  Eigen::VectorXd c;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<Rel> rel;
};

struct LpSolution {
  Eigen::VectorXd x;
  double objective = 0.0;
  long iterations = 0;
};

namespace detail {

// One simplex phase on an explicit dense tableau.  Rows 0..m-1 hold the
// constraints, row m holds the reduced costs, the last column is the rhs
// (so the current objective is -t(m, rhs)).  Entering column is Dantzig's
// most-negative rule, switching to Bland's rule once a run of degenerate
// pivots suggests cycling.
inline long run_simplex(Eigen::MatrixXd& t, std::vector<int>& basis, int ncols,
                        double tol, long max_iters) {
  const int m = static_cast<int>(basis.size());
  const int rhs = ncols;
  long iters = 0;
  int degenerate_streak = 0;
  while (true) {
    if (iters >= max_iters) throw SolverStall("pivot budget exhausted");
    const bool bland = degenerate_streak > 40;
    int enter = -1;
    double best = -tol;
    for (int j = 0; j < ncols; ++j) {
      const double cj = t(m, j);
      if (cj >= -tol) continue;
      if (bland) {
        enter = j;
        break;
      }
      if (cj < best) {
        best = cj;
        enter = j;
      }
    }
    if (enter < 0) return iters;
    int leave = -1;
    double best_ratio = 0.0;
    for (int i = 0; i < m; ++i) {
      const double aij = t(i, enter);
      if (aij <= tol) continue;
      const double ratio = t(i, rhs) / aij;
      if (leave < 0 || ratio < best_ratio - tol ||
          (ratio < best_ratio + tol && basis[i] < basis[leave])) {
        leave = i;
        best_ratio = ratio;
      }
    }
    if (leave < 0) throw LpUnbounded();
    degenerate_streak = best_ratio <= tol ? degenerate_streak + 1 : 0;
    t.row(leave) /= t(leave, enter);
    for (int i = 0; i <= m; ++i) {
      if (i == leave) continue;
      const double factor = t(i, enter);
      if (factor != 0.0) t.row(i) -= factor * t.row(leave);
    }
    basis[leave] = enter;
    ++iters;
  }
}

}  // namespace detail

// Dense two-phase simplex.  Problem sizes here are at most a few hundred
// variables by a couple thousand rows, where an explicit tableau is simple
// and fast enough.  Throws LpInfeasible / LpUnbounded / SolverStall.
inline LpSolution solve_lp(const LpProblem& p, double tol = 1e-8,
                           long max_iters = -1) {
  const int m = static_cast<int>(p.A.rows());
  const int n = static_cast<int>(p.A.cols());
  if (static_cast<int>(p.c.size()) != n)
    throw ConfigError("lp: cost length does not match variable count");
  if (static_cast<int>(p.b.size()) != m)
    throw ConfigError("lp: rhs length does not match row count");
  if (static_cast<int>(p.rel.size()) != m)
    throw ConfigError("lp: relation list does not match row count");
  if (max_iters < 0) max_iters = 200L * (m + n) + 2000;

  Eigen::MatrixXd a = p.A;
  Eigen::VectorXd b = p.b;
  std::vector<Rel> rel = p.rel;
  for (int i = 0; i < m; ++i) {
    if (b[i] < 0.0) {
      a.row(i) = -a.row(i);
      b[i] = -b[i];
      rel[i] = rel[i] == Rel::le ? Rel::ge : rel[i] == Rel::ge ? Rel::le : Rel::eq;
    }
  }
  int n_slack = 0, n_art = 0;
  for (Rel r : rel) {
    if (r != Rel::eq) ++n_slack;
    if (r != Rel::le) ++n_art;
  }

  int ncols = n + n_slack + n_art;
  int nrows = m;
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m + 1, ncols + 1);
  std::vector<int> basis(m, -1);
  t.block(0, 0, m, n) = a;
  t.col(ncols).head(m) = b;
  int slack = n, art = n + n_slack;
  for (int i = 0; i < m; ++i) {
    switch (rel[i]) {
      case Rel::le:
        t(i, slack) = 1.0;
        basis[i] = slack++;
        break;
      case Rel::ge:
        t(i, slack++) = -1.0;
        t(i, art) = 1.0;
        basis[i] = art++;
        break;
      case Rel::eq:
        t(i, art) = 1.0;
        basis[i] = art++;
        break;
    }
  }

  LpSolution out;

  if (n_art > 0) {
    for (int j = n + n_slack; j < ncols; ++j) t(m, j) = 1.0;
    for (int i = 0; i < m; ++i)
      if (basis[i] >= n + n_slack) t.row(m) -= t.row(i);
    out.iterations += detail::run_simplex(t, basis, ncols, tol, max_iters);
    if (-t(m, ncols) > tol * (1.0 + b.lpNorm<1>())) throw LpInfeasible();

    // Pivot leftover artificials out of the basis; a row that offers no
    // pivot is linearly dependent and gets dropped along with them.
    std::vector<int> keep;
    for (int i = 0; i < m; ++i) {
      if (basis[i] < n + n_slack) {
        keep.push_back(i);
        continue;
      }
      int piv = -1;
      for (int j = 0; j < n + n_slack; ++j) {
        if (std::abs(t(i, j)) > tol) {
          piv = j;
          break;
        }
      }
      if (piv < 0) continue;
      t.row(i) /= t(i, piv);
      for (int k = 0; k <= m; ++k) {
        if (k == i) continue;
        const double factor = t(k, piv);
        if (factor != 0.0) t.row(k) -= factor * t.row(i);
      }
      basis[i] = piv;
      keep.push_back(i);
    }

    nrows = static_cast<int>(keep.size());
    ncols = n + n_slack;
    Eigen::MatrixXd t2 = Eigen::MatrixXd::Zero(nrows + 1, ncols + 1);
    std::vector<int> basis2(nrows);
    for (int i = 0; i < nrows; ++i) {
      t2.row(i).head(ncols) = t.row(keep[i]).head(ncols);
      t2(i, ncols) = t(keep[i], n + n_slack + n_art);
      basis2[i] = basis[keep[i]];
    }
    t = std::move(t2);
    basis = std::move(basis2);
  }

  t.row(nrows).setZero();
  t.row(nrows).head(n) = p.c.transpose();
  for (int i = 0; i < nrows; ++i) {
    const double cb = basis[i] < n ? p.c[basis[i]] : 0.0;
    if (cb != 0.0) t.row(nrows) -= cb * t.row(i);
  }
  out.iterations +=
      detail::run_simplex(t, basis, ncols, tol, max_iters - out.iterations);

  out.x = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < nrows; ++i)
    if (basis[i] < n) out.x[basis[i]] = t(i, ncols);
  out.objective = p.c.dot(out.x);
  return out;
}

}  // namespace psc
