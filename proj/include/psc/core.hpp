#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace psc {

// States here are tiny (n <= 4, augmented n+3 <= 7), so fixed-capacity
// dynamic vectors avoid heap churn in the simulation loops.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 8, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 8, 8>;

inline Vec vec1(double x) {
  Vec v(1);
  v[0] = x;
  return v;
}

inline Mat mat1(double x) {
  Mat m(1, 1);
  m(0, 0) = x;
  return m;
}

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A scenario, system, or parameter block fails validation.
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config: " + what) {}
};

// A simulated quantity left the floating-point range; carries which
// component blew up and at which step.
struct NumericalDivergence : Error {
  NumericalDivergence(const std::string& component_, int step_)
      : Error("numerical divergence in " + component_ + " at step " +
              std::to_string(step_)),
        component(component_),
        step(step_) {}
  std::string component;
  int step = 0;
};

// Receding-horizon time ran out: t_elapsed exceeds the configured horizon.
struct HorizonExhausted : Error {
  explicit HorizonExhausted(double t_elapsed, double horizon)
      : Error("horizon exhausted: t=" + std::to_string(t_elapsed) +
              " beyond H=" + std::to_string(horizon)) {}
};

// Query outside the tabulated grid; carries the nearest in-hull point.
struct OutOfHull : Error {
  explicit OutOfHull(const Vec& nearest_)
      : Error("field query outside the tabulated hull"), nearest(nearest_) {}
  Vec nearest;
};

struct WeightOverflow : Error {
  WeightOverflow(double log_weight_, double cap_)
      : Error("importance weight overflow: log w = " +
              std::to_string(log_weight_) + " exceeds cap " +
              std::to_string(cap_)),
        log_weight(log_weight_),
        cap(cap_) {}
  double log_weight, cap;
};

struct LpInfeasible : Error {
  LpInfeasible() : Error("linear program infeasible") {}
};

struct LpUnbounded : Error {
  LpUnbounded() : Error("linear program unbounded") {}
};

struct SolverStall : Error {
  explicit SolverStall(const std::string& what) : Error("solver stall: " + what) {}
};

// The certificate constraint cannot be met at this state; carries the
// margin b - a.N that remains exposed when the nominal is held.
struct InfeasibleConstraint : Error {
  explicit InfeasibleConstraint(double exposed_risk_)
      : Error("safety constraint infeasible, exposed risk " +
              std::to_string(exposed_risk_)),
        exposed_risk(exposed_risk_) {}
  double exposed_risk;
};

struct DegenerateGradient : Error {
  explicit DegenerateGradient(double norm_a)
      : Error("constraint direction degenerate, |a| = " + std::to_string(norm_a)) {}
};

struct CvarInfeasible : Error {
  CvarInfeasible() : Error("no candidate control meets the tail bound") {}
};

struct EmptyCandidateSet : Error {
  EmptyCandidateSet() : Error("candidate control grid has no feasible point") {}
};

// splitmix64: cheap, well-mixed stream derivation.  Every trajectory and
// every grid node gets its own generator derived from (master, index), so
// results are independent of scheduling and identical across job counts.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_stream(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 0x51ed2701a0b1c2d3ULL));
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::uint64_t index) {
  return std::mt19937_64(derive_stream(master, index));
}

}  // namespace psc
