#pragma once

#include "psc/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace psc {

// Integer chain x' = clamp(x + u + w) on {0..x_max} with three-point noise
// w in {-1, 0, +1}, P(+-1) = noise_p each.  p = 0.08 matches the variance
// of the continuous sigma = 0.4 dynamics over one unit step.
struct ChainMdp {
  int x_max = 10;
  double noise_p = 0.08;
  static constexpr std::array<int, 3> actions{-1, 0, 1};

  void validate() const {
    if (x_max < 1) throw ConfigError("chain: x_max must be at least 1");
    if (!(noise_p >= 0.0 && noise_p < 0.5))
      throw ConfigError("chain: noise probability must lie in [0, 0.5)");
  }
  double reward(int x, int) const { return (x - 5) / 10.0; }
  int clip(int x) const { return std::clamp(x, 0, x_max); }
  int step(int x, int u, int w) const { return clip(x + u + w); }
  int sample_noise(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double v = unit(rng);
    if (v < noise_p) return -1;
    if (v < 2.0 * noise_p) return 1;
    return 0;
  }
  // successor distribution over the full state list, boundary mass merged
  std::vector<double> transition_row(int x, int u) const {
    std::vector<double> row(static_cast<std::size_t>(x_max) + 1, 0.0);
    row[static_cast<std::size_t>(step(x, u, -1))] += noise_p;
    row[static_cast<std::size_t>(step(x, u, 0))] += 1.0 - 2.0 * noise_p;
    row[static_cast<std::size_t>(step(x, u, 1))] += noise_p;
    return row;
  }
};

// pi_theta(u | x) proportional to exp(theta x u) over the three actions.
struct SoftmaxPolicy {
  double theta = 0.0;

  std::array<double, 3> probs(int x) const {
    std::array<double, 3> p{};
    const double t = theta * x;
    const double m = std::max({-t, 0.0, t});
    double z = 0.0;
    for (int i = 0; i < 3; ++i) {
      p[static_cast<std::size_t>(i)] =
          std::exp(t * ChainMdp::actions[static_cast<std::size_t>(i)] - m);
      z += p[static_cast<std::size_t>(i)];
    }
    for (auto& v : p) v /= z;
    return p;
  }
  double log_prob(int x, int u) const {
    const auto p = probs(x);
    return std::log(p[static_cast<std::size_t>(u + 1)]);
  }
  // d/dtheta log pi(u|x) = x u - E[x u'], the score the gradient sums
  double score(int x, int u) const {
    const auto p = probs(x);
    const double mean_u = p[2] - p[0];
    return x * (u - mean_u);
  }
  int sample(int x, std::mt19937_64& rng) const {
    const auto p = probs(x);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double v = unit(rng);
    if (v < p[0]) return -1;
    if (v < p[0] + p[1]) return 0;
    return 1;
  }
};

// Threshold override: above the threshold the nominal action is discarded
// and a fixed one executes.  Holds no policy parameters by construction;
// serialize() is the auditable witness of that independence.
struct SafetyFilterG {
  bool enabled = true;
  int threshold = 5;
  int forced = -1;

  int apply(int x, int u_hat) const {
    return (enabled && x > threshold) ? forced : u_hat;
  }
  std::string serialize() const {
    if (!enabled) return "identity";
    return "force " + std::to_string(forced) + " above " +
           std::to_string(threshold);
  }
};

inline SafetyFilterG identity_filter() {
  SafetyFilterG g;
  g.enabled = false;
  return g;
}

struct Episode {
  std::vector<int> x;       // h + 1 states
  std::vector<int> u_nom;   // sampled from the policy
  std::vector<int> u_exec;  // after the filter
  double ret = 0.0;         // sum of r(x_t, u_exec_t)
};

inline Episode rollout(const ChainMdp& mdp, const SoftmaxPolicy& pol,
                       const SafetyFilterG& g, int x0, int h_r,
                       std::uint64_t seed) {
  mdp.validate();
  if (h_r < 1) throw ConfigError("rollout: horizon must be at least 1");
  if (x0 < 0 || x0 > mdp.x_max)
    throw ConfigError("rollout: start state off the chain");
  auto rng = make_rng(seed, 0x6570);
  Episode ep;
  ep.x.reserve(static_cast<std::size_t>(h_r) + 1);
  ep.u_nom.reserve(static_cast<std::size_t>(h_r));
  ep.u_exec.reserve(static_cast<std::size_t>(h_r));
  int x = x0;
  ep.x.push_back(x);
  for (int t = 0; t < h_r; ++t) {
    const int u_hat = pol.sample(x, rng);
    const int u = g.apply(x, u_hat);
    ep.u_nom.push_back(u_hat);
    ep.u_exec.push_back(u);
    ep.ret += mdp.reward(x, u);
    x = mdp.step(x, u, mdp.sample_noise(rng));
    ep.x.push_back(x);
  }
  return ep;
}

// REINFORCE step through the filter: the score is taken at the NOMINAL
// actions (the only theta-dependent draws), weighted by the executed
// return.  theta <- theta + lr * batch mean of R(tau) sum_t score.
inline SoftmaxPolicy pg_update(const std::vector<Episode>& episodes,
                               const SoftmaxPolicy& pol, double lr) {
  if (episodes.empty()) throw ConfigError("pg update: empty batch");
  double grad = 0.0;
  for (const auto& ep : episodes) {
    double s = 0.0;
    for (std::size_t t = 0; t < ep.u_nom.size(); ++t)
      s += pol.score(ep.x[t], ep.u_nom[t]);
    grad += ep.ret * s;
  }
  grad /= static_cast<double>(episodes.size());
  SoftmaxPolicy out = pol;
  out.theta += lr * grad;
  return out;
}

struct QTable {
  Eigen::MatrixXd q;  // (x_max + 1) x 3, action order -1, 0, +1
  double gamma = 0.9;

  QTable(int x_max = 10, double gamma_ = 0.9)
      : q(Eigen::MatrixXd::Zero(x_max + 1, 3)), gamma(gamma_) {
    if (!(gamma >= 0.0 && gamma < 1.0))
      throw ConfigError("q table: discount must lie in [0, 1)");
  }
  double max_q(int x) const { return q.row(x).maxCoeff(); }
  int greedy(int x) const {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (q(x, i) > q(x, best)) best = i;
    return ChainMdp::actions[static_cast<std::size_t>(best)];
  }
};

inline void q_update(QTable& table, int x, int u, double r, int x_next,
                     double eta) {
  if (!(eta >= 0.0 && eta <= 1.0))
    throw ConfigError("q update: rate must lie in [0, 1]");
  double& cell = table.q(x, u + 1);
  cell += eta * (r + table.gamma * table.max_q(x_next) - cell);
}

enum class RateSchedule { inv_sqrt, harmonic };

inline double rate_at(RateSchedule s, long i) {
  return s == RateSchedule::inv_sqrt ? 1.0 / std::sqrt(static_cast<double>(i))
                                     : 1.0 / static_cast<double>(i);
}

// Q-learning needs sum eta = inf AND sum eta^2 < inf; both named schedules
// diverge in the first sum, only the harmonic one converges in the second.
inline void require_square_summable(RateSchedule s) {
  if (s == RateSchedule::inv_sqrt)
    throw ConfigError("q learning: 1/sqrt(i) is not square-summable");
}

struct PgConfig {
  int n_iter = 1500;
  int n_eps = 10;
  int h_r = 10;
  int x0 = 0;
  double theta0 = 0.0;
  double lr_scale = 1.0;
  RateSchedule schedule = RateSchedule::inv_sqrt;

  void validate() const {
    if (n_iter < 1 || n_eps < 1 || h_r < 1)
      throw ConfigError("pg config: counts must be positive");
  }
};

struct PgResult {
  SoftmaxPolicy policy;
  std::vector<double> mean_return;  // per-iteration batch mean
  long overrides = 0;   // filter changed the action
  long violations = 0;  // executed u != forced above the threshold
  int max_state = 0;    // largest state visited across all training episodes
};

// Episode e of iteration i draws from stream derive_stream(seed,
// i * n_eps + e), so runs are reproducible and any episode can be
// replayed in isolation.
inline PgResult train_pg(const ChainMdp& mdp, const SafetyFilterG& g,
                         const PgConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PgResult res;
  res.policy.theta = cfg.theta0;
  res.mean_return.reserve(static_cast<std::size_t>(cfg.n_iter));
  for (int i = 0; i < cfg.n_iter; ++i) {
    std::vector<Episode> batch;
    batch.reserve(static_cast<std::size_t>(cfg.n_eps));
    double mean = 0.0;
    for (int e = 0; e < cfg.n_eps; ++e) {
      batch.push_back(rollout(
          mdp, res.policy, g, cfg.x0, cfg.h_r,
          derive_stream(seed, static_cast<std::uint64_t>(i) *
                                  static_cast<std::uint64_t>(cfg.n_eps) +
                              static_cast<std::uint64_t>(e))));
      const auto& ep = batch.back();
      mean += ep.ret;
      for (int x : ep.x) res.max_state = std::max(res.max_state, x);
      for (std::size_t t = 0; t < ep.u_exec.size(); ++t) {
        if (ep.u_exec[t] != ep.u_nom[t]) ++res.overrides;
        if (g.enabled && ep.x[t] > g.threshold && ep.u_exec[t] != g.forced)
          ++res.violations;
      }
    }
    res.mean_return.push_back(mean / cfg.n_eps);
    res.policy = pg_update(batch, res.policy,
                           cfg.lr_scale * rate_at(cfg.schedule, i + 1));
  }
  return res;
}

struct QConfig {
  double gamma = 0.9;
  int n_iter = 5000;
  int h_r = 10;
  int x0 = 0;
  double explore = 0.1;  // epsilon-greedy exploration
  RateSchedule schedule = RateSchedule::harmonic;
  // rate index: the pair's visit count (standard tabular schedule) or the
  // global iteration.  The global clock freezes rarely-visited pairs far
  // from the fixed point; both satisfy the summability conditions.
  bool per_visit = true;

  void validate() const {
    if (n_iter < 1 || h_r < 1)
      throw ConfigError("q config: counts must be positive");
    if (!(explore >= 0.0 && explore <= 1.0))
      throw ConfigError("q config: exploration rate must lie in [0, 1]");
  }
};

struct QResult {
  QTable table;
  Eigen::MatrixXd q_log;  // iteration -> Q(x0, .)
  double q_max_abs = 0.0;
  long overrides = 0;
  long violations = 0;
};

// One epsilon-greedy episode per iteration with the iteration's rate held
// fixed across its steps; the update follows the printed single-entry rule
// on executed actions.
inline QResult train_q(const ChainMdp& mdp, const SafetyFilterG& g,
                       const QConfig& cfg, std::uint64_t seed) {
  mdp.validate();
  cfg.validate();
  require_square_summable(cfg.schedule);
  QResult res{QTable(mdp.x_max, cfg.gamma),
              Eigen::MatrixXd::Zero(cfg.n_iter, 3), 0.0, 0, 0};
  Eigen::MatrixXi visits = Eigen::MatrixXi::Zero(mdp.x_max + 1, 3);
  for (int i = 1; i <= cfg.n_iter; ++i) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> any_action(0, 2);
    int x = cfg.x0;
    for (int t = 0; t < cfg.h_r; ++t) {
      const int u_hat = unit(rng) < cfg.explore
                            ? ChainMdp::actions[static_cast<std::size_t>(
                                  any_action(rng))]
                            : res.table.greedy(x);
      const int u = g.apply(x, u_hat);
      if (u != u_hat) ++res.overrides;
      if (g.enabled && x > g.threshold && u != g.forced) ++res.violations;
      const double r = mdp.reward(x, u);
      const int x_next = mdp.step(x, u, mdp.sample_noise(rng));
      const long clock =
          cfg.per_visit ? ++visits(x, u + 1) : static_cast<long>(i);
      q_update(res.table, x, u, r, x_next, rate_at(cfg.schedule, clock));
      res.q_max_abs =
          std::max(res.q_max_abs, res.table.q.cwiseAbs().maxCoeff());
      x = x_next;
    }
    res.q_log.row(i - 1) = res.table.q.row(cfg.x0);
  }
  return res;
}

}  // namespace psc
