#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "psc/estimators.hpp"
#include "support/oracles.hpp"

using namespace psc;

namespace {

SdeSystem scalar_sys(double f0, double g0, double s0) {
  SdeSystem sys;
  sys.n = sys.m = sys.xi = 1;
  sys.f = [f0](const Vec&) { return vec1(f0); };
  sys.g = [g0](const Vec&) { return mat1(g0); };
  sys.sigma = [s0](const Vec&) { return mat1(s0); };
  return sys;
}

BarrierSpec level_barrier(double level, double horizon,
                          SafetyObjective objective) {
  BarrierSpec spec;
  spec.phi = [level](const Vec& x) { return x[0] - level; };
  spec.grad_phi = [](const Vec&) { return vec1(1.0); };
  spec.hess_phi = [](const Vec&) { return mat1(0.0); };
  spec.horizon = horizon;
  spec.objective = objective;
  return spec;
}

AugmentedState start(const BarrierSpec& spec, double x0) {
  AugmentedState z;
  z.T = spec.horizon;
  z.L = spec.ell0;
  z.x = vec1(x0);
  z.phi_val = spec.phi(z.x);
  return z;
}

Policy proportional(double k) {
  return [k](const Vec& x) { return vec1(k * x[0]); };
}

}  // namespace

TEST_CASE("deterministic paths give exact indicator probabilities",
          "[estimators]") {
  auto sys = scalar_sys(0.0, 1.0, 0.0);
  auto spec = level_barrier(1.0, 1.0, SafetyObjective::stay_nominal);

  auto safe = mc_probability(sys, spec, zero_policy(1), start(spec, 3.0), 200,
                             0.1, 1);
  CHECK(safe.estimate == 1.0);
  CHECK(safe.stderr_ == 0.0);
  CHECK(safe.ess == 200.0);

  // phi(x0) < L already: the k = 0 check decides without simulating.
  auto unsafe = mc_probability(sys, spec, zero_policy(1), start(spec, 0.5), 200,
                               0.1, 1);
  CHECK(unsafe.estimate == 0.0);
}

TEST_CASE("reach objectives count first entry, not survival", "[estimators]") {
  auto spec = level_barrier(1.0, 2.0, SafetyObjective::reach_nominal);
  auto up = scalar_sys(1.0, 1.0, 0.0);
  CHECK(mc_probability(up, spec, zero_policy(1), start(spec, 0.0), 50, 0.1, 1)
            .estimate == 1.0);
  auto down = scalar_sys(-1.0, 1.0, 0.0);
  CHECK(mc_probability(down, spec, zero_policy(1), start(spec, 0.0), 50, 0.1, 1)
            .estimate == 0.0);
  // starting inside the target set decides at k = 0
  CHECK(mc_probability(down, spec, zero_policy(1), start(spec, 1.5), 50, 0.1, 1)
            .estimate == 1.0);
}

TEST_CASE("uncontrolled survival matches the barrier-corrected closed form",
          "[estimators]") {
  auto sys = scalar_sys(2.0, 1.0, 2.0);
  auto spec = level_barrier(1.0, 1.0, SafetyObjective::stay_nominal);
  const double dt = 0.001;
  auto r = mc_probability(sys, spec, zero_policy(1), start(spec, 3.0), 100000,
                          dt, 7);
  const double oracle =
      oracles::brownian_survival_discrete(3.0, 1.0, 2.0, 2.0, 1.0, dt);
  CHECK(std::abs(r.estimate - oracle) <= 3.0 * r.stderr_);
  CHECK(r.stderr_ < 0.002);
}

TEST_CASE("margin dynamics move the safe threshold over time", "[estimators]") {
  auto spec = level_barrier(0.0, 5.0, SafetyObjective::stay_nominal);
  spec.f_ell = [](double) { return -1.0; };  // L(t) = -t
  // state falls at 0.9: phi - L = 0.5 + 0.1 t stays positive
  auto slow = scalar_sys(-0.9, 1.0, 0.0);
  CHECK(mc_probability(slow, spec, zero_policy(1), start(spec, 0.5), 20, 0.1, 3)
            .estimate == 1.0);
  // state falls at 1.25: phi - L = 0.5 - 0.25 t crosses zero at t = 2
  auto fast = scalar_sys(-1.25, 1.0, 0.0);
  CHECK(mc_probability(fast, spec, zero_policy(1), start(spec, 0.5), 20, 0.1, 3)
            .estimate == 0.0);
}

TEST_CASE("identical target and sampling policies reweight by exactly one",
          "[estimators]") {
  auto sys = scalar_sys(2.0, 1.0, 2.0);
  auto spec = level_barrier(1.0, 1.0, SafetyObjective::stay_nominal);
  const auto z0 = start(spec, 2.0);

  SECTION("both uncontrolled") {
    auto direct = mc_probability(sys, spec, zero_policy(1), z0, 5000, 0.01, 11);
    auto re = is_probability(sys, spec, zero_policy(1), zero_policy(1), z0,
                             5000, 0.01, 11);
    CHECK(re.estimate == direct.estimate);
    CHECK(re.ess == 5000.0);
    CHECK(re.clamped == 0);
  }
  SECTION("both proportional") {
    auto direct =
        mc_probability(sys, spec, proportional(-2.5), z0, 5000, 0.01, 11);
    auto re = is_probability(sys, spec, proportional(-2.5), proportional(-2.5),
                             z0, 5000, 0.01, 11);
    CHECK(re.estimate == direct.estimate);
    CHECK(re.ess == 5000.0);
  }
}

TEST_CASE("reweighted estimate agrees with direct simulation", "[estimators]") {
  auto sys = scalar_sys(2.0, 1.0, 2.0);
  auto spec = level_barrier(1.0, 1.0, SafetyObjective::stay_nominal);
  const auto z0 = start(spec, 3.0);
  auto direct = mc_probability(sys, spec, proportional(-2.5), z0, 20000, 0.01, 5);
  auto re = is_probability(sys, spec, proportional(-2.5), zero_policy(1), z0,
                           20000, 0.01, 6);
  const double combined =
      std::sqrt(direct.stderr_ * direct.stderr_ + re.stderr_ * re.stderr_);
  CHECK(std::abs(direct.estimate - re.estimate) <= 3.0 * combined);
  CHECK(re.ess > 100.0);
}

TEST_CASE("distant policies overflow the weight cap", "[estimators]") {
  auto sys = scalar_sys(0.0, 1.0, 1.0);
  auto spec = level_barrier(-100.0, 5.0, SafetyObjective::stay_nominal);
  const auto z0 = start(spec, 0.0);
  ImportanceConfig cfg;
  cfg.log_weight_cap = 0.5;
  auto far = [](const Vec&) { return vec1(10.0); };
  CHECK_THROWS_AS(
      is_probability(sys, spec, far, zero_policy(1), z0, 100, 0.1, 21, cfg),
      WeightOverflow);
}

TEST_CASE("reweighting rejects mismatched control and noise channels",
          "[estimators]") {
  SdeSystem sys;
  sys.n = 1;
  sys.m = 2;
  sys.xi = 1;
  sys.f = [](const Vec&) { return vec1(0.0); };
  sys.g = [](const Vec&) { return Mat::Ones(1, 2).eval(); };
  sys.sigma = [](const Vec&) { return mat1(1.0); };
  auto spec = level_barrier(0.0, 1.0, SafetyObjective::stay_nominal);
  auto two = [](const Vec&) { return Vec::Zero(2).eval(); };
  CHECK_THROWS_AS(
      is_probability(sys, spec, two, two, start(spec, 1.0), 10, 0.1, 1),
      ConfigError);
}

TEST_CASE("direct and reweighted estimators agree across random scenarios",
          "[estimators]") {
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> drift(-1.0, 1.0), noise(0.5, 2.0),
      gain(-2.0, 0.0), x0d(1.5, 4.0);
  for (int rep = 0; rep < 20; ++rep) {
    auto sys = scalar_sys(drift(rng), 1.0, noise(rng));
    auto spec = level_barrier(1.0, 0.5, SafetyObjective::stay_nominal);
    const auto z0 = start(spec, x0d(rng));
    const auto target = proportional(gain(rng));
    auto direct = mc_probability(sys, spec, target, z0, 5000, 0.01,
                                 derive_stream(100, rep));
    auto re = is_probability(sys, spec, target, zero_policy(1), z0, 5000, 0.01,
                             derive_stream(200, rep));
    const double combined =
        std::sqrt(direct.stderr_ * direct.stderr_ + re.stderr_ * re.stderr_);
    INFO("rep " << rep << ": direct " << direct.estimate << " re "
                << re.estimate << " combined se " << combined);
    CHECK(std::abs(direct.estimate - re.estimate) <= 3.0 * combined + 1e-12);
  }
}

TEST_CASE("constant estimator tabulates to a constant field", "[estimators]") {
  auto spec = level_barrier(1.0, 10.0, SafetyObjective::stay_nominal);
  auto one = [](const AugmentedState&, std::uint64_t) {
    EstimateResult r;
    r.estimate = 1.0;
    r.n = 1;
    return r;
  };
  auto field = tabulate_field({{AxisKind::state, 0, 0.0, 0.5, 9}},
                              InterpOrder::cubic, spec, vec1(0.0), one, 77);
  for (std::size_t i = 0; i < field.size(); ++i)
    CHECK(field.node_value(i) == 1.0);
  Vec p(1);
  p << 1.23;
  CHECK(field.query(p).value == 1.0);
  CHECK(field.provenance.seed == 77);
}

TEST_CASE("node failures surface with grid coordinates", "[estimators]") {
  auto spec = level_barrier(1.0, 10.0, SafetyObjective::stay_nominal);
  auto bad = [](const AugmentedState& z, std::uint64_t) -> EstimateResult {
    if (z.x[0] > 1.9) throw WeightOverflow(60.0, 50.0);
    return {};
  };
  try {
    tabulate_field({{AxisKind::state, 0, 0.0, 1.0, 4}}, InterpOrder::cubic,
                   spec, vec1(0.0), bad, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("node (") != std::string::npos);
    CHECK(std::string(e.what()).find("overflow") != std::string::npos);
  }
  CHECK_THROWS_AS(
      tabulate_field({{AxisKind::barrier, 0, 0.0, 1.0, 4}}, InterpOrder::cubic,
                     spec, vec1(0.0), bad, 1),
      ConfigError);
}

TEST_CASE("tabulated uncontrolled field rises monotonically through the "
          "boundary",
          "[estimators][slow]") {
  auto sys = scalar_sys(2.0, 1.0, 2.0);
  auto spec = level_barrier(1.0, 10.0, SafetyObjective::stay_nominal);
  auto node = [&](const AugmentedState& z, std::uint64_t s) {
    return mc_probability(sys, spec, zero_policy(1), z, 10000, 0.1, s);
  };
  auto field = tabulate_field({{AxisKind::state, 0, 0.8, 0.05, 105}},
                              InterpOrder::cubic, spec, vec1(3.0), node, 99, 4);

  std::vector<double> vals(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) vals[i] = field.node_value(i);
  CHECK(oracles::spearman(vals) > 0.99);

  // nodes strictly below the level are unsafe at k = 0
  CHECK(field.node_value(0) == 0.0);
  // the boundary node loses about half its mass to the first excursion
  const std::size_t bidx = 4;  // x = 1.0
  CHECK(field.node_point(bidx)[0] == Catch::Approx(1.0));
  CHECK(field.node_value(bidx) <= 0.5 + 3.0 * field.node_stderr(bidx));
  // interpolant slope is upward just inside the boundary
  Vec p(1);
  p << 1.2;
  CHECK(field.query(p).grad[0] > 0.0);
}

TEST_CASE("horizon monotonicity flag reacts to direction", "[estimators]") {
  auto spec = level_barrier(1.0, 10.0, SafetyObjective::stay_nominal);
  auto decreasing = [](const AugmentedState& z, std::uint64_t) {
    EstimateResult r;
    r.estimate = 1.0 - z.T / 20.0;
    return r;
  };
  auto increasing = [](const AugmentedState& z, std::uint64_t) {
    EstimateResult r;
    r.estimate = z.T / 20.0;
    return r;
  };
  std::vector<Axis> axes{{AxisKind::horizon, 0, 1.0, 1.0, 5},
                         {AxisKind::state, 0, 0.0, 1.0, 3}};
  auto ok = tabulate_field(axes, InterpOrder::linear, spec, vec1(0.0),
                           decreasing, 1);
  CHECK(ok.provenance.monotone_in_horizon);
  auto bad = tabulate_field(axes, InterpOrder::linear, spec, vec1(0.0),
                            increasing, 1);
  CHECK_FALSE(bad.provenance.monotone_in_horizon);
}
