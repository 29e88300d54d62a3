#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "psc/kernel_dp.hpp"
#include "support/oracles.hpp"

using namespace psc;

namespace {

BarrierSpec chain_barrier(SafetyObjective objective) {
  // C = { x > 5 } on the integer chain
  BarrierSpec spec;
  spec.phi = [](const Vec& x) { return x[0] - 5.5; };
  spec.grad_phi = [](const Vec&) { return vec1(1.0); };
  spec.hess_phi = [](const Vec&) { return mat1(0.0); };
  spec.objective = objective;
  spec.horizon = 10.0;
  return spec;
}

}  // namespace

TEST_CASE("kernel basis has the Gaussian normal form", "[kernel-dp]") {
  KernelModel m;
  m.centers.resize(2, 1);
  m.bandwidths.resize(2, 1);
  m.weights = Eigen::VectorXd::Zero(2);
  m.centers << 2.0, -1.0;
  m.bandwidths << 0.25, 4.0;
  CHECK(m.basis(0, vec1(2.0)) ==
        Catch::Approx(1.0 / std::sqrt(2.0 * M_PI * 0.25)).epsilon(1e-12));
  CHECK(m.basis(1, vec1(-1.0)) ==
        Catch::Approx(1.0 / std::sqrt(2.0 * M_PI * 4.0)).epsilon(1e-12));
  // one standard deviation out
  CHECK(m.basis(0, vec1(2.5)) ==
        Catch::Approx(std::exp(-0.5) / std::sqrt(2.0 * M_PI * 0.25)).epsilon(1e-12));

  KernelModel prod;
  prod.centers.resize(1, 2);
  prod.bandwidths.resize(1, 2);
  prod.weights = Eigen::VectorXd::Zero(1);
  prod.centers << 0.0, 1.0;
  prod.bandwidths << 1.0, 0.5;
  Vec x(2);
  x << 0.0, 1.0;
  CHECK(prod.basis(0, x) ==
        Catch::Approx(1.0 / (2.0 * M_PI * std::sqrt(0.5))).epsilon(1e-12));
}

TEST_CASE("model evaluation clamps to the unit interval", "[kernel-dp]") {
  KernelModel m;
  m.centers = Eigen::MatrixXd::Zero(1, 1);
  m.bandwidths = Eigen::MatrixXd::Constant(1, 1, 1.0);
  m.weights = Eigen::VectorXd::Constant(1, 10.0);
  CHECK(m.raw_eval(vec1(0.0)) > 1.0);
  CHECK(m.eval(vec1(0.0)) == 1.0);
  m.weights[0] = -10.0;
  CHECK(m.eval(vec1(0.0)) == 0.0);
}

TEST_CASE("terminal stage is the set indicator", "[kernel-dp]") {
  auto spec = chain_barrier(SafetyObjective::stay_supremum);
  DpSolution sol;
  sol.steps = 3;
  sol.phi = spec.phi;
  sol.ell = spec.ell0;
  CHECK(sol.value(3, vec1(6.0)) == 1.0);
  CHECK(sol.value(3, vec1(5.0)) == 0.0);
}

TEST_CASE("deterministic one-step reachability fits to one", "[kernel-dp]") {
  // three states, exact moves, target set {x >= 2}
  DiscreteSystem dsys;
  dsys.n = 1;
  for (int u = -1; u <= 1; ++u) dsys.controls.push_back(vec1(u));
  for (int x = 0; x <= 2; ++x) dsys.states.push_back(vec1(x));
  dsys.step = [](const Vec& x, const Vec& u) {
    const double y = std::clamp(x[0] + u[0], 0.0, 2.0);
    return std::vector<std::pair<Vec, double>>{{vec1(y), 1.0}};
  };
  BarrierSpec spec;
  spec.phi = [](const Vec& x) { return x[0] - 2.0; };
  spec.objective = SafetyObjective::reach_supremum;

  DpConfig cfg;
  cfg.kernels = 20;
  cfg.samples = 100;
  auto sol = dp_reach_avoid(dsys, spec, vec1(0.0), vec1(2.0), 3, cfg, 17);
  CHECK(sol.value(2, vec1(1.0)) >= 0.95);  // one step from the set
  CHECK(sol.value(0, vec1(0.0)) >= 0.95);  // reachable within the horizon
  CHECK(sol.value(2, vec1(2.0)) >= 0.95);  // already there
}

TEST_CASE("stay value vanishes outside the set", "[kernel-dp]") {
  auto dsys = chain_system();
  auto spec = chain_barrier(SafetyObjective::stay_supremum);
  DpConfig cfg;
  cfg.kernels = 40;
  cfg.samples = 300;
  auto sol = dp_reach_avoid(dsys, spec, vec1(0.0), vec1(10.0), 5, cfg, 23);
  for (int x : {0, 2, 4, 5}) {
    INFO("x = " << x);
    CHECK(sol.value(0, vec1(x)) <= 0.05);
  }
}

TEST_CASE("chain recursion matches the exact tabular values", "[kernel-dp]") {
  auto dsys = chain_system();
  auto spec = chain_barrier(SafetyObjective::stay_supremum);
  DpConfig cfg;
  cfg.kernels = 60;
  cfg.samples = 400;
  const int steps = 10;
  auto sol = dp_reach_avoid(dsys, spec, vec1(0.0), vec1(10.0), steps, cfg, 31);

  oracles::ChainDp oracle;
  const auto exact = oracle.solve(true, steps);
  double worst = 0.0;
  for (int x = 0; x <= 10; ++x) {
    const double err = std::abs(sol.value(0, vec1(x)) - exact[static_cast<std::size_t>(x)]);
    INFO("x = " << x << " fit " << sol.value(0, vec1(x)) << " exact "
                << exact[static_cast<std::size_t>(x)]);
    worst = std::max(worst, err);
  }
  CHECK(worst <= 0.05);

  // with more steps left the stay probability can only drop
  for (int x = 6; x <= 10; ++x)
    for (int k = 0; k < steps; ++k)
      CHECK(sol.value(k, vec1(x)) <= sol.value(k + 1, vec1(x)) + 0.05);
}

TEST_CASE("reach variant on the chain matches the oracle too", "[kernel-dp]") {
  auto dsys = chain_system();
  auto spec = chain_barrier(SafetyObjective::reach_supremum);
  DpConfig cfg;
  cfg.kernels = 60;
  cfg.samples = 400;
  const int steps = 6;
  auto sol = dp_reach_avoid(dsys, spec, vec1(0.0), vec1(10.0), steps, cfg, 37);

  oracles::ChainDp oracle;
  const auto exact = oracle.solve(false, steps);
  for (int x = 0; x <= 10; ++x) {
    INFO("x = " << x);
    CHECK(std::abs(sol.value(0, vec1(x)) - exact[static_cast<std::size_t>(x)]) <= 0.05);
  }
  // reach grows with remaining steps
  for (int x = 0; x <= 4; ++x)
    for (int k = 0; k < steps; ++k)
      CHECK(sol.value(k, vec1(x)) >= sol.value(k + 1, vec1(x)) - 0.05);
}

TEST_CASE("recursion rejects bad configurations", "[kernel-dp]") {
  auto dsys = chain_system();
  DpConfig cfg;
  auto nominal_spec = chain_barrier(SafetyObjective::stay_nominal);
  CHECK_THROWS_AS(
      dp_reach_avoid(dsys, nominal_spec, vec1(0.0), vec1(10.0), 5, cfg, 1),
      ConfigError);
  auto moving = chain_barrier(SafetyObjective::stay_supremum);
  moving.f_ell = [](double) { return -1.0; };
  CHECK_THROWS_AS(
      dp_reach_avoid(dsys, moving, vec1(0.0), vec1(10.0), 5, cfg, 1),
      ConfigError);
  auto spec = chain_barrier(SafetyObjective::stay_supremum);
  CHECK_THROWS_AS(dp_reach_avoid(dsys, spec, vec1(10.0), vec1(0.0), 5, cfg, 1),
                  ConfigError);
  CHECK_THROWS_AS(dp_reach_avoid(dsys, spec, vec1(0.0), vec1(10.0), 0, cfg, 1),
                  ConfigError);
}

TEST_CASE("recursion is reproducible from its seed", "[kernel-dp]") {
  auto dsys = chain_system();
  auto spec = chain_barrier(SafetyObjective::stay_supremum);
  DpConfig cfg;
  cfg.kernels = 25;
  cfg.samples = 200;
  auto a = dp_reach_avoid(dsys, spec, vec1(0.0), vec1(10.0), 4, cfg, 55);
  auto b = dp_reach_avoid(dsys, spec, vec1(0.0), vec1(10.0), 4, cfg, 55);
  for (int k = 0; k < 4; ++k) {
    REQUIRE(a.models[k].weights.size() == b.models[k].weights.size());
    for (int i = 0; i < a.models[k].size(); ++i)
      CHECK(a.models[k].weights[i] == b.models[k].weights[i]);
    CHECK(a.models[k].centers == b.models[k].centers);
  }
}
