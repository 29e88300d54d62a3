#include <catch2/catch_amalgamated.hpp>

#include "psc/experiments.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

using namespace psc;
using Catch::Matchers::WithinAbs;

namespace {

Scenario from_doc(const nlohmann::json& j) { return Scenario::from_json(j); }

std::string read_all(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// frozen dynamics with no noise: every run is exactly reproducible
nlohmann::json still_doc() {
  return {{"schema_version", 1},
          {"name", "still"},
          {"system", {{"f", "0"}, {"g", "1"}, {"sigma", "0"}}},
          {"nominal", {{"kind", "zero"}}},
          {"run",
           {{"x0", 3.0}, {"dt", 0.1}, {"t_max", 2.0}, {"trajectories", 5},
            {"seed", 11}}},
          {"estimation",
           {{"lo", 0.8}, {"step", 0.4}, {"nodes", 19}, {"samples", 50},
            {"seed", 9}}}};
}

}  // namespace

TEST_CASE("without noise or violations every controller acts identically",
          "[experiments]") {
  const Scenario sc = from_doc(still_doc());
  const SafeProbField field = tabulate_scenario_field(sc);
  // the start node sits still and safe, so its value is exactly one
  CHECK(field.query(vec1(3.0)).value == 1.0);

  const TrajectoryStats ref = run_switching(sc, field, ControllerKind::nominal,
                                            sc.run.trajectories, sc.run.seed);
  REQUIRE(ref.t.size() == 21);
  for (ControllerKind kind :
       {ControllerKind::proposed, ControllerKind::stocbf,
        ControllerKind::prsbc, ControllerKind::cvar}) {
    INFO(controller_name(kind));
    const TrajectoryStats ts =
        run_switching(sc, field, kind, sc.run.trajectories, sc.run.seed);
    CHECK(ts.mean_x == ref.mean_x);  // bitwise: filters never engage
    CHECK(ts.mean_f == ref.mean_f);
    CHECK(ts.safe_frac == std::vector<double>(21, 1.0));
  }
  for (double v : ref.mean_x) CHECK(v == 3.0);
}

TEST_CASE("deterministic descent crosses the boundary on schedule",
          "[experiments]") {
  nlohmann::json doc = still_doc();
  doc["system"] = {{"f", "-1"}, {"g", "0"}, {"sigma", "0"}};
  doc["run"]["x0"] = 1.25;
  const Scenario sc = from_doc(doc);
  const SafeProbField field = tabulate_scenario_field(sc);

  const TrajectoryStats ts = run_switching(sc, field, ControllerKind::nominal,
                                           3, sc.run.seed);
  // x(k) = 1.25 - 0.1 k: alive through k = 2, under the level from k = 3
  CHECK(ts.safe_frac[0] == 1.0);
  CHECK(ts.safe_frac[1] == 1.0);
  CHECK(ts.safe_frac[2] == 1.0);
  CHECK(ts.safe_frac[3] == 0.0);
  CHECK(ts.safe_frac[20] == 0.0);
  CHECK_THAT(ts.mean_x[3], WithinAbs(0.95, 1e-12));
  CHECK_THAT(ts.mean_x[20], WithinAbs(-0.75, 1e-12));
  for (double s : ts.std_x) CHECK_THAT(s, WithinAbs(0.0, 1e-12));
  // an uncontrollable plant leaves every filter holding the nominal
  const TrajectoryStats flt = run_switching(sc, field, ControllerKind::stocbf,
                                            3, sc.run.seed);
  CHECK(flt.mean_x == ts.mean_x);
}

TEST_CASE("worst case equality runs contract toward the boundary",
          "[experiments]") {
  const Scenario sc = from_doc(still_doc());
  const SafeProbField field = tabulate_scenario_field(sc);

  // flat certificate: the proposed rule has no gradient to push against
  const TrajectoryStats prop = run_worst_case(
      sc, field, ControllerKind::proposed, 4, sc.run.seed);
  for (double v : prop.mean_x) CHECK(v == 3.0);

  // barrier contraction at rate eta = 1: phi shrinks by 10% per step
  const TrajectoryStats cbf = run_worst_case(
      sc, field, ControllerKind::stocbf, 4, sc.run.seed);
  for (std::size_t k = 1; k < cbf.mean_x.size(); ++k) {
    CHECK(cbf.mean_x[k] < cbf.mean_x[k - 1]);
    CHECK(cbf.mean_x[k] > 1.0);
  }
  CHECK_THAT(cbf.mean_x[1], WithinAbs(1.0 + 2.0 * 0.9, 1e-12));

  // zero noise intensity: the chance constraint collapses onto the cbf one
  const TrajectoryStats pr = run_worst_case(
      sc, field, ControllerKind::prsbc, 4, sc.run.seed);
  CHECK(pr.mean_x == cbf.mean_x);

  // the tail condition contracts phi by gamma per step, faster than eta dt
  const TrajectoryStats cv = run_worst_case(
      sc, field, ControllerKind::cvar, 4, sc.run.seed);
  CHECK(cv.mean_x.back() < cbf.mean_x.back());
  CHECK_THAT(cv.mean_x[1], WithinAbs(1.0 + 2.0 * 0.65, 1e-3));
  CHECK(cv.safe_frac.back() == 1.0);
}

TEST_CASE("trajectory batches aggregate in a fixed order", "[experiments]") {
  nlohmann::json doc = still_doc();
  doc["system"] = {{"f", "2"}, {"g", "1"}, {"sigma", "2"}};
  doc["nominal"] = {{"kind", "proportional"}, {"gain", -2.5}};
  doc["run"]["trajectories"] = 12;
  doc["estimation"]["samples"] = 200;
  const Scenario sc = from_doc(doc);
  const SafeProbField field = tabulate_scenario_field(sc, 3);
  const SafeProbField field1 = tabulate_scenario_field(sc, 1);
  for (std::size_t i = 0; i < field.size(); ++i)
    CHECK(field.node_value(i) == field1.node_value(i));

  const TrajectoryStats serial =
      run_switching(sc, field, ControllerKind::proposed, 12, 77, 1);
  const TrajectoryStats parallel =
      run_switching(sc, field, ControllerKind::proposed, 12, 77, 3);
  CHECK(serial.mean_x == parallel.mean_x);
  CHECK(serial.mean_f == parallel.mean_f);
  CHECK(serial.std_x == parallel.std_x);

  write_trajectory_csv("exp_serial.csv", sc, ControllerKind::proposed, serial,
                       77);
  write_trajectory_csv("exp_parallel.csv", sc, ControllerKind::proposed,
                       parallel, 77);
  CHECK(read_all("exp_serial.csv") == read_all("exp_parallel.csv"));
  std::remove("exp_serial.csv");
  std::remove("exp_parallel.csv");
}

TEST_CASE("figure files carry provenance and survive an empty run",
          "[experiments]") {
  const Scenario sc = from_doc(still_doc());
  const SafeProbField field = tabulate_scenario_field(sc);
  const TrajectoryStats empty =
      run_switching(sc, field, ControllerKind::nominal, 0, sc.run.seed);
  CHECK(empty.t.empty());
  write_trajectory_csv("exp_empty.csv", sc, ControllerKind::nominal, empty,
                       11);
  const std::string text = read_all("exp_empty.csv");
  CHECK(text ==
        "t,mean_f,mean_x,std_x,safe_frac,controller,scenario,seed,build\n");
  std::remove("exp_empty.csv");

  const TrajectoryStats ts =
      run_switching(sc, field, ControllerKind::nominal, 2, sc.run.seed);
  write_trajectory_csv("exp_full.csv", sc, ControllerKind::nominal, ts, 11);
  const std::string full = read_all("exp_full.csv");
  CHECK(full.find(",nominal,still,11,") != std::string::npos);
  CHECK(full.find(kBuildId) != std::string::npos);
  CHECK(std::string(kBuildId).size() > 0);
  std::remove("exp_full.csv");
}

TEST_CASE("numbers and quoting follow the format rules", "[experiments]") {
  CHECK(csv_num(0.1) == "0.1");
  CHECK(csv_num(3.0) == "3");
  CHECK(csv_num(-2.5) == "-2.5");
  CHECK(csv_num(1e-10) == "1e-10");
  CHECK(csv_num(1234567.891) == "1234567.89");  // nine significant digits
  CHECK(csv_num(0.123456789123) == "0.123456789");

  CHECK(CsvWriter::quoted("plain") == "plain");
  CHECK(CsvWriter::quoted("a,b") == "\"a,b\"");
  CHECK(CsvWriter::quoted("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(CsvWriter::quoted("two\nlines") == "\"two\nlines\"");

  {
    CsvWriter w("exp_fmt.csv", {"a", "b"});
    w.row({"1", "x,y"});
    CHECK_THROWS_AS(w.row({"only-one"}), ConfigError);
  }
  CHECK(read_all("exp_fmt.csv") == "a,b\n1,\"x,y\"\n");
  std::remove("exp_fmt.csv");
  CHECK_THROWS_AS(CsvWriter("exp_bad.csv", {}), ConfigError);
  std::remove("exp_bad.csv");
  CHECK_THROWS_AS(CsvWriter("/no/dir/file.csv", {"a"}), ConfigError);
}

TEST_CASE("rl wrappers honor the scenario filter flag", "[experiments]") {
  nlohmann::json doc{
      {"schema_version", 1},
      {"name", "chain"},
      {"chain", {{"x_max", 10}, {"noise_p", 0.08}}},
      {"filter", {{"threshold", 5}, {"forced", -1}}},
      {"pg", {{"iterations", 30}, {"episodes", 4}, {"horizon", 10}}},
      {"qlearn", {{"gamma", 0.9}, {"iterations", 200}, {"horizon", 10}}}};
  const Scenario sc = from_doc(doc);

  const PgResult open = run_pg(sc, false, 5);
  const PgResult capped = run_pg(sc, true, 5);
  CHECK(open.mean_return.size() == 30);
  CHECK(open.overrides == 0);
  CHECK(capped.violations == 0);
  CHECK(capped.max_state <= sc.filter.threshold + 2);

  const QResult q = run_q(sc, true, 5);
  CHECK(q.violations == 0);
  CHECK(q.overrides > 0);
  write_q_csv("exp_q.csv", sc, q, sc.filter, 5);
  const std::string text = read_all("exp_q.csv");
  CHECK(text.find("force -1 above 5") != std::string::npos);
  CHECK(text.find("x,q_minus,q_zero,q_plus,") == 0);
  std::remove("exp_q.csv");

  write_pg_csv("exp_pg.csv", sc, open, identity_filter(), 5);
  CHECK(read_all("exp_pg.csv").find("identity") != std::string::npos);
  std::remove("exp_pg.csv");

  const Scenario cont = from_doc(still_doc());
  CHECK_THROWS_AS(run_pg(cont, false, 1), ConfigError);
}
