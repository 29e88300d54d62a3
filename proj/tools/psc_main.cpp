// Command line front end: tabulate safe probability fields, replay the
// worst-case and filtered closed-loop studies, train the chain policies,
// and check the headline numbers of a scenario in one go.

#include "psc/experiments.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace psc;

namespace {

struct Opts {
  std::string scenario;
  std::string out = ".";
  std::string field;
  std::string controller = "all";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  bool check = false;
};

void add_common(CLI::App* cmd, Opts& o, bool with_field) {
  cmd->add_option("--scenario", o.scenario, "scenario file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "output directory");
  auto* seed = cmd->add_option("--seed", o.seed, "override the scenario seed");
  cmd->parse_complete_callback([&o, seed] { o.seed_set = seed->count() > 0; });
  cmd->add_option("--jobs", o.jobs, "worker threads")
      ->check(CLI::PositiveNumber);
  if (with_field)
    cmd->add_option("--field", o.field,
                    "saved field file; tabulated on the fly when absent");
}

SafeProbField obtain_field(const Scenario& sc, const Opts& o) {
  if (!o.field.empty()) return SafeProbField::load(o.field);
  std::cerr << "tabulating " << sc.estimation.nodes << " nodes, "
            << sc.estimation.samples << " samples each\n";
  return tabulate_scenario_field(sc, o.jobs);
}

std::vector<ControllerKind> pick_controllers(const std::string& name) {
  if (name == "all") return all_controllers();
  return {controller_from_name(name)};
}

std::string out_path(const Opts& o, const std::string& file) {
  fs::create_directories(o.out);
  return (fs::path(o.out) / file).string();
}

int cmd_estimate(const Opts& o) {
  const Scenario sc = load_scenario(o.scenario);
  Scenario used = sc;
  if (o.seed_set) used.estimation.seed = o.seed;
  const SafeProbField field = tabulate_scenario_field(used, o.jobs);
  const std::string path = out_path(o, sc.name + "_field.json");
  field.save(path);
  double lo = 1.0, hi = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i) {
    lo = std::min(lo, field.node_value(i));
    hi = std::max(hi, field.node_value(i));
  }
  std::cout << "field " << path << ": " << field.size() << " nodes in ["
            << csv_num(lo) << ", " << csv_num(hi) << "], seed "
            << used.estimation.seed << "\n";
  return 0;
}

int cmd_trajectories(const Opts& o, bool worst) {
  const Scenario sc = load_scenario(o.scenario);
  const std::uint64_t seed = o.seed_set ? o.seed : sc.run.seed;
  const SafeProbField field = obtain_field(sc, o);
  const char* mode = worst ? "worst" : "switching";
  for (ControllerKind kind : pick_controllers(o.controller)) {
    const TrajectoryStats ts =
        worst ? run_worst_case(sc, field, kind, sc.run.trajectories, seed,
                               o.jobs)
              : run_switching(sc, field, kind, sc.run.trajectories, seed,
                              o.jobs);
    const std::string path =
        out_path(o, sc.name + "_" + mode + "_" + controller_name(kind) +
                        ".csv");
    write_trajectory_csv(path, sc, kind, ts, seed);
    std::cout << mode << " " << controller_name(kind) << ": final mean F "
              << (ts.mean_f.empty() ? "n/a" : csv_num(ts.mean_f.back()))
              << ", final safe fraction "
              << (ts.safe_frac.empty() ? "n/a" : csv_num(ts.safe_frac.back()))
              << " -> " << path << "\n";
  }
  return 0;
}

int cmd_rl_pg(const Opts& o) {
  const Scenario sc = load_scenario(o.scenario);
  const std::uint64_t seed = o.seed_set ? o.seed : sc.run.seed;
  const PgResult open = run_pg(sc, false, seed);
  const PgResult capped = run_pg(sc, true, seed);
  write_pg_csv(out_path(o, sc.name + "_pg_open.csv"), sc, open,
               identity_filter(), seed);
  write_pg_csv(out_path(o, sc.name + "_pg_capped.csv"), sc, capped, sc.filter,
               seed);
  std::cout << "pg open: final return " << csv_num(open.mean_return.back())
            << ", theta " << csv_num(open.policy.theta) << ", max state "
            << open.max_state << "\n";
  std::cout << "pg capped: final return " << csv_num(capped.mean_return.back())
            << ", theta " << csv_num(capped.policy.theta) << ", max state "
            << capped.max_state << ", overrides " << capped.overrides
            << ", violations " << capped.violations << "\n";
  return capped.violations == 0 ? 0 : 1;
}

int cmd_rl_q(const Opts& o) {
  const Scenario sc = load_scenario(o.scenario);
  const std::uint64_t seed = o.seed_set ? o.seed : sc.run.seed;
  const QResult open = run_q(sc, false, seed);
  const QResult capped = run_q(sc, true, seed);
  write_q_csv(out_path(o, sc.name + "_q_open.csv"), sc, open,
              identity_filter(), seed);
  write_q_csv(out_path(o, sc.name + "_q_capped.csv"), sc, capped, sc.filter,
              seed);
  std::cout << "q open: greedy at 0 is " << open.table.greedy(0)
            << ", max |Q| " << csv_num(open.q_max_abs) << "\n";
  std::cout << "q capped: greedy at 0 is " << capped.table.greedy(0)
            << ", overrides " << capped.overrides << ", violations "
            << capped.violations << "\n";
  return capped.violations == 0 ? 0 : 1;
}

int cmd_report(const Opts& o) {
  const Scenario sc = load_scenario(o.scenario);
  const std::uint64_t seed = o.seed_set ? o.seed : sc.run.seed;
  const SafeProbField field = obtain_field(sc, o);

  CsvWriter summary(out_path(o, sc.name + "_summary.csv"),
                    {"scenario", "mode", "controller", "final_mean_f",
                     "min_mean_f", "final_safe_frac", "min_safe_frac",
                     "alpha", "epsilon", "eta", "cvar_gamma", "horizon", "dt",
                     "x0", "trajectories", "seed", "build"});

  double worst_final = 0.0;
  double switch_proposed = 0.0, switch_best_baseline = 0.0;
  for (const bool worst : {true, false}) {
    for (ControllerKind kind : all_controllers()) {
      const TrajectoryStats ts =
          worst ? run_worst_case(sc, field, kind, sc.run.trajectories, seed,
                                 o.jobs)
                : run_switching(sc, field, kind, sc.run.trajectories, seed,
                                o.jobs);
      const double final_f = ts.mean_f.empty() ? 0.0 : ts.mean_f.back();
      const double min_f =
          ts.mean_f.empty()
              ? 0.0
              : *std::min_element(ts.mean_f.begin(), ts.mean_f.end());
      const double final_safe =
          ts.safe_frac.empty() ? 0.0 : ts.safe_frac.back();
      const double min_safe =
          ts.safe_frac.empty()
              ? 0.0
              : *std::min_element(ts.safe_frac.begin(), ts.safe_frac.end());
      summary.row({sc.name, worst ? "worst" : "switching",
                   controller_name(kind), csv_num(final_f), csv_num(min_f),
                   csv_num(final_safe), csv_num(min_safe),
                   csv_num(sc.certificate.alpha_gain),
                   csv_num(sc.certificate.epsilon),
                   csv_num(sc.baselines.eta),
                   csv_num(sc.baselines.gamma_cvar), csv_num(sc.horizon),
                   csv_num(sc.run.dt), csv_num(sc.run.x0),
                   std::to_string(sc.run.trajectories), std::to_string(seed),
                   kBuildId});
      std::cout << (worst ? "worst" : "switching") << " "
                << controller_name(kind) << ": final mean F "
                << csv_num(final_f) << ", min mean F " << csv_num(min_f)
                << ", final safe fraction " << csv_num(final_safe) << "\n";
      if (worst && kind == ControllerKind::proposed) worst_final = final_f;
      if (!worst && kind == ControllerKind::proposed)
        switch_proposed = final_safe;
      if (!worst &&
          (kind == ControllerKind::stocbf || kind == ControllerKind::prsbc ||
           kind == ControllerKind::cvar))
        switch_best_baseline = std::max(switch_best_baseline, final_safe);
    }
  }

  int failures = 0;
  if (o.check) {
    const double target = 1.0 - sc.certificate.epsilon;
    const bool hold =
        worst_final >= target - 0.05 && worst_final <= target + 0.05;
    std::cout << (hold ? "[ok]" : "[violated]")
              << " worst-case proposed final mean F " << csv_num(worst_final)
              << " within 0.05 of " << csv_num(target) << "\n";
    failures += hold ? 0 : 1;
    const bool ahead = switch_proposed > switch_best_baseline;
    std::cout << (ahead ? "[ok]" : "[violated]")
              << " switching proposed safe fraction "
              << csv_num(switch_proposed) << " strictly above best baseline "
              << csv_num(switch_best_baseline) << "\n";
    failures += ahead ? 0 : 1;
  }
  return failures;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"safe probability certificates: estimation, filtering and "
               "closed-loop studies"};
  app.require_subcommand(1);

  Opts est, wc, sw, pg, qd, rep;
  auto* c_est = app.add_subcommand(
      "estimate", "tabulate the safe probability field and save it");
  add_common(c_est, est, false);
  auto* c_wc = app.add_subcommand(
      "worst-case", "replay each controller at its least safe setting");
  add_common(c_wc, wc, true);
  c_wc->add_option("--controller", wc.controller,
                   "proposed|stocbf|prsbc|cvar|nominal|all");
  auto* c_sw = app.add_subcommand(
      "switching", "run the nominal controller through each safety filter");
  add_common(c_sw, sw, true);
  c_sw->add_option("--controller", sw.controller,
                   "proposed|stocbf|prsbc|cvar|nominal|all");
  auto* c_pg = app.add_subcommand(
      "rl-pg", "policy gradient on the chain, open and filtered");
  add_common(c_pg, pg, false);
  auto* c_q = app.add_subcommand(
      "rl-q", "q learning on the chain, open and filtered");
  add_common(c_q, qd, false);
  auto* c_rep = app.add_subcommand(
      "report", "run every study and summarize the headline numbers");
  add_common(c_rep, rep, true);
  c_rep->add_flag("--check", rep.check,
                  "exit nonzero when a headline threshold is violated");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_est->parsed()) return cmd_estimate(est);
    if (c_wc->parsed()) return cmd_trajectories(wc, true);
    if (c_sw->parsed()) return cmd_trajectories(sw, false);
    if (c_pg->parsed()) return cmd_rl_pg(pg);
    if (c_q->parsed()) return cmd_rl_q(qd);
    if (c_rep->parsed()) return cmd_report(rep);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
