#pragma once

#include "psc/baselines.hpp"
#include "psc/certificate.hpp"
#include "psc/core.hpp"
#include "psc/expression.hpp"
#include "psc/field.hpp"
#include "psc/rl.hpp"
#include "psc/system.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace psc {

// ---------------------------------------------------------------------------
// enum <-> name maps used by the file format and the command line

inline const char* objective_name(SafetyObjective o) {
  switch (o) {
    case SafetyObjective::stay_nominal: return "stay_nominal";
    case SafetyObjective::stay_supremum: return "stay_supremum";
    case SafetyObjective::reach_nominal: return "reach_nominal";
    default: return "reach_supremum";
  }
}

inline SafetyObjective objective_from_name(const std::string& s) {
  if (s == "stay_nominal") return SafetyObjective::stay_nominal;
  if (s == "stay_supremum") return SafetyObjective::stay_supremum;
  if (s == "reach_nominal") return SafetyObjective::reach_nominal;
  if (s == "reach_supremum") return SafetyObjective::reach_supremum;
  throw ConfigError("scenario: unknown objective '" + s + "'");
}

inline const char* horizon_mode_name(HorizonMode m) {
  return m == HorizonMode::fixed ? "fixed" : "receding";
}

inline HorizonMode horizon_mode_from_name(const std::string& s) {
  if (s == "fixed") return HorizonMode::fixed;
  if (s == "receding") return HorizonMode::receding;
  throw ConfigError("scenario: unknown horizon mode '" + s + "'");
}

inline const char* interp_name(InterpOrder o) {
  return o == InterpOrder::cubic ? "cubic" : "linear";
}

inline InterpOrder interp_from_name(const std::string& s) {
  if (s == "cubic") return InterpOrder::cubic;
  if (s == "linear") return InterpOrder::linear;
  throw ConfigError("scenario: unknown interpolation '" + s + "'");
}

inline const char* schedule_name(RateSchedule s) {
  return s == RateSchedule::inv_sqrt ? "inv_sqrt" : "harmonic";
}

inline RateSchedule schedule_from_name(const std::string& s) {
  if (s == "inv_sqrt") return RateSchedule::inv_sqrt;
  if (s == "harmonic") return RateSchedule::harmonic;
  throw ConfigError("scenario: unknown learning rate schedule '" + s + "'");
}

inline const char* scaling_name(PrsbcScaling s) {
  return s == PrsbcScaling::rate ? "rate" : "per_step";
}

inline PrsbcScaling scaling_from_name(const std::string& s) {
  if (s == "rate") return PrsbcScaling::rate;
  if (s == "per_step") return PrsbcScaling::per_step;
  throw ConfigError("scenario: unknown chance-constraint scaling '" + s + "'");
}

namespace detail {

inline void check_keys(const nlohmann::json& j,
                       std::initializer_list<const char*> allowed,
                       const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("scenario: unknown key '" + it.key() + "' in " +
                        where);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scalar coefficient given either as one expression or as an ordered list
// of guarded branches.  The source text is kept verbatim so a loaded file
// saves back to the same canonical form.

struct PiecewiseDef {
  struct Branch {
    std::string when;  // empty = always matches
    std::string value;
  };
  std::vector<Branch> branches;

  GuardedFn compile() const {
    if (branches.empty())
      throw ConfigError("scenario: coefficient has no branches");
    GuardedFn fn;
    for (const auto& br : branches) {
      GuardedFn::Branch out;
      if (!br.when.empty()) out.when = parse_expression(br.when);
      out.value = parse_expression(br.value);
      fn.branches.push_back(std::move(out));
    }
    return fn;
  }

  nlohmann::json to_json() const {
    if (branches.size() == 1 && branches[0].when.empty())
      return nlohmann::json(branches[0].value);
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& br : branches) {
      nlohmann::json o;
      if (!br.when.empty()) o["when"] = br.when;
      o["value"] = br.value;
      arr.push_back(std::move(o));
    }
    return arr;
  }

  static std::string value_text(const nlohmann::json& j, const char* where) {
    if (j.is_number()) return j.dump();
    if (j.is_string()) return j.get<std::string>();
    throw ConfigError(std::string("scenario: ") + where +
                      " must be a number or an expression string");
  }

  static PiecewiseDef from_json(const nlohmann::json& j, const char* where) {
    PiecewiseDef def;
    if (j.is_array()) {
      for (const auto& el : j) {
        if (!el.is_object())
          throw ConfigError(std::string("scenario: branches of ") + where +
                            " must be objects");
        detail::check_keys(el, {"when", "value"}, where);
        Branch br;
        br.when = el.value("when", std::string());
        if (!el.contains("value"))
          throw ConfigError(std::string("scenario: branch of ") + where +
                            " lacks a value");
        br.value = value_text(el.at("value"), where);
        if (br.when.empty() && &el != &j.back())
          throw ConfigError(std::string("scenario: unguarded branch of ") +
                            where + " before the end is unreachable");
        def.branches.push_back(std::move(br));
      }
      if (def.branches.empty())
        throw ConfigError(std::string("scenario: ") + where +
                          " has no branches");
    } else {
      def.branches.push_back({std::string(), value_text(j, where)});
    }
    def.compile();  // surface parse errors at load time
    return def;
  }
};

// ---------------------------------------------------------------------------
// Nominal controllers.  The two-layer network mirrors a trained policy:
// scalar in, scalar out, relu at both stages, so it can command positive
// pushes but never brakes.

struct NnNominal {
  double w1 = 0.5, b1 = 0.2;
  double w2 = 1.0, b2 = -0.5;

  double evaluate(double x) const {
    const auto relu = [](double v) { return v > 0.0 ? v : 0.0; };
    return relu(w2 * relu(w1 * x + b1) + b2);
  }
};

// Out-of-process controller speaking one decimal per line on stdin/stdout.
// The exec status travels back over a close-on-exec pipe, so a bad command
// fails the constructor instead of the first query.
class PipePolicy {
 public:
  explicit PipePolicy(const std::vector<std::string>& argv) {
    if (argv.empty())
      throw ConfigError("external controller: empty command line");
    std::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2], status[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0 ||
        pipe2(status, O_CLOEXEC) != 0)
      throw ConfigError("external controller: pipe failed");
    pid_ = fork();
    if (pid_ < 0) throw ConfigError("external controller: fork failed");
    if (pid_ == 0) {
      dup2(to_child[0], 0);
      dup2(from_child[1], 1);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      close(status[0]);
      std::vector<char*> av;
      for (const auto& a : argv) av.push_back(const_cast<char*>(a.c_str()));
      av.push_back(nullptr);
      execvp(av[0], av.data());
      const int err = errno;
      [[maybe_unused]] ssize_t n = write(status[1], &err, sizeof err);
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    close(status[1]);
    int err = 0;
    const ssize_t got = read(status[0], &err, sizeof err);
    close(status[0]);
    if (got > 0) {
      waitpid(pid_, nullptr, 0);
      pid_ = -1;
      close(to_child[1]);
      close(from_child[0]);
      throw ConfigError("external controller: cannot run '" + argv[0] +
                        "': " + std::strerror(err));
    }
    in_ = fdopen(to_child[1], "w");
    out_ = fdopen(from_child[0], "r");
    if (!in_ || !out_) throw ConfigError("external controller: fdopen failed");
  }

  PipePolicy(const PipePolicy&) = delete;
  PipePolicy& operator=(const PipePolicy&) = delete;

  ~PipePolicy() {
    if (in_) fclose(in_);
    if (out_) fclose(out_);
    if (pid_ > 0) waitpid(pid_, nullptr, 0);
  }

  double query(double x) {
    if (fprintf(in_, "%.17g\n", x) < 0 || fflush(in_) != 0)
      throw ConfigError("external controller closed the pipe");
    char line[128];
    if (!fgets(line, sizeof line, out_))
      throw ConfigError("external controller closed the pipe");
    char* end = nullptr;
    const double v = strtod(line, &end);
    if (end == line)
      throw ConfigError(std::string("external controller sent '") + line +
                        "' instead of a number");
    return v;
  }

 private:
  pid_t pid_ = -1;
  FILE* in_ = nullptr;
  FILE* out_ = nullptr;
};

enum class NominalKind { zero, proportional, network, command };

struct NominalDef {
  NominalKind kind = NominalKind::proportional;
  double gain = -2.5;                       // proportional
  NnNominal net;                            // network
  std::vector<std::string> argv;            // command

  Policy make() const {
    switch (kind) {
      case NominalKind::zero:
        return zero_policy(1);
      case NominalKind::proportional: {
        const double k = gain;
        return [k](const Vec& x) { return vec1(k * x[0]); };
      }
      case NominalKind::network: {
        const NnNominal n = net;
        return [n](const Vec& x) { return vec1(n.evaluate(x[0])); };
      }
      default: {
        auto pipe = std::make_shared<PipePolicy>(argv);
        return [pipe](const Vec& x) { return vec1(pipe->query(x[0])); };
      }
    }
  }

  nlohmann::json to_json() const {
    switch (kind) {
      case NominalKind::zero:
        return nlohmann::json{{"kind", "zero"}};
      case NominalKind::proportional:
        return nlohmann::json{{"kind", "proportional"}, {"gain", gain}};
      case NominalKind::network:
        return nlohmann::json{{"kind", "network"},
                              {"w1", net.w1},
                              {"b1", net.b1},
                              {"w2", net.w2},
                              {"b2", net.b2}};
      default:
        return nlohmann::json{{"kind", "command"}, {"argv", argv}};
    }
  }

  static NominalDef from_json(const nlohmann::json& j) {
    NominalDef def;
    const std::string kind = j.value("kind", std::string("proportional"));
    if (kind == "zero") {
      detail::check_keys(j, {"kind"}, "nominal");
      def.kind = NominalKind::zero;
    } else if (kind == "proportional") {
      detail::check_keys(j, {"kind", "gain"}, "nominal");
      def.kind = NominalKind::proportional;
      def.gain = j.value("gain", def.gain);
    } else if (kind == "network") {
      detail::check_keys(j, {"kind", "w1", "b1", "w2", "b2"}, "nominal");
      def.kind = NominalKind::network;
      def.net.w1 = j.value("w1", def.net.w1);
      def.net.b1 = j.value("b1", def.net.b1);
      def.net.w2 = j.value("w2", def.net.w2);
      def.net.b2 = j.value("b2", def.net.b2);
    } else if (kind == "command") {
      detail::check_keys(j, {"kind", "argv"}, "nominal");
      def.kind = NominalKind::command;
      def.argv = j.value("argv", std::vector<std::string>());
      if (def.argv.empty())
        throw ConfigError("scenario: command nominal needs an argv list");
    } else {
      throw ConfigError("scenario: unknown nominal kind '" + kind + "'");
    }
    return def;
  }
};

// ---------------------------------------------------------------------------

struct RunConfig {
  double x0 = 3.0;
  double dt = 0.1;
  double t_max = 10.0;
  int trajectories = 100;
  std::uint64_t seed = 2024;
};

struct EstimationConfig {
  double lo = 0.8;
  double step = 0.4;
  int nodes = 19;
  long samples = 10000;
  InterpOrder interp = InterpOrder::cubic;
  std::string algorithm = "mc";
  std::string reference = "zero";  // policy the field is tabulated under
  std::uint64_t seed = 2024;
};

// One experiment file: a controlled diffusion with its barrier, nominal
// controller and tabulation grid, or a finite chain with its learning
// setup, or both.  Absent fields fall back to the defaults above.
struct Scenario {
  std::string name = "unnamed";
  std::map<std::string, std::string> units;

  bool has_system = false;
  PiecewiseDef f, g, sigma;
  double level = 1.0;  // safe set {x : x - level >= 0}
  double horizon = 10.0;
  HorizonMode horizon_mode = HorizonMode::fixed;
  SafetyObjective objective = SafetyObjective::stay_nominal;
  NominalDef nominal;
  CertificateParams certificate;
  BaselineParams baselines;
  RunConfig run;
  EstimationConfig estimation;

  bool has_chain = false;
  ChainMdp chain;
  SafetyFilterG filter;
  PgConfig pg;
  QConfig qlearn;

  SdeSystem make_system() const {
    if (!has_system)
      throw ConfigError("scenario: no continuous system section");
    return scalar_system(f.compile(), g.compile(), sigma.compile());
  }

  BarrierSpec make_barrier() const {
    BarrierSpec spec = offset_barrier(level);
    spec.horizon = horizon;
    spec.horizon_mode = horizon_mode;
    spec.objective = objective;
    return spec;
  }

  Policy make_nominal() const { return nominal.make(); }

  std::vector<Axis> axes() const {
    Axis ax;
    ax.kind = AxisKind::state;
    ax.index = 0;
    ax.lo = estimation.lo;
    ax.step = estimation.step;
    ax.count = estimation.nodes;
    return {ax};
  }

  void validate() const {
    if (!has_system && !has_chain)
      throw ConfigError(
          "scenario: neither a continuous system nor a chain is defined");
    if (!(run.dt > 0.0)) throw ConfigError("scenario: dt must be positive");
    if (!(run.t_max > 0.0))
      throw ConfigError("scenario: t_max must be positive");
    if (run.trajectories < 0)
      throw ConfigError("scenario: trajectory count cannot be negative");
    if (has_system) {
      certificate.validate();
      baselines.validate();
      if (estimation.nodes < 2)
        throw ConfigError("scenario: the state grid needs at least two nodes");
      if (!(estimation.step > 0.0))
        throw ConfigError("scenario: grid step must be positive");
      if (estimation.samples < 1)
        throw ConfigError("scenario: tabulation needs at least one sample");
      if (estimation.algorithm != "mc")
        throw ConfigError("scenario: unknown tabulation algorithm '" +
                          estimation.algorithm + "'");
      if (estimation.reference != "zero" && estimation.reference != "nominal")
        throw ConfigError("scenario: reference policy must be zero or nominal");
    }
    if (has_chain) {
      chain.validate();
      pg.validate();
      qlearn.validate();
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["name"] = name;
    if (!units.empty()) j["units"] = units;
    if (has_system) {
      j["system"] = {{"f", f.to_json()},
                     {"g", g.to_json()},
                     {"sigma", sigma.to_json()}};
      j["barrier"] = {{"level", level},
                      {"horizon", horizon},
                      {"mode", horizon_mode_name(horizon_mode)},
                      {"objective", objective_name(objective)}};
      j["nominal"] = nominal.to_json();
      j["certificate"] = {{"alpha", certificate.alpha_gain},
                          {"epsilon", certificate.epsilon},
                          {"grad_tol", certificate.grad_tol}};
      j["baselines"] = {{"eta", baselines.eta},
                        {"epsilon", baselines.epsilon_prsbc},
                        {"cvar_gamma", baselines.gamma_cvar},
                        {"cvar_beta", baselines.beta_cvar},
                        {"cvar_samples", baselines.cvar_samples},
                        {"prsbc_scaling", scaling_name(baselines.prsbc_scaling)}};
      j["run"] = {{"x0", run.x0},
                  {"dt", run.dt},
                  {"t_max", run.t_max},
                  {"trajectories", run.trajectories},
                  {"seed", run.seed}};
      j["estimation"] = {{"lo", estimation.lo},
                         {"step", estimation.step},
                         {"nodes", estimation.nodes},
                         {"samples", estimation.samples},
                         {"interpolation", interp_name(estimation.interp)},
                         {"algorithm", estimation.algorithm},
                         {"reference", estimation.reference},
                         {"seed", estimation.seed}};
    }
    if (has_chain) {
      j["chain"] = {{"x_max", chain.x_max}, {"noise_p", chain.noise_p}};
      j["filter"] = {{"threshold", filter.threshold},
                     {"forced", filter.forced}};
      j["pg"] = {{"iterations", pg.n_iter},
                 {"episodes", pg.n_eps},
                 {"horizon", pg.h_r},
                 {"x0", pg.x0},
                 {"theta0", pg.theta0},
                 {"lr_scale", pg.lr_scale},
                 {"schedule", schedule_name(pg.schedule)}};
      j["qlearn"] = {{"gamma", qlearn.gamma},
                     {"iterations", qlearn.n_iter},
                     {"horizon", qlearn.h_r},
                     {"x0", qlearn.x0},
                     {"explore", qlearn.explore},
                     {"schedule", schedule_name(qlearn.schedule)},
                     {"per_visit", qlearn.per_visit}};
    }
    return j;
  }

  static Scenario from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("scenario: document must be an object");
    detail::check_keys(j,
                       {"schema_version", "name", "units", "system", "barrier",
                        "nominal", "certificate", "baselines", "run",
                        "estimation", "chain", "filter", "pg", "qlearn"},
                       "the top level");
    if (!j.contains("schema_version"))
      throw ConfigError("scenario: schema_version is required");
    if (j.at("schema_version").get<int>() != 1)
      throw ConfigError("scenario: unsupported schema version");
    Scenario sc;
    sc.name = j.value("name", sc.name);
    if (j.contains("units"))
      sc.units = j.at("units").get<std::map<std::string, std::string>>();

    sc.has_system = j.contains("system");
    if (sc.has_system) {
      const auto& sys = j.at("system");
      detail::check_keys(sys, {"f", "g", "sigma"}, "system");
      if (!sys.contains("f") || !sys.contains("g") || !sys.contains("sigma"))
        throw ConfigError("scenario: system needs f, g and sigma");
      sc.f = PiecewiseDef::from_json(sys.at("f"), "f");
      sc.g = PiecewiseDef::from_json(sys.at("g"), "g");
      sc.sigma = PiecewiseDef::from_json(sys.at("sigma"), "sigma");
      if (j.contains("barrier")) {
        const auto& b = j.at("barrier");
        detail::check_keys(b, {"level", "horizon", "mode", "objective"},
                           "barrier");
        sc.level = b.value("level", sc.level);
        sc.horizon = b.value("horizon", sc.horizon);
        sc.horizon_mode = horizon_mode_from_name(
            b.value("mode", std::string(horizon_mode_name(sc.horizon_mode))));
        sc.objective = objective_from_name(
            b.value("objective", std::string(objective_name(sc.objective))));
      }
      if (j.contains("nominal"))
        sc.nominal = NominalDef::from_json(j.at("nominal"));
      if (j.contains("certificate")) {
        const auto& c = j.at("certificate");
        detail::check_keys(c, {"alpha", "epsilon", "grad_tol"}, "certificate");
        sc.certificate.alpha_gain = c.value("alpha", sc.certificate.alpha_gain);
        sc.certificate.epsilon = c.value("epsilon", sc.certificate.epsilon);
        sc.certificate.grad_tol = c.value("grad_tol", sc.certificate.grad_tol);
      }
      if (j.contains("baselines")) {
        const auto& b = j.at("baselines");
        detail::check_keys(b,
                           {"eta", "epsilon", "cvar_gamma", "cvar_beta",
                            "cvar_samples", "prsbc_scaling"},
                           "baselines");
        sc.baselines.eta = b.value("eta", sc.baselines.eta);
        sc.baselines.epsilon_prsbc =
            b.value("epsilon", sc.baselines.epsilon_prsbc);
        sc.baselines.gamma_cvar = b.value("cvar_gamma", sc.baselines.gamma_cvar);
        sc.baselines.beta_cvar = b.value("cvar_beta", sc.baselines.beta_cvar);
        sc.baselines.cvar_samples =
            b.value("cvar_samples", sc.baselines.cvar_samples);
        sc.baselines.prsbc_scaling = scaling_from_name(b.value(
            "prsbc_scaling",
            std::string(scaling_name(sc.baselines.prsbc_scaling))));
      }
      if (j.contains("run")) {
        const auto& r = j.at("run");
        detail::check_keys(r, {"x0", "dt", "t_max", "trajectories", "seed"},
                           "run");
        sc.run.x0 = r.value("x0", sc.run.x0);
        sc.run.dt = r.value("dt", sc.run.dt);
        sc.run.t_max = r.value("t_max", sc.run.t_max);
        sc.run.trajectories = r.value("trajectories", sc.run.trajectories);
        sc.run.seed = r.value("seed", sc.run.seed);
      }
      if (j.contains("estimation")) {
        const auto& e = j.at("estimation");
        detail::check_keys(e,
                           {"lo", "step", "nodes", "samples", "interpolation",
                            "algorithm", "reference", "seed"},
                           "estimation");
        sc.estimation.lo = e.value("lo", sc.estimation.lo);
        sc.estimation.step = e.value("step", sc.estimation.step);
        sc.estimation.nodes = e.value("nodes", sc.estimation.nodes);
        sc.estimation.samples = e.value("samples", sc.estimation.samples);
        sc.estimation.interp = interp_from_name(e.value(
            "interpolation", std::string(interp_name(sc.estimation.interp))));
        sc.estimation.algorithm = e.value("algorithm", sc.estimation.algorithm);
        sc.estimation.reference = e.value("reference", sc.estimation.reference);
        sc.estimation.seed = e.value("seed", sc.estimation.seed);
      }
    } else {
      for (const char* k : {"barrier", "nominal", "certificate", "baselines",
                            "run", "estimation"})
        if (j.contains(k))
          throw ConfigError(std::string("scenario: section '") + k +
                            "' needs a system section");
    }

    sc.has_chain = j.contains("chain");
    if (sc.has_chain) {
      const auto& c = j.at("chain");
      detail::check_keys(c, {"x_max", "noise_p"}, "chain");
      sc.chain.x_max = c.value("x_max", sc.chain.x_max);
      sc.chain.noise_p = c.value("noise_p", sc.chain.noise_p);
      if (j.contains("filter")) {
        const auto& flt = j.at("filter");
        detail::check_keys(flt, {"threshold", "forced"}, "filter");
        sc.filter.threshold = flt.value("threshold", sc.filter.threshold);
        sc.filter.forced = flt.value("forced", sc.filter.forced);
      }
      if (j.contains("pg")) {
        const auto& p = j.at("pg");
        detail::check_keys(p,
                           {"iterations", "episodes", "horizon", "x0", "theta0",
                            "lr_scale", "schedule"},
                           "pg");
        sc.pg.n_iter = p.value("iterations", sc.pg.n_iter);
        sc.pg.n_eps = p.value("episodes", sc.pg.n_eps);
        sc.pg.h_r = p.value("horizon", sc.pg.h_r);
        sc.pg.x0 = p.value("x0", sc.pg.x0);
        sc.pg.theta0 = p.value("theta0", sc.pg.theta0);
        sc.pg.lr_scale = p.value("lr_scale", sc.pg.lr_scale);
        sc.pg.schedule = schedule_from_name(
            p.value("schedule", std::string(schedule_name(sc.pg.schedule))));
      }
      if (j.contains("qlearn")) {
        const auto& q = j.at("qlearn");
        detail::check_keys(q,
                           {"gamma", "iterations", "horizon", "x0", "explore",
                            "schedule", "per_visit"},
                           "qlearn");
        sc.qlearn.gamma = q.value("gamma", sc.qlearn.gamma);
        sc.qlearn.n_iter = q.value("iterations", sc.qlearn.n_iter);
        sc.qlearn.h_r = q.value("horizon", sc.qlearn.h_r);
        sc.qlearn.x0 = q.value("x0", sc.qlearn.x0);
        sc.qlearn.explore = q.value("explore", sc.qlearn.explore);
        sc.qlearn.schedule = schedule_from_name(q.value(
            "schedule", std::string(schedule_name(sc.qlearn.schedule))));
        sc.qlearn.per_visit = q.value("per_visit", sc.qlearn.per_visit);
      }
    } else {
      for (const char* k : {"filter", "pg", "qlearn"})
        if (j.contains(k))
          throw ConfigError(std::string("scenario: section '") + k +
                            "' needs a chain section");
    }

    sc.validate();
    return sc;
  }
};

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("scenario: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario: " + path + ": " + e.what());
  }
  return Scenario::from_json(j);
}

inline void save_scenario(const Scenario& sc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("scenario: cannot write " + path);
  out << sc.to_json().dump(2) << '\n';
  if (!out) throw ConfigError("scenario: cannot write " + path);
}

}  // namespace psc
