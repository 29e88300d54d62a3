#pragma once

#include "psc/core.hpp"
#include "psc/system.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

namespace psc {

// Grid axes name coordinates of the augmented state: remaining horizon T,
// margin L, barrier value phi, or one raw state component.
enum class AxisKind { horizon, margin, barrier, state };

enum class InterpOrder { linear, cubic };

struct Axis {
  AxisKind kind = AxisKind::state;
  int index = 0;  // state component when kind == state
  double lo = 0.0;
  double step = 1.0;
  int count = 0;
  double hi() const { return lo + step * (count - 1); }
  double coord(int i) const { return lo + step * i; }
};

struct FieldProvenance {
  std::string algorithm;  // "mc", "is", "kernel-dp", "exact"
  long samples = 0;
  std::uint64_t seed = 0;
  std::string reference;  // which policy generated the samples
  bool monotone_in_horizon = true;
};

struct FieldQuery {
  double value = 0.0;
  Vec grad;  // one entry per field axis
  Mat hess;
};

inline const char* axis_kind_name(AxisKind k) {
  switch (k) {
    case AxisKind::horizon: return "T";
    case AxisKind::margin: return "L";
    case AxisKind::barrier: return "phi";
    default: return "x";
  }
}

inline AxisKind axis_kind_from(const std::string& s) {
  if (s == "T") return AxisKind::horizon;
  if (s == "L") return AxisKind::margin;
  if (s == "phi") return AxisKind::barrier;
  if (s == "x") return AxisKind::state;
  throw ConfigError("field file: unknown axis kind '" + s + "'");
}

// Monte Carlo or DP estimates of the safe probability on a uniform grid,
// exposed as a twice-differentiable interpolant.  Cubic uses the Keys
// kernel (a = -1/2), which passes through the nodes and reproduces linear
// data exactly; boundary cells see linearly extrapolated ghost nodes.
class SafeProbField {
 public:
  FieldProvenance provenance;

  SafeProbField() = default;

  SafeProbField(std::vector<Axis> axes, InterpOrder order)
      : axes_(std::move(axes)), order_(order) {
    if (axes_.empty()) throw ConfigError("field: no axes");
    if (axes_.size() > 6) throw ConfigError("field: too many axes");
    std::size_t n = 1;
    for (const auto& ax : axes_) {
      if (ax.count < 2) throw ConfigError("field: axis needs at least two nodes");
      if (!(ax.step > 0.0)) throw ConfigError("field: axis step must be positive");
      n *= static_cast<std::size_t>(ax.count);
    }
    values_.assign(n, 0.0);
    stderr_.assign(n, 0.0);
  }

  int rank() const { return static_cast<int>(axes_.size()); }
  const std::vector<Axis>& axes() const { return axes_; }
  std::size_t size() const { return values_.size(); }
  InterpOrder order() const { return order_; }

  std::size_t flat(const int* idx) const {
    std::size_t f = 0;
    for (int a = 0; a < rank(); ++a) f = f * axes_[a].count + idx[a];
    return f;
  }

  Vec node_point(std::size_t f) const {
    Vec p(rank());
    for (int a = rank() - 1; a >= 0; --a) {
      const int c = axes_[a].count;
      p[a] = axes_[a].coord(static_cast<int>(f % c));
      f /= static_cast<std::size_t>(c);
    }
    return p;
  }

  void set_node(std::size_t f, double v, double se = 0.0) {
    values_[f] = std::clamp(v, 0.0, 1.0);
    stderr_[f] = se;
  }
  double node_value(std::size_t f) const { return values_[f]; }
  double node_stderr(std::size_t f) const { return stderr_[f]; }

  // p lists one coordinate per axis, in axis order.
  FieldQuery query(const Vec& p) const {
    const int r = rank();
    if (r == 0) throw ConfigError("field: query on an empty field");
    if (static_cast<int>(p.size()) != r)
      throw ConfigError("field: query dimension mismatch");

    double u[6];
    bool outside = false;
    Vec nearest(r);
    for (int a = 0; a < r; ++a) {
      const Axis& ax = axes_[a];
      double t = (p[a] - ax.lo) / ax.step;
      // Snap to the lattice so node queries reproduce stored values exactly
      // despite coordinate roundoff.
      const double rd = std::round(t);
      if (std::abs(t - rd) < 1e-9 * std::max(1.0, std::abs(t))) t = rd;
      if (t < 0.0 || t > ax.count - 1) outside = true;
      nearest[a] = std::clamp(p[a], ax.lo, ax.hi());
      u[a] = t;
    }
    if (outside) throw OutOfHull(nearest);

    const int taps = order_ == InterpOrder::cubic ? 4 : 2;
    int base[6];
    double W0[6][4], W1[6][4], W2[6][4];
    for (int a = 0; a < r; ++a) {
      const Axis& ax = axes_[a];
      int i0 = std::clamp(static_cast<int>(std::floor(u[a])), 0, ax.count - 2);
      const double t = u[a] - i0;
      const double inv = 1.0 / ax.step, inv2 = inv * inv;
      if (order_ == InterpOrder::cubic) {
        base[a] = i0 - 1;
        W0[a][0] = ((-0.5 * t + 1.0) * t - 0.5) * t;
        W0[a][1] = (1.5 * t - 2.5) * t * t + 1.0;
        W0[a][2] = ((-1.5 * t + 2.0) * t + 0.5) * t;
        W0[a][3] = (0.5 * t - 0.5) * t * t;
        W1[a][0] = ((-1.5 * t + 2.0) * t - 0.5) * inv;
        W1[a][1] = (4.5 * t - 5.0) * t * inv;
        W1[a][2] = ((-4.5 * t + 4.0) * t + 0.5) * inv;
        W1[a][3] = (1.5 * t - 1.0) * t * inv;
        W2[a][0] = (-3.0 * t + 2.0) * inv2;
        W2[a][1] = (9.0 * t - 5.0) * inv2;
        W2[a][2] = (-9.0 * t + 4.0) * inv2;
        W2[a][3] = (3.0 * t - 1.0) * inv2;
      } else {
        base[a] = i0;
        W0[a][0] = 1.0 - t;
        W0[a][1] = t;
        W1[a][0] = -inv;
        W1[a][1] = inv;
        W2[a][0] = W2[a][1] = 0.0;
      }
    }

    FieldQuery q;
    q.grad = Vec::Zero(r);
    q.hess = Mat::Zero(r, r);
    int total = 1;
    for (int a = 0; a < r; ++a) total *= taps;
    std::array<int, 6> gi{};
    double f0[6], f1[6], f2[6];
    for (int s = 0; s < total; ++s) {
      int rem = s;
      for (int a = r - 1; a >= 0; --a) {
        const int k = rem % taps;
        rem /= taps;
        gi[a] = base[a] + k;
        f0[a] = W0[a][k];
        f1[a] = W1[a][k];
        f2[a] = W2[a][k];
      }
      const double v = value_ext(gi.data());
      double p0 = v;
      for (int a = 0; a < r; ++a) p0 *= f0[a];
      q.value += p0;
      for (int a = 0; a < r; ++a) {
        double pa = v * f1[a], paa = v * f2[a];
        for (int b = 0; b < r; ++b) {
          if (b == a) continue;
          pa *= f0[b];
          paa *= f0[b];
        }
        q.grad[a] += pa;
        q.hess(a, a) += paa;
        for (int b = a + 1; b < r; ++b) {
          double pab = v * f1[a] * f1[b];
          for (int c = 0; c < r; ++c)
            if (c != a && c != b) pab *= f0[c];
          q.hess(a, b) += pab;
        }
      }
    }
    for (int a = 0; a < r; ++a)
      for (int b = a + 1; b < r; ++b) q.hess(b, a) = q.hess(a, b);
    q.value = std::clamp(q.value, 0.0, 1.0);
    return q;
  }

  // Same query, with results placed in augmented coordinates
  // [T, L, phi, x_0..x_{n-1}]; axes the field lacks contribute zeros.
  struct ZQuery {
    double value = 0.0;
    Vec grad;
    Mat hess;
  };

  ZQuery query_z(const AugmentedState& z) const {
    const int nx = static_cast<int>(z.x.size());
    if (3 + nx > 8) throw ConfigError("field: augmented dimension too large");
    const int r = rank();
    Vec p(r);
    int pos[6];
    for (int a = 0; a < r; ++a) {
      const Axis& ax = axes_[a];
      switch (ax.kind) {
        case AxisKind::horizon:
          p[a] = z.T;
          pos[a] = 0;
          break;
        case AxisKind::margin:
          p[a] = z.L;
          pos[a] = 1;
          break;
        case AxisKind::barrier:
          p[a] = z.phi_val;
          pos[a] = 2;
          break;
        default:
          if (ax.index < 0 || ax.index >= nx)
            throw ConfigError("field: state axis index outside state dimension");
          p[a] = z.x[ax.index];
          pos[a] = 3 + ax.index;
      }
    }
    const FieldQuery q = query(p);
    ZQuery out;
    out.value = q.value;
    out.grad = Vec::Zero(3 + nx);
    out.hess = Mat::Zero(3 + nx, 3 + nx);
    for (int a = 0; a < r; ++a) {
      out.grad[pos[a]] = q.grad[a];
      for (int b = 0; b < r; ++b) out.hess(pos[a], pos[b]) = q.hess(a, b);
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json axes = nlohmann::json::array();
    for (const auto& ax : axes_) {
      nlohmann::json ja{{"kind", axis_kind_name(ax.kind)},
                        {"lo", ax.lo},
                        {"step", ax.step},
                        {"count", ax.count}};
      if (ax.kind == AxisKind::state) ja["index"] = ax.index;
      axes.push_back(std::move(ja));
    }
    return nlohmann::json{
        {"format", "safe-prob-field"},
        {"version", 1},
        {"interp", order_ == InterpOrder::cubic ? "cubic" : "linear"},
        {"axes", std::move(axes)},
        {"values", values_},
        {"stderr", stderr_},
        {"provenance",
         {{"algorithm", provenance.algorithm},
          {"samples", provenance.samples},
          {"seed", provenance.seed},
          {"reference", provenance.reference},
          {"monotone_in_horizon", provenance.monotone_in_horizon}}}};
  }

  static SafeProbField from_json(const nlohmann::json& j) {
    if (j.value("format", std::string()) != "safe-prob-field")
      throw ConfigError("field file: wrong format tag");
    if (j.value("version", 0) != 1)
      throw ConfigError("field file: unsupported version");
    const std::string interp = j.value("interp", std::string("cubic"));
    if (interp != "cubic" && interp != "linear")
      throw ConfigError("field file: unknown interp order '" + interp + "'");
    std::vector<Axis> axes;
    for (const auto& ja : j.at("axes")) {
      Axis ax;
      ax.kind = axis_kind_from(ja.at("kind").get<std::string>());
      ax.index = ja.value("index", 0);
      ax.lo = ja.at("lo").get<double>();
      ax.step = ja.at("step").get<double>();
      ax.count = ja.at("count").get<int>();
      axes.push_back(ax);
    }
    SafeProbField field(std::move(axes),
                        interp == "cubic" ? InterpOrder::cubic : InterpOrder::linear);
    const auto& values = j.at("values");
    const auto& errs = j.at("stderr");
    if (values.size() != field.size() || errs.size() != field.size())
      throw ConfigError("field file: value count does not match grid");
    for (std::size_t i = 0; i < field.size(); ++i)
      field.set_node(i, values[i].get<double>(), errs[i].get<double>());
    if (j.contains("provenance")) {
      const auto& pr = j.at("provenance");
      field.provenance.algorithm = pr.value("algorithm", std::string());
      field.provenance.samples = pr.value("samples", 0L);
      field.provenance.seed = pr.value("seed", std::uint64_t{0});
      field.provenance.reference = pr.value("reference", std::string());
      field.provenance.monotone_in_horizon = pr.value("monotone_in_horizon", true);
    }
    return field;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("field: cannot write " + path);
    out << to_json().dump() << '\n';
  }

  static SafeProbField load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("field: cannot read " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("field file: " + std::string(e.what()));
    }
    return from_json(j);
  }

 private:
  // Node access with one layer of linearly extrapolated ghosts per side,
  // which is what makes the cubic exact on linear data up to the hull edge.
  double value_ext(int* gi) const {
    for (int a = 0; a < rank(); ++a) {
      const int c = axes_[a].count;
      const int orig = gi[a];
      if (orig < 0) {
        gi[a] = 0;
        const double v0 = value_ext(gi);
        gi[a] = 1;
        const double v1 = value_ext(gi);
        gi[a] = orig;
        return 2.0 * v0 - v1;
      }
      if (orig >= c) {
        gi[a] = c - 1;
        const double v0 = value_ext(gi);
        gi[a] = c - 2;
        const double v1 = value_ext(gi);
        gi[a] = orig;
        return 2.0 * v0 - v1;
      }
    }
    return values_[flat(gi)];
  }

  std::vector<Axis> axes_;
  InterpOrder order_ = InterpOrder::cubic;
  std::vector<double> values_, stderr_;
};

}  // namespace psc
