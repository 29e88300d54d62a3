#pragma once

#include "psc/core.hpp"

#include <cctype>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

namespace psc {

// Scenario files describe dynamics with tiny closed-form expressions in the
// scalar state x: constants, arithmetic, one comparison.  Parsing compiles
// straight to nested closures; there is no AST to keep around.
using ScalarFn = std::function<double(double)>;

namespace detail {

class ExprParser {
 public:
  explicit ExprParser(const std::string& text) : s_(text) {}

  ScalarFn run() {
    ScalarFn e = comparison();
    skip();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError("expression: " + why + " at offset " +
                      std::to_string(pos_) + " in \"" + s_ + "\"");
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
  }

  bool eat(const char* op) {
    skip();
    const std::size_t n = std::char_traits<char>::length(op);
    if (s_.compare(pos_, n, op) != 0) return false;
    // don't let '<' swallow the prefix of '<='
    if (n == 1 && (op[0] == '<' || op[0] == '>') && pos_ + 1 < s_.size() &&
        s_[pos_ + 1] == '=')
      return false;
    pos_ += n;
    return true;
  }

  // one comparison at most; chains like a < x < b are rejected as trailing
  ScalarFn comparison() {
    ScalarFn lhs = additive();
    for (const char* op : {"<=", ">=", "==", "!=", "<", ">"}) {
      if (!eat(op)) continue;
      ScalarFn rhs = additive();
      const std::string o = op;
      return [lhs, rhs, o](double x) {
        const double a = lhs(x), b = rhs(x);
        if (o == "<") return a < b ? 1.0 : 0.0;
        if (o == ">") return a > b ? 1.0 : 0.0;
        if (o == "<=") return a <= b ? 1.0 : 0.0;
        if (o == ">=") return a >= b ? 1.0 : 0.0;
        if (o == "==") return a == b ? 1.0 : 0.0;
        return a != b ? 1.0 : 0.0;
      };
    }
    return lhs;
  }

  ScalarFn additive() {
    ScalarFn e = term();
    while (true) {
      if (eat("+")) {
        ScalarFn r = term();
        e = [e, r](double x) { return e(x) + r(x); };
      } else if (eat("-")) {
        ScalarFn r = term();
        e = [e, r](double x) { return e(x) - r(x); };
      } else {
        return e;
      }
    }
  }

  ScalarFn term() {
    ScalarFn e = unary();
    while (true) {
      if (eat("*")) {
        ScalarFn r = unary();
        e = [e, r](double x) { return e(x) * r(x); };
      } else if (eat("/")) {
        ScalarFn r = unary();
        e = [e, r](double x) { return e(x) / r(x); };
      } else {
        return e;
      }
    }
  }

  ScalarFn unary() {
    if (eat("-")) {
      ScalarFn e = unary();
      return [e](double x) { return -e(x); };
    }
    return primary();
  }

  ScalarFn primary() {
    skip();
    if (pos_ >= s_.size()) fail("expected a value");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      ScalarFn e = comparison();
      if (!eat(")")) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("malformed number");
      pos_ += static_cast<std::size_t>(end - begin);
      return [v](double) { return v; };
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t end = pos_;
      while (end < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '_'))
        ++end;
      const std::string name = s_.substr(pos_, end - pos_);
      if (name != "x") fail("unknown variable '" + name + "'");
      pos_ = end;
      return [](double x) { return x; };
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline ScalarFn parse_expression(const std::string& text) {
  return detail::ExprParser(text).run();
}

// Ordered guard list: the value of the first branch whose guard is nonzero;
// a branch without a guard always matches.  Evaluation with no matching
// branch is a scenario bug, not a state to silently zero out.
struct GuardedFn {
  struct Branch {
    ScalarFn when;  // empty means unconditional
    ScalarFn value;
  };
  std::vector<Branch> branches;

  double operator()(double x) const {
    for (const auto& br : branches)
      if (!br.when || br.when(x) != 0.0) return br.value(x);
    throw ConfigError("expression: no guard matched x = " + std::to_string(x));
  }
};

}  // namespace psc
