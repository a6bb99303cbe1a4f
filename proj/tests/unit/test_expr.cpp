#include <doctest.h>

#include <cctype>
#include <cstdlib>
#include <random>
#include <string>

#include "helpers.hpp"
#include "hyrec/expr.hpp"

using namespace hyrec;
namespace ex = hyrec::expr;

namespace {

Complex ev(const std::string& text, std::vector<double> point = {0.0, 0.0}) {
  return ex::evaluate(ex::parse(text), point);
}

// Independent evaluator working straight off the text, no tree. Mirrors the
// documented semantics: real pow for real operands with a non-negative base
// or an integral exponent, principal complex branches otherwise.
class Reference {
 public:
  Reference(const std::string& s, std::span<const double> p) : s_(s), p_(p) {}

  Complex run() {
    const Complex v = sum();
    skip();
    if (pos_ != s_.size()) throw std::runtime_error("trailing input");
    return v;
  }

 private:
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  Complex sum() {
    Complex v = product();
    for (;;) {
      if (eat('+')) v = v + product();
      else if (eat('-')) v = v - product();
      else return v;
    }
  }
  Complex product() {
    Complex v = unary();
    for (;;) {
      if (eat('*')) {
        v = v * unary();
      } else if (eat('/')) {
        const Complex d = unary();
        if (d == Complex(0, 0)) throw hyrec::EvaluationError("div0");
        v = v / d;
      } else {
        return v;
      }
    }
  }
  Complex unary() {
    if (eat('-')) return -unary();
    return power();
  }
  Complex power() {
    Complex b = primary();
    if (!eat('^')) return b;
    b = Complex(b.real(), b.imag() + 0.0);
    const Complex e = unary();
    if (b.imag() == 0 && e.imag() == 0 && (b.real() >= 0 || e.real() == std::floor(e.real())))
      return {std::pow(b.real(), e.real()), 0.0};
    return std::pow(b, e);
  }
  Complex primary() {
    skip();
    if (eat('(')) {
      const Complex v = sum();
      if (!eat(')')) throw std::runtime_error("expected )");
      return v;
    }
    if (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.') {
      char* end = nullptr;
      const double v = std::strtod(s_.c_str() + pos_, &end);
      pos_ = static_cast<std::size_t>(end - s_.c_str());
      return {v, 0.0};
    }
    std::string id;
    while (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) id += s_[pos_++];
    if (id == "i") return {0.0, 1.0};
    if (id == "pi") return {M_PI, 0.0};
    if (id == "x") return {p_[0], 0.0};
    if (id == "y") return {p_[1], 0.0};
    if (!eat('(')) throw std::runtime_error("expected ( after " + id);
    const Complex a = sum();
    if (!eat(')')) throw std::runtime_error("expected )");
    if (id == "sin") return std::sin(a);
    if (id == "cos") return std::cos(a);
    if (id == "exp") return std::exp(a);
    if (id == "tanh") return std::tanh(a);
    if (id == "sqrt") return std::sqrt(Complex(a.real(), a.imag() + 0.0));
    if (id == "abs") return {std::abs(a), 0.0};
    throw std::runtime_error("unknown " + id);
  }

  const std::string& s_;
  std::span<const double> p_;
  std::size_t pos_ = 0;
};

std::string random_expr(std::mt19937_64& rng, int depth) {
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 3 : 11);
  static const char* funcs[] = {"sin", "cos", "exp", "tanh", "sqrt", "abs"};
  static const char* consts[] = {"0.5", "2", "3", "1.25", "i", "pi", "0.1", "7"};
  switch (pick(rng)) {
    case 0: return "x";
    case 1: return "y";
    case 2: return consts[rng() % 8];
    case 3: return "(" + std::string(consts[rng() % 8]) + ")";
    case 4: return random_expr(rng, depth - 1) + "+" + random_expr(rng, depth - 1);
    case 5: return random_expr(rng, depth - 1) + "-" + random_expr(rng, depth - 1);
    case 6: return random_expr(rng, depth - 1) + "*" + random_expr(rng, depth - 1);
    case 7: return random_expr(rng, depth - 1) + "/(" + random_expr(rng, depth - 1) + "+3.5)";
    case 8: return "(" + random_expr(rng, depth - 1) + ")^" + consts[rng() % 4];
    case 9: return "-" + random_expr(rng, depth - 1);
    case 10: return std::string(funcs[rng() % 6]) + "(" + random_expr(rng, depth - 1) + ")";
    default: return "(" + random_expr(rng, depth - 1) + ")";
  }
}

bool same(Complex a, Complex b) {
  auto eq = [](double u, double v) {
    if (std::isnan(u) || std::isnan(v)) return std::isnan(u) && std::isnan(v);
    return u == v || std::abs(u - v) <= 4e-16 * std::max(std::abs(u), std::abs(v));
  };
  return eq(a.real(), b.real()) && eq(a.imag(), b.imag());
}

}  // namespace

TEST_CASE("precedence and associativity") {
  CHECK(ev("1+2*3") == Complex(7, 0));
  CHECK(ev("2^3^2") == Complex(512, 0));
  CHECK(ev("-2^2") == Complex(-4, 0));
  CHECK(ev("(-2)^2") == Complex(4, 0));
  CHECK(ev("2*-3") == Complex(-6, 0));
  CHECK(ev("8/4/2") == Complex(1, 0));
  CHECK(ev("2^-1") == Complex(0.5, 0));
}

TEST_CASE("evaluation examples") {
  CHECK(ev("x*y", {2, 3}) == Complex(6, 0));
  CHECK(ev("exp(i*0)") == Complex(1, 0));
  CHECK(ev("z", {1, 2, 3}) == Complex(3, 0));
  CHECK(std::abs(ev("1+0.5*i") - Complex(1, 0.5)) == 0.0);
  CHECK(std::abs(ev("cos(pi)") + 1.0) < 1e-15);
  CHECK(ev("abs(3+4*i)") == Complex(5, 0));
  CHECK(std::abs(ev("tanh(0.5)") - std::tanh(0.5)) == 0.0);
  CHECK_THROWS_AS(ev("1/(x-1)", {1, 0}), EvaluationError);
  CHECK_THROWS_AS(ev("z", {1, 2}), EvaluationError);
}

TEST_CASE("sqrt of a negative real is the principal branch") {
  const Complex r = ev("sqrt(-4)");
  CHECK(r.real() == doctest::Approx(0.0));
  CHECK(r.imag() == doctest::Approx(2.0));
  const Complex h = ev("(-4)^0.5");
  CHECK(h.imag() == doctest::Approx(2.0));
  CHECK(std::abs(h.real()) < 1e-15);
}

TEST_CASE("syntax errors carry the offset") {
  try {
    ex::parse("sin(");
    FAIL("expected a ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 4);
  }
  CHECK_THROWS_AS(ex::parse("foo(x)"), ParseError);
  CHECK_THROWS_AS(ex::parse("1+"), ParseError);
  CHECK_THROWS_AS(ex::parse("(1"), ParseError);
  CHECK_THROWS_AS(ex::parse("1 2"), ParseError);
  CHECK_THROWS_AS(ex::parse("x $ y"), ParseError);
}

TEST_CASE("materialize") {
  const Grid g = hyrec::test::unit_grid(9);
  const ScalarField one = ex::materialize_scalar(ex::parse("1"), g);
  for (std::size_t p = 0; p < g.size(); ++p) CHECK(one(p) == Complex(1, 0));

  const std::string bump = "1+0.3*exp(-((x-0.5)^2+(y-0.5)^2)/0.02)";
  const auto comps = ex::parse_all(std::vector<std::string>{bump, bump, "0"});
  const SymTensorField a = ex::materialize_symtensor(comps, g);
  for (std::size_t p = 0; p < g.size(); ++p) {
    CHECK(a(p, 0, 0) == a(p, 1, 1));
    CHECK(a(p, 0, 1) == Complex(0, 0));
  }
  const int c[] = {4, 4};
  CHECK(a(g.index(c), 0, 0).real() == doctest::Approx(1.3));

  const auto three = ex::parse_all(std::vector<std::string>{"1", "2", "3"});
  CHECK_THROWS_AS(ex::materialize_vector(three, g), ConfigError);
  CHECK_THROWS_AS(ex::materialize_symtensor(ex::parse_all(std::vector<std::string>{"1", "2"}), g),
                  ConfigError);
}

TEST_CASE("parse-print-parse is a fixpoint") {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 2000; ++k) {
    const std::string s = random_expr(rng, 4);
    const ex::Expr e = ex::parse(s);
    const std::string printed = ex::print(e);
    const ex::Expr back = ex::parse(printed);
    CHECK_MESSAGE(ex::structurally_equal(e, back), s << " -> " << printed);
    CHECK(ex::print(back) == printed);
  }
  CHECK(ex::parse("1+x").arity() == 1);
  CHECK(ex::parse("z*2").arity() == 3);
  CHECK(ex::parse("pi").arity() == 0);
}

TEST_CASE("evaluation agrees with a reference evaluator on a random corpus") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> coord(-1.0, 2.0);
  int mismatches = 0;
  int errors_agree = 0;
  for (int k = 0; k < 10000; ++k) {
    const std::string s = random_expr(rng, 5);
    const double pt[] = {coord(rng), coord(rng)};
    Complex want;
    bool ref_threw = false;
    try {
      want = Reference(s, pt).run();
    } catch (const EvaluationError&) {
      ref_threw = true;
    }
    const ex::Expr e = ex::parse(s);
    if (ref_threw) {
      CHECK_THROWS_AS(ex::evaluate(e, pt), EvaluationError);
      ++errors_agree;
      continue;
    }
    const Complex got = ex::evaluate(e, pt);
    if (!same(got, want)) {
      ++mismatches;
      MESSAGE(s << " at (" << pt[0] << ", " << pt[1] << "): " << got << " vs " << want);
    }
  }
  CHECK(mismatches == 0);
}
