#include "hyrec/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace hyrec::expr {

namespace {

using NodePtr = std::shared_ptr<const Node>;

enum class Tok { number, ident, plus, minus, star, slash, caret, lparen, rparen, end };

struct Token {
  Tok kind = Tok::end;
  std::size_t offset = 0;
  std::string text;
  double number = 0.0;
};

const char* describe(Tok t) {
  switch (t) {
    case Tok::number: return "number";
    case Tok::ident: return "identifier";
    case Tok::plus: return "'+'";
    case Tok::minus: return "'-'";
    case Tok::star: return "'*'";
    case Tok::slash: return "'/'";
    case Tok::caret: return "'^'";
    case Tok::lparen: return "'('";
    case Tok::rparen: return "')'";
    case Tok::end: return "end of input";
  }
  return "?";
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }

  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    tok_ = Token{};
    tok_.offset = pos_;
    if (pos_ >= src_.size()) {
      tok_.kind = Tok::end;
      return;
    }
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      lex_number();
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
        ++pos_;
      }
      tok_.kind = Tok::ident;
      tok_.text = std::string(src_.substr(start, pos_ - start));
      return;
    }
    ++pos_;
    switch (c) {
      case '+': tok_.kind = Tok::plus; return;
      case '-': tok_.kind = Tok::minus; return;
      case '*': tok_.kind = Tok::star; return;
      case '/': tok_.kind = Tok::slash; return;
      case '^': tok_.kind = Tok::caret; return;
      case '(': tok_.kind = Tok::lparen; return;
      case ')': tok_.kind = Tok::rparen; return;
      default:
        throw ParseError("unexpected character '" + std::string(1, c) + "' at offset " +
                             std::to_string(tok_.offset),
                         tok_.offset);
    }
  }

  void lex_number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        ++pos_;
        ++n;
      }
      return n;
    };
    std::size_t nd = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      nd += digits();
    }
    if (nd == 0) {
      throw ParseError("malformed number at offset " + std::to_string(start), start);
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (digits() == 0) pos_ = save;  // "2e" is 2 followed by identifier e
    }
    tok_.kind = Tok::number;
    tok_.text = std::string(src_.substr(start, pos_ - start));
    tok_.number = std::strtod(tok_.text.c_str(), nullptr);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  Token tok_;
};

NodePtr make_number(Complex v) {
  auto n = std::make_shared<Node>();
  n->op = Op::number;
  n->value = v;
  return n;
}

NodePtr make_binary(Op op, NodePtr l, NodePtr r) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->lhs = std::move(l);
  n->rhs = std::move(r);
  return n;
}

bool lookup_func(const std::string& name, Func& f) {
  static const std::pair<const char*, Func> table[] = {
      {"sin", Func::sin}, {"cos", Func::cos},   {"exp", Func::exp},
      {"tanh", Func::tanh}, {"sqrt", Func::sqrt}, {"abs", Func::abs}};
  for (const auto& [n, fn] : table) {
    if (name == n) {
      f = fn;
      return true;
    }
  }
  return false;
}

const char* func_name(Func f) {
  switch (f) {
    case Func::sin: return "sin";
    case Func::cos: return "cos";
    case Func::exp: return "exp";
    case Func::tanh: return "tanh";
    case Func::sqrt: return "sqrt";
    case Func::abs: return "abs";
  }
  return "?";
}

class Parser {
 public:
  explicit Parser(std::string_view src) : lex_(src) {}

  NodePtr parse_all() {
    NodePtr e = sum();
    if (lex_.peek().kind != Tok::end) fail("expected operator or end of input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& expected) {
    const Token& t = lex_.peek();
    throw ParseError("syntax error at offset " + std::to_string(t.offset) + ": " + expected +
                         ", found " + describe(t.kind) +
                         (t.text.empty() ? "" : " '" + t.text + "'"),
                     t.offset);
  }

  void expect(Tok kind) {
    if (lex_.peek().kind != kind) fail(std::string("expected ") + describe(kind));
    lex_.take();
  }

  NodePtr sum() {
    NodePtr lhs = product();
    while (lex_.peek().kind == Tok::plus || lex_.peek().kind == Tok::minus) {
      const Op op = lex_.take().kind == Tok::plus ? Op::add : Op::sub;
      lhs = make_binary(op, lhs, product());
    }
    return lhs;
  }

  NodePtr product() {
    NodePtr lhs = unary();
    while (lex_.peek().kind == Tok::star || lex_.peek().kind == Tok::slash) {
      const Op op = lex_.take().kind == Tok::star ? Op::mul : Op::div;
      lhs = make_binary(op, lhs, unary());
    }
    return lhs;
  }

  NodePtr unary() {
    if (lex_.peek().kind == Tok::minus) {
      lex_.take();
      auto n = std::make_shared<Node>();
      n->op = Op::negate;
      n->lhs = unary();
      return n;
    }
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (lex_.peek().kind == Tok::caret) {
      lex_.take();
      return make_binary(Op::pow, base, unary());
    }
    return base;
  }

  NodePtr primary() {
    const Token& t = lex_.peek();
    switch (t.kind) {
      case Tok::number:
        return make_number(Complex(lex_.take().number, 0.0));
      case Tok::lparen: {
        lex_.take();
        NodePtr e = sum();
        expect(Tok::rparen);
        return e;
      }
      case Tok::ident: {
        const Token id = lex_.take();
        if (id.text == "i") return make_number(Complex(0.0, 1.0));
        if (id.text == "pi") return make_number(Complex(std::numbers::pi, 0.0));
        if (id.text == "x" || id.text == "y" || id.text == "z") {
          auto n = std::make_shared<Node>();
          n->op = Op::variable;
          n->axis = id.text[0] - 'x';
          return n;
        }
        Func f{};
        if (!lookup_func(id.text, f)) {
          throw ParseError("unknown identifier '" + id.text + "' at offset " +
                               std::to_string(id.offset),
                           id.offset);
        }
        expect(Tok::lparen);
        auto n = std::make_shared<Node>();
        n->op = Op::call;
        n->func = f;
        n->lhs = sum();
        expect(Tok::rparen);
        return n;
      }
      default:
        fail("expected expression");
    }
  }

  Lexer lex_;
};

std::string point_text(std::span<const double> p) {
  std::ostringstream os;
  os << '(';
  for (std::size_t k = 0; k < p.size(); ++k) os << (k ? ", " : "") << p[k];
  os << ')';
  return os.str();
}

// -4 is negate(4) = (-4, -0); principal branches must not see the sign of
// a zero imaginary part.
Complex unsigned_zero(Complex z) { return {z.real(), z.imag() + 0.0}; }

Complex power(Complex b, Complex e) {
  b = unsigned_zero(b);
  if (b.imag() == 0.0 && e.imag() == 0.0 &&
      (b.real() >= 0.0 || e.real() == std::floor(e.real()))) {
    return {std::pow(b.real(), e.real()), 0.0};
  }
  return std::pow(b, e);
}

Complex eval(const Node& n, std::span<const double> p) {
  switch (n.op) {
    case Op::number:
      return n.value;
    case Op::variable:
      if (n.axis >= static_cast<int>(p.size())) {
        throw EvaluationError(std::string("variable '") + char('x' + n.axis) +
                              "' is not defined on a " + std::to_string(p.size()) + "-D point");
      }
      return {p[n.axis], 0.0};
    case Op::negate:
      return -eval(*n.lhs, p);
    case Op::add:
      return eval(*n.lhs, p) + eval(*n.rhs, p);
    case Op::sub:
      return eval(*n.lhs, p) - eval(*n.rhs, p);
    case Op::mul:
      return eval(*n.lhs, p) * eval(*n.rhs, p);
    case Op::div: {
      const Complex num = eval(*n.lhs, p);
      const Complex den = eval(*n.rhs, p);
      if (den == Complex(0.0, 0.0)) throw EvaluationError("division by zero at " + point_text(p));
      return num / den;
    }
    case Op::pow:
      return power(eval(*n.lhs, p), eval(*n.rhs, p));
    case Op::call: {
      const Complex a = eval(*n.lhs, p);
      switch (n.func) {
        case Func::sin: return std::sin(a);
        case Func::cos: return std::cos(a);
        case Func::exp: return std::exp(a);
        case Func::tanh: return std::tanh(a);
        case Func::sqrt: return std::sqrt(unsigned_zero(a));
        case Func::abs: return {std::abs(a), 0.0};
      }
    }
  }
  return {};
}

std::string format_number(Complex v) {
  char buf[64];
  if (v == Complex(0.0, 1.0)) return "i";
  if (v.imag() == 0.0 && v.real() >= 0.0) {
    std::snprintf(buf, sizeof buf, "%.17g", v.real());
    return buf;
  }
  // Not produced by parse(); printed in a form that evaluates identically.
  char im[64];
  std::snprintf(buf, sizeof buf, "%.17g", std::abs(v.real()));
  std::snprintf(im, sizeof im, "%.17g", std::abs(v.imag()));
  std::string re_part = std::string(v.real() < 0 ? "(-" : "(") + buf + ")";
  std::string im_part = std::string(v.imag() < 0 ? "(-" : "(") + im + "*i)";
  return "(" + re_part + "+" + im_part + ")";
}

void print_into(const Node& n, std::string& out) {
  switch (n.op) {
    case Op::number:
      out += format_number(n.value);
      return;
    case Op::variable:
      out += static_cast<char>('x' + n.axis);
      return;
    case Op::negate:
      out += "(-";
      print_into(*n.lhs, out);
      out += ')';
      return;
    case Op::call:
      out += func_name(n.func);
      out += '(';
      print_into(*n.lhs, out);
      out += ')';
      return;
    default: {
      const char* sym = n.op == Op::add ? " + " : n.op == Op::sub ? " - "
                      : n.op == Op::mul ? " * " : n.op == Op::div ? " / " : " ^ ";
      out += '(';
      print_into(*n.lhs, out);
      out += sym;
      print_into(*n.rhs, out);
      out += ')';
    }
  }
}

bool equal_nodes(const Node* a, const Node* b) {
  if (!a || !b) return a == b;
  if (a->op != b->op) return false;
  switch (a->op) {
    case Op::number:
      return a->value == b->value;
    case Op::variable:
      return a->axis == b->axis;
    case Op::call:
      return a->func == b->func && equal_nodes(a->lhs.get(), b->lhs.get());
    case Op::negate:
      return equal_nodes(a->lhs.get(), b->lhs.get());
    default:
      return equal_nodes(a->lhs.get(), b->lhs.get()) && equal_nodes(a->rhs.get(), b->rhs.get());
  }
}

int arity_of(const Node* n) {
  if (!n) return 0;
  if (n->op == Op::variable) return n->axis + 1;
  return std::max(arity_of(n->lhs.get()), arity_of(n->rhs.get()));
}

template <FieldKind K>
Field<K> materialize(std::span<const Expr> comps, const Grid& grid) {
  Field<K> out(grid);
  if (static_cast<int>(comps.size()) != out.components()) {
    throw ConfigError(std::string(K == FieldKind::vector ? "vector" : "symtensor") +
                      " field on a " + std::to_string(grid.dim()) + "-D grid needs " +
                      std::to_string(out.components()) + " expressions, got " +
                      std::to_string(comps.size()));
  }
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const auto x = grid.point(p);
    const std::span<const double> pt(x.data(), grid.dim());
    for (int c = 0; c < out.components(); ++c) out(p, c) = evaluate(comps[c], pt);
  }
  return out;
}

}  // namespace

int Expr::arity() const { return arity_of(root_.get()); }

Expr parse(std::string_view text) { return Expr(Parser(text).parse_all()); }

Complex evaluate(const Expr& e, std::span<const double> point) { return eval(e.root(), point); }

std::string print(const Expr& e) {
  std::string out;
  print_into(e.root(), out);
  return out;
}

bool structurally_equal(const Expr& a, const Expr& b) {
  return equal_nodes(&a.root(), &b.root());
}

ScalarField materialize_scalar(const Expr& e, const Grid& grid) {
  ScalarField out(grid);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const auto x = grid.point(p);
    out(p) = evaluate(e, std::span<const double>(x.data(), grid.dim()));
  }
  return out;
}

VectorField materialize_vector(std::span<const Expr> comps, const Grid& grid) {
  return materialize<FieldKind::vector>(comps, grid);
}

SymTensorField materialize_symtensor(std::span<const Expr> comps, const Grid& grid) {
  return materialize<FieldKind::symtensor>(comps, grid);
}

std::vector<Expr> parse_all(std::span<const std::string> texts) {
  std::vector<Expr> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(parse(t));
  return out;
}

}  // namespace hyrec::expr
