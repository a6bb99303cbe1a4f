#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hyrec/grid.hpp"

namespace hyrec::expr {

// Grammar (LL(1)):
//   sum     := product (('+' | '-') product)*
//   product := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?          right-associative
//   primary := number | 'i' | 'pi' | 'x' | 'y' | 'z'
//            | func '(' sum ')' | '(' sum ')'
//   func    := sin | cos | exp | tanh | sqrt | abs

enum class Op { number, variable, negate, add, sub, mul, div, pow, call };
enum class Func { sin, cos, exp, tanh, sqrt, abs };

struct Node {
  Op op = Op::number;
  Complex value{};  // number
  int axis = 0;     // variable
  Func func = Func::sin;
  std::shared_ptr<const Node> lhs;  // operand of unary ops and calls
  std::shared_ptr<const Node> rhs;
};

/// Immutable expression tree; cheap to copy.
class Expr {
 public:
  Expr() = default;
  explicit Expr(std::shared_ptr<const Node> root) : root_(std::move(root)) {}

  const Node& root() const { return *root_; }
  bool empty() const noexcept { return !root_; }

  /// Highest variable axis used plus one (0 for constants).
  int arity() const;

 private:
  std::shared_ptr<const Node> root_;
};

/// Throws ParseError carrying the byte offset of the offending token.
Expr parse(std::string_view text);

/// Evaluates at `point` (x, y[, z]). Division by zero and references to an
/// axis the point does not supply throw EvaluationError.
Complex evaluate(const Expr& e, std::span<const double> point);

/// Canonical, fully parenthesized rendering; parse(print(e)) reproduces e.
std::string print(const Expr& e);

bool structurally_equal(const Expr& a, const Expr& b);

/// Samples a scalar field.
ScalarField materialize_scalar(const Expr& e, const Grid& grid);

/// Samples a vector (dim components) or symmetric tensor (storage layout
/// order) field. Throws ConfigError on a component-count mismatch.
VectorField materialize_vector(std::span<const Expr> comps, const Grid& grid);
SymTensorField materialize_symtensor(std::span<const Expr> comps, const Grid& grid);

/// Parses each string; convenience for configs.
std::vector<Expr> parse_all(std::span<const std::string> texts);

}  // namespace hyrec::expr
