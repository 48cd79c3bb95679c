#pragma once

// Scalar expressions over an ordered list of state variables.
//
// Expressions are immutable DAGs of shared nodes. Variables are referenced by
// index; names only matter to the parser and the printer. Evaluation goes
// through ExprSet, which compiles one or more roots into a shared tape and
// runs it on doubles or on forward-mode jets (value, gradient, Hessian).

#include "riemobs/jet.hpp"
#include "riemobs/linalg.hpp"

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace riemobs {

enum class Op {
  constant,
  variable,
  add,
  sub,
  mul,
  div,
  pow,
  neg,
  sqrt,
  sin,
  cos,
  exp,
  log,
  abs,
  sign,  // internal: derivative of abs
};

struct ExprNode;
using NodePtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  Op op = Op::constant;
  double value = 0.0;  // Op::constant
  int index = -1;      // Op::variable
  NodePtr lhs;
  NodePtr rhs;
};

/// Handle to an expression over `arity` variables.
class Expr {
 public:
  Expr() : Expr(0.0, 0) {}
  Expr(double c, int arity);
  Expr(NodePtr root, int arity) : root_(std::move(root)), arity_(arity) {}

  static Expr variable(int index, int arity);

  const NodePtr& root() const { return root_; }
  int arity() const { return arity_; }
  bool is_constant() const;

 private:
  NodePtr root_;
  int arity_ = 0;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr pow(const Expr& base, const Expr& exponent);
Expr apply(Op fn, const Expr& a);

/// Parse `text`; identifiers resolve against `vars` (by position) or the
/// function names sqrt, sin, cos, exp, log, abs.
Expr parse(std::string_view text, std::span<const std::string> vars);

/// Fully parenthesized infix form that parse() reads back.
std::string to_string(const Expr& e, std::span<const std::string> vars);
std::string to_string(const Expr& e);  // variables printed as x1..xn

/// Symbolic partial derivative with respect to variable `index`.
Expr derivative(const Expr& e, int index);

/// Replace variable i by replacements[i]; the result has the replacements' arity.
Expr substitute(const Expr& e, std::span<const Expr> replacements);

double eval(const Expr& e, std::span<const double> point);
Vec grad(const Expr& e, std::span<const double> point);
Mat hessian(const Expr& e, std::span<const double> point);

/// Several expressions of the same arity compiled into one tape; shared
/// sub-expressions are evaluated once per call. Immutable and reentrant.
class ExprSet {
 public:
  ExprSet() = default;
  ExprSet(std::vector<Expr> exprs, int arity);

  int arity() const { return arity_; }
  std::size_t size() const { return outputs_.size(); }
  const Expr& expr(std::size_t i) const { return exprs_[i]; }

  std::vector<double> values(std::span<const double> point) const;
  std::vector<Jet1> jets1(std::span<const double> point) const;
  std::vector<Jet2> jets2(std::span<const double> point) const;

  struct Instr {
    Op op;
    int a = -1;
    int b = -1;
    double c = 0.0;     // constant value, or integer exponent for powi
    bool powi = false;  // pow with an integral constant exponent
    const ExprNode* node = nullptr;
  };

 private:
  template <class T>
  std::vector<T> run(std::span<const double> point) const;

  std::vector<Expr> exprs_;
  std::vector<Instr> tape_;
  std::vector<int> outputs_;
  int arity_ = 0;
};

}  // namespace riemobs
