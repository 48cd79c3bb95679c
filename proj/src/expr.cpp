#include "riemobs/expr.hpp"

#include "riemobs/errors.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <type_traits>
#include <unordered_map>

namespace riemobs {

namespace {

NodePtr make_const(double c) {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::constant;
  n->value = c;
  return n;
}

NodePtr make_var(int i) {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::variable;
  n->index = i;
  return n;
}

NodePtr make_node(Op op, NodePtr lhs, NodePtr rhs = nullptr) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return n;
}

bool is_const(const NodePtr& n, double c) { return n->op == Op::constant && n->value == c; }
bool is_const(const NodePtr& n) { return n->op == Op::constant; }

// Folding constructors used by the symbolic routines. The parser builds nodes
// verbatim so that evaluation reports the domain errors the user wrote.
NodePtr s_add(const NodePtr& a, const NodePtr& b) {
  if (is_const(a) && is_const(b)) return make_const(a->value + b->value);
  if (is_const(a, 0.0)) return b;
  if (is_const(b, 0.0)) return a;
  return make_node(Op::add, a, b);
}

NodePtr s_neg(const NodePtr& a) {
  if (is_const(a)) return make_const(-a->value);
  if (a->op == Op::neg) return a->lhs;
  return make_node(Op::neg, a);
}

NodePtr s_sub(const NodePtr& a, const NodePtr& b) {
  if (is_const(a) && is_const(b)) return make_const(a->value - b->value);
  if (is_const(b, 0.0)) return a;
  if (is_const(a, 0.0)) return s_neg(b);
  return make_node(Op::sub, a, b);
}

NodePtr s_mul(const NodePtr& a, const NodePtr& b) {
  if (is_const(a) && is_const(b)) return make_const(a->value * b->value);
  if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
  if (is_const(a, 1.0)) return b;
  if (is_const(b, 1.0)) return a;
  if (is_const(a, -1.0)) return s_neg(b);
  if (is_const(b, -1.0)) return s_neg(a);
  return make_node(Op::mul, a, b);
}

NodePtr s_div(const NodePtr& a, const NodePtr& b) {
  if (is_const(a) && is_const(b) && b->value != 0.0) return make_const(a->value / b->value);
  if (is_const(a, 0.0)) return make_const(0.0);
  if (is_const(b, 1.0)) return a;
  return make_node(Op::div, a, b);
}

NodePtr s_pow(const NodePtr& a, const NodePtr& b) {
  if (is_const(b, 1.0)) return a;
  if (is_const(b, 0.0)) return make_const(1.0);
  return make_node(Op::pow, a, b);
}

const char* function_name(Op op) {
  switch (op) {
    case Op::sqrt: return "sqrt";
    case Op::sin: return "sin";
    case Op::cos: return "cos";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::abs: return "abs";
    case Op::sign: return "sign";
    default: return nullptr;
  }
}

bool lookup_function(std::string_view name, Op& op) {
  static constexpr Op kFunctions[] = {Op::sqrt, Op::sin, Op::cos, Op::exp,
                                      Op::log,  Op::abs, Op::sign};
  for (Op f : kFunctions) {
    if (name == function_name(f)) {
      op = f;
      return true;
    }
  }
  return false;
}

bool depends_on_variables(const ExprNode* n) {
  if (!n) return false;
  if (n->op == Op::variable) return true;
  return depends_on_variables(n->lhs.get()) || depends_on_variables(n->rhs.get());
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (v < 0 || std::signbit(v)) return "(" + s + ")";
  return s;
}

void print(const ExprNode* n, std::span<const std::string> vars, std::string& out) {
  switch (n->op) {
    case Op::constant:
      out += format_number(n->value);
      return;
    case Op::variable:
      if (n->index < static_cast<int>(vars.size()))
        out += vars[n->index];
      else
        out += "x" + std::to_string(n->index + 1);
      return;
    case Op::neg:
      out += "(-";
      print(n->lhs.get(), vars, out);
      out += ")";
      return;
    case Op::add:
    case Op::sub:
    case Op::mul:
    case Op::div:
    case Op::pow: {
      static constexpr char kSym[] = {'+', '-', '*', '/', '^'};
      int k = static_cast<int>(n->op) - static_cast<int>(Op::add);
      out += "(";
      print(n->lhs.get(), vars, out);
      out += kSym[k];
      print(n->rhs.get(), vars, out);
      out += ")";
      return;
    }
    default:
      out += function_name(n->op);
      out += "(";
      print(n->lhs.get(), vars, out);
      out += ")";
      return;
  }
}

std::vector<std::string> default_names(int arity) {
  std::vector<std::string> names;
  for (int i = 0; i < arity; ++i) names.push_back("x" + std::to_string(i + 1));
  return names;
}

std::string describe(const ExprNode* n) {
  std::string s;
  print(n, {}, s);
  return s;
}

// ---------------------------------------------------------------------------
// Parser: recursive descent.
//   sum     := product (('+' | '-') product)*
//   product := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' exponent)*
//   exponent:= '-' exponent | primary

class Parser {
 public:
  Parser(std::string_view text, std::span<const std::string> vars) : text_(text), vars_(vars) {}

  NodePtr parse_all() {
    NodePtr e = sum();
    skip_ws();
    if (pos_ != text_.size()) {
      throw ParseError(std::string("unexpected '") + text_[pos_] + "'", pos_);
    }
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr sum() {
    NodePtr lhs = product();
    for (;;) {
      if (accept('+'))
        lhs = make_node(Op::add, lhs, product());
      else if (accept('-'))
        lhs = make_node(Op::sub, lhs, product());
      else
        return lhs;
    }
  }

  NodePtr product() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*'))
        lhs = make_node(Op::mul, lhs, unary());
      else if (accept('/'))
        lhs = make_node(Op::div, lhs, unary());
      else
        return lhs;
    }
  }

  NodePtr unary() {
    if (accept('-')) return make_node(Op::neg, unary());
    return power();
  }

  NodePtr power() {
    NodePtr lhs = primary();
    while (accept('^')) lhs = make_node(Op::pow, lhs, exponent());
    return lhs;
  }

  NodePtr exponent() {
    if (accept('-')) return make_node(Op::neg, exponent());
    return primary();
  }

  NodePtr primary() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = sum();
      if (!accept(')')) throw ParseError("expected ')'", pos_);
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    throw ParseError(std::string("unexpected '") + c + "'", pos_);
  }

  NodePtr number() {
    std::size_t start = pos_;
    double v = 0.0;
    auto res = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), v,
                               std::chars_format::general);
    if (res.ec != std::errc()) throw ParseError("malformed number", start);
    pos_ = static_cast<std::size_t>(res.ptr - text_.data());
    return make_const(v);
  }

  NodePtr identifier() {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    std::string_view name = text_.substr(start, pos_ - start);
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      if (vars_[i] == name) return make_var(static_cast<int>(i));
    }
    Op fn;
    if (lookup_function(name, fn)) {
      if (!accept('(')) throw ParseError("expected '(' after " + std::string(name), pos_);
      NodePtr arg = sum();
      if (!accept(')')) throw ParseError("expected ')'", pos_);
      return make_node(fn, arg);
    }
    throw UnknownIdentifier(std::string(name));
  }

  std::string_view text_;
  std::span<const std::string> vars_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Tape evaluation.

template <class T>
T make_constant(double c, int n) {
  if constexpr (std::is_same_v<T, double>)
    return c;
  else
    return T::constant(c, n);
}

template <class T>
T make_variable(double x, int i, int n) {
  if constexpr (std::is_same_v<T, double>)
    return x;
  else
    return T::variable(x, i, n);
}

template <class T>
constexpr bool kHasDerivatives = !std::is_same_v<T, double>;

double const_eval(const ExprNode* n) {
  switch (n->op) {
    case Op::constant: return n->value;
    case Op::add: return const_eval(n->lhs.get()) + const_eval(n->rhs.get());
    case Op::sub: return const_eval(n->lhs.get()) - const_eval(n->rhs.get());
    case Op::mul: return const_eval(n->lhs.get()) * const_eval(n->rhs.get());
    case Op::div: return const_eval(n->lhs.get()) / const_eval(n->rhs.get());
    case Op::neg: return -const_eval(n->lhs.get());
    case Op::pow: return std::pow(const_eval(n->lhs.get()), const_eval(n->rhs.get()));
    case Op::sqrt: return std::sqrt(const_eval(n->lhs.get()));
    case Op::sin: return std::sin(const_eval(n->lhs.get()));
    case Op::cos: return std::cos(const_eval(n->lhs.get()));
    case Op::exp: return std::exp(const_eval(n->lhs.get()));
    case Op::log: return std::log(const_eval(n->lhs.get()));
    case Op::abs: return std::abs(const_eval(n->lhs.get()));
    case Op::sign: {
      double v = const_eval(n->lhs.get());
      return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
    }
    case Op::variable: break;
  }
  return std::nan("");
}

}  // namespace

// ---------------------------------------------------------------------------

Expr::Expr(double c, int arity) : root_(make_const(c)), arity_(arity) {}

Expr Expr::variable(int index, int arity) {
  if (index < 0 || index >= arity) throw ValidationError("variable index out of range");
  return Expr(make_var(index), arity);
}

bool Expr::is_constant() const { return !depends_on_variables(root_.get()); }

namespace {
int common_arity(const Expr& a, const Expr& b) {
  if (a.arity() != b.arity()) throw ValidationError("expression arity mismatch");
  return a.arity();
}
}  // namespace

Expr operator+(const Expr& a, const Expr& b) {
  return Expr(make_node(Op::add, a.root(), b.root()), common_arity(a, b));
}
Expr operator-(const Expr& a, const Expr& b) {
  return Expr(make_node(Op::sub, a.root(), b.root()), common_arity(a, b));
}
Expr operator*(const Expr& a, const Expr& b) {
  return Expr(make_node(Op::mul, a.root(), b.root()), common_arity(a, b));
}
Expr operator/(const Expr& a, const Expr& b) {
  return Expr(make_node(Op::div, a.root(), b.root()), common_arity(a, b));
}
Expr operator-(const Expr& a) { return Expr(make_node(Op::neg, a.root()), a.arity()); }
Expr pow(const Expr& base, const Expr& exponent) {
  return Expr(make_node(Op::pow, base.root(), exponent.root()), common_arity(base, exponent));
}
Expr apply(Op fn, const Expr& a) {
  if (!function_name(fn)) throw ValidationError("not a function operator");
  return Expr(make_node(fn, a.root()), a.arity());
}

Expr parse(std::string_view text, std::span<const std::string> vars) {
  Parser p(text, vars);
  return Expr(p.parse_all(), static_cast<int>(vars.size()));
}

std::string to_string(const Expr& e, std::span<const std::string> vars) {
  std::string out;
  print(e.root().get(), vars, out);
  return out;
}

std::string to_string(const Expr& e) {
  auto names = default_names(e.arity());
  return to_string(e, names);
}

Expr derivative(const Expr& e, int index) {
  std::unordered_map<const ExprNode*, NodePtr> memo;
  std::function<NodePtr(const NodePtr&)> d = [&](const NodePtr& n) -> NodePtr {
    if (auto it = memo.find(n.get()); it != memo.end()) return it->second;
    NodePtr r;
    const NodePtr& u = n->lhs;
    const NodePtr& v = n->rhs;
    switch (n->op) {
      case Op::constant: r = make_const(0.0); break;
      case Op::variable: r = make_const(n->index == index ? 1.0 : 0.0); break;
      case Op::add: r = s_add(d(u), d(v)); break;
      case Op::sub: r = s_sub(d(u), d(v)); break;
      case Op::neg: r = s_neg(d(u)); break;
      case Op::mul: r = s_add(s_mul(d(u), v), s_mul(u, d(v))); break;
      case Op::div:
        r = s_div(s_sub(s_mul(d(u), v), s_mul(u, d(v))), s_pow(v, make_const(2.0)));
        break;
      case Op::pow:
        if (!depends_on_variables(v.get())) {
          double k = const_eval(v.get());
          r = s_mul(s_mul(make_const(k), s_pow(u, make_const(k - 1.0))), d(u));
        } else {
          // d(u^v) = u^v * (v' log u + v u' / u)
          r = s_mul(n, s_add(s_mul(d(v), make_node(Op::log, u)), s_div(s_mul(v, d(u)), u)));
        }
        break;
      case Op::sqrt: r = s_div(d(u), s_mul(make_const(2.0), n)); break;
      case Op::sin: r = s_mul(make_node(Op::cos, u), d(u)); break;
      case Op::cos: r = s_neg(s_mul(make_node(Op::sin, u), d(u))); break;
      case Op::exp: r = s_mul(n, d(u)); break;
      case Op::log: r = s_div(d(u), u); break;
      case Op::abs: r = s_mul(make_node(Op::sign, u), d(u)); break;
      case Op::sign: r = make_const(0.0); break;
    }
    memo.emplace(n.get(), r);
    return r;
  };
  return Expr(d(e.root()), e.arity());
}

Expr substitute(const Expr& e, std::span<const Expr> replacements) {
  if (static_cast<int>(replacements.size()) != e.arity())
    throw ValidationError("substitute: need one replacement per variable");
  int arity = replacements.empty() ? 0 : replacements[0].arity();
  for (const Expr& r : replacements)
    if (r.arity() != arity) throw ValidationError("substitute: replacement arity mismatch");
  std::unordered_map<const ExprNode*, NodePtr> memo;
  std::function<NodePtr(const NodePtr&)> sub = [&](const NodePtr& n) -> NodePtr {
    if (auto it = memo.find(n.get()); it != memo.end()) return it->second;
    NodePtr r;
    if (n->op == Op::constant)
      r = n;
    else if (n->op == Op::variable)
      r = replacements[n->index].root();
    else
      r = make_node(n->op, sub(n->lhs), n->rhs ? sub(n->rhs) : nullptr);
    memo.emplace(n.get(), r);
    return r;
  };
  return Expr(sub(e.root()), arity);
}

// ---------------------------------------------------------------------------

ExprSet::ExprSet(std::vector<Expr> exprs, int arity) : exprs_(std::move(exprs)), arity_(arity) {
  if (arity_ > kMaxDim)
    throw ValidationError("state dimension " + std::to_string(arity_) + " exceeds limit " +
                          std::to_string(kMaxDim));
  std::unordered_map<const ExprNode*, int> slot;
  std::function<int(const ExprNode*)> emit = [&](const ExprNode* n) -> int {
    if (auto it = slot.find(n); it != slot.end()) return it->second;
    Instr ins{n->op};
    ins.node = n;
    switch (n->op) {
      case Op::constant: ins.c = n->value; break;
      case Op::variable:
        if (n->index < 0 || n->index >= arity_)
          throw ValidationError("variable index out of range in expression");
        ins.a = n->index;
        break;
      case Op::pow:
        ins.a = emit(n->lhs.get());
        if (!depends_on_variables(n->rhs.get())) {
          double k = const_eval(n->rhs.get());
          if (std::isfinite(k) && k == std::round(k) && std::abs(k) < 1e9) {
            ins.powi = true;
            ins.c = k;
            break;
          }
        }
        ins.b = emit(n->rhs.get());
        break;
      default:
        ins.a = emit(n->lhs.get());
        if (n->rhs) ins.b = emit(n->rhs.get());
        break;
    }
    tape_.push_back(ins);
    int s = static_cast<int>(tape_.size()) - 1;
    slot.emplace(n, s);
    return s;
  };
  for (const Expr& e : exprs_) {
    if (e.arity() != arity_) throw ValidationError("expression arity mismatch in set");
    outputs_.push_back(emit(e.root().get()));
  }
}

template <class T>
std::vector<T> ExprSet::run(std::span<const double> point) const {
  if (static_cast<int>(point.size()) != arity_)
    throw ValidationError("point has " + std::to_string(point.size()) + " components, expected " +
                          std::to_string(arity_));
  const int n = arity_;
  std::vector<T> slots;
  slots.reserve(tape_.size());
  for (const Instr& ins : tape_) {
    auto fail = [&](const char* what) { throw DomainError(what, describe(ins.node)); };
    switch (ins.op) {
      case Op::constant: slots.push_back(make_constant<T>(ins.c, n)); break;
      case Op::variable: slots.push_back(make_variable<T>(point[ins.a], ins.a, n)); break;
      case Op::add: slots.push_back(slots[ins.a] + slots[ins.b]); break;
      case Op::sub: slots.push_back(slots[ins.a] - slots[ins.b]); break;
      case Op::mul: slots.push_back(slots[ins.a] * slots[ins.b]); break;
      case Op::neg: slots.push_back(-slots[ins.a]); break;
      case Op::div: {
        double b = value_of(slots[ins.b]);
        if (b == 0.0) fail("division by zero");
        if constexpr (kHasDerivatives<T>) {
          slots.push_back(slots[ins.a] * chain(slots[ins.b], 1.0 / b, -1.0 / (b * b),
                                               2.0 / (b * b * b)));
        } else {
          slots.push_back(slots[ins.a] / slots[ins.b]);
        }
        break;
      }
      case Op::pow: {
        double a = value_of(slots[ins.a]);
        if (ins.powi) {
          double k = ins.c;
          if (k < 0 && a == 0.0) fail("division by zero");
          double f0 = std::pow(a, k);
          double f1 = k == 0 ? 0.0 : (k == 1 ? 1.0 : k * std::pow(a, k - 1));
          double f2 = (k == 0 || k == 1) ? 0.0 : (k == 2 ? 2.0 : k * (k - 1) * std::pow(a, k - 2));
          slots.push_back(chain(slots[ins.a], f0, f1, f2));
        } else {
          if (a <= 0.0) fail("real exponent requires a positive base");
          if constexpr (kHasDerivatives<T>) {
            T la = chain(slots[ins.a], std::log(a), 1.0 / a, -1.0 / (a * a));
            T m = slots[ins.b] * la;
            double e = std::exp(m.v);
            slots.push_back(chain(m, e, e, e));
          } else {
            slots.push_back(std::pow(a, slots[ins.b]));
          }
        }
        break;
      }
      case Op::sqrt: {
        double a = value_of(slots[ins.a]);
        if (a < 0.0) fail("sqrt of a negative number");
        double r = std::sqrt(a);
        if constexpr (kHasDerivatives<T>) {
          if (a == 0.0) fail("sqrt is not differentiable at 0");
          slots.push_back(chain(slots[ins.a], r, 0.5 / r, -0.25 / (a * r)));
        } else {
          slots.push_back(r);
        }
        break;
      }
      case Op::sin: {
        double a = value_of(slots[ins.a]);
        double s = std::sin(a);
        slots.push_back(chain(slots[ins.a], s, std::cos(a), -s));
        break;
      }
      case Op::cos: {
        double a = value_of(slots[ins.a]);
        double c = std::cos(a);
        slots.push_back(chain(slots[ins.a], c, -std::sin(a), -c));
        break;
      }
      case Op::exp: {
        double e = std::exp(value_of(slots[ins.a]));
        slots.push_back(chain(slots[ins.a], e, e, e));
        break;
      }
      case Op::log: {
        double a = value_of(slots[ins.a]);
        if (a <= 0.0) fail("log of a non-positive number");
        slots.push_back(chain(slots[ins.a], std::log(a), 1.0 / a, -1.0 / (a * a)));
        break;
      }
      case Op::abs: {
        double a = value_of(slots[ins.a]);
        double s = a > 0 ? 1.0 : (a < 0 ? -1.0 : 0.0);
        slots.push_back(chain(slots[ins.a], std::abs(a), s, 0.0));
        break;
      }
      case Op::sign: {
        double a = value_of(slots[ins.a]);
        double s = a > 0 ? 1.0 : (a < 0 ? -1.0 : 0.0);
        slots.push_back(chain(slots[ins.a], s, 0.0, 0.0));
        break;
      }
    }
  }
  std::vector<T> out;
  out.reserve(outputs_.size());
  for (int o : outputs_) out.push_back(slots[o]);
  return out;
}

std::vector<double> ExprSet::values(std::span<const double> point) const {
  return run<double>(point);
}
std::vector<Jet1> ExprSet::jets1(std::span<const double> point) const { return run<Jet1>(point); }
std::vector<Jet2> ExprSet::jets2(std::span<const double> point) const { return run<Jet2>(point); }

double eval(const Expr& e, std::span<const double> point) {
  return ExprSet({e}, e.arity()).values(point)[0];
}

Vec grad(const Expr& e, std::span<const double> point) {
  return Vec(ExprSet({e}, e.arity()).jets1(point)[0].g);
}

Mat hessian(const Expr& e, std::span<const double> point) {
  return mirror_upper(Mat(ExprSet({e}, e.arity()).jets2(point)[0].h));
}

}  // namespace riemobs
