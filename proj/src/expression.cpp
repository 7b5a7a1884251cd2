#include "gelfand/expression.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

#include "gelfand/errors.hpp"
#include "gelfand/numerics.hpp"

namespace gelfand {

struct Expression::Node {
  enum class Op { constant, variable, add, sub, mul, div, pow, neg, sin, cos, exp, log, sqrt, atan2 };
  Op op;
  double value = 0.0;
  std::size_t var = 0;
  std::shared_ptr<const Node> a;
  std::shared_ptr<const Node> b;
};

namespace {

using Op = Expression::Node::Op;
using NodePtr = std::shared_ptr<const Expression::Node>;

NodePtr make_const(double v) {
  auto n = std::make_shared<Expression::Node>();
  n->op = Op::constant;
  n->value = v;
  return n;
}

NodePtr make_var(std::size_t i) {
  auto n = std::make_shared<Expression::Node>();
  n->op = Op::variable;
  n->var = i;
  return n;
}

bool is_const(const NodePtr& n, double v) { return n->op == Op::constant && n->value == v; }

NodePtr make(Op op, NodePtr a, NodePtr b = nullptr) {
  // Constant folding and the identities that keep derivative trees small.
  if (a && a->op == Op::constant && (!b || b->op == Op::constant)) {
    const double x = a->value;
    const double y = b ? b->value : 0.0;
    switch (op) {
      case Op::add: return make_const(x + y);
      case Op::sub: return make_const(x - y);
      case Op::mul: return make_const(x * y);
      case Op::div:
        if (y != 0.0) return make_const(x / y);
        break;
      case Op::pow: return make_const(std::pow(x, y));
      case Op::neg: return make_const(-x);
      case Op::sin: return make_const(std::sin(x));
      case Op::cos: return make_const(std::cos(x));
      case Op::exp: return make_const(std::exp(x));
      default: break;
    }
  }
  switch (op) {
    case Op::add:
      if (is_const(a, 0)) return b;
      if (is_const(b, 0)) return a;
      break;
    case Op::sub:
      if (is_const(b, 0)) return a;
      if (is_const(a, 0)) return make(Op::neg, b);
      break;
    case Op::mul:
      if (is_const(a, 0) || is_const(b, 0)) return make_const(0.0);
      if (is_const(a, 1)) return b;
      if (is_const(b, 1)) return a;
      break;
    case Op::div:
      if (is_const(a, 0)) return make_const(0.0);
      if (is_const(b, 1)) return a;
      break;
    case Op::pow:
      if (is_const(b, 1)) return a;
      if (is_const(b, 0)) return make_const(1.0);
      break;
    default: break;
  }
  auto n = std::make_shared<Expression::Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

double eval(const Expression::Node& n, std::span<const double> v) {
  switch (n.op) {
    case Op::constant: return n.value;
    case Op::variable: return v[n.var];
    case Op::add: return eval(*n.a, v) + eval(*n.b, v);
    case Op::sub: return eval(*n.a, v) - eval(*n.b, v);
    case Op::mul: return eval(*n.a, v) * eval(*n.b, v);
    case Op::div: return eval(*n.a, v) / eval(*n.b, v);
    case Op::pow: {
      const double base = eval(*n.a, v);
      if (n.b->op == Op::constant) {
        const double e = n.b->value;
        if (e == 2.0) return base * base;
        if (e == 3.0) return base * base * base;
        if (e == 4.0) return (base * base) * (base * base);
        return std::pow(base, e);
      }
      return std::pow(base, eval(*n.b, v));
    }
    case Op::neg: return -eval(*n.a, v);
    case Op::sin: return std::sin(eval(*n.a, v));
    case Op::cos: return std::cos(eval(*n.a, v));
    case Op::exp: return std::exp(eval(*n.a, v));
    case Op::log: return std::log(eval(*n.a, v));
    case Op::sqrt: return std::sqrt(eval(*n.a, v));
    case Op::atan2: return std::atan2(eval(*n.a, v), eval(*n.b, v));
  }
  return 0.0;
}

NodePtr diff(const NodePtr& n, std::size_t var) {
  switch (n->op) {
    case Op::constant: return make_const(0.0);
    case Op::variable: return make_const(n->var == var ? 1.0 : 0.0);
    case Op::add: return make(Op::add, diff(n->a, var), diff(n->b, var));
    case Op::sub: return make(Op::sub, diff(n->a, var), diff(n->b, var));
    case Op::mul:
      return make(Op::add, make(Op::mul, diff(n->a, var), n->b), make(Op::mul, n->a, diff(n->b, var)));
    case Op::div: {
      auto num = make(Op::sub, make(Op::mul, diff(n->a, var), n->b), make(Op::mul, n->a, diff(n->b, var)));
      return make(Op::div, num, make(Op::pow, n->b, make_const(2.0)));
    }
    case Op::pow: {
      if (n->b->op == Op::constant) {
        const double e = n->b->value;
        return make(Op::mul, make(Op::mul, make_const(e), make(Op::pow, n->a, make_const(e - 1.0))),
                    diff(n->a, var));
      }
      // d(a^b) = a^b (b' log a + b a' / a)
      auto t1 = make(Op::mul, diff(n->b, var), make(Op::log, n->a));
      auto t2 = make(Op::div, make(Op::mul, n->b, diff(n->a, var)), n->a);
      return make(Op::mul, n, make(Op::add, t1, t2));
    }
    case Op::neg: return make(Op::neg, diff(n->a, var));
    case Op::sin: return make(Op::mul, make(Op::cos, n->a), diff(n->a, var));
    case Op::cos: return make(Op::neg, make(Op::mul, make(Op::sin, n->a), diff(n->a, var)));
    case Op::exp: return make(Op::mul, n, diff(n->a, var));
    case Op::log: return make(Op::div, diff(n->a, var), n->a);
    case Op::sqrt: return make(Op::div, diff(n->a, var), make(Op::mul, make_const(2.0), n));
    case Op::atan2: {
      // atan2(y, x)' = (x y' - y x') / (x^2 + y^2)
      const auto& y = n->a;
      const auto& x = n->b;
      auto num = make(Op::sub, make(Op::mul, x, diff(y, var)), make(Op::mul, y, diff(x, var)));
      auto den = make(Op::add, make(Op::pow, x, make_const(2.0)), make(Op::pow, y, make_const(2.0)));
      return make(Op::div, num, den);
    }
  }
  return make_const(0.0);
}

class Parser {
 public:
  Parser(std::string_view text, const std::vector<std::string>& vars) : s_(text), vars_(vars) {}

  NodePtr parse() {
    auto n = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected character '" + std::string(1, s_[pos_]) + "'");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < pos_ && i < s_.size(); ++i) {
      if (s_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError("expression: " + msg, line, col);
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    auto n = term();
    for (;;) {
      if (accept('+')) {
        n = make(Op::add, n, term());
      } else if (accept('-')) {
        n = make(Op::sub, n, term());
      } else {
        return n;
      }
    }
  }

  NodePtr term() {
    auto n = unary();
    for (;;) {
      if (accept('*')) {
        n = make(Op::mul, n, unary());
      } else if (accept('/')) {
        n = make(Op::div, n, unary());
      } else {
        return n;
      }
    }
  }

  NodePtr unary() {
    if (accept('-')) return make(Op::neg, unary());
    if (accept('+')) return unary();
    return power();
  }

  NodePtr power() {
    auto base = primary();
    if (accept('^')) return make(Op::pow, base, unary());
    return base;
  }

  std::ptrdiff_t find_var(std::string_view name) const {
    auto it = std::find(vars_.begin(), vars_.end(), name);
    return it == vars_.end() ? -1 : it - vars_.begin();
  }

  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (accept('(')) {
      auto n = expr();
      if (!accept(')')) fail("expected ')'");
      return n;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const std::string tail(s_.substr(pos_));
      char* end = nullptr;
      const double v = std::strtod(tail.c_str(), &end);
      if (end == tail.c_str()) fail("malformed number");
      pos_ += static_cast<std::size_t>(end - tail.c_str());
      return make_const(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      const std::string name(s_.substr(start, pos_ - start));
      static const std::pair<const char*, Op> funcs[] = {
          {"sin", Op::sin}, {"cos", Op::cos}, {"exp", Op::exp}, {"log", Op::log}, {"sqrt", Op::sqrt}};
      for (const auto& [fname, op] : funcs) {
        if (name == fname) {
          if (!accept('(')) fail("expected '(' after " + name);
          auto arg = expr();
          if (!accept(')')) fail("expected ')'");
          return make(op, arg);
        }
      }
      if (const auto i = find_var(name); i >= 0) return make_var(static_cast<std::size_t>(i));
      if (name == "pi") return make_const(kPi);
      if (name == "e") return make_const(std::exp(1.0));
      const auto ix1 = find_var("x1");
      const auto ix2 = find_var("x2");
      if (ix1 >= 0 && ix2 >= 0) {
        auto x1 = make_var(static_cast<std::size_t>(ix1));
        auto x2 = make_var(static_cast<std::size_t>(ix2));
        if (name == "r") {
          return make(Op::sqrt, make(Op::add, make(Op::pow, x1, make_const(2.0)), make(Op::pow, x2, make_const(2.0))));
        }
        if (name == "theta") return make(Op::atan2, x2, x1);
      }
      pos_ = start;
      fail("unknown identifier '" + name + "'");
    }
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  std::string_view s_;
  const std::vector<std::string>& vars_;
  std::size_t pos_ = 0;
};

}  // namespace

Expression::Expression() : root_(make_const(0.0)), text_("0") {}

Expression::Expression(std::shared_ptr<const Node> root, std::vector<std::string> variables, std::string text)
    : root_(std::move(root)), variables_(std::move(variables)), text_(std::move(text)) {}

Expression Expression::parse(std::string_view text, std::vector<std::string> variables) {
  Parser p(text, variables);
  auto root = p.parse();
  return Expression(std::move(root), std::move(variables), std::string(text));
}

Expression Expression::constant(double value, std::vector<std::string> variables) {
  return Expression(make_const(value), std::move(variables), std::to_string(value));
}

double Expression::operator()(std::span<const double> values) const {
  if (values.size() < variables_.size()) throw InvalidArgument("expression: too few variable values");
  return eval(*root_, values);
}

Expression Expression::derivative(std::size_t var) const {
  if (var >= variables_.size()) throw InvalidArgument("expression: derivative variable out of range");
  return Expression(diff(root_, var), variables_, "d(" + text_ + ")/d" + variables_[var]);
}

Expression Expression::derivative(std::string_view var) const {
  auto it = std::find(variables_.begin(), variables_.end(), var);
  if (it == variables_.end()) throw InvalidArgument("expression: unknown variable " + std::string(var));
  return derivative(static_cast<std::size_t>(it - variables_.begin()));
}

bool Expression::is_constant() const { return root_->op == Op::constant; }

}  // namespace gelfand
