#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gelfand {

/// Closed-form scalar expression over named variables.
///
/// Grammar (see docs/expressions.md):
///
///     expr    = term { ("+" | "-") term } ;
///     term    = unary { ("*" | "/") unary } ;
///     unary   = ("-" | "+") unary | power ;
///     power   = primary [ "^" unary ] ;
///     primary = number | name | func "(" expr ")" | "(" expr ")" ;
///     func    = "sin" | "cos" | "exp" | "log" | "sqrt" ;
///
/// `pi` and `e` are constants. When both x1 and x2 are variables, `r` and
/// `theta` are accepted as shorthands for sqrt(x1^2 + x2^2) and atan2(x2, x1).
class Expression {
 public:
  struct Node;

  Expression();  // the constant 0
  static Expression parse(std::string_view text, std::vector<std::string> variables);
  static Expression constant(double value, std::vector<std::string> variables = {});

  double operator()(std::span<const double> values) const;
  double operator()(std::initializer_list<double> values) const {
    return (*this)(std::span<const double>(values.begin(), values.size()));
  }

  /// Symbolic partial derivative with respect to variable `var`.
  Expression derivative(std::size_t var) const;
  Expression derivative(std::string_view var) const;

  const std::vector<std::string>& variables() const noexcept { return variables_; }
  const std::string& text() const noexcept { return text_; }
  bool is_constant() const;

 private:
  Expression(std::shared_ptr<const Node> root, std::vector<std::string> variables, std::string text);

  std::shared_ptr<const Node> root_;
  std::vector<std::string> variables_;
  std::string text_;
};

}  // namespace gelfand
