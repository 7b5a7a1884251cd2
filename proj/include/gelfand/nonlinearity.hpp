#pragma once

#include <string>

#include "gelfand/expression.hpp"

namespace gelfand {

/// Right-hand side f of -L u = lambda f(u).
class Nonlinearity {
 public:
  enum class Kind { exponential, power, mce, custom };

  /// f(u) = e^u.
  static Nonlinearity exponential();
  /// f(u) = (1 + u)^m, m > 1.
  static Nonlinearity power(double m);
  /// f(u) = 1 / (1 - u)^2 on [0, 1).
  static Nonlinearity mce();
  /// f and f' as expressions in `u`; f' is differentiated symbolically when empty.
  static Nonlinearity custom(const std::string& f, const std::string& fprime = "");

  Kind kind() const noexcept { return kind_; }
  std::string name() const;
  /// Solutions must stay below this value (1 for mce, +inf otherwise).
  double upper_limit() const noexcept;

  /// +inf at or beyond upper_limit().
  double f(double u) const;
  double df(double u) const;

  /// Sampled structural hypotheses on [lo, hi].
  struct Hypotheses {
    bool positive_at_zero = false;
    bool nondecreasing = false;
    bool convex = false;
    /// f(u)/u increasing over the upper half of the range.
    bool superlinear = false;
  };
  Hypotheses check(double lo, double hi, int samples = 200) const;

 private:
  Kind kind_ = Kind::exponential;
  double m_ = 2.0;
  Expression f_expr_;
  Expression df_expr_;
};

}  // namespace gelfand
