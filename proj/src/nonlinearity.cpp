#include "gelfand/nonlinearity.hpp"

#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "gelfand/errors.hpp"

namespace gelfand {

Nonlinearity Nonlinearity::exponential() { return Nonlinearity(); }

Nonlinearity Nonlinearity::power(double m) {
  if (!(m > 1)) throw InvalidArgument("power nonlinearity needs m > 1");
  Nonlinearity n;
  n.kind_ = Kind::power;
  n.m_ = m;
  return n;
}

Nonlinearity Nonlinearity::mce() {
  Nonlinearity n;
  n.kind_ = Kind::mce;
  return n;
}

Nonlinearity Nonlinearity::custom(const std::string& f, const std::string& fprime) {
  Nonlinearity n;
  n.kind_ = Kind::custom;
  n.f_expr_ = Expression::parse(f, {"u"});
  n.df_expr_ = fprime.empty() ? n.f_expr_.derivative(0) : Expression::parse(fprime, {"u"});
  return n;
}

std::string Nonlinearity::name() const {
  switch (kind_) {
    case Kind::exponential: return "exp(u)";
    case Kind::power: return fmt::format("(1+u)^{}", m_);
    case Kind::mce: return "1/(1-u)^2";
    case Kind::custom: return f_expr_.text();
  }
  return "";
}

double Nonlinearity::upper_limit() const noexcept {
  return kind_ == Kind::mce ? 1.0 : std::numeric_limits<double>::infinity();
}

double Nonlinearity::f(double u) const {
  switch (kind_) {
    case Kind::exponential: return std::exp(u);
    case Kind::power: return std::pow(1.0 + u, m_);
    case Kind::mce: return u >= 1.0 ? std::numeric_limits<double>::infinity() : 1.0 / ((1.0 - u) * (1.0 - u));
    case Kind::custom: return f_expr_({u});
  }
  return 0.0;
}

double Nonlinearity::df(double u) const {
  switch (kind_) {
    case Kind::exponential: return std::exp(u);
    case Kind::power: return m_ * std::pow(1.0 + u, m_ - 1.0);
    case Kind::mce: return u >= 1.0 ? std::numeric_limits<double>::infinity() : 2.0 / std::pow(1.0 - u, 3);
    case Kind::custom: return df_expr_({u});
  }
  return 0.0;
}

Nonlinearity::Hypotheses Nonlinearity::check(double lo, double hi, int samples) const {
  if (!(hi > lo) || samples < 3) throw InvalidArgument("hypothesis check needs lo < hi and >= 3 samples");
  Hypotheses h;
  h.positive_at_zero = f(0.0) > 0;
  h.nondecreasing = true;
  h.convex = true;
  const double step = (hi - lo) / (samples - 1);
  double prev = f(lo);
  for (int i = 1; i < samples; ++i) {
    const double u = lo + i * step;
    const double v = f(u);
    if (v < prev - 1e-12 * std::abs(prev)) h.nondecreasing = false;
    if (i + 1 < samples) {
      const double second = f(u + step) - 2 * v + prev;
      if (second < -1e-9 * std::max(1.0, std::abs(v))) h.convex = false;
    }
    prev = v;
  }
  h.superlinear = true;
  double last = -std::numeric_limits<double>::infinity();
  const double start = std::max(lo, 0.0) + 0.5 * (hi - std::max(lo, 0.0));
  for (int i = 0; i < samples / 2; ++i) {
    const double u = start + (hi - start) * i / std::max(1, samples / 2 - 1);
    if (u <= 0) continue;
    const double q = f(u) / u;
    if (q < last) h.superlinear = false;
    last = q;
  }
  return h;
}

}  // namespace gelfand
