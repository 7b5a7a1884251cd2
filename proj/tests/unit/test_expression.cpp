#include <doctest.h>

#include <cmath>

#include "gelfand/errors.hpp"
#include "gelfand/expression.hpp"

using namespace gelfand;

TEST_SUITE("expression") {
  TEST_CASE("evaluation and precedence") {
    const auto e = Expression::parse("1 + 2*x1^2^1.5 - x2/4", {"x1", "x2"});
    CHECK(e({2.0, 8.0}) == doctest::Approx(1 + 2 * std::pow(2.0, std::pow(2.0, 1.5)) - 2));
    CHECK(Expression::parse("-2^2", {})({}) == doctest::Approx(-4));
    CHECK(Expression::parse("2*pi*e", {})({}) == doctest::Approx(2 * M_PI * std::exp(1.0)));
    CHECK(Expression::parse("sqrt(r^2)", {"x1", "x2"})({3.0, 4.0}) == doctest::Approx(5));
    CHECK(Expression::parse("theta", {"x1", "x2"})({0.0, 1.0}) == doctest::Approx(M_PI / 2));
    CHECK(Expression::parse("log(exp(r)) + sin(0)*cos(0)", {"r"})({0.7}) == doctest::Approx(0.7));
  }

  TEST_CASE("symbolic derivatives") {
    const auto e = Expression::parse("sin(x1)*exp(2*x2) + x1^3/x2", {"x1", "x2"});
    const double x = 0.4, y = 1.3;
    CHECK(e.derivative("x1")({x, y}) == doctest::Approx(std::cos(x) * std::exp(2 * y) + 3 * x * x / y));
    CHECK(e.derivative(1)({x, y}) == doctest::Approx(2 * std::sin(x) * std::exp(2 * y) - x * x * x / (y * y)));
    const auto t = Expression::parse("theta", {"x1", "x2"});
    CHECK(t.derivative(0)({x, y}) == doctest::Approx(-y / (x * x + y * y)));
    CHECK(Expression::parse("x1^x2", {"x1", "x2"}).derivative(1)({2.0, 3.0}) == doctest::Approx(8 * std::log(2.0)));
    CHECK(Expression::parse("7", {"x1"}).derivative(0).is_constant());
  }

  TEST_CASE("parse errors carry positions") {
    CHECK_THROWS_AS(Expression::parse("sin(", {"x1"}), ParseError);
    try {
      Expression::parse("1 +\n  foo", {"x1"});
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(e.column() == 3);
    }
    CHECK_THROWS_AS(Expression::parse("r", {"x1"}), ParseError);
    CHECK_THROWS_AS(Expression::parse("(1 + 2", {}), ParseError);
    CHECK_THROWS_AS(Expression::parse("1 2", {}), ParseError);
  }
}
