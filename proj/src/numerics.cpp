#include "gelfand/numerics.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <cmath>

#include "gelfand/errors.hpp"

namespace gelfand {

std::vector<double> fd_weights(double x0, std::span<const double> xs, int order) {
  const int n = static_cast<int>(xs.size());
  if (n <= order) throw InvalidArgument("fd_weights: not enough nodes for derivative order");
  // c[j][k]: weight of node j for derivative k.
  std::vector<std::vector<double>> c(n, std::vector<double>(order + 1, 0.0));
  double c1 = 1.0;
  double c4 = xs[0] - x0;
  c[0][0] = 1.0;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, order);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = xs[i] - x0;
    for (int j = 0; j < i; ++j) {
      const double c3 = xs[i] - xs[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(n);
  for (int j = 0; j < n; ++j) w[j] = c[j][order];
  return w;
}

double sphere_area(int n) {
  if (n < 1) throw InvalidArgument("sphere_area: dimension must be >= 1");
  return 2.0 * std::pow(kPi, 0.5 * n) / std::tgamma(0.5 * n);
}

namespace {
template <int N>
GaussRule make_rule() {
  using Q = boost::math::quadrature::gauss<double, N>;
  GaussRule rule;
  const auto& a = Q::abscissa();
  const auto& w = Q::weights();
  // Boost stores the non-negative half of the symmetric rule.
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) {
      rule.nodes.push_back(0.0);
      rule.weights.push_back(w[i]);
    } else {
      rule.nodes.push_back(-a[i]);
      rule.weights.push_back(w[i]);
      rule.nodes.push_back(a[i]);
      rule.weights.push_back(w[i]);
    }
  }
  return rule;
}
}  // namespace

GaussRule gauss_legendre(int points) {
  switch (points) {
    case 4: return make_rule<4>();
    case 8: return make_rule<8>();
    case 12: return make_rule<12>();
    case 16: return make_rule<16>();
    case 20: return make_rule<20>();
    default: throw InvalidArgument("gauss_legendre: unsupported number of points");
  }
}

double least_squares_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("least_squares_slope: need >= 2 pairs");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace gelfand
