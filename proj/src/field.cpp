#include "gelfand/field.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "gelfand/errors.hpp"
#include "gelfand/numerics.hpp"

namespace gelfand {

ScalarField::ScalarField(GridPtr grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (!grid_) throw InvalidArgument("field requires a grid");
  if (values_.size() != grid_->size()) throw InvalidArgument("field length does not match grid node count");
  for (double v : values_) {
    if (!std::isfinite(v)) throw InvalidArgument("field values must be finite");
  }
}

ScalarField::ScalarField(GridPtr grid) : grid_(std::move(grid)) {
  if (!grid_) throw InvalidArgument("field requires a grid");
  values_.assign(grid_->size(), 0.0);
}

ScalarField ScalarField::sample(GridPtr grid, const std::function<double(const Point&)>& f) {
  std::vector<double> v(grid->size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(grid->position(i));
  return ScalarField(std::move(grid), std::move(v));
}

double ScalarField::max_abs() const {
  double m = 0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}
double ScalarField::min() const { return *std::min_element(values_.begin(), values_.end()); }
double ScalarField::max() const { return *std::max_element(values_.begin(), values_.end()); }

ScalarField& ScalarField::operator+=(const ScalarField& other) {
  if (other.size() != size()) throw InvalidArgument("field shape mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}
ScalarField& ScalarField::operator-=(const ScalarField& other) {
  if (other.size() != size()) throw InvalidArgument("field shape mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}
ScalarField& ScalarField::operator*=(double c) {
  for (double& v : values_) v *= c;
  return *this;
}
ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
ScalarField operator*(double c, ScalarField a) { return a *= c; }

VectorField::VectorField(GridPtr grid, std::vector<double> data)
    : grid_(std::move(grid)), dim_(grid_->spatial_dim()), data_(std::move(data)) {
  if (data_.size() != grid_->size() * dim_) throw InvalidArgument("vector field length mismatch");
}
VectorField::VectorField(GridPtr grid) : grid_(std::move(grid)), dim_(grid_->spatial_dim()) {
  data_.assign(grid_->size() * dim_, 0.0);
}

ScalarField VectorField::component(int c) const {
  std::vector<double> v(grid_->size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (*this)(i, c);
  return ScalarField(grid_, std::move(v));
}

ScalarField VectorField::norm() const {
  std::vector<double> v(grid_->size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double s = 0;
    for (int c = 0; c < dim_; ++c) s += (*this)(i, c) * (*this)(i, c);
    v[i] = std::sqrt(s);
  }
  return ScalarField(grid_, std::move(v));
}

MatrixField::MatrixField(GridPtr grid) : grid_(std::move(grid)), dim_(grid_->spatial_dim()) {
  data_.assign(grid_->size() * dim_ * dim_, 0.0);
}

ScalarField MatrixField::frobenius() const {
  std::vector<double> v(grid_->size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double s = 0;
    for (int r = 0; r < dim_; ++r)
      for (int c = 0; c < dim_; ++c) s += (*this)(i, r, c) * (*this)(i, r, c);
    v[i] = std::sqrt(s);
  }
  return ScalarField(grid_, std::move(v));
}

namespace {

struct Stencil {
  std::size_t first = 0;
  std::vector<double> w;
};

// Centered three-point stencils in the interior; one-sided at the ends
// (3 points for first derivatives, 4 for second derivatives).
std::vector<Stencil> axis_stencils(std::span<const double> x, int order) {
  const std::size_t n = x.size();
  const std::size_t end_width = order == 1 ? 3 : 4;
  if (n < end_width) throw DegenerateGrid(order == 1 ? "gradient needs >= 3 nodes per axis"
                                                     : "hessian needs >= 4 nodes per axis");
  std::vector<Stencil> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t first;
    std::size_t width;
    if (i == 0) {
      first = 0;
      width = end_width;
    } else if (i == n - 1) {
      first = n - end_width;
      width = end_width;
    } else {
      first = i - 1;
      width = 3;
    }
    out[i].first = first;
    out[i].w = fd_weights(x[i], x.subspan(first, width), order);
  }
  return out;
}

// Applies an axis stencil to every grid line along `axis`.
std::vector<double> apply_axis(const Grid& g, std::span<const double> v, int axis, int order) {
  const auto st = axis_stencils(g.axis(axis), order);
  std::vector<double> out(g.size(), 0.0);
  if (g.spatial_dim() == 1) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      double s = 0;
      for (std::size_t k = 0; k < st[i].w.size(); ++k) s += st[i].w[k] * v[st[i].first + k];
      out[i] = s;
    }
    return out;
  }
  const std::size_t n0 = g.extent(0);
  const std::size_t n1 = g.extent(1);
  for (std::size_t i = 0; i < n0; ++i) {
    for (std::size_t j = 0; j < n1; ++j) {
      double s = 0;
      if (axis == 0) {
        const auto& sc = st[i];
        for (std::size_t k = 0; k < sc.w.size(); ++k) s += sc.w[k] * v[g.index(sc.first + k, j)];
      } else {
        const auto& sc = st[j];
        for (std::size_t k = 0; k < sc.w.size(); ++k) s += sc.w[k] * v[g.index(i, sc.first + k)];
      }
      out[g.index(i, j)] = s;
    }
  }
  return out;
}

// Least-squares fit of g . (cos t_j, sin t_j) = d_j over the origin ring.
std::array<double, 2> fit_origin_gradient(const Grid& g, std::span<const double> ur) {
  const auto th = g.axis(1);
  double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
  for (std::size_t j = 0; j < th.size(); ++j) {
    const double c = std::cos(th[j]);
    const double s = std::sin(th[j]);
    const double d = ur[g.index(0, j)];
    a11 += c * c;
    a12 += c * s;
    a22 += s * s;
    b1 += c * d;
    b2 += s * d;
  }
  const double det = a11 * a22 - a12 * a12;
  return {(a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det};
}

}  // namespace

ScalarField axis_derivative(const ScalarField& field, int axis, int order) {
  return ScalarField(field.grid_ptr(), apply_axis(field.grid(), field.values(), axis, order));
}

VectorField gradient(const ScalarField& field) {
  const Grid& g = field.grid();
  VectorField out(field.grid_ptr());
  switch (g.kind()) {
    case GridKind::radial_1d: {
      const auto d = apply_axis(g, field.values(), 0, 1);
      for (std::size_t i = 0; i < g.size(); ++i) out(i, 0) = d[i];
      break;
    }
    case GridKind::cartesian_rect: {
      const auto d0 = apply_axis(g, field.values(), 0, 1);
      const auto d1 = apply_axis(g, field.values(), 1, 1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        out(i, 0) = d0[i];
        out(i, 1) = d1[i];
      }
      break;
    }
    case GridKind::polar_half_disk: {
      const auto ur = apply_axis(g, field.values(), 0, 1);
      const auto ut = apply_axis(g, field.values(), 1, 1);
      const auto r = g.axis(0);
      const auto th = g.axis(1);
      const auto origin = fit_origin_gradient(g, ur);
      for (std::size_t i = 0; i < r.size(); ++i) {
        for (std::size_t j = 0; j < th.size(); ++j) {
          const auto idx = g.index(i, j);
          if (r[i] == 0.0) {
            out(idx, 0) = origin[0];
            out(idx, 1) = origin[1];
            continue;
          }
          const double c = std::cos(th[j]);
          const double s = std::sin(th[j]);
          out(idx, 0) = c * ur[idx] - s * ut[idx] / r[i];
          out(idx, 1) = s * ur[idx] + c * ut[idx] / r[i];
        }
      }
      break;
    }
  }
  return out;
}

MatrixField hessian(const ScalarField& field) {
  const Grid& g = field.grid();
  MatrixField out(field.grid_ptr());
  switch (g.kind()) {
    case GridKind::radial_1d: {
      const auto d2 = apply_axis(g, field.values(), 0, 2);
      for (std::size_t i = 0; i < g.size(); ++i) out(i, 0, 0) = d2[i];
      break;
    }
    case GridKind::cartesian_rect: {
      const auto d00 = apply_axis(g, field.values(), 0, 2);
      const auto d11 = apply_axis(g, field.values(), 1, 2);
      const auto d0 = apply_axis(g, field.values(), 0, 1);
      const auto d01 = apply_axis(g, d0, 1, 1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        out(i, 0, 0) = d00[i];
        out(i, 1, 1) = d11[i];
        out(i, 0, 1) = d01[i];
        out(i, 1, 0) = d01[i];
      }
      break;
    }
    case GridKind::polar_half_disk: {
      if (g.extent(0) < 4 || g.extent(1) < 4) throw DegenerateGrid("hessian needs >= 4 nodes per axis");
      const auto ur = apply_axis(g, field.values(), 0, 1);
      const auto urr = apply_axis(g, field.values(), 0, 2);
      const auto ut = apply_axis(g, field.values(), 1, 1);
      const auto utt = apply_axis(g, field.values(), 1, 2);
      const auto urt = apply_axis(g, ur, 1, 1);
      const auto r = g.axis(0);
      const auto th = g.axis(1);
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (r[i] == 0.0) continue;
        for (std::size_t j = 0; j < th.size(); ++j) {
          const auto idx = g.index(i, j);
          const double c = std::cos(th[j]);
          const double s = std::sin(th[j]);
          const double ri = r[i];
          const double tang = ur[idx] / ri + utt[idx] / (ri * ri);
          const double mixed = urt[idx] / ri - ut[idx] / (ri * ri);
          out(idx, 0, 0) = c * c * urr[idx] + s * s * tang - 2 * s * c * mixed;
          out(idx, 1, 1) = s * s * urr[idx] + c * c * tang + 2 * s * c * mixed;
          const double xy = s * c * (urr[idx] - tang) + (c * c - s * s) * mixed;
          out(idx, 0, 1) = xy;
          out(idx, 1, 0) = xy;
        }
      }
      // Origin: linear extrapolation from the first two rings, averaged over theta.
      if (r[0] == 0.0) {
        const double w1 = r[2] / (r[2] - r[1]);
        const double w2 = -r[1] / (r[2] - r[1]);
        std::array<double, 4> h{};
        for (std::size_t j = 0; j < th.size(); ++j) {
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              h[a * 2 + b] += w1 * out(g.index(1, j), a, b) + w2 * out(g.index(2, j), a, b);
        }
        for (double& v : h) v /= static_cast<double>(th.size());
        for (std::size_t j = 0; j < th.size(); ++j)
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) out(g.index(0, j), a, b) = h[a * 2 + b];
      }
      break;
    }
  }
  return out;
}

ScalarField radial_derivative(const ScalarField& field) {
  const Grid& g = field.grid();
  std::vector<double> v(g.size(), 0.0);
  switch (g.kind()) {
    case GridKind::radial_1d:
    case GridKind::polar_half_disk: {
      v = apply_axis(g, field.values(), 0, 1);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (g.radius(i) == 0.0) v[i] = 0.0;
      break;
    }
    case GridKind::cartesian_rect: {
      const auto grad = gradient(field);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const auto p = g.position(i);
        const double r = std::hypot(p[0], p[1]);
        v[i] = r == 0.0 ? 0.0 : (p[0] * grad(i, 0) + p[1] * grad(i, 1)) / r;
      }
      break;
    }
  }
  return ScalarField(field.grid_ptr(), std::move(v));
}

namespace {

// Cell index and local coordinate for linear interpolation along an axis.
std::pair<std::size_t, double> locate(std::span<const double> x, double t) {
  const double slack = 1e-12 * std::max(1.0, std::abs(x.back() - x.front()));
  if (t < x.front() - slack || t > x.back() + slack) throw InvalidArgument("interpolation point outside grid");
  t = std::clamp(t, x.front(), x.back());
  auto it = std::upper_bound(x.begin(), x.end(), t);
  std::size_t i = it == x.begin() ? 0 : static_cast<std::size_t>(it - x.begin()) - 1;
  if (i >= x.size() - 1) i = x.size() - 2;
  return {i, (t - x[i]) / (x[i + 1] - x[i])};
}

}  // namespace

double interpolate(const ScalarField& field, const Point& point) {
  const Grid& g = field.grid();
  const auto v = field.values();
  if (g.spatial_dim() == 1) {
    const auto [i, t] = locate(g.axis(0), point[0]);
    return (1 - t) * v[i] + t * v[i + 1];
  }
  double a = point[0];
  double b = point[1];
  if (g.kind() == GridKind::polar_half_disk) {
    a = std::hypot(point[0], point[1]);
    b = a == 0.0 ? 0.0 : std::atan2(point[1], point[0]);
    if (b < 0 && b > -1e-12) b = 0.0;
  }
  const auto [i, s] = locate(g.axis(0), a);
  const auto [j, t] = locate(g.axis(1), b);
  return (1 - s) * (1 - t) * v[g.index(i, j)] + s * (1 - t) * v[g.index(i + 1, j)] +
         (1 - s) * t * v[g.index(i, j + 1)] + s * t * v[g.index(i + 1, j + 1)];
}

void write_csv(const ScalarField& field, std::ostream& out) {
  const Grid& g = field.grid();
  out << (g.spatial_dim() == 1 ? "coord1,value\n" : "coord1,coord2,value\n");
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto c = g.coordinates(i);
    if (g.spatial_dim() == 1) {
      out << fmt::format("{:.17g},{:.17g}\n", c[0], field[i]);
    } else {
      out << fmt::format("{:.17g},{:.17g},{:.17g}\n", c[0], c[1], field[i]);
    }
  }
}

std::string to_csv(const ScalarField& field) {
  std::ostringstream os;
  write_csv(field, os);
  return os.str();
}

}  // namespace gelfand
