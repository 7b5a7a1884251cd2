#include "gelfand/coefficients.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "gelfand/errors.hpp"

namespace gelfand {

CoefficientModel CoefficientModel::laplacian() { return planar("1", "0", "1", "0", "0"); }

CoefficientModel CoefficientModel::planar(const std::string& a11, const std::string& a12, const std::string& a22,
                                          const std::string& b1, const std::string& b2) {
  const std::vector<std::string> vars{"x1", "x2"};
  CoefficientModel m;
  m.a11_ = Expression::parse(a11, vars);
  m.a12_ = Expression::parse(a12, vars);
  m.a22_ = Expression::parse(a22, vars);
  m.b1_ = Expression::parse(b1, vars);
  m.b2_ = Expression::parse(b2, vars);
  return m;
}

CoefficientModel CoefficientModel::radial(const std::string& a, const std::string& b) {
  const std::vector<std::string> vars{"r"};
  CoefficientModel m;
  m.radial_ = true;
  m.a11_ = Expression::parse(a, vars);
  m.b1_ = Expression::parse(b, vars);
  return m;
}

Mat2 CoefficientModel::A(const Point& x) const {
  Mat2 A = Mat2::Zero();
  if (radial_) {
    A(0, 0) = a11_({x[0]});
    return A;
  }
  const double a12 = a12_({x[0], x[1]});
  A << a11_({x[0], x[1]}), a12, a12, a22_({x[0], x[1]});
  return A;
}

Vec2 CoefficientModel::b(const Point& x) const {
  if (radial_) return Vec2(b1_({x[0]}), 0.0);
  return Vec2(b1_({x[0], x[1]}), b2_({x[0], x[1]}));
}

Mat2 CoefficientModel::dA(const Point& x, int k) const {
  Mat2 D = Mat2::Zero();
  if (radial_) {
    D(0, 0) = a11_.derivative(0)({x[0]});
    return D;
  }
  const double d12 = a12_.derivative(k)({x[0], x[1]});
  D << a11_.derivative(k)({x[0], x[1]}), d12, d12, a22_.derivative(k)({x[0], x[1]});
  return D;
}

CoefficientField::CoefficientField(GridPtr grid, std::vector<Mat2> A, std::vector<Vec2> b, double c0, double C0,
                                   double eps_size)
    : grid_(std::move(grid)), A_(std::move(A)), b_(std::move(b)), c0_(c0), C0_(C0), eps_size_(eps_size) {
  if (!grid_) throw InvalidArgument("coefficient field without grid");
  if (A_.size() != grid_->size() || b_.size() != grid_->size())
    throw InvalidArgument("coefficient samples do not match grid size");
  if (!(c0_ > 0) || !(C0_ >= c0_)) throw InvalidArgument("ellipticity bounds need 0 < c0 <= C0");
  if (!(eps_size_ >= 0)) throw InvalidArgument("eps_size must be nonnegative");
  for (std::size_t i = 0; i < A_.size(); ++i)
    if (!A_[i].allFinite() || !b_[i].allFinite()) throw InvalidArgument("non-finite coefficient sample");
}

CoefficientField CoefficientField::identity(GridPtr grid) {
  const std::size_t n = grid->size();
  Mat2 I = Mat2::Identity();
  if (grid->spatial_dim() == 1) I(1, 1) = 0.0;
  return CoefficientField(std::move(grid), std::vector<Mat2>(n, I), std::vector<Vec2>(n, Vec2::Zero()), 1.0, 1.0,
                          0.0);
}

CoefficientField CoefficientField::sample(GridPtr grid, const CoefficientModel& model, double c0, double C0,
                                          double eps_size) {
  if (model.is_radial() != (grid->kind() == GridKind::radial_1d))
    throw InvalidArgument("radial coefficient models need radial grids and vice versa");
  const std::size_t n = grid->size();
  std::vector<Mat2> A(n);
  std::vector<Vec2> b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = grid->position(i);
    A[i] = model.A(x);
    b[i] = model.b(x);
  }
  return CoefficientField(std::move(grid), std::move(A), std::move(b), c0, C0, eps_size);
}

ScalarField CoefficientField::a_component(int r, int c) const {
  std::vector<double> v(A_.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = A_[i](r, c);
  return ScalarField(grid_, std::move(v));
}

ScalarField CoefficientField::b_component(int c) const {
  std::vector<double> v(b_.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = b_[i](c);
  return ScalarField(grid_, std::move(v));
}

EllipticityReport validate_ellipticity(const CoefficientField& coeffs) {
  const Grid& g = coeffs.grid();
  const int d = coeffs.dim();
  EllipticityReport rep;
  rep.min_eigenvalue = std::numeric_limits<double>::infinity();
  rep.max_eigenvalue = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Mat2& A = coeffs.A(i);
    double lo, hi;
    if (d == 1) {
      lo = hi = A(0, 0);
    } else {
      const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
      if (std::abs(A(0, 1) - A(1, 0)) > 1e-12 * scale)
        throw InvalidArgument("coefficient matrix is not symmetric at node " + std::to_string(i));
      Eigen::SelfAdjointEigenSolver<Mat2> es(A, Eigen::EigenvaluesOnly);
      lo = es.eigenvalues()(0);
      hi = es.eigenvalues()(1);
    }
    if (lo < rep.min_eigenvalue) {
      rep.min_eigenvalue = lo;
      rep.worst_min_node = i;
    }
    if (hi > rep.max_eigenvalue) {
      rep.max_eigenvalue = hi;
      rep.worst_max_node = i;
    }
  }
  const double tol_lo = 1e-12 * coeffs.c0();
  const double tol_hi = 1e-12 * coeffs.C0();
  rep.pass = rep.min_eigenvalue >= coeffs.c0() - tol_lo && rep.max_eigenvalue <= coeffs.C0() + tol_hi;

  // Lipschitz quotient over axis-neighbour pairs plus sup |b|.
  double lip = 0.0;
  double bmax = 0.0;
  auto pair = [&](std::size_t p, std::size_t q) {
    const auto xp = g.position(p);
    const auto xq = g.position(q);
    const double dist = std::hypot(xp[0] - xq[0], xp[1] - xq[1]);
    if (dist <= 0) return;
    const Mat2 D = coeffs.A(p) - coeffs.A(q);
    const double nrm = d == 1 ? std::abs(D(0, 0)) : Eigen::SelfAdjointEigenSolver<Mat2>(0.5 * (D + D.transpose()), Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs().maxCoeff();
    lip = std::max(lip, nrm / dist);
  };
  for (std::size_t i = 0; i < g.size(); ++i) {
    bmax = std::max(bmax, d == 1 ? std::abs(coeffs.b(i)(0)) : coeffs.b(i).norm());
    const auto [a, b] = g.multi_index(i);
    if (a + 1 < g.extent(0)) pair(i, g.index(a + 1, b));
    if (d == 2 && b + 1 < g.extent(1)) pair(i, g.index(a, b + 1));
  }
  rep.eps_measured = lip + bmax;
  rep.eps_pass = rep.eps_measured <= coeffs.eps_size() * (1 + 1e-9) + 1e-12;
  return rep;
}

namespace {

// Gradient that is exactly zero for constant samples.
VectorField component_gradient(const ScalarField& f) {
  if (f.min() == f.max()) return VectorField(f.grid_ptr());
  return gradient(f);
}

}  // namespace

VectorField to_divergence_form(const CoefficientField& coeffs) {
  const Grid& g = coeffs.grid();
  VectorField out(coeffs.grid_ptr());
  if (coeffs.dim() == 1) {
    // A = a(r) I: d_k a_ki = d_i a, whose radial component is a'(r).
    const auto da = component_gradient(coeffs.a_component(0, 0));
    for (std::size_t i = 0; i < g.size(); ++i) out(i, 0) = coeffs.b(i)(0) - da(i, 0);
    return out;
  }
  std::array<std::array<VectorField, 2>, 2> grads;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) grads[r][c] = component_gradient(coeffs.a_component(r, c));
  for (std::size_t n = 0; n < g.size(); ++n) {
    for (int i = 0; i < 2; ++i) {
      double div = 0;
      for (int k = 0; k < 2; ++k) div += grads[k][i](n, k);
      out(n, i) = coeffs.b(n)(i) - div;
    }
  }
  return out;
}

double anorm(const Eigen::VectorXd& p, const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols() || A.rows() != p.size()) throw InvalidArgument("anorm: shape mismatch");
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InvalidArgument("anorm: matrix is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) throw InvalidArgument("anorm: matrix is not positive definite");
  return std::sqrt(std::max(0.0, p.dot(A * p)));
}

CoefficientField rescale_operator(const CoefficientField& coeffs, double tau, std::optional<GridPtr> target) {
  if (!(tau >= 1.0)) throw InvalidArgument("rescale_operator needs tau >= 1");
  GridPtr grid = target ? *target : make_grid(coeffs.grid().scaled(1.0 / tau));
  if (grid->kind() != coeffs.grid().kind()) throw InvalidArgument("rescale target grid has a different kind");
  const int d = coeffs.dim();
  std::array<std::array<ScalarField, 2>, 2> a;
  std::array<ScalarField, 2> b;
  for (int r = 0; r < d; ++r) {
    b[r] = coeffs.b_component(r);
    for (int c = 0; c < d; ++c) a[r][c] = coeffs.a_component(r, c);
  }
  std::vector<Mat2> A(grid->size(), Mat2::Zero());
  std::vector<Vec2> bv(grid->size(), Vec2::Zero());
  for (std::size_t i = 0; i < grid->size(); ++i) {
    const auto x = grid->position(i);
    const Point tx{tau * x[0], tau * x[1]};
    try {
      for (int r = 0; r < d; ++r) {
        bv[i](r) = interpolate(b[r], tx) / tau;
        for (int c = 0; c < d; ++c) A[i](r, c) = interpolate(a[r][c], tx) / (tau * tau);
      }
    } catch (const InvalidArgument&) {
      throw InvalidArgument("rescale_operator: tau x lies outside the coefficient domain");
    }
    if (d == 2) A[i](1, 0) = A[i](0, 1) = 0.5 * (A[i](0, 1) + A[i](1, 0));
  }
  // c0/tau^2 <= A^tau <= C0/tau^2 and |DA^tau| + |b^tau| <= eps/tau.
  const double t2 = tau * tau;
  return CoefficientField(std::move(grid), std::move(A), std::move(bv), coeffs.c0() / t2, coeffs.C0() / t2,
                          coeffs.eps_size() / tau);
}

}  // namespace gelfand
