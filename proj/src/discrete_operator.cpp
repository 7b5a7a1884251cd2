#include "gelfand/discrete_operator.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>

#include "gelfand/errors.hpp"
#include "gelfand/numerics.hpp"

namespace gelfand {

namespace {

// Weights along one axis at position k, as (axis index, weight) pairs, with
// Neumann ghost nodes folded back onto their mirror images.
struct AxisWeights {
  std::vector<std::pair<std::size_t, double>> d1;
  std::vector<std::pair<std::size_t, double>> d2;
  double h = 0;  // local spacing (largest neighbouring gap)
  bool ghost = false;
};

AxisWeights axis_weights(std::span<const double> x, std::size_t k, bool neumann_lo, bool neumann_hi) {
  const std::size_t n = x.size();
  AxisWeights out;
  std::array<double, 3> pts;
  std::array<std::size_t, 3> idx;
  if (k == 0) {
    if (!neumann_lo) throw InvalidArgument("assemble: Dirichlet node reached stencil construction");
    pts = {x[0] - (x[1] - x[0]), x[0], x[1]};
    idx = {1, 0, 1};
    out.ghost = true;
  } else if (k == n - 1) {
    if (!neumann_hi) throw InvalidArgument("assemble: Dirichlet node reached stencil construction");
    pts = {x[n - 2], x[n - 1], x[n - 1] + (x[n - 1] - x[n - 2])};
    idx = {n - 2, n - 1, n - 2};
    out.ghost = true;
  } else {
    pts = {x[k - 1], x[k], x[k + 1]};
    idx = {k - 1, k, k + 1};
  }
  out.h = std::max(pts[1] - pts[0], pts[2] - pts[1]);
  const auto w1 = fd_weights(pts[1], pts, 1);
  const auto w2 = fd_weights(pts[1], pts, 2);
  auto fold = [&](const std::vector<double>& w, std::vector<std::pair<std::size_t, double>>& dst) {
    for (int m = 0; m < 3; ++m) {
      auto it = std::find_if(dst.begin(), dst.end(), [&](const auto& p) { return p.first == idx[m]; });
      if (it == dst.end()) {
        dst.emplace_back(idx[m], w[m]);
      } else {
        it->second += w[m];
      }
    }
  };
  fold(w1, out.d1);
  fold(w2, out.d2);
  return out;
}

// One-sided first-order difference in the direction of the drift.
std::vector<std::pair<std::size_t, double>> upwind(std::span<const double> x, std::size_t k, double B) {
  if (B > 0) {
    const double h = x[k + 1] - x[k];
    return {{k, -1.0 / h}, {k + 1, 1.0 / h}};
  }
  const double h = x[k] - x[k - 1];
  return {{k - 1, -1.0 / h}, {k, 1.0 / h}};
}

}  // namespace

DiscreteOperator assemble(const CoefficientField& coeffs, const BoundarySpec& bc) {
  const Grid& g = coeffs.grid();
  DiscreteOperator op;
  op.grid_ = coeffs.grid_ptr();
  op.bc_ = bc;
  const std::size_t N = g.size();
  const int dim = g.spatial_dim();
  const bool radial = g.kind() == GridKind::radial_1d;
  const bool polar = g.kind() == GridKind::polar_half_disk;
  const auto face = [&](int f) { return bc.faces[f] == BoundaryKind::neumann; };
  const bool radial_centre = radial && g.axis(0).front() == 0.0 && face(0);

  // Dirichlet classification.
  op.unknown_of_.assign(N, -1);
  for (std::size_t p = 0; p < N; ++p) {
    const auto [i, j] = g.multi_index(p);
    bool dir = false;
    if (i == 0) dir = radial_centre ? false : (polar ? true : !face(0));
    if (i + 1 == g.extent(0)) dir = dir || !face(1);
    if (dim == 2) {
      if (j == 0) dir = dir || !face(2);
      if (j + 1 == g.extent(1)) dir = dir || !face(3);
    }
    if (!dir) {
      op.unknown_of_[p] = static_cast<std::ptrdiff_t>(op.unknowns_.size());
      op.unknowns_.push_back(p);
    }
  }

  std::vector<Eigen::Triplet<double, int>> trip;
  trip.reserve(N * 9);
  const auto x0 = g.axis(0);
  for (const std::size_t p : op.unknowns_) {
    const auto [i, j] = g.multi_index(p);
    const Mat2& A = coeffs.A(p);
    const Vec2& b = coeffs.b(p);
    const int row = static_cast<int>(p);
    auto add = [&](std::size_t col, double w) { trip.emplace_back(row, static_cast<int>(col), w); };

    if (radial && i == 0 && radial_centre) {
      // Symmetric ghost: Delta u(0) = n u''(0) = 2 n (u_1 - u_0) / r_1^2.
      const double c = 2.0 * g.n_dim() * A(0, 0) / (x0[1] * x0[1]);
      add(0, -c);
      add(1, c);
      continue;
    }

    double D[2] = {0, 0};
    double B[2] = {0, 0};
    double M = 0;
    if (radial) {
      const double r = x0[i];
      D[0] = A(0, 0);
      B[0] = A(0, 0) * (g.n_dim() - 1) / r + b(0);
    } else if (polar) {
      const double r = x0[i];
      const double th = g.axis(1)[j];
      const double c = std::cos(th), s = std::sin(th);
      const double a11 = A(0, 0), a12 = 0.5 * (A(0, 1) + A(1, 0)), a22 = A(1, 1);
      const double tang = a11 * s * s - 2 * a12 * s * c + a22 * c * c;
      const double skew = 2 * a11 * s * c - 2 * a12 * (c * c - s * s) - 2 * a22 * s * c;
      D[0] = a11 * c * c + 2 * a12 * s * c + a22 * s * s;
      D[1] = tang / (r * r);
      M = -skew / r;
      B[0] = tang / r + b(0) * c + b(1) * s;
      B[1] = skew / (r * r) + (-b(0) * s + b(1) * c) / r;
    } else {
      D[0] = A(0, 0);
      D[1] = A(1, 1);
      M = A(0, 1) + A(1, 0);
      B[0] = b(0);
      B[1] = b(1);
    }

    std::array<AxisWeights, 2> aw;
    const std::size_t k[2] = {i, j};
    for (int a = 0; a < dim; ++a) aw[a] = axis_weights(g.axis(a), k[a], face(2 * a), face(2 * a + 1));
    auto node = [&](int a, std::size_t m) { return a == 0 ? g.index(m, j) : g.index(i, m); };

    for (int a = 0; a < dim; ++a) {
      for (const auto& [m, w] : aw[a].d2) add(node(a, m), D[a] * w);
      if (B[a] == 0.0) continue;
      const bool centred = aw[a].ghost || std::abs(B[a]) * aw[a].h / (2.0 * D[a]) <= 1.0;
      if (centred) {
        for (const auto& [m, w] : aw[a].d1) add(node(a, m), B[a] * w);
      } else {
        ++op.upwinded_;
        for (const auto& [m, w] : upwind(g.axis(a), k[a], B[a])) add(node(a, m), B[a] * w);
      }
    }
    if (dim == 2 && M != 0.0) {
      for (const auto& [m0, w0] : aw[0].d1)
        for (const auto& [m1, w1] : aw[1].d1) add(g.index(m0, m1), M * w0 * w1);
    }
  }
  op.full_.resize(static_cast<int>(N), static_cast<int>(N));
  op.full_.setFromTriplets(trip.begin(), trip.end());
  op.full_.prune(0.0);

  // Reduced matrix over the unknowns.
  std::vector<Eigen::Triplet<double, int>> red;
  red.reserve(op.full_.nonZeros());
  for (int c = 0; c < op.full_.outerSize(); ++c) {
    const auto uc = op.unknown_of_[c];
    if (uc < 0) continue;
    for (SparseMatrix::InnerIterator it(op.full_, c); it; ++it) {
      const auto ur = op.unknown_of_[it.row()];
      if (ur >= 0) red.emplace_back(static_cast<int>(ur), static_cast<int>(uc), it.value());
    }
  }
  const int m = static_cast<int>(op.unknowns_.size());
  op.reduced_.resize(m, m);
  op.reduced_.setFromTriplets(red.begin(), red.end());
  op.reduced_.makeCompressed();
  return op;
}

Eigen::VectorXd DiscreteOperator::restrict(const ScalarField& u) const {
  if (u.size() != grid_->size()) throw InvalidArgument("field does not match operator grid");
  Eigen::VectorXd x(static_cast<Eigen::Index>(unknowns_.size()));
  for (std::size_t k = 0; k < unknowns_.size(); ++k) x[static_cast<Eigen::Index>(k)] = u[unknowns_[k]];
  return x;
}

ScalarField DiscreteOperator::extend(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != unknowns_.size()) throw InvalidArgument("vector does not match unknowns");
  std::vector<double> v(grid_->size(), 0.0);
  for (std::size_t k = 0; k < unknowns_.size(); ++k) v[unknowns_[k]] = x[static_cast<Eigen::Index>(k)];
  return ScalarField(grid_, std::move(v));
}

ScalarField apply(const DiscreteOperator& op, const ScalarField& u) {
  if (u.size() != op.grid().size()) throw InvalidArgument("apply: field does not match operator grid");
  const Eigen::Map<const Eigen::VectorXd> x(u.values().data(), static_cast<Eigen::Index>(u.size()));
  const Eigen::VectorXd y = op.full() * x;
  return ScalarField(op.grid_ptr(), std::vector<double>(y.data(), y.data() + y.size()));
}

struct LinearSolver::Impl {
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
};

LinearSolver::LinearSolver(const SparseMatrix& m) : impl_(std::make_unique<Impl>()) {
  if (m.rows() != m.cols()) throw InvalidArgument("linear solver needs a square matrix");
  SparseMatrix a = m;
  a.makeCompressed();
  impl_->lu.analyzePattern(a);
  impl_->lu.factorize(a);
  if (impl_->lu.info() != Eigen::Success) throw SolverError("linear", "sparse LU failed: " + impl_->lu.lastErrorMessage());
}

LinearSolver::~LinearSolver() = default;
LinearSolver::LinearSolver(LinearSolver&&) noexcept = default;
LinearSolver& LinearSolver::operator=(LinearSolver&&) noexcept = default;

Eigen::VectorXd LinearSolver::solve(const Eigen::VectorXd& rhs) const {
  Eigen::VectorXd x = impl_->lu.solve(rhs);
  if (impl_->lu.info() != Eigen::Success || !x.allFinite()) throw SolverError("linear", "sparse LU solve failed");
  return x;
}

double LinearSolver::log_abs_determinant() const { return impl_->lu.logAbsDeterminant(); }
int LinearSolver::determinant_sign() const { return static_cast<int>(impl_->lu.signDeterminant()); }

}  // namespace gelfand
