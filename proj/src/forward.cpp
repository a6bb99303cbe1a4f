#include "hyrec/forward.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

namespace hyrec {

namespace {

std::string describe_point(const Grid& g, std::size_t p) {
  std::ostringstream os;
  const auto m = g.multi_index(p);
  const auto x = g.point(p);
  os << "point #" << p << " index (";
  for (int a = 0; a < g.dim(); ++a) os << (a ? "," : "") << m[a];
  os << ") at (";
  for (int a = 0; a < g.dim(); ++a) os << (a ? ", " : "") << x[a];
  os << ")";
  return os.str();
}

template <typename Visit>
void stencil_impl(const CoefficientSet& k, std::size_t p, Visit&& visit) {
  const Grid& g = k.grid();
  const int n = g.dim();
  for (int ax = 0; ax < n; ++ax) {
    const double h = g.spacing(ax);
    const std::size_t s = g.stride(ax);
    const std::size_t pp = p + s;
    const std::size_t pm = p - s;
    const Complex a_plus = 0.5 * (k.a(p, ax, ax) + k.a(pp, ax, ax));
    const Complex a_minus = 0.5 * (k.a(p, ax, ax) + k.a(pm, ax, ax));
    const double inv_h2 = 1.0 / (h * h);
    visit(pp, a_plus * inv_h2);
    visit(pm, a_minus * inv_h2);
    visit(p, -(a_plus + a_minus) * inv_h2);

    for (int l = 0; l < n; ++l) {
      if (l == ax) continue;
      const std::size_t sl = g.stride(l);
      const double w = 1.0 / (4.0 * h * g.spacing(l));
      const Complex up = k.a(pp, ax, l) * w;
      const Complex dn = k.a(pm, ax, l) * w;
      visit(pp + sl, up);
      visit(pp - sl, -up);
      visit(pm + sl, -dn);
      visit(pm - sl, dn);
    }

    const Complex adv = k.b(p, ax) * (0.5 / h);
    visit(pp, adv);
    visit(pm, -adv);
  }
  visit(p, k.c(p));
}

struct Numbering {
  std::vector<std::size_t> unknown_to_point;
  std::vector<long> point_to_unknown;
};

Numbering number_unknowns(const Grid& g) {
  Numbering num;
  num.point_to_unknown.assign(g.size(), -1);
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!g.on_boundary(p)) {
      num.point_to_unknown[p] = static_cast<long>(num.unknown_to_point.size());
      num.unknown_to_point.push_back(p);
    }
  }
  return num;
}

Eigen::SparseMatrix<Complex, Eigen::RowMajor> build_matrix(const CoefficientSet& k,
                                                           const Numbering& num) {
  std::vector<Eigen::Triplet<Complex>> trip;
  const int n = k.grid().dim();
  trip.reserve(num.unknown_to_point.size() * (n == 2 ? 13 : 31));
  for (std::size_t row = 0; row < num.unknown_to_point.size(); ++row) {
    const std::size_t p = num.unknown_to_point[row];
    stencil_impl(k, p, [&](std::size_t q, Complex w) {
      const long col = num.point_to_unknown[q];
      if (col >= 0) trip.emplace_back(static_cast<int>(row), static_cast<int>(col), w);
    });
  }
  const auto dim = static_cast<Eigen::Index>(num.unknown_to_point.size());
  Eigen::SparseMatrix<Complex, Eigen::RowMajor> A(dim, dim);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

Eigen::VectorXcd build_rhs(const CoefficientSet& k, const Numbering& num,
                           const BoundaryTrace& f, const ScalarField* source) {
  Eigen::VectorXcd rhs(static_cast<Eigen::Index>(num.unknown_to_point.size()));
  for (std::size_t row = 0; row < num.unknown_to_point.size(); ++row) {
    const std::size_t p = num.unknown_to_point[row];
    Complex r = source ? (*source)(p) : Complex{};
    stencil_impl(k, p, [&](std::size_t q, Complex w) {
      if (num.point_to_unknown[q] < 0) r -= w * f.values(q);
    });
    rhs[static_cast<Eigen::Index>(row)] = r;
  }
  return rhs;
}

double relative_system_residual(const Eigen::SparseMatrix<Complex, Eigen::RowMajor>& A,
                                const Eigen::VectorXcd& x, const Eigen::VectorXcd& b) {
  if (A.rows() == 0) return 0.0;
  const Eigen::VectorXcd r = A * x - b;
  double row_norm = 0.0;
  for (Eigen::Index i = 0; i < A.outerSize(); ++i) {
    double s = 0.0;
    for (Eigen::SparseMatrix<Complex, Eigen::RowMajor>::InnerIterator it(A, i); it; ++it) {
      s += std::abs(it.value());
    }
    row_norm = std::max(row_norm, s);
  }
  const double scale = row_norm * x.cwiseAbs().maxCoeff() + b.cwiseAbs().maxCoeff();
  const double rmax = r.cwiseAbs().maxCoeff();
  if (!std::isfinite(rmax)) return std::numeric_limits<double>::infinity();
  return scale > 0.0 ? rmax / scale : rmax;
}

void check_same_grid(const Grid& g, const Grid& other, const char* what) {
  if (!(g == other)) throw AssemblyError(std::string(what) + " lives on a different grid");
}

}  // namespace

CoefficientSet CoefficientSet::identity(const Grid& grid, double scale) {
  CoefficientSet k{SymTensorField(grid), VectorField(grid), ScalarField(grid)};
  for (std::size_t p = 0; p < grid.size(); ++p) {
    for (int a = 0; a < grid.dim(); ++a) k.a(p, a, a) = scale;
  }
  return k;
}

void validate(const CoefficientSet& k) {
  const Grid& g = k.grid();
  check_same_grid(g, k.b.grid(), "b");
  check_same_grid(g, k.c.grid(), "c");
  const int n = g.dim();
  for (std::size_t p = 0; p < g.size(); ++p) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    double scale = 0.0;
    double imag = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        m(i, j) = k.a(p, i, j).real();
        scale = std::max(scale, std::abs(k.a(p, i, j)));
        imag = std::max(imag, std::abs(k.a(p, i, j).imag()));
      }
    }
    if (!std::isfinite(scale) || imag > 1e-12 * scale) {
      throw AssemblyError("coefficient a is not real at " + describe_point(g, p));
    }
    // Unused trailing block of m stays identity, so its eigenvalues are 1.
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(m, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) {
      throw AssemblyError("coefficient a is not positive-definite at " + describe_point(g, p) +
                          " (smallest eigenvalue " +
                          std::to_string(eig.eigenvalues().minCoeff()) + ")");
    }
  }
}

void for_each_stencil(const CoefficientSet& coeffs, std::size_t p,
                      const std::function<void(std::size_t, Complex)>& visit) {
  stencil_impl(coeffs, p, visit);
}

LinearSystem assemble(const CoefficientSet& coeffs, const BoundaryTrace& f,
                      const ScalarField* source) {
  validate(coeffs);
  check_same_grid(coeffs.grid(), f.values.grid(), "boundary trace");
  if (source) check_same_grid(coeffs.grid(), source->grid(), "source");
  Numbering num = number_unknowns(coeffs.grid());
  LinearSystem sys;
  sys.matrix = build_matrix(coeffs, num);
  sys.rhs = build_rhs(coeffs, num, f, source);
  sys.unknown_to_point = std::move(num.unknown_to_point);
  sys.point_to_unknown = std::move(num.point_to_unknown);
  return sys;
}

constexpr double kSingularCondition = 1e13;

struct DirichletSolver::Impl {
  CoefficientSet coeffs;
  SolverSettings settings;
  Numbering num;
  Eigen::SparseMatrix<Complex, Eigen::RowMajor> matrix;
  bool direct = true;
  Eigen::SparseLU<Eigen::SparseMatrix<Complex>, Eigen::COLAMDOrdering<int>> lu;
  Eigen::BiCGSTAB<Eigen::SparseMatrix<Complex, Eigen::RowMajor>,
                  Eigen::DiagonalPreconditioner<Complex>>
      krylov;
};

DirichletSolver::DirichletSolver(const CoefficientSet& coeffs, SolverSettings settings)
    : impl_(std::make_unique<Impl>()) {
  validate(coeffs);
  Impl& s = *impl_;
  s.coeffs = coeffs;
  s.settings = settings;
  s.num = number_unknowns(coeffs.grid());
  s.matrix = build_matrix(coeffs, s.num);
  s.direct = settings.method == SolverMethod::direct ||
             (settings.method == SolverMethod::automatic &&
              coeffs.grid().size() <= settings.direct_limit);
  if (s.direct) {
    Eigen::SparseMatrix<Complex> col_major = s.matrix;
    s.lu.analyzePattern(col_major);
    s.lu.factorize(col_major);
    if (s.lu.info() != Eigen::Success) {
      throw SolverError("discrete operator is singular (sparse LU: " + s.lu.lastErrorMessage() +
                            "); c may violate uniqueness of the Dirichlet problem",
                        std::numeric_limits<double>::infinity());
    }
    // LU of an operator that is singular only up to rounding succeeds with a
    // tiny pivot. One probe solve gives a lower bound on the condition number.
    const Eigen::Index m = s.matrix.rows();
    Eigen::VectorXcd probe(m);
    for (Eigen::Index k = 0; k < m; ++k) probe[k] = 1.0 + 0.5 * std::sin(0.7 * k);
    const Eigen::VectorXcd y = s.lu.solve(probe);
    double norm_a = 0.0;
    for (Eigen::Index r = 0; r < m; ++r) {
      double row = 0.0;
      for (decltype(s.matrix)::InnerIterator it(s.matrix, r); it; ++it) row += std::abs(it.value());
      norm_a = std::max(norm_a, row);
    }
    const double kappa = norm_a * y.cwiseAbs().maxCoeff() / probe.cwiseAbs().maxCoeff();
    if (!(kappa < kSingularCondition)) {
      throw SolverError("discrete operator is numerically singular (condition >= " +
                            std::to_string(kappa) +
                            "); c may violate uniqueness of the Dirichlet problem",
                        kappa);
    }
  } else {
    s.krylov.setTolerance(settings.tolerance);
    s.krylov.setMaxIterations(settings.max_iterations);
    s.krylov.compute(s.matrix);
    if (s.krylov.info() != Eigen::Success) {
      throw SolverError("preconditioner setup failed", std::numeric_limits<double>::infinity());
    }
  }
}

DirichletSolver::~DirichletSolver() = default;
DirichletSolver::DirichletSolver(DirichletSolver&&) noexcept = default;
DirichletSolver& DirichletSolver::operator=(DirichletSolver&&) noexcept = default;

ScalarField DirichletSolver::solve(const BoundaryTrace& f, const ScalarField* source) const {
  const Impl& s = *impl_;
  check_same_grid(s.coeffs.grid(), f.values.grid(), "boundary trace");
  if (source) check_same_grid(s.coeffs.grid(), source->grid(), "source");
  const Eigen::VectorXcd rhs = build_rhs(s.coeffs, s.num, f, source);
  Eigen::VectorXcd x;
  if (s.direct) {
    x = s.lu.solve(rhs);
  } else {
    x = s.krylov.solve(rhs);
    if (s.krylov.info() != Eigen::Success) {
      throw SolverError("BiCGSTAB did not converge after " +
                            std::to_string(s.krylov.iterations()) + " iterations",
                        s.krylov.error());
    }
  }
  const double res = relative_system_residual(s.matrix, x, rhs);
  if (!(res <= s.settings.residual_gate)) {
    throw SolverError("solve residual " + std::to_string(res) + " exceeds gate; the operator is "
                      "singular or ill-conditioned",
                      res);
  }
  ScalarField u(s.coeffs.grid());
  const Grid& g = s.coeffs.grid();
  for (std::size_t p = 0; p < g.size(); ++p) {
    const long k = s.num.point_to_unknown[p];
    u(p) = k >= 0 ? x[k] : f.values(p);
  }
  return u;
}

ScalarField solve_dirichlet(const CoefficientSet& coeffs, const BoundaryTrace& f,
                            const SolverSettings& settings, const ScalarField* source) {
  return DirichletSolver(coeffs, settings).solve(f, source);
}

double residual(const CoefficientSet& coeffs, const ScalarField& u, const BoundaryTrace& f,
                const ScalarField* source) {
  const Grid& g = coeffs.grid();
  double rmax = 0.0;
  double scale = 0.0;
  double bmis = 0.0;
  double fmax = 0.0;
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (g.on_boundary(p)) {
      bmis = std::max(bmis, std::abs(u(p) - f.values(p)));
      fmax = std::max(fmax, std::abs(f.values(p)));
      continue;
    }
    Complex r = source ? -(*source)(p) : Complex{};
    double sc = source ? std::abs((*source)(p)) : 0.0;
    stencil_impl(coeffs, p, [&](std::size_t q, Complex w) {
      r += w * u(q);
      sc += std::abs(w) * std::abs(u(q));
    });
    rmax = std::max(rmax, std::abs(r));
    scale = std::max(scale, sc);
  }
  const double interior = scale > 0.0 ? rmax / scale : rmax;
  const double boundary = fmax > 0.0 ? bmis / fmax : bmis;
  return interior + boundary;
}

ScalarField apply_operator(const CoefficientSet& coeffs, const ScalarField& u) {
  const Grid& g = coeffs.grid();
  ScalarField out(g);
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (g.on_boundary(p)) continue;
    Complex r{};
    stencil_impl(coeffs, p, [&](std::size_t q, Complex w) { r += w * u(q); });
    out(p) = r;
  }
  return out;
}

}  // namespace hyrec
