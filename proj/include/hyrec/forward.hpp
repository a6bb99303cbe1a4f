#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "hyrec/grid.hpp"

namespace hyrec {

/// Coefficients of  div(a grad u) + b . grad u + c u = s  on one grid.
/// a is real symmetric positive-definite; b and c may be complex.
struct CoefficientSet {
  SymTensorField a;
  VectorField b;
  ScalarField c;

  const Grid& grid() const { return a.grid(); }

  /// a = scale * I, b = 0, c = 0.
  static CoefficientSet identity(const Grid& grid, double scale = 1.0);
};

/// Dirichlet data. Values are stored on the full grid; only boundary points
/// are read. The expression text is kept for manifests.
struct BoundaryTrace {
  ScalarField values;
  std::string expression;
};

enum class SolverMethod { automatic, direct, iterative };

struct SolverSettings {
  SolverMethod method = SolverMethod::automatic;
  double tolerance = 1e-12;
  int max_iterations = 20000;
  /// Accepted relative residual of the discrete system after a solve.
  double residual_gate = 1e-10;
  /// Grids with at most this many points use sparse LU under `automatic`.
  std::size_t direct_limit = 257 * 257;
};

/// Sparse operator over interior unknowns with Dirichlet data folded into
/// the right-hand side.
struct LinearSystem {
  Eigen::SparseMatrix<Complex, Eigen::RowMajor> matrix;
  Eigen::VectorXcd rhs;
  std::vector<std::size_t> unknown_to_point;
  std::vector<long> point_to_unknown;  // -1 on the boundary
};

/// Throws AssemblyError naming the first point where a is not real SPD or
/// where the fields do not share a grid.
void validate(const CoefficientSet& coeffs);

/// Visits the discrete stencil of the operator at an interior point p:
/// flux-form div(a grad .) with arithmetic face averages of the diagonal of
/// a, centered cross terms, centered b . grad and pointwise c.
void for_each_stencil(const CoefficientSet& coeffs, std::size_t p,
                      const std::function<void(std::size_t, Complex)>& visit);

LinearSystem assemble(const CoefficientSet& coeffs, const BoundaryTrace& f,
                      const ScalarField* source = nullptr);

/// Factorizes the operator once; each solve() then costs one back-substitution
/// (direct) or one Krylov run (iterative).
class DirichletSolver {
 public:
  DirichletSolver(const CoefficientSet& coeffs, SolverSettings settings = {});
  ~DirichletSolver();
  DirichletSolver(DirichletSolver&&) noexcept;
  DirichletSolver& operator=(DirichletSolver&&) noexcept;

  /// u on the full grid with u = f on the boundary. Throws SolverError if the
  /// operator is singular or the residual gate fails.
  ScalarField solve(const BoundaryTrace& f, const ScalarField* source = nullptr) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

ScalarField solve_dirichlet(const CoefficientSet& coeffs, const BoundaryTrace& f,
                            const SolverSettings& settings = {},
                            const ScalarField* source = nullptr);

/// Relative interior residual of the discrete equation plus the relative
/// boundary mismatch |u - f|.
double residual(const CoefficientSet& coeffs, const ScalarField& u, const BoundaryTrace& f,
                const ScalarField* source = nullptr);

/// The discrete operator applied to u at points with margin >= 1; boundary
/// points are left at zero.
ScalarField apply_operator(const CoefficientSet& coeffs, const ScalarField& u);

}  // namespace hyrec
