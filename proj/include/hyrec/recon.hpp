#pragma once

#include <vector>

#include "hyrec/synthesis.hpp"

namespace hyrec {

// Recovery of the second-order operator  alpha : hess(v) + beta . grad(v) = 0
// satisfied by the ratio fields v_j = H_{j+1} / H_1, up to one scalar factor.

struct ReconThresholds {
  /// min |H_1| must exceed this fraction of max |H_1|.
  double h1 = 1e-8;
  /// |det Gram| must exceed this times (max |grad v|^2)^n.
  double gram = 1e-6;
  /// Relative singular-value gap below which the null space is not 1-D.
  double nullspace_gap = 1e-6;
};

struct RatioSet {
  std::vector<ScalarField> v;
  std::vector<VectorField> grad;
  std::vector<SymTensorField> hess;
  /// Derivatives are trusted at margin >= 1.
  InteriorMask mask;
  /// max over boundary points of |v_j - f_{j+1}/f_1|, relative to |v_j|.
  double boundary_mismatch = 0.0;

  int count() const { return static_cast<int>(v.size()); }
};

struct GramData {
  SymTensorField gram;     // H_ij = grad v_i . grad v_j, i, j < n
  SymTensorField inverse;  // H^{ij}
  ScalarField det;
  double threshold = 0.0;  // delta_gram actually applied
};

struct ThetaMData {
  /// theta[m][j] is the per-point coefficient of grad v_j in null combination m.
  std::vector<std::vector<ScalarField>> theta;
  std::vector<SymTensorField> m;
  double max_residual = 0.0;  // relative null-combination residual
};

struct AlphaBeta {
  SymTensorField alpha;  // det = 1, real positive trace
  VectorField beta;      // same gauge as alpha
  ScalarField quality;   // relative singular-value gap
  std::vector<char> valid;
  InteriorMask mask;     // margin-1 mask restricted to valid points
};

/// v_j = H_{j+1} / H_1 with derivatives. Throws DegeneracyError listing the
/// points where |H_1| falls below threshold.
RatioSet ratios(const MeasurementSet& ms, double h1_threshold = 1e-8);

/// Throws DegeneracyError listing interior points with |det H| < delta.
GramData gram(const RatioSet& rs, double relative_threshold = 1e-6);

/// -H^{ij} lap(v_j) grad(v_i) at interior points (NaN elsewhere). Equals
/// beta / alpha of the scalar-a operator: a^{-1} b + grad ln(a u_1^2).
VectorField reconstruct_ab_scalar(const RatioSet& rs, const GramData& gd);

/// theta^m_j = -H^{jk} grad v_{n+m} . grad v_k for j < n, 1 for j = n+m,
/// 0 otherwise (m zero-based). Throws Error if the null combination residual
/// exceeds 1e-10 relative.
std::vector<ScalarField> theta_coefficients(const RatioSet& rs, const GramData& gd, int m,
                                            double* max_residual = nullptr);

/// M^m = sum_j theta^m_j hess(v_j).
SymTensorField m_matrix(const RatioSet& rs, const std::vector<ScalarField>& theta);

/// All J-1-n null combinations and their M matrices.
ThetaMData build_theta_m(const RatioSet& rs, const GramData& gd);

/// Per-point constraint operator rows: M^m flattened with sqrt(2)-weighted
/// off-diagonals so the Euclidean product is the trace product.
void flatten_sym(std::span<const Complex> sym, int dim, std::span<Complex> out);
void unflatten_sym(std::span<const Complex> flat, int dim, std::span<Complex> out);

struct NullVector {
  std::vector<Complex> alpha;  // symmetric storage, det 1, real positive trace
  double quality = 0.0;
  bool valid = false;
};

/// 1-D null space of {A : A . M^m = 0} for one point, normalized.
NullVector alpha_at_point(const std::vector<std::vector<Complex>>& m_rows, int dim,
                          double gap_threshold = 1e-6);

/// Pointwise alpha_from_nullspace over the margin-1 interior. beta is left
/// zero; see beta_from_alpha.
AlphaBeta alpha_from_nullspace(const std::vector<SymTensorField>& m, double gap_threshold = 1e-6);

/// beta = -H^{ij} (alpha : hess v_j) grad v_i over the Gram basis.
VectorField beta_from_alpha(const RatioSet& rs, const GramData& gd, const SymTensorField& alpha,
                            std::span<const char> valid);

enum class AModel { scalar, tensor };

struct Reconstruction {
  RatioSet ratios;
  GramData gram;
  ThetaMData theta_m;  // empty in scalar mode
  AlphaBeta ab;
};

/// Full pipeline from the functionals alone. Tensor mode needs J >= n(n+3)/2,
/// scalar mode J >= n+1; fewer throws MeasurementCountError.
Reconstruction reconstruct(const MeasurementSet& ms, AModel model,
                           const ReconThresholds& thresholds = {});

/// Required functional count for the mode.
int required_measurements(int dim, AModel model);

}  // namespace hyrec
