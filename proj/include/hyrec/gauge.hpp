#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hyrec/recon.hpp"

namespace hyrec {

// Gauge-invariant content of the functionals and its modality-specific
// resolution into (a, b, c, d).
//
// With a = B^2 ahat, det ahat = 1, rho = B / d and v = B u_1 = H_1 rho:
//   ahat
//   G = b / B^2 + 2 ahat grad ln rho
//   q = (div(ahat grad v) + (b / B^2) . grad v) / v
//     = div(ahat grad B) / B + (b / B^2) . grad B / B - c / B^2
// Reconstructed quantities live on a margin-2 interior box (G needs a
// derivative of alpha); resolved coefficients on a margin-3 box. Integration
// constants come from ground-truth values on the ring of points at margin 2.

inline constexpr int kTripleMargin = 2;
inline constexpr int kResolvedMargin = 3;

struct DimensionAudit {
  int dim = 2;
  int triple_unknowns() const { return dim * (dim + 3) / 2; }
  int coefficient_unknowns() const { return triple_unknowns() + 2; }
  int gauge_parameters() const { return coefficient_unknowns() - triple_unknowns(); }
  std::string statement() const;
};

struct InvariantTriple {
  SymTensorField ahat;
  VectorField g;
  /// Filled by the resolvers once rho = B/d is known.
  std::optional<ScalarField> q;
  InteriorMask mask;  // margin 2, restricted to valid points
  double masked_fraction = 0.0;
};

struct GaugeReport {
  ModalityKind modality = ModalityKind::elastography;
  std::string residual_gauge;
  std::string anchoring;
  double curl_residual = 0.0;
  double constraint_residual = 0.0;
  double masked_fraction = 0.0;
  DimensionAudit audit;
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const GaugeReport& r);

struct ResolvedCoefficients {
  ModalityKind modality = ModalityKind::elastography;
  SymTensorField a;
  VectorField b;
  ScalarField c;
  ScalarField d;
  ScalarField big_b;  // B
  ScalarField rho;    // B / d
  VectorField ainv_b;
  std::optional<ScalarField> gamma;
  /// QTAT: Gamma Im(c) / B^2, and per-point failure flags of the Gamma division.
  std::optional<ScalarField> absorption_invariant;
  std::vector<char> gamma_failed;
  /// The q slot actually used.
  ScalarField q;
  InteriorMask mask;  // margin 3, valid points
  GaugeReport report;
};

/// Values read only on the margin-2 ring; anything else in the fields is
/// ignored.
struct BoundaryAnchors {
  std::optional<ScalarField> big_b;  // B
  std::optional<ScalarField> rho;    // B / d
};

/// ahat = alpha, G = beta - div(alpha) - 2 alpha grad H_1 / H_1.
/// Throws DegeneracyError if more than half of the margin-2 box is masked.
InvariantTriple invariant_triple(const AlphaBeta& ab, const ScalarField& h1);

/// Solves lap(psi) = div(w) + extra on the margin-2 box with psi taken from
/// `anchor` on its ring; returns psi (NaN outside the box) and the relative
/// curl of w.
struct Integration {
  ScalarField psi;
  double curl_residual = 0.0;
};
Integration integrate_gradient(const VectorField& w, const ScalarField& anchor,
                               const ScalarField* extra = nullptr,
                               const SolverSettings& settings = {});

/// q = (div(ahat grad v) + drift . grad v) / v with v = H_1 rho, at margin-3
/// points. drift = b / B^2 (zero when null).
ScalarField q_from_rho(const InvariantTriple& tri, const ScalarField& h1, const ScalarField& rho,
                       const VectorField* drift = nullptr);

struct ResolveOptions {
  SolverSettings solver;
  /// Relative curl of 1/2 ahat^{-1} G above which a warning is raised.
  double curl_tolerance = 5e-2;
  double constraint_tolerance = 5e-2;
  /// QTAT: |Im q| below this fraction of max |Im q| flags the point.
  double im_q_threshold = 1e-6;
};

/// d = 1, b = 0. Needs anchors.big_b.
ResolvedCoefficients resolve_elastography(const InvariantTriple& tri, const ScalarField& h1,
                                          const BoundaryAnchors& anchors,
                                          const ResolveOptions& opt = {});

/// b = 0, d = gamma c with gamma known. Needs anchors.rho and anchors.big_b.
ResolvedCoefficients resolve_qpat(const InvariantTriple& tri, const ScalarField& h1,
                                  const ScalarField& gamma, const BoundaryAnchors& anchors,
                                  const ResolveOptions& opt = {});

/// b = 0, d = gamma Im(c) conj(u_1), a real. Recovers gamma; (B, c) are
/// returned as one representative of the remaining gauge orbit (B harmonic
/// for ahat with the anchor values). Needs anchors.rho and anchors.big_b.
ResolvedCoefficients resolve_qtat(const InvariantTriple& tri, const ScalarField& h1,
                                  const BoundaryAnchors& anchors, bool a_real = true,
                                  const ResolveOptions& opt = {});

/// Gamma = -H_1 / (|v|^2 Im q) with failure flags; exposed for direct use.
struct GammaDivision {
  ScalarField gamma;
  ScalarField absorption_invariant;
  std::vector<char> failed;
};
GammaDivision qtat_gamma(const ScalarField& h1, const ScalarField& v, const ScalarField& q,
                         const InteriorMask& mask, double threshold);

struct BConstraint {
  enum class Kind { divergence, component };
  Kind kind = Kind::divergence;
  int axis = 0;
  ScalarField value;  // div(a^{-1} b) or component `axis` of a^{-1} b
};

/// One scalar condition on a^{-1} b. Needs anchors.rho; the representative
/// of the residual (B, c, d) gauge uses `known_d` when given, otherwise B
/// harmonic for ahat with anchors.big_b (which is then required).
ResolvedCoefficients resolve_generic_b(const InvariantTriple& tri, const ScalarField& h1,
                                       const BConstraint& constraint,
                                       const BoundaryAnchors& anchors,
                                       const std::optional<ScalarField>& known_d = std::nullopt,
                                       const ResolveOptions& opt = {});

/// Triple computed directly from coefficients (no reconstruction).
struct CoefficientTriple {
  SymTensorField ahat;
  VectorField g;
  ScalarField q;
  ScalarField big_b;
};
CoefficientTriple triple_from_coefficients(const CoefficientSet& k, const ScalarField& d);

struct EquivalenceReport {
  bool equivalent = false;
  double ahat_residual = 0.0;
  double g_residual = 0.0;
  double q_residual = 0.0;
  DimensionAudit audit;
};

EquivalenceReport gauge_equivalent(const CoefficientSet& k1, const ScalarField& d1,
                                   const CoefficientSet& k2, const ScalarField& d2, double tol);

/// ahat = a / det(a)^{1/n}, B = det(a)^{1/(2n)}.
void split_amplitude(const SymTensorField& a, SymTensorField& ahat, ScalarField& big_b);

}  // namespace hyrec
