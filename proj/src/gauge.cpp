#include "hyrec/gauge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hyrec/calculus.hpp"

namespace hyrec {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
using SmallMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

bool finite(Complex z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

SmallMatrix sym_matrix(std::span<const Complex> s, int n) {
  SmallMatrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = s[sym_index(n, i, j)];
  return m;
}

/// Coefficients (ahat, drift, 0) restricted to the margin-2 box; invalid
/// entries become identity / zero (they never enter a trusted value).
CoefficientSet box_operator(const SymTensorField& ahat, const VectorField* drift) {
  const SymTensorField a_sub = restrict_to(ahat, kTripleMargin);
  const Grid& sg = a_sub.grid();
  const int n = sg.dim();
  CoefficientSet k = CoefficientSet::identity(sg);
  for (std::size_t p = 0; p < sg.size(); ++p) {
    bool ok = true;
    for (const Complex& z : a_sub.at(p)) ok = ok && finite(z);
    if (!ok) continue;
    for (int c = 0; c < sym_size(n); ++c) k.a(p, c) = Complex(a_sub(p, c).real(), 0.0);
  }
  if (drift) {
    const VectorField b_sub = restrict_to(*drift, kTripleMargin);
    for (std::size_t p = 0; p < sg.size(); ++p) {
      for (int c = 0; c < n; ++c) k.b(p, c) = finite(b_sub(p, c)) ? b_sub(p, c) : Complex{};
    }
  }
  return k;
}

/// Operator (ahat, drift) applied to u; values trusted at margin >= 3.
ScalarField apply_on_box(const SymTensorField& ahat, const VectorField* drift,
                         const ScalarField& u) {
  const CoefficientSet k = box_operator(ahat, drift);
  ScalarField u_sub = restrict_to(u, kTripleMargin);
  for (Complex& z : u_sub.data())
    if (!finite(z)) z = 0.0;
  return embed(apply_operator(k, u_sub), u.grid(), kTripleMargin, Complex(kNaN, 0.0));
}

ScalarField log_field(const ScalarField& f) {
  ScalarField out(f.grid());
  for (std::size_t p = 0; p < f.size(); ++p) out(p) = std::log(f(p));
  return out;
}

ScalarField exp_field(const ScalarField& f) {
  ScalarField out(f.grid());
  for (std::size_t p = 0; p < f.size(); ++p) out(p) = std::exp(f(p));
  return out;
}

/// 1/2 ahat^{-1} G on the triple mask, NaN elsewhere.
VectorField half_ahat_inv_g(const InvariantTriple& tri, double factor = 0.5) {
  const Grid& g = tri.g.grid();
  const int n = g.dim();
  VectorField w(g, kNaN);
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!tri.mask[p]) continue;
    const SmallMatrix inv = sym_matrix(tri.ahat.at(p), n).inverse();
    for (int i = 0; i < n; ++i) {
      Complex acc{};
      for (int j = 0; j < n; ++j) acc += inv(i, j) * tri.g(p, j);
      w(p, i) = factor * acc;
    }
  }
  return w;
}

/// Solves div(ahat grad B) = 0 on the margin-2 box with B from the anchor.
ScalarField ahat_harmonic(const InvariantTriple& tri, const ScalarField& anchor,
                          const SolverSettings& settings) {
  const CoefficientSet k = box_operator(tri.ahat, nullptr);
  const BoundaryTrace trace{restrict_to(anchor, kTripleMargin), "anchor"};
  const ScalarField sub = solve_dirichlet(k, trace, settings);
  return embed(sub, anchor.grid(), kTripleMargin, Complex(kNaN, 0.0));
}

InteriorMask resolved_mask(const InvariantTriple& tri) {
  return erode(tri.mask);
}

double masked_fraction(const InteriorMask& valid) {
  const InteriorMask all = interior_mask(valid.grid(), valid.margin());
  const double total = static_cast<double>(all.count());
  return total > 0.0 ? 1.0 - static_cast<double>(valid.count()) / total : 1.0;
}

/// Fills a, b, d, ainv_b, c (from the q slot) given B, rho and drift = b/B^2.
void finish(const InvariantTriple& tri, const ScalarField& h1, const ScalarField& big_b,
            const ScalarField& rho, const VectorField& drift, ResolvedCoefficients& out) {
  const Grid& g = tri.ahat.grid();
  const int n = g.dim();
  out.mask = resolved_mask(tri);
  out.q = q_from_rho(tri, h1, rho, &drift);
  const ScalarField lb = apply_on_box(tri.ahat, &drift, big_b);
  out.big_b = big_b;
  out.rho = rho;
  out.a = SymTensorField(g, kNaN);
  out.b = VectorField(g, kNaN);
  out.ainv_b = VectorField(g, kNaN);
  out.c = ScalarField(g, kNaN);
  out.d = ScalarField(g, kNaN);
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!tri.mask[p]) continue;
    const Complex b2 = big_b(p) * big_b(p);
    for (int c = 0; c < sym_size(n); ++c) out.a(p, c) = b2 * tri.ahat(p, c);
    out.d(p) = big_b(p) / rho(p);
    if (!out.mask[p]) continue;
    const SmallMatrix inv = sym_matrix(tri.ahat.at(p), n).inverse();
    for (int i = 0; i < n; ++i) {
      out.b(p, i) = b2 * drift(p, i);
      Complex acc{};
      for (int j = 0; j < n; ++j) acc += inv(i, j) * drift(p, j);
      out.ainv_b(p, i) = acc;
    }
    out.c(p) = big_b(p) * lb(p) - b2 * out.q(p);
  }
}

const ScalarField& need(const std::optional<ScalarField>& f, const char* what) {
  if (!f) throw ConfigError(std::string("resolver needs boundary anchor values for ") + what);
  return *f;
}

void check_curl(ResolvedCoefficients& out, double curl, double tol) {
  out.report.curl_residual = curl;
  if (curl > tol) {
    std::ostringstream os;
    os << "transport field is not a gradient (relative curl " << curl << " > " << tol
       << "); data may not come from the assumed model class";
    out.report.warnings.push_back(os.str());
  }
}

void base_report(ResolvedCoefficients& out, const InvariantTriple& tri, ModalityKind kind) {
  out.modality = kind;
  out.report.modality = kind;
  out.report.audit.dim = tri.ahat.grid().dim();
  out.report.anchoring =
      "integration constants fixed by ground-truth coefficient values on the ring of points two "
      "grid steps inside the boundary";
}

}  // namespace

std::string DimensionAudit::statement() const {
  std::ostringstream os;
  os << "reconstructed invariants (ahat, G, q): " << triple_unknowns() << " = n(n+3)/2 with n = "
     << dim << "; unknown coefficients (a, b, c, d): " << coefficient_unknowns()
     << " = n(n+3)/2 + 2; " << gauge_parameters()
     << " gauge parameters remain undetermined without modality information";
  return os.str();
}

nlohmann::json to_json(const GaugeReport& r) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["modality"] = modality_name(r.modality);
  j["residual_gauge"] = r.residual_gauge;
  j["anchoring"] = r.anchoring;
  j["curl_residual"] = r.curl_residual;
  j["constraint_residual"] = r.constraint_residual;
  j["masked_fraction"] = r.masked_fraction;
  j["dimension_audit"] = {{"n", r.audit.dim},
                          {"reconstructed_quantities", r.audit.triple_unknowns()},
                          {"coefficient_unknowns", r.audit.coefficient_unknowns()},
                          {"gauge_parameters", r.audit.gauge_parameters()},
                          {"statement", r.audit.statement()}};
  j["warnings"] = r.warnings;
  return j;
}

void split_amplitude(const SymTensorField& a, SymTensorField& ahat, ScalarField& big_b) {
  const Grid& g = a.grid();
  const int n = g.dim();
  ahat = SymTensorField(g);
  big_b = ScalarField(g);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const Complex det = sym_matrix(a.at(p), n).determinant();
    const Complex root = std::pow(det, 1.0 / n);  // B^2
    big_b(p) = std::sqrt(root);
    for (int c = 0; c < sym_size(n); ++c) ahat(p, c) = a(p, c) / root;
  }
}

InvariantTriple invariant_triple(const AlphaBeta& ab, const ScalarField& h1) {
  const Grid& g = ab.alpha.grid();
  const int n = g.dim();
  InvariantTriple tri;
  tri.ahat = ab.alpha;
  tri.g = VectorField(g, kNaN);

  SymTensorField alpha = ab.alpha;
  for (Complex& z : alpha.data())
    if (!finite(z)) z = 0.0;
  const VectorField div_alpha = divergence(alpha);
  const VectorField grad_h1 = gradient(h1);

  tri.mask = erode(ab.mask);
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!tri.mask[p]) continue;
    for (int i = 0; i < n; ++i) {
      Complex drift{};
      for (int j = 0; j < n; ++j) drift += ab.alpha(p, i, j) * grad_h1(p, j);
      tri.g(p, i) = ab.beta(p, i) - div_alpha(p, i) - 2.0 * drift / h1(p);
    }
  }
  tri.masked_fraction = masked_fraction(tri.mask);
  if (tri.masked_fraction > 0.5) {
    throw DegeneracyError("reconstruction aborted: " +
                          std::to_string(100.0 * tri.masked_fraction) +
                          "% of interior points are degenerate");
  }
  return tri;
}

Integration integrate_gradient(const VectorField& w, const ScalarField& anchor,
                               const ScalarField* extra, const SolverSettings& settings) {
  const Grid& g = w.grid();
  const int n = g.dim();
  VectorField w_sub = restrict_to(w, kTripleMargin);
  for (Complex& z : w_sub.data())
    if (!finite(z)) z = 0.0;
  const Grid& sg = w_sub.grid();
  ScalarField src = divergence(w_sub);
  if (extra) {
    const ScalarField e_sub = restrict_to(*extra, kTripleMargin);
    for (std::size_t p = 0; p < sg.size(); ++p) src(p) += finite(e_sub(p)) ? e_sub(p) : Complex{};
  }
  const BoundaryTrace trace{restrict_to(anchor, kTripleMargin), "anchor"};
  const ScalarField psi_sub =
      solve_dirichlet(CoefficientSet::identity(sg), trace, settings, &src);

  Integration out;
  out.psi = embed(psi_sub, g, kTripleMargin, Complex(kNaN, 0.0));

  std::vector<std::vector<ScalarField>> dw(n);
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l) dw[k].push_back(partial(component(w_sub, l), k));
  double curl = 0.0;
  double scale = 0.0;
  for (std::size_t p = 0; p < sg.size(); ++p) {
    if (sg.on_boundary(p)) continue;
    for (int k = 0; k < n; ++k) {
      for (int l = 0; l < n; ++l) {
        scale = std::max(scale, std::abs(dw[k][l](p)));
        if (l > k) curl = std::max(curl, std::abs(dw[k][l](p) - dw[l][k](p)));
      }
    }
  }
  // Relative to the derivative scale of w, absolute once that drops below 1
  // (a flat w would otherwise turn rounding noise into a large ratio).
  out.curl_residual = curl / std::max(scale, 1.0);
  return out;
}

ScalarField q_from_rho(const InvariantTriple& tri, const ScalarField& h1, const ScalarField& rho,
                       const VectorField* drift) {
  const Grid& g = h1.grid();
  ScalarField v(g);
  for (std::size_t p = 0; p < g.size(); ++p) v(p) = h1(p) * rho(p);
  const ScalarField lv = apply_on_box(tri.ahat, drift, v);
  ScalarField q(g, kNaN);
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (g.boundary_distance(p) >= kResolvedMargin) q(p) = lv(p) / v(p);
  }
  return q;
}

ResolvedCoefficients resolve_elastography(const InvariantTriple& tri, const ScalarField& h1,
                                          const BoundaryAnchors& anchors,
                                          const ResolveOptions& opt) {
  ResolvedCoefficients out;
  base_report(out, tri, ModalityKind::elastography);
  const ScalarField& b_anchor = need(anchors.big_b, "B");
  const Integration lnb =
      integrate_gradient(half_ahat_inv_g(tri), log_field(b_anchor), nullptr, opt.solver);
  check_curl(out, lnb.curl_residual, opt.curl_tolerance);
  const ScalarField big_b = exp_field(lnb.psi);
  const VectorField zero(h1.grid());
  finish(tri, h1, big_b, big_b, zero, out);
  out.report.residual_gauge =
      "none: with d = 1 and b = 0, B follows from a transport equation and (a, c) are unique";
  out.report.masked_fraction = masked_fraction(out.mask);
  return out;
}

ResolvedCoefficients resolve_qpat(const InvariantTriple& tri, const ScalarField& h1,
                                  const ScalarField& gamma, const BoundaryAnchors& anchors,
                                  const ResolveOptions& opt) {
  ResolvedCoefficients out;
  base_report(out, tri, ModalityKind::qpat);
  const Grid& g = h1.grid();
  const ScalarField& rho_anchor = need(anchors.rho, "B/d");
  const ScalarField& b_anchor = need(anchors.big_b, "B");

  const Integration lnrho =
      integrate_gradient(half_ahat_inv_g(tri), log_field(rho_anchor), nullptr, opt.solver);
  check_curl(out, lnrho.curl_residual, opt.curl_tolerance);
  const ScalarField rho = exp_field(lnrho.psi);
  const ScalarField q = q_from_rho(tri, h1, rho, nullptr);

  // div(ahat grad B) - q B = 1 / (gamma rho), from c = B / (gamma rho).
  CoefficientSet k = box_operator(tri.ahat, nullptr);
  const ScalarField q_sub = restrict_to(q, kTripleMargin);
  const ScalarField rho_sub = restrict_to(rho, kTripleMargin);
  const ScalarField gamma_sub = restrict_to(gamma, kTripleMargin);
  const Grid& sg = k.grid();
  ScalarField src(sg);
  for (std::size_t p = 0; p < sg.size(); ++p) {
    k.c(p) = finite(q_sub(p)) ? -q_sub(p) : Complex{};
    src(p) = 1.0 / (gamma_sub(p) * rho_sub(p));
  }
  ScalarField b_sub;
  try {
    b_sub = solve_dirichlet(k, {restrict_to(b_anchor, kTripleMargin), "anchor"}, opt.solver, &src);
  } catch (const SolverError& e) {
    throw ResolutionError(std::string("QPAT amplitude equation could not be solved: ") + e.what());
  }
  const ScalarField big_b = embed(b_sub, g, kTripleMargin, Complex(kNaN, 0.0));

  const VectorField zero(g);
  finish(tri, h1, big_b, rho, zero, out);
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!out.mask[p]) continue;
    if (!(big_b(p).real() > 0.0)) {
      const auto x = g.point(p);
      throw ResolutionError("recovered B is not positive at (" + std::to_string(x[0]) + ", " +
                            std::to_string(x[1]) + ")");
    }
    out.c(p) = big_b(p) / (gamma(p) * rho(p));
  }
  out.gamma = gamma;
  out.report.residual_gauge = "none: with b = 0 and Gamma known, (B, c) are unique";
  out.report.masked_fraction = masked_fraction(out.mask);
  return out;
}

GammaDivision qtat_gamma(const ScalarField& h1, const ScalarField& v, const ScalarField& q,
                         const InteriorMask& mask, double threshold) {
  const Grid& g = h1.grid();
  GammaDivision out{ScalarField(g, kNaN), ScalarField(g, kNaN), std::vector<char>(g.size(), 0)};
  double im_max = 0.0;
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (mask[p]) im_max = std::max(im_max, std::abs(q(p).imag()));
  }
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!mask[p]) continue;
    // H_1 = Gamma Im(c) |u_1|^2 and |v|^2 = B^2 |u_1|^2.
    const double k = h1(p).real() / std::norm(v(p));
    out.absorption_invariant(p) = k;
    // Im q = -Im(c) / B^2 for real B.
    const double im_q = q(p).imag();
    if (!(std::abs(im_q) > threshold * im_max)) {
      out.failed[p] = 1;
      continue;
    }
    out.gamma(p) = -k / im_q;
  }
  return out;
}

ResolvedCoefficients resolve_qtat(const InvariantTriple& tri, const ScalarField& h1,
                                  const BoundaryAnchors& anchors, bool a_real,
                                  const ResolveOptions& opt) {
  if (!a_real) throw ConfigError("QTAT recovery of Gamma requires a real-valued a");
  ResolvedCoefficients out;
  base_report(out, tri, ModalityKind::qtat);
  const Grid& g = h1.grid();
  const ScalarField& rho_anchor = need(anchors.rho, "B/d");
  const ScalarField& b_anchor = need(anchors.big_b, "B");

  const Integration lnrho =
      integrate_gradient(half_ahat_inv_g(tri), log_field(rho_anchor), nullptr, opt.solver);
  check_curl(out, lnrho.curl_residual, opt.curl_tolerance);
  const ScalarField rho = exp_field(lnrho.psi);

  const VectorField zero(g);
  const ScalarField big_b = ahat_harmonic(tri, b_anchor, opt.solver);
  finish(tri, h1, big_b, rho, zero, out);

  ScalarField v(g);
  for (std::size_t p = 0; p < g.size(); ++p) v(p) = h1(p) * rho(p);
  GammaDivision gd = qtat_gamma(h1, v, out.q, out.mask, opt.im_q_threshold);
  out.gamma = std::move(gd.gamma);
  out.absorption_invariant = std::move(gd.absorption_invariant);
  out.gamma_failed = std::move(gd.failed);
  const auto failures = std::count(out.gamma_failed.begin(), out.gamma_failed.end(), char{1});
  if (failures > 0) {
    out.report.warnings.push_back(std::to_string(failures) +
                                  " points with Im q ~ 0: Gamma undefined there");
  }
  out.report.residual_gauge =
      "Gamma unique (a real); (B, c) determined only up to transforms preserving "
      "(Gamma Im c / B^2, div(ahat grad B)/B - c/B^2); returned pair uses B solving "
      "div(ahat grad B) = 0 with the anchor values";
  out.report.masked_fraction = masked_fraction(out.mask);
  return out;
}

ResolvedCoefficients resolve_generic_b(const InvariantTriple& tri, const ScalarField& h1,
                                       const BConstraint& constraint,
                                       const BoundaryAnchors& anchors,
                                       const std::optional<ScalarField>& known_d,
                                       const ResolveOptions& opt) {
  ResolvedCoefficients out;
  base_report(out, tri, ModalityKind::generic);
  const Grid& g = h1.grid();
  const int n = g.dim();
  const ScalarField& rho_anchor = need(anchors.rho, "B/d");
  const ScalarField ln_anchor = log_field(rho_anchor);

  // Y = ahat^{-1} G = a^{-1} b + 2 grad ln rho.
  const VectorField y = half_ahat_inv_g(tri, 1.0);
  ScalarField psi(g, kNaN);

  if (constraint.kind == BConstraint::Kind::divergence) {
    VectorField w = y;
    for (Complex& z : w.data()) z *= 0.5;
    ScalarField extra(g);
    for (std::size_t p = 0; p < g.size(); ++p) extra(p) = -0.5 * constraint.value(p);
    const Integration it = integrate_gradient(w, ln_anchor, &extra, opt.solver);
    psi = it.psi;
  } else {
    const int ax = constraint.axis;
    if (ax < 0 || ax >= n) throw ConfigError("constraint axis out of range");
    const double h = g.spacing(ax);
    const std::size_t stride = g.stride(ax);
    const int last = g.shape(ax) - 1 - kTripleMargin;
    double mismatch = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p) {
      const auto m = g.multi_index(p);
      if (m[ax] != kTripleMargin || g.boundary_distance(p) < kTripleMargin) continue;
      auto slope = [&](std::size_t q) {
        const Complex s = 0.5 * (y(q, ax) - constraint.value(q));
        return finite(s) ? s : Complex{};
      };
      psi(p) = ln_anchor(p);
      std::size_t q = p;
      for (int k = kTripleMargin; k < last; ++k) {
        psi(q + stride) = psi(q) + 0.5 * h * (slope(q) + slope(q + stride));
        q += stride;
      }
      mismatch = std::max(mismatch, std::abs(psi(q) - ln_anchor(q)));
    }
    out.report.constraint_residual = mismatch;
    if (mismatch > opt.constraint_tolerance) {
      out.report.warnings.push_back("integrated ln(B/d) misses the far-face anchor by " +
                                    std::to_string(mismatch) +
                                    "; constraint inconsistent with data");
    }
  }

  const ScalarField rho = exp_field(psi);
  const VectorField grad_psi = gradient(psi);
  VectorField drift(g, kNaN);  // b / B^2 = ahat (Y - 2 grad psi)
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!tri.mask[p] || g.boundary_distance(p) < kResolvedMargin) continue;
    std::array<Complex, kMaxDim> ainvb{};
    for (int i = 0; i < n; ++i) ainvb[i] = y(p, i) - 2.0 * grad_psi(p, i);
    for (int i = 0; i < n; ++i) {
      Complex acc{};
      for (int j = 0; j < n; ++j) acc += tri.ahat(p, i, j) * ainvb[j];
      drift(p, i) = acc;
    }
  }

  ScalarField big_b(g, kNaN);
  if (known_d) {
    for (std::size_t p = 0; p < g.size(); ++p) big_b(p) = rho(p) * (*known_d)(p);
  } else {
    big_b = ahat_harmonic(tri, need(anchors.big_b, "B"), opt.solver);
  }
  finish(tri, h1, big_b, rho, drift, out);

  if (constraint.kind == BConstraint::Kind::divergence) {
    // div(a^{-1} b) of the result against the imposed value.
    VectorField ab = out.ainv_b;
    for (Complex& z : ab.data())
      if (!finite(z)) z = 0.0;
    const ScalarField div = divergence(ab);
    double res = 0.0;
    double scale = 0.0;
    const InteriorMask deep = erode(out.mask);
    for (std::size_t p = 0; p < g.size(); ++p) {
      if (!deep[p]) continue;
      res = std::max(res, std::abs(div(p) - constraint.value(p)));
      scale = std::max({scale, std::abs(constraint.value(p)), std::abs(div(p))});
    }
    out.report.constraint_residual = scale > 1.0 ? res / scale : res;
    if (out.report.constraint_residual > opt.constraint_tolerance) {
      out.report.warnings.push_back("recovered a^{-1} b does not satisfy the divergence constraint");
    }
  }

  out.report.residual_gauge =
      known_d ? "d supplied: (B, c) fixed; a^{-1} b unique"
              : "a^{-1} b unique; (B, c, d) determined only up to transforms preserving "
                "(B/d, div(ahat grad B)/B + (b/B^2).grad B/B - c/B^2); returned triple uses B "
                "solving div(ahat grad B) = 0 with the anchor values";
  out.report.masked_fraction = masked_fraction(out.mask);
  return out;
}

CoefficientTriple triple_from_coefficients(const CoefficientSet& k, const ScalarField& d) {
  const Grid& g = k.grid();
  const int n = g.dim();
  CoefficientTriple t;
  split_amplitude(k.a, t.ahat, t.big_b);
  ScalarField rho(g);
  VectorField drift(g);
  for (std::size_t p = 0; p < g.size(); ++p) {
    rho(p) = t.big_b(p) / d(p);
    const Complex b2 = t.big_b(p) * t.big_b(p);
    for (int i = 0; i < n; ++i) drift(p, i) = k.b(p, i) / b2;
  }
  const VectorField grad_rho = gradient(rho);
  t.g = VectorField(g);
  for (std::size_t p = 0; p < g.size(); ++p) {
    for (int i = 0; i < n; ++i) {
      Complex acc{};
      for (int j = 0; j < n; ++j) acc += t.ahat(p, i, j) * grad_rho(p, j);
      t.g(p, i) = drift(p, i) + 2.0 * acc / rho(p);
    }
  }
  CoefficientSet op{t.ahat, drift, ScalarField(g)};
  for (Complex& z : op.a.data()) z = Complex(z.real(), 0.0);
  const ScalarField lb = apply_operator(op, t.big_b);
  t.q = ScalarField(g, kNaN);
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (g.on_boundary(p)) continue;
    const Complex b2 = t.big_b(p) * t.big_b(p);
    t.q(p) = lb(p) / t.big_b(p) - k.c(p) / b2;
  }
  return t;
}

EquivalenceReport gauge_equivalent(const CoefficientSet& k1, const ScalarField& d1,
                                   const CoefficientSet& k2, const ScalarField& d2, double tol) {
  if (!(k1.grid() == k2.grid())) throw ConfigError("coefficient sets live on different grids");
  const CoefficientTriple t1 = triple_from_coefficients(k1, d1);
  const CoefficientTriple t2 = triple_from_coefficients(k2, d2);
  const InteriorMask mask = interior_mask(k1.grid(), 1);
  auto slot = [&](std::span<const Complex> x, std::span<const Complex> y, int nc) {
    double diff = 0.0;
    double scale = 0.0;
    for (std::size_t p = 0; p < mask.grid().size(); ++p) {
      if (!mask[p]) continue;
      for (int c = 0; c < nc; ++c) {
        const std::size_t i = p * nc + c;
        diff = std::max(diff, std::abs(x[i] - y[i]));
        scale = std::max({scale, std::abs(x[i]), std::abs(y[i])});
      }
    }
    return scale > 0.0 ? diff / scale : diff;
  };
  EquivalenceReport r;
  r.audit.dim = k1.grid().dim();
  r.ahat_residual = slot(t1.ahat.data(), t2.ahat.data(), t1.ahat.components());
  r.g_residual = slot(t1.g.data(), t2.g.data(), t1.g.components());
  r.q_residual = slot(t1.q.data(), t2.q.data(), 1);
  r.equivalent = r.ahat_residual <= tol && r.g_residual <= tol && r.q_residual <= tol;
  return r;
}

}  // namespace hyrec
